//! FIFO replay buffer. Its contents define the sampling distribution `ν`
//! shared by every network in the chain.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::envs::Transition;
use crate::error::{IqnError, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer<A = usize> {
    capacity: usize,
    storage: VecDeque<Transition<A>>,
    inserted: u64,
}

impl<A: Clone> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, storage: VecDeque::with_capacity(capacity.min(1 << 20)), inserted: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total number of pushes since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition<A>) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
        self.inserted += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        self.storage.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition<A>> {
        self.storage.get(i)
    }

    /// Uniform draws with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(IqnError::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok(sample_indices(self.storage.len(), batch_size, rng))
    }

    pub fn sample_minibatch(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition<A>>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    /// Contiguous copy of the contents, oldest first.
    pub fn to_vec(&self) -> Vec<Transition<A>> {
        self.storage.iter().cloned().collect()
    }

    pub(crate) fn restore(capacity: usize, inserted: u64, items: Vec<Transition<A>>) -> Result<Self> {
        if capacity == 0 || items.len() > capacity {
            return Err(IqnError::Format(format!("{} items exceed capacity {capacity}", items.len())));
        }
        Ok(Self { capacity, storage: items.into(), inserted })
    }
}

/// `batch_size` indices drawn uniformly with replacement from `0..len`.
pub fn sample_indices(len: usize, batch_size: usize, rng: &mut Rng) -> Vec<usize> {
    (0..batch_size).map(|_| rng.gen_range(0..len)).collect()
}
