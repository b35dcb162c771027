use alloc::vec::Vec;

use rand::Rng;

use crate::rng::{rng_from, ChaCha8Rng};
use crate::tensor::{Scalar, Tensor};
use crate::Result;

/// Pool of past generator outputs shown to the discriminator.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<Tensor<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub const DEFAULT_CAPACITY: usize = 50;

    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            rng: rng_from(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Tensor<T>] {
        &self.items
    }

    /// While filling, stores and returns `fresh`. Once full, with
    /// probability ½ swaps `fresh` for a uniformly chosen stored item and
    /// returns that item; otherwise returns `fresh`.
    pub fn query(&mut self, fresh: Tensor<T>) -> Tensor<T> {
        if self.capacity == 0 {
            return fresh;
        }
        if self.items.len() < self.capacity {
            self.items.push(fresh.clone());
            return fresh;
        }
        if self.rng.random_bool(0.5) {
            let i = self.rng.random_range(0..self.items.len());
            core::mem::replace(&mut self.items[i], fresh)
        } else {
            fresh
        }
    }

    /// Queries each sample along the leading axis separately.
    pub fn query_batch(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let n = batch.shape().first().copied().unwrap_or(0);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.query(batch.slice_outer(i, 1)?));
        }
        Tensor::stack_outer(&out.iter().collect::<Vec<_>>())
    }
}
