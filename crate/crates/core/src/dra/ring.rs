use super::DraError;
use crate::rng::RngStream;
use crate::transport::RankId;

/// Cyclic order of ranks; each rank sends to its successor and receives from its predecessor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTopology {
    order: Vec<RankId>,
    position: Vec<usize>,
}

impl RingTopology {
    /// The ring `0 → 1 → … → P-1 → 0`.
    pub fn new(ranks: usize) -> Self {
        Self::from_order((0..ranks).collect()).expect("identity is a permutation")
    }

    pub fn from_order(order: Vec<RankId>) -> Result<Self, DraError> {
        let mut position = vec![usize::MAX; order.len()];
        for (i, &r) in order.iter().enumerate() {
            if r >= order.len() || position[r] != usize::MAX {
                return Err(DraError::InvalidConfig(format!(
                    "{order:?} is not a permutation"
                )));
            }
            position[r] = i;
        }
        Ok(Self { order, position })
    }

    pub fn order(&self) -> &[RankId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn next(&self, rank: RankId) -> RankId {
        self.order[(self.position[rank] + 1) % self.order.len()]
    }

    pub fn prev(&self, rank: RankId) -> RankId {
        let n = self.order.len();
        self.order[(self.position[rank] + n - 1) % n]
    }

    /// Fisher–Yates reshuffle; every rank calling this with the same stream state gets the same ring.
    pub fn shuffle(&mut self, rng: &mut RngStream) {
        for i in (1..self.order.len()).rev() {
            let j = (rng.uniform() * (i + 1) as f64) as usize;
            self.order.swap(i, j.min(i));
        }
        for (i, &r) in self.order.iter().enumerate() {
            self.position[r] = i;
        }
    }
}
