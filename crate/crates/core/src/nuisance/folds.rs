use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random partition of `0..n` into `j` folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub j: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

pub fn make_folds(n: usize, j: usize, seed: u64) -> Result<FoldPlan> {
    if j < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {j}")));
    }
    if n < j {
        return Err(Error::Config(format!("cannot split {n} units into {j} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % j;
    }
    Ok(FoldPlan { j, assignment, seed })
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == f).collect()
    }

    /// Every unit outside fold `f`.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.j];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}
