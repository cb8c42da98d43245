use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One aggregated multinomial observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub n: u64,
    pub counts: Vec<u64>,
}

/// Ordered rounds of category counts sharing a fixed category set.
///
/// Every round's counts sum to its `n`; cumulative counts are always
/// derived from the rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct BatchSeries {
    categories: usize,
    rounds: Vec<Batch>,
}

#[derive(Deserialize)]
struct RawSeries {
    categories: usize,
    rounds: Vec<Batch>,
}

impl TryFrom<RawSeries> for BatchSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        let mut s = BatchSeries::new(raw.categories)?;
        for b in raw.rounds {
            s.push(b.counts)?;
        }
        Ok(s)
    }
}

impl BatchSeries {
    pub fn new(categories: usize) -> Result<Self> {
        if categories < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 categories, got {categories}"
            )));
        }
        Ok(Self {
            categories,
            rounds: Vec::new(),
        })
    }

    pub fn from_counts(rows: Vec<Vec<u64>>) -> Result<Self> {
        let c = rows.first().map(Vec::len).unwrap_or(0);
        let mut s = Self::new(c)?;
        for r in rows {
            s.push(r)?;
        }
        Ok(s)
    }

    /// Appends a round whose size is the sum of its counts.
    pub fn push(&mut self, counts: Vec<u64>) -> Result<()> {
        let n = counts.iter().sum();
        self.push_checked(n, counts)
    }

    /// Appends a round, checking the counts against the declared size.
    pub fn push_checked(&mut self, n: u64, counts: Vec<u64>) -> Result<()> {
        let round = self.rounds.len() + 1;
        if counts.len() != self.categories {
            return Err(Error::DimensionMismatch(format!(
                "round {round} has {} categories, series has {}",
                counts.len(),
                self.categories
            )));
        }
        let sum: u64 = counts.iter().sum();
        if sum != n {
            return Err(Error::InconsistentBatch { round, sum, n });
        }
        if n == 0 {
            return Err(Error::InvalidParameter(format!("round {round} is empty")));
        }
        self.rounds.push(Batch { n, counts });
        Ok(())
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn rounds(&self) -> &[Batch] {
        &self.rounds
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.rounds.iter().map(|b| b.n).collect()
    }

    /// `N_j`: trials in the first `j` rounds.
    pub fn total_through(&self, j: usize) -> u64 {
        self.rounds[..j.min(self.len())].iter().map(|b| b.n).sum()
    }

    pub fn total(&self) -> u64 {
        self.total_through(self.len())
    }

    /// `Y_j`: cumulative counts through round `j` (1-based; `j = 0` gives zeros).
    pub fn cumulative(&self, j: usize) -> Vec<u64> {
        let mut y = vec![0u64; self.categories];
        for b in &self.rounds[..j.min(self.len())] {
            for (acc, x) in y.iter_mut().zip(&b.counts) {
                *acc += x;
            }
        }
        y
    }

    /// The first `j` rounds as a new series.
    pub fn prefix(&self, j: usize) -> BatchSeries {
        BatchSeries {
            categories: self.categories,
            rounds: self.rounds[..j.min(self.len())].to_vec(),
        }
    }

    /// Rounds reordered so that round `i` of the result is round `order[i]`
    /// (0-based) of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<BatchSeries> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        for &i in order {
            if i >= self.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
        }
        Ok(BatchSeries {
            categories: self.categories,
            rounds: order.iter().map(|&i| self.rounds[i].clone()).collect(),
        })
    }
}
