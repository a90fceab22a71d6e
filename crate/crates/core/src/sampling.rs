//! Component processing orders.
//!
//! Randomness is drawn from ChaCha8 keyed by the run seed, with the cycle index
//! selecting the stream, so the order of any cycle can be regenerated on its
//! own and different cycles can be produced concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest `m` accepted by [`enumerate_permutations`].
pub const MAX_ENUMERATION: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    /// The same zero-based permutation every cycle.
    Fixed(Vec<usize>),
    /// A fresh uniform permutation every cycle.
    Reshuffle,
    /// `m` independent uniform draws every cycle.
    WithReplacement,
}

#[derive(Debug, Clone)]
pub struct OrderSpec {
    mode: OrderMode,
    m: usize,
    seed: u64,
    base: ChaCha8Rng,
}

impl OrderSpec {
    pub fn new(mode: OrderMode, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("order needs at least one component".into()));
        }
        if let OrderMode::Fixed(sigma) = &mode {
            if !is_permutation(sigma, m) {
                return Err(Error::InvalidInput(format!(
                    "fixed order {sigma:?} is not a permutation of 0..{m}"
                )));
            }
        }
        Ok(Self {
            mode,
            m,
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::new(OrderMode::Fixed((0..m).collect()), m, 0)
    }

    pub fn mode(&self) -> &OrderMode {
        &self.mode
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn cycle_rng(&self, k: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(k);
        rng
    }

    /// Writes the order for cycle `k` into `out`, reusing its allocation.
    pub fn fill_cycle_order(&self, k: u64, out: &mut Vec<usize>) {
        out.clear();
        match &self.mode {
            OrderMode::Fixed(sigma) => out.extend_from_slice(sigma),
            OrderMode::Reshuffle => {
                let mut rng = self.cycle_rng(k);
                out.resize(self.m, 0);
                // inside-out Fisher-Yates
                for i in 0..self.m {
                    let j = rng.random_range(0..=i as u32) as usize;
                    if j != i {
                        out[i] = out[j];
                    }
                    out[j] = i;
                }
            }
            OrderMode::WithReplacement => {
                let mut rng = self.cycle_rng(k);
                let m = self.m as u32;
                out.extend((0..self.m).map(|_| rng.random_range(0..m) as usize));
            }
        }
    }

    pub fn next_cycle_order(&self, k: u64) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.m);
        self.fill_cycle_order(k, &mut out);
        out
    }
}

pub fn is_permutation(order: &[usize], m: usize) -> bool {
    if order.len() != m {
        return false;
    }
    let mut seen = vec![false; m];
    for &i in order {
        if i >= m || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// All `m!` zero-based permutations in lexicographic order.
pub fn enumerate_permutations(m: usize) -> Result<Vec<Vec<usize>>> {
    if m > MAX_ENUMERATION {
        return Err(Error::TooManyPermutations {
            m,
            max: MAX_ENUMERATION,
        });
    }
    let mut current: Vec<usize> = (0..m).collect();
    let mut all = vec![current.clone()];
    while next_permutation(&mut current) {
        all.push(current.clone());
    }
    Ok(all)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Formats a zero-based order with one-based labels, e.g. `(1,2)`.
pub fn order_label(order: &[usize]) -> String {
    let parts: Vec<String> = order.iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", parts.join(","))
}
