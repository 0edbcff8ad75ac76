//! Deterministic replicate execution.
//!
//! Each replicate owns a generator seeded from `(master seed, replicate index)`,
//! so results depend only on the seed and never on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Failure fraction above which a Monte Carlo run aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit mix of `(seed, index)`.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replicate_seed(seed, index))
}

/// Worker count; `None` uses rayon's global pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parallelism {
    pub threads: Option<usize>,
}

impl Parallelism {
    pub fn threads(n: usize) -> Self {
        Self {
            threads: Some(n.max(1)),
        }
    }

    pub fn serial() -> Self {
        Self::threads(1)
    }
}

/// Runs `f(index, rng)` for every replicate and returns outputs in index order.
pub fn run_replicates<T, F>(replicates: usize, seed: u64, parallelism: Parallelism, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    let job = || {
        (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(seed, i as u64);
                f(i, &mut rng)
            })
            .collect::<Vec<T>>()
    };
    match parallelism.threads {
        None => Ok(job()),
        Some(1) => Ok((0..replicates)
            .map(|i| {
                let mut rng = replicate_rng(seed, i as u64);
                f(i, &mut rng)
            })
            .collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Failed replicates as `(index, message)`.
pub type Failures = Vec<(usize, String)>;

/// Splits replicate outcomes into successes and `(index, message)` failures,
/// aborting when failures exceed [`MAX_FAILURE_FRACTION`].
pub fn partition_failures<T>(outcomes: Vec<Result<T>>) -> Result<(Vec<T>, Failures)> {
    let total = outcomes.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => failed.push((i, e.to_string())),
        }
    }
    if !failed.is_empty() && failed.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let (first_index, first_message) = failed[0].clone();
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total,
            first_index,
            first_message,
        });
    }
    Ok((ok, failed))
}

/// Mean and standard error of the mean, summed in input order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
