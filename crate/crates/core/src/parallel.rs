//! Scoped worker pools. `jobs = 0` uses every core.

use crate::error::{Error, Result};

pub fn install<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {jobs} worker(s): {e}")))?;
    pool.install(f)
}
