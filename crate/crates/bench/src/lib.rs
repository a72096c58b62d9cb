//! Fixtures shared by the benchmarks.

use flab_core::spin_model::DEFAULT_INTERVAL;
use flab_core::{make_model_b, sample_model_b, stream_rng, DriveSchedule, Result};

/// A kicked-model drive with coefficients drawn from the default box.
pub fn random_model_b(n: usize, seed: u64) -> Result<DriveSchedule> {
    let params = sample_model_b(n, DEFAULT_INTERVAL, &mut stream_rng(seed, 0))?;
    make_model_b(&params, n)
}
