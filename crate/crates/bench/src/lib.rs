//! Deterministic fixtures shared by the criterion benches.
//!
//! Wall-clock and peak-memory comparisons at realistic sizes live in the
//! CLI (`omar bench`); the criterion benches here track relative
//! regressions of the hot kernels at small sizes, where criterion's
//! repeated sampling stays affordable.

use omar_core::signal::{assemble_toeplitz, correlations, BlockToeplitz, TimeSeriesRecord};
use omar_core::synth::{simulate, ShearFrameSpec};

/// A reproducible ambient-vibration record of the default ten-story frame.
pub fn bench_record(duration_s: f64, snr_db: f64, seed: u64) -> TimeSeriesRecord {
    simulate(&ShearFrameSpec {
        duration_s,
        snr_db,
        seed,
        ..Default::default()
    })
    .expect("default frame synthesizes")
}

/// The correlation Toeplitz matrix with the requested side length
/// (side = lag steps × channel count; the default frame has 10 channels).
pub fn bench_toeplitz(rec: &TimeSeriesRecord, side: usize) -> BlockToeplitz {
    let l = rec.samples.ncols();
    assert_eq!(side % l, 0, "side must be a multiple of the channel count");
    let corrs = correlations(rec, side / l).expect("enough samples for the requested lag");
    assemble_toeplitz(&corrs)
}
