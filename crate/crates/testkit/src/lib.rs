//! Reference implementations and checking harnesses used by the test suites.
//!
//! Everything here is written independently of the engine under test:
//! straight-line loops in `f64`, no shared helpers, so a bug in the engine
//! and a bug in the oracle are unlikely to coincide.

pub mod gradcheck;
pub mod oracle;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator for reproducible test data.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Assert two slices agree elementwise within an absolute tolerance,
/// reporting the first offending index.
pub fn assert_close(actual: &[f64], expected: &[f64], tol: f64, what: &str) {
    assert_eq!(actual.len(), expected.len(), "{what}: length mismatch");
    for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
        assert!(
            (a - e).abs() <= tol,
            "{what}: element {i} differs: actual {a}, expected {e}, |diff| {} > tol {tol}",
            (a - e).abs()
        );
    }
}
