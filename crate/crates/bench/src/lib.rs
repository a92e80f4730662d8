//! Shared fixtures for the criterion benches under `benches/`.

use kecausal::{generate, CausalDataset, PointSet, ScenarioSpec};

/// Deterministic points in `[0, 1)^dim` from a fixed-increment Weyl sequence.
pub fn unit_points(n: usize, dim: usize) -> PointSet {
    let alpha = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.430_159_709_001_946_7];
    let flat = (0..n * dim)
        .map(|k| ((k / dim + 1) as f64 * alpha[k % dim % alpha.len()]).fract())
        .collect();
    PointSet::from_flat(flat, dim).expect("n * dim values")
}

/// One observational sample of a single-dataset scenario.
pub fn dataset(spec: &ScenarioSpec, n: usize) -> CausalDataset {
    generate(spec, n, 0)
        .and_then(|s| s.single().cloned())
        .expect("single-dataset scenario")
}
