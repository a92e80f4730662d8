//! Permutation tests built on MMD and HSIC.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::centered;
use crate::error::{invalid, Error, Result};
use crate::kernels::{gram, KernelSpec};
use crate::points::PointSet;
use crate::rng;

pub const MIN_PERMUTATIONS: usize = 99;
pub const DEFAULT_PERMUTATIONS: usize = 500;

/// Outcome of a permutation test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Add-one p-value. Permuted statistics within a relative `1e-12` of the
/// observed one count as ties, and ties count against rejection.
pub fn permutation_p_value(observed: f64, permuted: &[f64]) -> f64 {
    let tol = 1e-12 * observed.abs().max(1e-300) + 1e-15;
    let exceed = permuted.iter().filter(|&&s| s >= observed - tol).count();
    (1 + exceed) as f64 / (1 + permuted.len()) as f64
}

pub(crate) fn check_permutations(permutations: usize) -> Result<()> {
    if permutations < MIN_PERMUTATIONS {
        return Err(invalid(
            "permutations",
            format!("need at least {MIN_PERMUTATIONS}, got {permutations}"),
        ));
    }
    Ok(())
}

/// Random permutation of `0..n` for replicate `index`.
pub(crate) fn permutation(seed: u64, purpose: &str, index: usize, n: usize) -> Vec<usize> {
    let mut rng = rng::indexed_stream(seed, purpose, index as u64);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

/// Two-sample test of `P = Q` with the biased MMD² statistic. The null is
/// simulated by pooling both samples and re-splitting them at random.
pub fn mmd_test(
    p: &PointSet,
    q: &PointSet,
    spec: &KernelSpec,
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    check_permutations(permutations)?;
    if p.is_empty() || q.is_empty() {
        return Err(Error::SampleTooSmall {
            needed: 1,
            found: p.len().min(q.len()),
        });
    }
    let pooled = p.concat(q)?;
    let total = pooled.len();
    let k = gram(spec, &pooled, &pooled)?;
    let k: Vec<f64> = (0..total)
        .flat_map(|i| (0..total).map(move |j| (i, j)))
        .map(|(i, j)| k[(i, j)])
        .collect();
    let (wp, wq) = (1.0 / p.len() as f64, -1.0 / q.len() as f64);
    let n = p.len();
    // MMD² = aᵀ K a with a = (1/n, …, −1/m, …) in permuted order.
    let stat = |perm: &[usize]| {
        let mut a = vec![0.0; total];
        for (slot, &i) in perm.iter().enumerate() {
            a[i] = if slot < n { wp } else { wq };
        }
        let mut acc = 0.0;
        for i in 0..total {
            let row = &k[i * total..(i + 1) * total];
            acc += a[i] * row.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
        }
        acc.max(0.0)
    };
    let identity: Vec<usize> = (0..total).collect();
    let observed = stat(&identity);
    let permuted: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|b| stat(&permutation(seed, "mmd-permutation", b, total)))
        .collect();
    Ok(TestResult {
        statistic: observed,
        p_value: permutation_p_value(observed, &permuted),
        permutations,
        seed,
    })
}

/// HSIC statistic with the `y` sample reordered by `perm`.
pub(crate) struct HsicPermuter {
    kc: Vec<f64>,
    l: Vec<f64>,
    n: usize,
}

impl HsicPermuter {
    pub(crate) fn new(
        x: &PointSet,
        y: &PointSet,
        spec_x: &KernelSpec,
        spec_y: &KernelSpec,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::SampleTooSmall {
                needed: 2,
                found: x.len(),
            });
        }
        let n = x.len();
        let kc = centered(&gram(spec_x, x, x)?);
        let lm = gram(spec_y, y, y)?;
        let l = (0..n * n).map(|t| lm[(t / n, t % n)]).collect();
        Ok(Self { kc, l, n })
    }

    pub(crate) fn statistic(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let krow = &self.kc[i * n..(i + 1) * n];
            let lrow = &self.l[perm[i] * n..(perm[i] + 1) * n];
            acc += krow
                .iter()
                .zip(perm)
                .map(|(k, &pj)| k * lrow[pj])
                .sum::<f64>();
        }
        (acc / (n * n) as f64).max(0.0)
    }
}

/// Independence test of paired `x`, `y` with the biased HSIC statistic; the
/// null permutes `y` against `x`.
pub fn hsic_test(
    x: &PointSet,
    y: &PointSet,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    check_permutations(permutations)?;
    let h = HsicPermuter::new(x, y, spec_x, spec_y)?;
    let identity: Vec<usize> = (0..x.len()).collect();
    let observed = h.statistic(&identity);
    let permuted: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|b| h.statistic(&permutation(seed, "hsic-permutation", b, x.len())))
        .collect();
    Ok(TestResult {
        statistic: observed,
        p_value: permutation_p_value(observed, &permuted),
        permutations,
        seed,
    })
}
