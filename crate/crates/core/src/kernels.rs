//! Kernel specifications, evaluation, Gram matrices, bandwidth selection and
//! random Fourier features.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Range;

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng;

/// Serialized form of a kernel. Deserialization goes through
/// [`KernelSpec`]'s validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Gaussian { bandwidth: f64 },
    Matern { nu: f64, lengthscale: f64 },
    Linear,
    Product { factors: BTreeMap<String, KernelSpec> },
}

/// A validated positive-definite kernel.
///
/// Product kernels multiply factor kernels evaluated on named blocks of a
/// joint [`PointSet`]; factors are kept sorted by variable name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct KernelSpec {
    family: Family,
}

impl TryFrom<Family> for KernelSpec {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        match &family {
            Family::Gaussian { bandwidth } => {
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "gaussian bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
            Family::Matern { nu, lengthscale } => {
                if ![0.5, 1.5, 2.5].contains(nu) {
                    return Err(Error::InvalidKernel(format!(
                        "matern smoothness must be 0.5, 1.5 or 2.5, got {nu}"
                    )));
                }
                if !(lengthscale.is_finite() && *lengthscale > 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "matern lengthscale must be positive, got {lengthscale}"
                    )));
                }
            }
            Family::Linear => {}
            Family::Product { factors } => {
                if factors.len() < 2 {
                    return Err(Error::InvalidKernel(
                        "product kernels need at least two factors".into(),
                    ));
                }
                if factors.values().any(|f| f.is_product()) {
                    return Err(Error::InvalidKernel(
                        "nested product kernels are not supported".into(),
                    ));
                }
            }
        }
        Ok(Self { family })
    }
}

impl From<KernelSpec> for Family {
    fn from(spec: KernelSpec) -> Self {
        spec.family
    }
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Family::Gaussian { bandwidth }.try_into()
    }

    pub fn matern(nu: f64, lengthscale: f64) -> Result<Self> {
        Family::Matern { nu, lengthscale }.try_into()
    }

    pub fn linear() -> Self {
        Self {
            family: Family::Linear,
        }
    }

    /// Product kernel over named variables. Names must be distinct.
    pub fn product<I, S>(factors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, KernelSpec)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (name, spec) in factors {
            let name = name.into();
            if map.insert(name.clone(), spec).is_some() {
                return Err(Error::InvalidKernel(format!(
                    "duplicate product factor `{name}`"
                )));
            }
        }
        Family::Product { factors: map }.try_into()
    }

    /// Gaussian kernel whose bandwidth is the median heuristic on `points`
    /// (computed on at most [`MEDIAN_SUBSAMPLE`] evenly strided rows).
    pub fn gaussian_median(points: &PointSet) -> Result<Self> {
        Self::gaussian(default_bandwidth(points)?)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_product(&self) -> bool {
        matches!(self.family, Family::Product { .. })
    }

    /// True for families with `|k| ≤ 1` and `k(x, x) = 1`.
    pub fn is_normalized(&self) -> bool {
        match &self.family {
            Family::Gaussian { .. } | Family::Matern { .. } => true,
            Family::Linear => false,
            Family::Product { factors } => factors.values().all(KernelSpec::is_normalized),
        }
    }

    /// Evaluates the kernel on two unstructured points.
    pub fn eval_slices(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.is_product() {
            return Err(Error::UnsupportedFamily {
                operation: "eval_slices",
                family: "product (use eval_kernel with joint points)".into(),
            });
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Leaf::from_spec(self).eval(x, y))
    }

    /// Mean of the diagonal `k(xᵢ, xᵢ)`, i.e. `trace(K)/n`.
    pub fn mean_diagonal(&self, points: &PointSet) -> Result<f64> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let r = Resolved::new(self, points, points)?;
        let total: f64 = points.rows().map(|p| r.eval(p, p)).sum();
        Ok(total / points.len() as f64)
    }
}

#[derive(Clone, Copy, Debug)]
enum Leaf {
    Gaussian { neg_half_inv_sq: f64 },
    Matern { nu: f64, inv_ls: f64 },
    Linear,
}

impl Leaf {
    fn from_spec(spec: &KernelSpec) -> Self {
        match spec.family {
            Family::Gaussian { bandwidth } => Leaf::Gaussian {
                neg_half_inv_sq: -0.5 / (bandwidth * bandwidth),
            },
            Family::Matern { nu, lengthscale } => Leaf::Matern {
                nu,
                inv_ls: 1.0 / lengthscale,
            },
            Family::Linear => Leaf::Linear,
            Family::Product { .. } => unreachable!("products are resolved into leaves"),
        }
    }

    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Leaf::Gaussian { neg_half_inv_sq } => (neg_half_inv_sq * sq_dist(x, y)).exp(),
            Leaf::Matern { nu, inv_ls } => {
                let r = sq_dist(x, y).sqrt() * inv_ls;
                if nu == 0.5 {
                    (-r).exp()
                } else if nu == 1.5 {
                    let s = 3f64.sqrt() * r;
                    (1.0 + s) * (-s).exp()
                } else {
                    let s = 5f64.sqrt() * r;
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                }
            }
            Leaf::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// A kernel bound to the column layouts of two point sets.
struct Resolved {
    factors: Vec<(Leaf, Range<usize>, Range<usize>)>,
}

impl Resolved {
    fn new(spec: &KernelSpec, a: &PointSet, b: &PointSet) -> Result<Self> {
        match &spec.family {
            Family::Product { factors } => {
                let mut out = Vec::with_capacity(factors.len());
                for (name, f) in factors {
                    let ba = a.find_block(name).ok_or_else(|| missing_block(name))?;
                    let bb = b.find_block(name).ok_or_else(|| missing_block(name))?;
                    if ba.dim != bb.dim {
                        return Err(Error::DimensionMismatch {
                            expected: ba.dim,
                            found: bb.dim,
                        });
                    }
                    out.push((
                        Leaf::from_spec(f),
                        ba.offset..ba.offset + ba.dim,
                        bb.offset..bb.offset + bb.dim,
                    ));
                }
                Ok(Self { factors: out })
            }
            _ => {
                if a.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: a.dim(),
                        found: b.dim(),
                    });
                }
                Ok(Self {
                    factors: vec![(Leaf::from_spec(spec), 0..a.dim(), 0..b.dim())],
                })
            }
        }
    }

    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = 1.0;
        for (leaf, ra, rb) in &self.factors {
            v *= leaf.eval(&x[ra.clone()], &y[rb.clone()]);
        }
        v
    }
}

fn missing_block(name: &str) -> Error {
    Error::Malformed(format!(
        "product kernel factor `{name}` has no matching block in the point set"
    ))
}

/// `k(x, y)` for two single-point sets (joint points for product kernels).
pub fn eval_kernel(spec: &KernelSpec, x: &PointSet, y: &PointSet) -> Result<f64> {
    for p in [x, y] {
        if p.len() != 1 {
            return Err(Error::LengthMismatch {
                left: 1,
                right: p.len(),
            });
        }
    }
    Ok(Resolved::new(spec, x, y)?.eval(x.row(0), y.row(0)))
}

/// Dense Gram matrix `K[i, j] = k(aᵢ, bⱼ)`.
pub fn gram(spec: &KernelSpec, a: &PointSet, b: &PointSet) -> Result<Mat<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let r = Resolved::new(spec, a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut buf = vec![0.0; n * m];
    buf.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        let bj = b.row(j);
        for (i, v) in col.iter_mut().enumerate() {
            *v = r.eval(a.row(i), bj);
        }
    });
    Ok(Mat::from_fn(n, m, |i, j| buf[i + j * n]))
}

/// Kernel evaluations `k(aᵢ, y)` against a single point.
pub fn gram_column(spec: &KernelSpec, a: &PointSet, y: &PointSet) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if y.len() != 1 {
        return Err(Error::LengthMismatch {
            left: 1,
            right: y.len(),
        });
    }
    let r = Resolved::new(spec, a, y)?;
    let y0 = y.row(0);
    Ok(a.rows().map(|x| r.eval(x, y0)).collect())
}

/// `K_{a,b} · w` without materializing the Gram matrix.
pub fn gram_times(spec: &KernelSpec, a: &PointSet, b: &PointSet, w: &[f64]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if b.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: b.len(),
            right: w.len(),
        });
    }
    let r = Resolved::new(spec, a, b)?;
    Ok((0..a.len())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            b.rows().zip(w).map(|(bj, wj)| r.eval(ai, bj) * wj).sum()
        })
        .collect())
}

/// Median of the strictly positive pairwise Euclidean distances.
pub fn median_heuristic(points: &PointSet) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            found: points.len(),
        });
    }
    let n = points.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let v = sq_dist(points.row(i), points.row(j));
            if v > 0.0 {
                d.push(v.sqrt());
            }
        }
    }
    if d.is_empty() {
        return Err(Error::DegeneratePoints);
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if d.len() % 2 == 1 {
        Ok(upper)
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(0.5 * (lower + upper))
    }
}

/// Row cap for [`default_bandwidth`].
pub const MEDIAN_SUBSAMPLE: usize = 2000;

/// Median heuristic on an evenly strided subsample of at most
/// [`MEDIAN_SUBSAMPLE`] rows.
pub fn default_bandwidth(points: &PointSet) -> Result<f64> {
    if points.len() <= MEDIAN_SUBSAMPLE {
        return median_heuristic(points);
    }
    let stride = points.len().div_ceil(MEDIAN_SUBSAMPLE);
    let idx: Vec<usize> = (0..points.len()).step_by(stride).collect();
    median_heuristic(&points.select(&idx))
}

/// Random Fourier features for a gaussian kernel.
///
/// Frequencies are drawn from `N(0, σ⁻² I)` and phases uniformly on
/// `[0, 2π)`. Features come in pairs sharing a frequency with phases `b` and
/// `b + π/2`; each feature is `√(2/D)·cos(ωᵀx + b)`. The pair products sum to
/// `cos(ωᵀ(x − y))`, so the estimate `ΦΦᵀ` is unbiased for the Gram matrix.
pub fn rff_features(
    spec: &KernelSpec,
    features: usize,
    seed: u64,
    points: &PointSet,
) -> Result<Mat<f64>> {
    let bandwidth = match spec.family {
        Family::Gaussian { bandwidth } => bandwidth,
        _ => {
            return Err(Error::UnsupportedFamily {
                operation: "rff_features",
                family: format!("{:?}", spec.family),
            })
        }
    };
    if features == 0 {
        return Err(Error::InvalidParameter {
            name: "features",
            reason: "must be at least 1".into(),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let dim = points.dim();
    let mut rng = rng::stream(seed, "rff");
    let pairs = features.div_ceil(2);
    let mut omegas = Vec::with_capacity(pairs * dim);
    let mut phases = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            omegas.push(z / bandwidth);
        }
        phases.push(rng.random::<f64>() * 2.0 * PI);
    }
    let scale = (2.0 / features as f64).sqrt();
    Ok(Mat::from_fn(points.len(), features, |i, f| {
        let k = f / 2;
        let w = &omegas[k * dim..(k + 1) * dim];
        let proj: f64 = w.iter().zip(points.row(i)).map(|(a, b)| a * b).sum();
        let shift = if f % 2 == 0 { 0.0 } else { FRAC_PI_2 };
        scale * (proj + phases[k] + shift).cos()
    }))
}
