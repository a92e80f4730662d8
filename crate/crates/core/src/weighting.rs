//! Importance weights `w(t, x) = p*(t) / p(t | x)` and the backdoor HSIC
//! test of causal association.
//!
//! The propensity `p(t | x)` is a conditional mean embedding of the one-hot
//! treatment, so only discrete treatments are supported.

use std::collections::BTreeMap;

use faer::Mat;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{CausalDataset, Role};
use crate::error::{invalid, Error, Result};
use crate::estimators::{quantile, EstimatorConfig, PStar, MAX_DISCRETE_LEVELS};
use crate::hypothesis::{check_permutations, permutation_p_value, TestResult};
use crate::kernels::{gram, KernelSpec};
use crate::linalg::{self, SpdSolver};
use crate::operators::default_regularization;
use crate::points::PointSet;
use crate::rng;

/// Smallest sample accepted by [`fit_propensity`].
pub const MIN_PROPENSITY_SAMPLE: usize = 50;

/// Fitted `p̂(T=τ | X=x)`.
#[derive(Debug)]
pub struct PropensityModel {
    x: PointSet,
    kx: KernelSpec,
    support: Vec<f64>,
    codes: Vec<usize>,
    epsilon: f64,
    lambda: f64,
    solver: SpdSolver,
}

/// Index of each treatment value in the sorted support.
fn encode(t: &[f64], support: &[f64]) -> Result<Vec<usize>> {
    t.iter()
        .map(|v| {
            support.iter().position(|s| s == v).ok_or_else(|| {
                Error::InvalidParameter {
                    name: "t",
                    reason: format!("treatment value {v} is not in the fitted support"),
                }
            })
        })
        .collect()
}

fn discrete_support(t: &[f64]) -> Result<Vec<f64>> {
    let mut s = t.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    if s.len() > MAX_DISCRETE_LEVELS {
        return Err(Error::Unsupported(format!(
            "propensity estimation needs a discrete treatment with at most {MAX_DISCRETE_LEVELS} values, found {}",
            s.len()
        )));
    }
    Ok(s)
}

pub fn fit_propensity(data: &CausalDataset, cfg: &EstimatorConfig) -> Result<PropensityModel> {
    cfg.validate()?;
    data.require(&[Role::X, Role::T])?;
    if data.n() < MIN_PROPENSITY_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: MIN_PROPENSITY_SAMPLE,
            found: data.n(),
        });
    }
    let t = data.scalar(Role::T)?;
    let support = discrete_support(t)?;
    if support.len() as f64 * cfg.epsilon >= 1.0 && support.len() > 1 {
        return Err(invalid(
            "epsilon",
            format!("{} treatment levels cannot all be clipped at {}", support.len(), cfg.epsilon),
        ));
    }
    let codes = encode(t, &support)?;
    let x = data.points(Role::X)?;
    let kx = cfg.kernel(Role::X, &x)?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => default_regularization(&kx, &x)?,
    };
    let k = gram(&kx, &x, &x)?;
    let solver = SpdSolver::factor_shifted(&k, x.len() as f64 * lambda, "propensity")?;
    Ok(PropensityModel {
        x,
        kx,
        support,
        codes,
        epsilon: cfg.epsilon,
        lambda,
        solver,
    })
}

impl PropensityModel {
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kx
    }

    /// Clipped, renormalized probabilities over the support, one row per
    /// query point.
    pub fn predict(&self, x: &PointSet) -> Result<Vec<Vec<f64>>> {
        let kq = gram(&self.kx, &self.x, x)?;
        let beta = self.solver.solve(kq.as_ref());
        Ok((0..x.len())
            .map(|q| {
                let mut raw = vec![0.0; self.support.len()];
                for (i, &c) in self.codes.iter().enumerate() {
                    raw[c] += beta[(i, q)];
                }
                normalize(&raw, self.epsilon)
            })
            .collect())
    }

    /// Smoother `S = (K_X + nλI)⁻¹ K_X`; raw training-row propensities for
    /// any labelling are `S · onehot`. `S` is symmetric.
    fn smoother(&self) -> Result<Mat<f64>> {
        let k = gram(&self.kx, &self.x, &self.x)?;
        Ok(self.solver.solve(k.as_ref()))
    }
}

/// Maps raw scores to a pmf with entries in `[ε, 1−ε]`: finds `s > 0` with
/// `Σ clamp(s·rawᵢ, ε, 1−ε) = 1` by bisection. Falls back to uniform when
/// no score is positive; a single-level support gives `1−ε`.
pub fn normalize(raw: &[f64], epsilon: f64) -> Vec<f64> {
    let l = raw.len();
    if l == 1 {
        return vec![1.0 - epsilon];
    }
    if raw.iter().all(|&r| r <= 0.0) {
        return vec![1.0 / l as f64; l];
    }
    let clip = |s: f64| -> f64 { raw.iter().map(|&r| (s * r).clamp(epsilon, 1.0 - epsilon)).sum() };
    let mut hi = 1.0 / raw.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    while clip(hi) < 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    raw.iter()
        .map(|&r| (hi * r).clamp(epsilon, 1.0 - epsilon))
        .collect()
}

/// Target pmf over the model's support.
pub fn p_star(model: &PropensityModel, kind: PStar) -> Vec<f64> {
    let l = model.support.len();
    match kind {
        PStar::Uniform => vec![1.0 / l as f64; l],
        PStar::Marginal => marginal(&model.codes, l),
    }
}

fn marginal(codes: &[usize], levels: usize) -> Vec<f64> {
    let mut p = vec![0.0; levels];
    for &c in codes {
        p[c] += 1.0;
    }
    p.iter_mut().for_each(|v| *v /= codes.len() as f64);
    p
}

fn check_pmf(p: &[f64], levels: usize) -> Result<()> {
    if p.len() != levels {
        return Err(Error::SpecMismatch(format!(
            "target pmf has {} entries, treatment support has {levels}",
            p.len()
        )));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("p_star", "must be a probability vector"));
    }
    Ok(())
}

/// `wᵢ = p*(Tᵢ) / p̂(Tᵢ | Xᵢ)` for the rows of `data`.
pub fn backdoor_weights(model: &PropensityModel, p_star: &[f64], data: &CausalDataset) -> Result<Vec<f64>> {
    check_pmf(p_star, model.support.len())?;
    let codes = encode(data.scalar(Role::T)?, &model.support)?;
    let probs = model.predict(&data.points(Role::X)?)?;
    Ok(codes
        .iter()
        .zip(&probs)
        .map(|(&c, p)| p_star[c] / p[c])
        .collect())
}

/// Weighted HSIC of `(T, Y)` from row-major Grams and raw weights.
fn weighted_hsic(k: &[f64], l: &[f64], w: &[f64]) -> f64 {
    let n = w.len();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    let mut cross = 0.0;
    let mut kw = vec![0.0; n];
    let mut lw = vec![0.0; n];
    for i in 0..n {
        let (kr, lr) = (&k[i * n..(i + 1) * n], &l[i * n..(i + 1) * n]);
        let mut c = 0.0;
        for j in 0..n {
            c += w[j] * kr[j] * lr[j];
            kw[i] += kr[j] * w[j];
            lw[i] += lr[j] * w[j];
        }
        cross += w[i] * c;
    }
    let middle: f64 = (0..n).map(|i| w[i] * kw[i] * lw[i]).sum();
    let kk = linalg::dot(&w, &kw);
    let ll = linalg::dot(&w, &lw);
    cross - 2.0 * middle + kk * ll
}

fn row_major(m: &Mat<f64>) -> Vec<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    (0..r * c).map(|t| m[(t / c, t % c)]).collect()
}

/// Plug-in `‖Ĉ*_{TY}‖²_HS` with weights normalized to sum to one. With unit
/// weights this is the biased HSIC of `(T, Y)`.
pub fn backdoor_hsic(
    data: &CausalDataset,
    weights: &[f64],
    spec_t: &KernelSpec,
    spec_y: &KernelSpec,
) -> Result<f64> {
    let t = data.points(Role::T)?;
    let y = data.points(Role::Y)?;
    if weights.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: t.len(),
            right: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(invalid("weights", "must be non-negative with a positive sum"));
    }
    let k = row_major(&gram(spec_t, &t, &t)?);
    let l = row_major(&gram(spec_y, &y, &y)?);
    Ok(weighted_hsic(&k, &l, weights))
}

/// Strata of rows with equal binned covariates. Columns with at most
/// `bins` distinct values are used as is; others are cut at empirical
/// quantiles. Strata with fewer than two rows are merged into a neighbour.
pub fn strata(x: &PointSet, bins: usize) -> Vec<Vec<usize>> {
    let n = x.len();
    let mut keys = vec![Vec::with_capacity(x.dim()); n];
    for j in 0..x.dim() {
        let col: Vec<f64> = x.rows().map(|r| r[j]).collect();
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let cuts: Vec<f64> = if distinct.len() <= bins {
            distinct[1..].to_vec()
        } else {
            (1..bins).map(|b| quantile(&sorted, b as f64 / bins as f64)).collect()
        };
        for (i, v) in col.iter().enumerate() {
            keys[i].push(cuts.iter().filter(|c| v >= c).count());
        }
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for (_, mut g) in groups {
        pending.append(&mut g);
        if pending.len() >= 2 {
            out.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match out.last_mut() {
            Some(last) => last.append(&mut pending),
            None => out.push(pending),
        }
    }
    out
}

/// Permutation test of "no causal effect of `T` on `Y`" given backdoor
/// covariates `X`. The null permutes `T` within covariate strata and refits
/// the propensity and weights for every permutation.
pub fn backdoor_hsic_test(
    data: &CausalDataset,
    cfg: &EstimatorConfig,
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    check_permutations(permutations)?;
    data.require(&[Role::X, Role::T, Role::Y])?;
    let model = fit_propensity(data, cfg)?;
    let smoother = model.smoother()?;
    let n = data.n();
    let levels = model.support.len();
    let t = data.points(Role::T)?;
    let y = data.points(Role::Y)?;
    let kt = cfg.kernel(Role::T, &t)?;
    let ky = cfg.kernel(Role::Y, &y)?;
    let l = row_major(&gram(&ky, &y, &y)?);
    let support_points = PointSet::from_scalars(&model.support);
    let table = gram(&kt, &support_points, &support_points)?;
    let target = p_star(&model, cfg.p_star);
    let groups = strata(&data.points(Role::X)?, cfg.strata_bins);
    if groups.len() < 2 {
        log::warn!("covariates form a single stratum; falling back to unrestricted permutation");
    }

    let statistic = |codes: &[usize]| -> f64 {
        let mut raw = vec![vec![0.0; levels]; n];
        for (j, &c) in codes.iter().enumerate() {
            for (i, r) in raw.iter_mut().enumerate() {
                r[c] += smoother[(i, j)];
            }
        }
        let w: Vec<f64> = raw
            .iter()
            .zip(codes)
            .map(|(r, &c)| target[c] / normalize(r, model.epsilon)[c])
            .collect();
        let k: Vec<f64> = (0..n * n)
            .map(|p| table[(codes[p / n], codes[p % n])])
            .collect();
        weighted_hsic(&k, &l, &w)
    };

    let observed = statistic(&model.codes);
    let permuted: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::indexed_stream(seed, "backdoor-hsic-permutation", b as u64);
            let mut codes = model.codes.clone();
            for g in &groups {
                let mut vals: Vec<usize> = g.iter().map(|&i| model.codes[i]).collect();
                vals.shuffle(&mut r);
                for (&i, v) in g.iter().zip(vals) {
                    codes[i] = v;
                }
            }
            statistic(&codes)
        })
        .collect();
    Ok(TestResult {
        statistic: observed,
        p_value: permutation_p_value(observed, &permuted),
        permutations,
        seed,
    })
}

/// Weighting-based interventional embedding
/// `Ĉ*_{YT}(Ĉ*_{TT} + λI)⁻¹ k_T(·, t)`, with weights normalized to mean
/// one. Provided as a cross-check of the backdoor estimator.
pub fn weighted_ime(
    data: &CausalDataset,
    weights: &[f64],
    spec_t: &KernelSpec,
    spec_y: &KernelSpec,
    lambda: f64,
    t: &PointSet,
) -> Result<crate::embeddings::WeightedEmbedding> {
    let tp = data.points(Role::T)?;
    let y = data.points(Role::Y)?;
    if weights.len() != tp.len() {
        return Err(Error::LengthMismatch {
            left: tp.len(),
            right: weights.len(),
        });
    }
    let n = tp.len();
    let total: f64 = weights.iter().sum();
    // Ĉ* uses weights ŵ = w / Σw; with D = diag(ŵ) the coefficient vector is
    // D^½ (D^½ K D^½ + λI)⁻¹ D^½ k(T, t).
    let root: Vec<f64> = weights.iter().map(|w| (w / total).sqrt()).collect();
    let k = gram(spec_t, &tp, &tp)?;
    let scaled = Mat::from_fn(n, n, |i, j| root[i] * k[(i, j)] * root[j]);
    let solver = SpdSolver::factor_shifted(&scaled, lambda, "weighted operator")?;
    let kt = crate::kernels::gram_column(spec_t, &tp, t)?;
    let rhs: Vec<f64> = kt.iter().zip(&root).map(|(a, b)| a * b).collect();
    let coef: Vec<f64> = solver.solve_vec(&rhs).iter().zip(&root).map(|(a, b)| a * b).collect();
    crate::embeddings::WeightedEmbedding::new(y, coef, spec_y.clone())
}
