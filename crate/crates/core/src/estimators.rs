//! Interventional mean embeddings for the backdoor, fusion, frontdoor,
//! instrument and proxy settings.
//!
//! Each estimator is fitted once and then queried at treatment values. The
//! result is always a [`WeightedEmbedding`] over observed outcomes; the
//! average effect is its linear reduction `Σᵢ wᵢ yᵢ`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{CausalDataset, Role};
use crate::embeddings::{mean_embed, TensorEmbedding, WeightedEmbedding};
use crate::error::{invalid, Error, Result};
use crate::kernels::{default_bandwidth, gram_column, gram_times, KernelSpec};
use crate::operators::{default_regularization, fit_cmo, fit_dmo, CmoEstimate, DmoData, DmoEstimate};
use crate::points::PointSet;
use crate::rng;

/// Smallest dataset accepted by the split-sample estimators.
pub const MIN_SPLIT_SAMPLE: usize = 20;

/// Treatment support sizes up to this count are treated as discrete.
pub const MAX_DISCRETE_LEVELS: usize = 10;

/// Estimator settings. Everything is optional: kernels default to a
/// gaussian with median-heuristic bandwidth, regularization to
/// `1e-3·trace(K)/n` of the relevant Gram matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kernels: BTreeMap<Role, KernelSpec>,
    /// Ridge parameter of every conditional mean operator.
    pub lambda: Option<f64>,
    /// Stage-2 ridge parameter of deconditioning.
    pub xi: Option<f64>,
    /// Seed of the 50/50 split used by two-stage estimators.
    pub split_seed: u64,
    /// Propensity clipping level.
    pub epsilon: f64,
    /// Quantile bins per covariate for within-stratum permutation.
    pub strata_bins: usize,
    /// Target treatment distribution for backdoor weights.
    pub p_star: PStar,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernels: BTreeMap::new(),
            lambda: None,
            xi: None,
            split_seed: 0,
            epsilon: 0.01,
            strata_bins: 5,
            p_star: PStar::Marginal,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PStar {
    /// Empirical marginal of the treatment.
    #[default]
    Marginal,
    Uniform,
}

impl EstimatorConfig {
    pub fn with_kernel(mut self, role: Role, spec: KernelSpec) -> Self {
        self.kernels.insert(role, spec);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = Some(xi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("xi", self.xi)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(name, format!("must be positive, got {v}")));
                }
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid("epsilon", format!("must lie in (0, 0.5), got {}", self.epsilon)));
        }
        if self.strata_bins == 0 {
            return Err(invalid("strata_bins", "must be at least 1"));
        }
        if let Some((role, _)) = self.kernels.iter().find(|(_, k)| k.is_product()) {
            return Err(Error::InvalidKernel(format!(
                "kernel for role `{role}` must not be a product; products are formed internally"
            )));
        }
        Ok(())
    }

    /// The configured kernel for `role`, or the median-heuristic gaussian
    /// on `points`.
    pub fn kernel(&self, role: Role, points: &PointSet) -> Result<KernelSpec> {
        if let Some(k) = self.kernels.get(&role) {
            return Ok(k.clone());
        }
        match default_bandwidth(points) {
            Ok(b) => KernelSpec::gaussian(b),
            Err(Error::DegeneratePoints | Error::SampleTooSmall { .. }) => {
                log::warn!("role `{role}` is constant; using gaussian bandwidth 1");
                KernelSpec::gaussian(1.0)
            }
            Err(e) => Err(e),
        }
    }

    fn lambda_for(&self, spec: &KernelSpec, points: &PointSet) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => default_regularization(spec, points),
        }
    }

    fn xi_for(&self, spec: &KernelSpec, points: &PointSet) -> Result<f64> {
        match self.xi {
            Some(x) => Ok(x),
            None => default_regularization(spec, points),
        }
    }
}

/// Kernels and regularization actually used by a fitted estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSettings {
    pub kernels: BTreeMap<Role, KernelSpec>,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

fn joint(parts: &[(&str, &PointSet)]) -> Result<PointSet> {
    PointSet::join(parts)
}

fn product(parts: &[(&str, &KernelSpec)]) -> Result<KernelSpec> {
    KernelSpec::product(parts.iter().map(|(n, k)| (*n, (*k).clone())))
}

fn point_mass(t: &PointSet, spec: &KernelSpec) -> Result<WeightedEmbedding> {
    WeightedEmbedding::point_mass(t.clone(), spec.clone())
}

fn check_query(t: &PointSet, dim: usize) -> Result<()> {
    if t.len() != 1 {
        return Err(Error::LengthMismatch {
            left: 1,
            right: t.len(),
        });
    }
    if t.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: t.dim(),
        });
    }
    Ok(())
}

/// Deterministic 50/50 split by seeded shuffle.
pub fn split_halves(n: usize, seed: u64, purpose: &str) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, purpose));
    let b = idx.split_off(n / 2);
    (idx, b)
}

/// Backdoor adjustment: `μ_{Y|do(T=t)} = C_{Y|T,X}(k_T(·, t) ⊗ μ_X)`.
#[derive(Debug)]
pub struct Backdoor {
    t: PointSet,
    x: PointSet,
    kt: KernelSpec,
    kx: KernelSpec,
    cmo: CmoEstimate,
    /// `K_X 𝟙 / n`.
    x_means: Vec<f64>,
    settings: ResolvedSettings,
}

impl Backdoor {
    pub fn fit(data: &CausalDataset, cfg: &EstimatorConfig) -> Result<Self> {
        data.require(&[Role::X, Role::T, Role::Y])?;
        let y = data.points(Role::Y)?;
        let ky = cfg.kernel(Role::Y, &y)?;
        Self::fit_outcome(data, cfg, y, ky, Role::Y)
    }

    /// Backdoor estimator with an arbitrary outcome sample (fusion uses the
    /// mediator `S`).
    fn fit_outcome(
        data: &CausalDataset,
        cfg: &EstimatorConfig,
        out: PointSet,
        k_out: KernelSpec,
        out_role: Role,
    ) -> Result<Self> {
        cfg.validate()?;
        let t = data.points(Role::T)?;
        let x = data.points(Role::X)?;
        let kt = cfg.kernel(Role::T, &t)?;
        let kx = cfg.kernel(Role::X, &x)?;
        let input = joint(&[("t", &t), ("x", &x)])?;
        let k_in = product(&[("t", &kt), ("x", &kx)])?;
        let lambda = cfg.lambda_for(&k_in, &input)?;
        let cmo = fit_cmo(&input, &out, &k_in, &k_out, lambda)?;
        let n = x.len() as f64;
        let x_means = gram_times(&kx, &x, &x, &vec![1.0 / n; x.len()])?;
        let mut kernels = BTreeMap::from([(Role::T, kt.clone()), (Role::X, kx.clone())]);
        kernels.insert(out_role, k_out);
        Ok(Self {
            t,
            x,
            kt,
            kx,
            cmo,
            x_means,
            settings: ResolvedSettings {
                kernels,
                lambda,
                xi: None,
                split_seed: None,
            },
        })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    pub fn operator(&self) -> &CmoEstimate {
        &self.cmo
    }

    /// `γ(t) = (1/n)(K_T∘K_X + nλI)⁻¹ (k_T(T, t) ∘ K_X 𝟙)`.
    pub fn weights(&self, t: &PointSet) -> Result<Vec<f64>> {
        check_query(t, self.t.dim())?;
        let kt = gram_column(&self.kt, &self.t, t)?;
        let rhs: Vec<f64> = kt.iter().zip(&self.x_means).map(|(a, b)| a * b).collect();
        Ok(self.cmo.solver().solve_vec(&rhs))
    }

    pub fn ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        WeightedEmbedding::new(
            self.cmo.output_atoms().clone(),
            self.weights(t)?,
            self.cmo.output_spec().clone(),
        )
    }

    /// Same embedding computed by applying the fitted operator to the
    /// tensor `k_T(·, t) ⊗ μ̂_X`.
    pub fn ime_via_operator(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        check_query(t, self.t.dim())?;
        let tensor = TensorEmbedding::new(vec![
            ("t".into(), point_mass(t, &self.kt)?),
            ("x".into(), mean_embed(&self.x, &self.kx)?),
        ])?;
        self.cmo.apply(&tensor)
    }

    pub fn ate(&self, t: &PointSet) -> Result<f64> {
        self.ime(t)?.mean_value()
    }

    pub fn ime_at(&self, t: f64) -> Result<WeightedEmbedding> {
        self.ime(&PointSet::point(&[t]))
    }

    pub fn ate_at(&self, t: f64) -> Result<f64> {
        self.ate(&PointSet::point(&[t]))
    }

    /// Conditional effect given effect modifiers `V ⊂ X`: replaces `μ̂_X` by
    /// `μ̂_{X|V=v}`. `data` must be the fitting dataset with `V` mapped.
    pub fn cate(
        &self,
        data: &CausalDataset,
        cfg: &EstimatorConfig,
        t: &PointSet,
        v: &PointSet,
    ) -> Result<CateEstimate> {
        check_query(t, self.t.dim())?;
        let x_cols = data.role_columns(Role::X)?;
        let v_cols = data.role_columns(Role::V)?;
        if let Some(c) = v_cols.iter().find(|c| !x_cols.contains(c)) {
            return Err(Error::UnsupportedAdjustment(format!(
                "effect modifier column `{c}` is not an adjustment covariate; only V ⊂ X is supported"
            )));
        }
        check_query(v, v_cols.len())?;
        let v_points = data.points(Role::V)?;
        let extrapolation = outside_support(&v_points, v);
        if extrapolation {
            log::warn!("effect modifier value lies outside the observed support; result is an extrapolation");
        }
        let x_given_v = if v_cols.len() == x_cols.len() {
            // V = X: μ_{X|V=v} is the point mass at v (in X's column order)
            let order: Vec<usize> = x_cols
                .iter()
                .map(|c| v_cols.iter().position(|d| d == c).expect("subset checked"))
                .collect();
            let xv: Vec<f64> = order.iter().map(|&j| v.row(0)[j]).collect();
            point_mass(&PointSet::point(&xv), &self.kx)?
        } else {
            let kv = cfg.kernel(Role::V, &v_points)?;
            let lambda = cfg.lambda_for(&kv, &v_points)?;
            fit_cmo(&v_points, &self.x, &kv, &self.kx, lambda)?.embedding(v)?
        };
        let tensor = TensorEmbedding::new(vec![
            ("t".into(), point_mass(t, &self.kt)?),
            ("x".into(), x_given_v),
        ])?;
        Ok(CateEstimate {
            embedding: self.cmo.apply(&tensor)?,
            extrapolation,
        })
    }
}

fn outside_support(sample: &PointSet, v: &PointSet) -> bool {
    (0..sample.dim()).any(|j| {
        let (lo, hi) = sample
            .rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        v.row(0)[j] < lo || v.row(0)[j] > hi
    })
}

/// Conditional interventional embedding with an extrapolation flag.
#[derive(Clone, Debug, PartialEq)]
pub struct CateEstimate {
    pub embedding: WeightedEmbedding,
    /// The modifier value lies outside the observed range of some column.
    pub extrapolation: bool,
}

impl CateEstimate {
    pub fn mean_value(&self) -> Result<f64> {
        self.embedding.mean_value()
    }
}

/// Data fusion: `C_{Y|S}` from `d1 = (S, Y)` composed with the backdoor
/// embedding of `S` from `d2 = (X, T, S)`.
#[derive(Debug)]
pub struct Fusion {
    y_given_s: CmoEstimate,
    s_backdoor: Backdoor,
    settings: ResolvedSettings,
}

impl Fusion {
    pub fn fit(d1: &CausalDataset, d2: &CausalDataset, cfg: &EstimatorConfig) -> Result<Self> {
        d1.require(&[Role::S, Role::Y])?;
        d2.require(&[Role::X, Role::T, Role::S])?;
        let s2 = d2.points(Role::S)?;
        let s1 = d1.points(Role::S)?;
        if s1.dim() != s2.dim() {
            return Err(Error::DimensionMismatch {
                expected: s2.dim(),
                found: s1.dim(),
            });
        }
        let ks = cfg.kernel(Role::S, &s2)?;
        let y = d1.points(Role::Y)?;
        let ky = cfg.kernel(Role::Y, &y)?;
        let lambda_s = cfg.lambda_for(&ks, &s1)?;
        let y_given_s = fit_cmo(&s1, &y, &ks, &ky, lambda_s)?;
        let s_backdoor = Backdoor::fit_outcome(d2, cfg, s2, ks, Role::S)?;
        Self::from_parts(y_given_s, s_backdoor)
    }

    fn from_parts(y_given_s: CmoEstimate, s_backdoor: Backdoor) -> Result<Self> {
        crate::embeddings::check_same_spec(y_given_s.input_spec(), s_backdoor.cmo.output_spec())?;
        let mut settings = s_backdoor.settings.clone();
        settings.kernels.insert(Role::Y, y_given_s.output_spec().clone());
        Ok(Self {
            y_given_s,
            s_backdoor,
            settings,
        })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    pub fn y_given_s(&self) -> &CmoEstimate {
        &self.y_given_s
    }

    /// Backdoor embedding of `S` under `do(T=t)`, estimated on `d2`.
    pub fn s_ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        self.s_backdoor.ime(t)
    }

    pub fn ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        self.y_given_s.apply(&self.s_ime(t)?)
    }

    pub fn ate(&self, t: &PointSet) -> Result<f64> {
        self.ime(t)?.mean_value()
    }

    pub fn ate_at(&self, t: f64) -> Result<f64> {
        self.ate(&PointSet::point(&[t]))
    }
}

/// Frontdoor adjustment: `C_{Y|S,T}(μ̂_{S|T=t} ⊗ μ̂_T)`.
#[derive(Debug)]
pub struct Frontdoor {
    t: PointSet,
    s: PointSet,
    kt: KernelSpec,
    ks: KernelSpec,
    s_given_t: CmoEstimate,
    y_given_st: CmoEstimate,
    /// `K_T 𝟙 / n`.
    t_means: Vec<f64>,
    settings: ResolvedSettings,
}

impl Frontdoor {
    pub fn fit(data: &CausalDataset, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        data.require(&[Role::T, Role::S, Role::Y])?;
        let t = data.points(Role::T)?;
        let s = data.points(Role::S)?;
        let y = data.points(Role::Y)?;
        let kt = cfg.kernel(Role::T, &t)?;
        let ks = cfg.kernel(Role::S, &s)?;
        let ky = cfg.kernel(Role::Y, &y)?;
        let input = joint(&[("s", &s), ("t", &t)])?;
        let k_in = product(&[("s", &ks), ("t", &kt)])?;
        let lambda = cfg.lambda_for(&k_in, &input)?;
        let y_given_st = fit_cmo(&input, &y, &k_in, &ky, lambda)?;
        let lambda_s = cfg.lambda_for(&kt, &t)?;
        let s_given_t = fit_cmo(&t, &s, &kt, &ks, lambda_s)?;
        let n = t.len() as f64;
        let t_means = gram_times(&kt, &t, &t, &vec![1.0 / n; t.len()])?;
        Ok(Self {
            settings: ResolvedSettings {
                kernels: BTreeMap::from([(Role::T, kt.clone()), (Role::S, ks.clone()), (Role::Y, ky)]),
                lambda,
                xi: None,
                split_seed: None,
            },
            t,
            s,
            kt,
            ks,
            s_given_t,
            y_given_st,
            t_means,
        })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    /// `(K_S∘K_T + nλI)⁻¹ [(K_S β_{S|T=t}) ∘ (K_T 𝟙 / n)]`.
    pub fn weights(&self, t: &PointSet) -> Result<Vec<f64>> {
        check_query(t, self.t.dim())?;
        let beta = self.s_given_t.weights(t)?;
        let ks_beta = gram_times(&self.ks, &self.s, &self.s, &beta)?;
        let rhs: Vec<f64> = ks_beta.iter().zip(&self.t_means).map(|(a, b)| a * b).collect();
        Ok(self.y_given_st.solver().solve_vec(&rhs))
    }

    pub fn ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        WeightedEmbedding::new(
            self.y_given_st.output_atoms().clone(),
            self.weights(t)?,
            self.y_given_st.output_spec().clone(),
        )
    }

    /// Operator-composition path for the same embedding.
    pub fn ime_via_operator(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        check_query(t, self.t.dim())?;
        let tensor = TensorEmbedding::new(vec![
            ("s".into(), self.s_given_t.embedding(t)?),
            ("t".into(), mean_embed(&self.t, &self.kt)?),
        ])?;
        self.y_given_st.apply(&tensor)
    }

    pub fn ate(&self, t: &PointSet) -> Result<f64> {
        self.ime(t)?.mean_value()
    }

    pub fn ate_at(&self, t: f64) -> Result<f64> {
        self.ate(&PointSet::point(&[t]))
    }
}

/// Instrumental deconditioning: `C_{Y|Z} D_{T|Z} k_T(·, t)`, fitted on a
/// seeded 50/50 split. With effect modifiers `V` the conditioning variable
/// is `(Z, V)` and the target `(T, V)`.
#[derive(Debug)]
pub struct Instrument {
    dmo: DmoEstimate,
    conditional: bool,
    t_dim: usize,
    v_dim: usize,
    settings: ResolvedSettings,
}

impl Instrument {
    pub fn fit(data: &CausalDataset, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        data.require(&[Role::Z, Role::T, Role::Y])?;
        if data.n() < MIN_SPLIT_SAMPLE {
            return Err(Error::SampleTooSmall {
                needed: MIN_SPLIT_SAMPLE,
                found: data.n(),
            });
        }
        let z = data.points(Role::Z)?;
        let t = data.points(Role::T)?;
        let y = data.points(Role::Y)?;
        let kz = cfg.kernel(Role::Z, &z)?;
        let kt = cfg.kernel(Role::T, &t)?;
        let ky = cfg.kernel(Role::Y, &y)?;
        let mut kernels = BTreeMap::from([(Role::Z, kz.clone()), (Role::T, kt.clone()), (Role::Y, ky.clone())]);
        let conditional = data.has_role(Role::V);
        let (cond, target, k_cond, k_target, v_dim) = if conditional {
            let v = data.points(Role::V)?;
            let kv = cfg.kernel(Role::V, &v)?;
            kernels.insert(Role::V, kv.clone());
            (
                joint(&[("z", &z), ("v", &v)])?,
                joint(&[("t", &t), ("v", &v)])?,
                product(&[("z", &kz), ("v", &kv)])?,
                product(&[("t", &kt), ("v", &kv)])?,
                v.dim(),
            )
        } else {
            (z, t.clone(), kz, kt, 0)
        };
        let (a, b) = split_halves(data.n(), cfg.split_seed, "instrument-split");
        let (cond_a, target_a) = (cond.select(&a), target.select(&a));
        let (cond_b, y_b) = (cond.select(&b), y.select(&b));
        let lambda = cfg.lambda_for(&k_cond, &cond_a)?;
        let xi = cfg.xi_for(&k_target, &target_a)?;
        let dmo = fit_dmo(
            DmoData {
                z: &cond_a,
                t: &target_a,
                z_tilde: &cond_b,
                labels: &y_b,
            },
            &k_cond,
            &k_target,
            &ky,
            lambda,
            xi,
        )?;
        Ok(Self {
            dmo,
            conditional,
            t_dim: t.dim(),
            v_dim,
            settings: ResolvedSettings {
                kernels,
                lambda,
                xi: Some(xi),
                split_seed: Some(cfg.split_seed),
            },
        })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    pub fn operator(&self) -> &DmoEstimate {
        &self.dmo
    }

    pub fn ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        if self.conditional {
            return Err(Error::Unsupported(
                "fitted with effect modifiers; use ime_conditional".into(),
            ));
        }
        check_query(t, self.t_dim)?;
        self.dmo.structural(t)
    }

    /// `μ_{Y|do(T=t), V=v}` for a conditional instrument.
    pub fn ime_conditional(&self, t: &PointSet, v: &PointSet) -> Result<WeightedEmbedding> {
        if !self.conditional {
            return Err(Error::MissingRole(Role::V));
        }
        check_query(t, self.t_dim)?;
        check_query(v, self.v_dim)?;
        self.dmo.structural(&joint(&[("t", t), ("v", v)])?)
    }

    pub fn ate(&self, t: &PointSet) -> Result<f64> {
        self.ime(t)?.mean_value()
    }

    pub fn ate_at(&self, t: f64) -> Result<f64> {
        self.ate(&PointSet::point(&[t]))
    }
}

/// Proximal causal learning: the bridge `h` solves
/// `E[Y | t, z] = E[h(t, U) | t, z]`, estimated as `D_{(T,U)|(T,Z)}`, and
/// the effect is `⟨h, k_T(·, t) ⊗ μ̂_U⟩`.
#[derive(Debug)]
pub struct Proxy {
    dmo: DmoEstimate,
    kt: KernelSpec,
    t_dim: usize,
    u_marginal: WeightedEmbedding,
    settings: ResolvedSettings,
}

impl Proxy {
    pub fn fit(data: &CausalDataset, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        data.require(&[Role::T, Role::Z, Role::U, Role::Y])?;
        if data.n() < MIN_SPLIT_SAMPLE {
            return Err(Error::SampleTooSmall {
                needed: MIN_SPLIT_SAMPLE,
                found: data.n(),
            });
        }
        let t = data.points(Role::T)?;
        let z = data.points(Role::Z)?;
        let u = data.points(Role::U)?;
        let y = data.points(Role::Y)?;
        let kt = cfg.kernel(Role::T, &t)?;
        let kz = cfg.kernel(Role::Z, &z)?;
        let ku = cfg.kernel(Role::U, &u)?;
        let ky = cfg.kernel(Role::Y, &y)?;
        let cond = joint(&[("t", &t), ("z", &z)])?;
        let target = joint(&[("t", &t), ("u", &u)])?;
        let k_cond = product(&[("t", &kt), ("z", &kz)])?;
        let k_target = product(&[("t", &kt), ("u", &ku)])?;
        let (a, b) = split_halves(data.n(), cfg.split_seed, "proxy-split");
        let (cond_a, target_a) = (cond.select(&a), target.select(&a));
        let (cond_b, y_b) = (cond.select(&b), y.select(&b));
        let lambda = cfg.lambda_for(&k_cond, &cond_a)?;
        let xi = cfg.xi_for(&k_target, &target_a)?;
        let dmo = fit_dmo(
            DmoData {
                z: &cond_a,
                t: &target_a,
                z_tilde: &cond_b,
                labels: &y_b,
            },
            &k_cond,
            &k_target,
            &ky,
            lambda,
            xi,
        )?;
        Ok(Self {
            u_marginal: mean_embed(&u, &ku)?,
            dmo,
            t_dim: t.dim(),
            settings: ResolvedSettings {
                kernels: BTreeMap::from([
                    (Role::T, kt.clone()),
                    (Role::Z, kz),
                    (Role::U, ku),
                    (Role::Y, ky),
                ]),
                lambda,
                xi: Some(xi),
                split_seed: Some(cfg.split_seed),
            },
            kt,
        })
    }

    pub fn settings(&self) -> &ResolvedSettings {
        &self.settings
    }

    pub fn ime(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        check_query(t, self.t_dim)?;
        let tensor = TensorEmbedding::new(vec![
            ("t".into(), point_mass(t, &self.kt)?),
            ("u".into(), self.u_marginal.clone()),
        ])?;
        self.dmo.apply(&tensor)
    }

    pub fn ate(&self, t: &PointSet) -> Result<f64> {
        self.ime(t)?.mean_value()
    }

    pub fn ate_at(&self, t: f64) -> Result<f64> {
        self.ate(&PointSet::point(&[t]))
    }
}

pub fn backdoor_ime(data: &CausalDataset, cfg: &EstimatorConfig, t: &PointSet) -> Result<WeightedEmbedding> {
    Backdoor::fit(data, cfg)?.ime(t)
}

pub fn backdoor_ate(data: &CausalDataset, cfg: &EstimatorConfig, t: &PointSet) -> Result<f64> {
    Backdoor::fit(data, cfg)?.ate(t)
}

pub fn backdoor_cate(
    data: &CausalDataset,
    cfg: &EstimatorConfig,
    t: &PointSet,
    v: &PointSet,
) -> Result<CateEstimate> {
    data.require(&[Role::V])?;
    Backdoor::fit(data, cfg)?.cate(data, cfg, t, v)
}

pub fn fusion_ime(
    d1: &CausalDataset,
    d2: &CausalDataset,
    cfg: &EstimatorConfig,
    t: &PointSet,
) -> Result<WeightedEmbedding> {
    Fusion::fit(d1, d2, cfg)?.ime(t)
}

pub fn frontdoor_ime(data: &CausalDataset, cfg: &EstimatorConfig, t: &PointSet) -> Result<WeightedEmbedding> {
    Frontdoor::fit(data, cfg)?.ime(t)
}

pub fn instrument_ime(data: &CausalDataset, cfg: &EstimatorConfig, t: &PointSet) -> Result<WeightedEmbedding> {
    Instrument::fit(data, cfg)?.ime(t)
}

pub fn proxy_ime(data: &CausalDataset, cfg: &EstimatorConfig, t: &PointSet) -> Result<WeightedEmbedding> {
    Proxy::fit(data, cfg)?.ime(t)
}

/// Treatment values for dose-response output: the observed support when it
/// has at most [`MAX_DISCRETE_LEVELS`] values, otherwise 20 equispaced
/// points between the 5th and 95th percentiles.
pub fn treatment_grid(t: &[f64]) -> Result<Vec<f64>> {
    if t.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= MAX_DISCRETE_LEVELS {
        return Ok(distinct);
    }
    let (lo, hi) = (quantile(&sorted, 0.05), quantile(&sorted, 0.95));
    Ok((0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_backdoor() -> CausalDataset {
        CausalDataset::from_roles(vec![
            (Role::X, vec![0.1, 0.5, -0.3, 1.2, 0.8, -1.0, 0.0, 0.4]),
            (Role::T, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]),
            (Role::Y, vec![0.3, 1.4, -0.1, 2.0, 1.6, -0.7, 1.1, 0.5]),
        ])
        .unwrap()
    }

    #[test]
    fn backdoor_paths_agree() {
        let bd = Backdoor::fit(&small_backdoor(), &EstimatorConfig::default()).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let q = PointSet::point(&[t]);
            let a = bd.ime(&q).unwrap();
            let b = bd.ime_via_operator(&q).unwrap();
            for (u, v) in a.weights().iter().zip(b.weights()) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn missing_roles_are_reported() {
        let d = CausalDataset::from_roles(vec![(Role::T, vec![0.0, 1.0]), (Role::Y, vec![1.0, 2.0])]).unwrap();
        assert!(matches!(Backdoor::fit(&d, &EstimatorConfig::default()), Err(Error::MissingRole(Role::X))));
        assert!(matches!(Frontdoor::fit(&d, &EstimatorConfig::default()), Err(Error::MissingRole(Role::S))));
    }

    #[test]
    fn cate_rejects_modifier_outside_x() {
        let d = CausalDataset::from_columns(vec![
            ("x", vec![0.1, 0.5, -0.3, 1.2]),
            ("t", vec![0.0, 1.0, 0.0, 1.0]),
            ("y", vec![0.3, 1.4, -0.1, 2.0]),
            ("w", vec![1.0, 2.0, 3.0, 4.0]),
        ])
        .unwrap()
        .with_role(Role::X, &["x"])
        .unwrap()
        .with_role(Role::T, &["t"])
        .unwrap()
        .with_role(Role::Y, &["y"])
        .unwrap()
        .with_role(Role::V, &["w"])
        .unwrap();
        let r = backdoor_cate(&d, &EstimatorConfig::default(), &PointSet::point(&[1.0]), &PointSet::point(&[2.0]));
        assert!(matches!(r, Err(Error::UnsupportedAdjustment(_))));
    }

    #[test]
    fn cate_extrapolation_is_flagged() {
        let d = small_backdoor().with_role(Role::V, &["x"]).unwrap();
        let cfg = EstimatorConfig::default();
        let inside = backdoor_cate(&d, &cfg, &PointSet::point(&[1.0]), &PointSet::point(&[0.2])).unwrap();
        assert!(!inside.extrapolation);
        let outside = backdoor_cate(&d, &cfg, &PointSet::point(&[1.0]), &PointSet::point(&[50.0])).unwrap();
        assert!(outside.extrapolation);
        assert!(outside.mean_value().unwrap().is_finite());
    }

    #[test]
    fn split_estimators_need_twenty_rows() {
        let d = CausalDataset::from_roles(vec![
            (Role::Z, (0..10).map(f64::from).collect()),
            (Role::T, (0..10).map(f64::from).collect()),
            (Role::Y, (0..10).map(f64::from).collect()),
        ])
        .unwrap();
        assert!(matches!(
            Instrument::fit(&d, &EstimatorConfig::default()),
            Err(Error::SampleTooSmall { needed: 20, .. })
        ));
    }

    #[test]
    fn grid_rules() {
        assert_eq!(treatment_grid(&[1.0, 0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let t: Vec<f64> = (0..=100).map(f64::from).collect();
        let g = treatment_grid(&t).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 5.0).abs() < 1e-12 && (g[19] - 95.0).abs() < 1e-12);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let (a, b) = split_halves(11, 4, "p");
        assert_eq!((a.len(), b.len()), (5, 6));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(split_halves(11, 4, "p"), (a, b));
    }

    #[test]
    fn config_validation_and_json() {
        let bad = EstimatorConfig {
            epsilon: 0.7,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg: EstimatorConfig =
            serde_json::from_str(r#"{"kernels":{"t":{"family":"linear"}},"lambda":0.01}"#).unwrap();
        assert_eq!(cfg.kernels[&Role::T], KernelSpec::linear());
        assert_eq!(cfg.lambda, Some(0.01));
        assert!(serde_json::from_str::<EstimatorConfig>(r#"{"lamda":0.01}"#).is_err());
    }
}
