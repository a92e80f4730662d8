//! Conditional and deconditional mean operators.
//!
//! A conditional mean operator (CMO) maps `k(·, x)` to the embedding of
//! `Y | X = x`; it is kernel ridge regression in feature space. A
//! deconditional mean operator (DMO) runs the regression backwards through
//! a first-stage CMO, as in two-stage instrumental regression.

use faer::Mat;
use rand::seq::SliceRandom;

use crate::embeddings::{check_same_spec, MeanEmbedding, WeightedEmbedding};
use crate::error::{invalid, Error, Result};
use crate::kernels::{gram, gram_column, KernelSpec};
use crate::linalg::{self, SpdSolver};
use crate::points::PointSet;
use crate::rng;

/// Relative size of the default regularization: `λ = 1e-3·trace(K)/n`.
pub const DEFAULT_REGULARIZATION_SCALE: f64 = 1e-3;

/// Default ridge parameter for a kernel on `points`.
pub fn default_regularization(spec: &KernelSpec, points: &PointSet) -> Result<f64> {
    let md = spec.mean_diagonal(points)?;
    if md > 0.0 {
        Ok(DEFAULT_REGULARIZATION_SCALE * md)
    } else {
        // all-zero inputs under a linear kernel
        Ok(DEFAULT_REGULARIZATION_SCALE)
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// Fitted estimate of `C_{Y|X}`.
#[derive(Debug)]
pub struct CmoEstimate {
    input_atoms: PointSet,
    output_atoms: PointSet,
    input_spec: KernelSpec,
    output_spec: KernelSpec,
    lambda: f64,
    solver: SpdSolver,
}

/// Fits `C_{Y|X}` on paired samples by factoring `K_X + nλI`.
pub fn fit_cmo(
    x: &PointSet,
    y: &PointSet,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    lambda: f64,
) -> Result<CmoEstimate> {
    check_positive("lambda", lambda)?;
    if x.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    let k = gram(spec_x, x, x)?;
    let solver = SpdSolver::factor_shifted(&k, n as f64 * lambda, "conditional mean operator")?;
    Ok(CmoEstimate {
        input_atoms: x.clone(),
        output_atoms: y.clone(),
        input_spec: spec_x.clone(),
        output_spec: spec_y.clone(),
        lambda,
        solver,
    })
}

impl CmoEstimate {
    pub fn len(&self) -> usize {
        self.input_atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_atoms.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn input_atoms(&self) -> &PointSet {
        &self.input_atoms
    }

    pub fn output_atoms(&self) -> &PointSet {
        &self.output_atoms
    }

    pub fn input_spec(&self) -> &KernelSpec {
        &self.input_spec
    }

    pub fn output_spec(&self) -> &KernelSpec {
        &self.output_spec
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    /// `β(x) = (K_X + nλI)⁻¹ k_X(X, x)`.
    pub fn weights(&self, x: &PointSet) -> Result<Vec<f64>> {
        let rhs = gram_column(&self.input_spec, &self.input_atoms, x)?;
        Ok(self.solver.solve_vec(&rhs))
    }

    /// `β` for many queries at once, one column per query.
    pub fn weights_many(&self, xs: &PointSet) -> Result<Mat<f64>> {
        let rhs = gram(&self.input_spec, &self.input_atoms, xs)?;
        Ok(self.solver.solve(rhs.as_ref()))
    }

    /// `μ̂_{Y|X=x} = Σᵢ βᵢ(x) k_Y(·, Yᵢ)`.
    pub fn embedding(&self, x: &PointSet) -> Result<WeightedEmbedding> {
        WeightedEmbedding::new(
            self.output_atoms.clone(),
            self.weights(x)?,
            self.output_spec.clone(),
        )
    }

    /// Applies the operator to an arbitrary embedding on the input space.
    pub fn apply(&self, input: &dyn MeanEmbedding) -> Result<WeightedEmbedding> {
        check_same_spec(&self.input_spec, input.spec())?;
        let rhs = input.evaluate(&self.input_atoms)?;
        WeightedEmbedding::new(
            self.output_atoms.clone(),
            self.solver.solve_vec(&rhs),
            self.output_spec.clone(),
        )
    }

    /// `‖(K + nλI)β − k(X, x)‖ / ‖k(X, x)‖` for the solved weights at `x`.
    pub fn residual(&self, x: &PointSet) -> Result<f64> {
        let n = self.len();
        let mut k = gram(&self.input_spec, &self.input_atoms, &self.input_atoms)?;
        for i in 0..n {
            k[(i, i)] += n as f64 * self.lambda;
        }
        let rhs = gram_column(&self.input_spec, &self.input_atoms, x)?;
        let beta = self.solver.solve_vec(&rhs);
        Ok(linalg::relative_residual(k.as_ref(), &beta, &rhs))
    }
}

pub fn cme_weights(cmo: &CmoEstimate, x: &PointSet) -> Result<Vec<f64>> {
    cmo.weights(x)
}

pub fn cme_embedding(cmo: &CmoEstimate, x: &PointSet) -> Result<WeightedEmbedding> {
    cmo.embedding(x)
}

pub fn apply_cmo(cmo: &CmoEstimate, input: &dyn MeanEmbedding) -> Result<WeightedEmbedding> {
    cmo.apply(input)
}

/// Default ridge grid for [`select_lambda`].
pub const LAMBDA_GRID: [f64; 6] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

/// Picks the ridge parameter minimizing held-out reconstruction error
/// `mean_j ‖k(·, yⱼ) − μ̂_{Y|X=xⱼ}‖²` on a seeded 80/20 split.
pub fn select_lambda(
    x: &PointSet,
    y: &PointSet,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    grid: &[f64],
    seed: u64,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 5 {
        return Err(Error::SampleTooSmall {
            needed: 5,
            found: x.len(),
        });
    }
    if grid.is_empty() {
        return Err(invalid("grid", "no candidate values"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut rng::stream(seed, "lambda-selection"));
    let cut = x.len() * 4 / 5;
    let (train, hold) = idx.split_at(cut);
    let (xt, yt) = (x.select(train), y.select(train));
    let (xh, yh) = (x.select(hold), y.select(hold));
    let l_tt = gram(spec_y, &yt, &yt)?;
    let l_th = gram(spec_y, &yt, &yh)?;
    let l_hh: Vec<f64> = yh.rows().map(|r| spec_diag(spec_y, r)).collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        check_positive("grid", lambda)?;
        let cmo = fit_cmo(&xt, &yt, spec_x, spec_y, lambda)?;
        let b = cmo.weights_many(&xh)?;
        let lb = &l_tt * &b;
        let mut err = 0.0;
        for j in 0..xh.len() {
            let mut cross = 0.0;
            let mut quad = 0.0;
            for i in 0..xt.len() {
                cross += l_th[(i, j)] * b[(i, j)];
                quad += b[(i, j)] * lb[(i, j)];
            }
            err += l_hh[j] - 2.0 * cross + quad;
        }
        let err = err / xh.len() as f64;
        log::debug!("lambda {lambda:e}: held-out reconstruction error {err:.6e}");
        if err < best.0 {
            best = (err, lambda);
        }
    }
    Ok(best.1)
}

fn spec_diag(spec: &KernelSpec, row: &[f64]) -> Result<f64> {
    let p = PointSet::point(row);
    spec.mean_diagonal(&p)
}

/// Samples for a two-stage deconditioning fit.
#[derive(Clone, Copy, Debug)]
pub struct DmoData<'a> {
    /// Stage-1 conditioning sample.
    pub z: &'a PointSet,
    /// Stage-1 target sample, paired with `z`.
    pub t: &'a PointSet,
    /// Stage-2 conditioning sample.
    pub z_tilde: &'a PointSet,
    /// Stage-2 labels, paired with `z_tilde`.
    pub labels: &'a PointSet,
}

/// Fitted deconditional mean operator.
///
/// Stores `A = (WWᵀ + mξK_TT)⁻¹ W` with `W = K_TT (K_ZZ + nλI)⁻¹ K_{Z,Z̃}`,
/// so that the structural function at `t` is the label expansion with
/// weights `Aᵀ k_T(T, t)`.
#[derive(Debug)]
pub struct DmoEstimate {
    t_atoms: PointSet,
    labels: PointSet,
    t_spec: KernelSpec,
    label_spec: KernelSpec,
    lambda: f64,
    xi: f64,
    coefficients: Mat<f64>,
}

pub fn fit_dmo(
    data: DmoData<'_>,
    spec_z: &KernelSpec,
    spec_t: &KernelSpec,
    label_spec: &KernelSpec,
    lambda: f64,
    xi: f64,
) -> Result<DmoEstimate> {
    check_positive("lambda", lambda)?;
    check_positive("xi", xi)?;
    let (n, m) = (data.z.len(), data.z_tilde.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyPointSet);
    }
    if data.t.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: data.t.len(),
        });
    }
    if data.labels.len() != m {
        return Err(Error::LengthMismatch {
            left: m,
            right: data.labels.len(),
        });
    }
    let k_zz = gram(spec_z, data.z, data.z)?;
    let stage1 = SpdSolver::factor_shifted(&k_zz, n as f64 * lambda, "deconditioning stage 1")?;
    drop(k_zz);
    let k_zzt = gram(spec_z, data.z, data.z_tilde)?;
    let b = stage1.solve(k_zzt.as_ref());
    drop(k_zzt);
    let k_tt = gram(spec_t, data.t, data.t)?;
    let w = &k_tt * &b;
    drop(b);
    let mut system = &w * w.transpose();
    let mxi = m as f64 * xi;
    for j in 0..n {
        for i in 0..n {
            system[(i, j)] += mxi * k_tt[(i, j)];
        }
    }
    let stage2 = SpdSolver::factor(system.as_ref(), "deconditioning stage 2")?;
    let coefficients = stage2.solve(w.as_ref());
    Ok(DmoEstimate {
        t_atoms: data.t.clone(),
        labels: data.labels.clone(),
        t_spec: spec_t.clone(),
        label_spec: label_spec.clone(),
        lambda,
        xi,
        coefficients,
    })
}

impl DmoEstimate {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn t_atoms(&self) -> &PointSet {
        &self.t_atoms
    }

    pub fn labels(&self) -> &PointSet {
        &self.labels
    }

    pub fn t_spec(&self) -> &KernelSpec {
        &self.t_spec
    }

    /// The `n × m` matrix `A`.
    pub fn coefficients(&self) -> &Mat<f64> {
        &self.coefficients
    }

    /// Label weights `Aᵀ k_T(T, t)` at a single point.
    pub fn weights(&self, t: &PointSet) -> Result<Vec<f64>> {
        let k = gram_column(&self.t_spec, &self.t_atoms, t)?;
        Ok(linalg::mat_t_vec(self.coefficients.as_ref(), &k))
    }

    /// Structural function at `t` as an embedding over the labels.
    pub fn structural(&self, t: &PointSet) -> Result<WeightedEmbedding> {
        WeightedEmbedding::new(self.labels.clone(), self.weights(t)?, self.label_spec.clone())
    }

    /// Structural function at `t` for scalar labels.
    pub fn value(&self, t: &PointSet) -> Result<f64> {
        self.structural(t)?.mean_value()
    }

    /// Applies the operator to an embedding on the stage-1 target space,
    /// e.g. `k_T(·, t) ⊗ μ̂_U`.
    pub fn apply(&self, input: &dyn MeanEmbedding) -> Result<WeightedEmbedding> {
        check_same_spec(&self.t_spec, input.spec())?;
        let v = input.evaluate(&self.t_atoms)?;
        WeightedEmbedding::new(
            self.labels.clone(),
            linalg::mat_t_vec(self.coefficients.as_ref(), &v),
            self.label_spec.clone(),
        )
    }
}

pub fn dmo_structural(dmo: &DmoEstimate, t: &PointSet) -> Result<WeightedEmbedding> {
    dmo.structural(t)
}
