//! Empirical kernel mean embeddings, MMD and HSIC.
//!
//! Every estimator in the crate returns a [`WeightedEmbedding`]: a finite
//! expansion `Σᵢ wᵢ k(·, aᵢ)` whose weights may be signed. Product-space
//! embeddings of the form `μ₁ ⊗ μ₂` are kept factored as a
//! [`TensorEmbedding`] so that evaluating them costs the sum, not the
//! product, of the factor sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_times, KernelSpec};
use crate::linalg::{dot, row_sums};
use crate::points::PointSet;

/// Anything that can be evaluated as a function in an RKHS.
pub trait MeanEmbedding {
    fn spec(&self) -> &KernelSpec;

    /// `μ(pᵢ)` for every point `pᵢ`.
    fn evaluate(&self, points: &PointSet) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEmbedding {
    atoms: PointSet,
    weights: Vec<f64>,
    spec: KernelSpec,
}

impl WeightedEmbedding {
    pub fn new(atoms: PointSet, weights: Vec<f64>, spec: KernelSpec) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: atoms.len(),
                right: weights.len(),
            });
        }
        Ok(Self {
            atoms,
            weights,
            spec,
        })
    }

    /// `k(·, x)` for a single point.
    pub fn point_mass(point: PointSet, spec: KernelSpec) -> Result<Self> {
        if point.len() != 1 {
            return Err(Error::LengthMismatch {
                left: 1,
                right: point.len(),
            });
        }
        Self::new(point, vec![1.0], spec)
    }

    pub fn atoms(&self) -> &PointSet {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_parts(self) -> (PointSet, Vec<f64>, KernelSpec) {
        (self.atoms, self.weights, self.spec)
    }

    /// Same atoms and weights under a different kernel.
    pub fn with_spec(&self, spec: KernelSpec) -> Self {
        Self {
            atoms: self.atoms.clone(),
            weights: self.weights.clone(),
            spec,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.clone(),
            weights: self.weights.iter().map(|w| c * w).collect(),
            spec: self.spec.clone(),
        }
    }

    /// `self − other` as one expansion over the union of atoms.
    pub fn difference(&self, other: &WeightedEmbedding) -> Result<Self> {
        check_same_spec(&self.spec, &other.spec)?;
        let atoms = self.atoms.concat(&other.atoms)?;
        let mut weights = self.weights.clone();
        weights.extend(other.weights.iter().map(|w| -w));
        Self::new(atoms, weights, self.spec.clone())
    }

    /// Evaluation at one point.
    pub fn evaluate_at(&self, point: &PointSet) -> Result<f64> {
        Ok(self.evaluate(point)?[0])
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σᵢ wᵢ aᵢ` for scalar atoms: the linear-kernel reduction that turns an
    /// outcome embedding into an expected outcome.
    pub fn mean_value(&self) -> Result<f64> {
        let y = self.atoms.scalars().map_err(|_| {
            Error::Unsupported(format!(
                "expected value needs scalar outcomes, atoms have dimension {}",
                self.atoms.dim()
            ))
        })?;
        Ok(dot(&self.weights, y))
    }
}

impl MeanEmbedding for WeightedEmbedding {
    fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    fn evaluate(&self, points: &PointSet) -> Result<Vec<f64>> {
        gram_times(&self.spec, points, &self.atoms, &self.weights)
    }
}

/// `μ₁ ⊗ μ₂ ⊗ …` over named variables, kept factored.
#[derive(Clone, Debug)]
pub struct TensorEmbedding {
    factors: Vec<(String, WeightedEmbedding)>,
    spec: KernelSpec,
}

impl TensorEmbedding {
    pub fn new(factors: Vec<(String, WeightedEmbedding)>) -> Result<Self> {
        let spec = KernelSpec::product(
            factors
                .iter()
                .map(|(name, e)| (name.clone(), e.spec.clone())),
        )?;
        Ok(Self { factors, spec })
    }

    pub fn factors(&self) -> &[(String, WeightedEmbedding)] {
        &self.factors
    }

    /// Expands into an explicit embedding over the Cartesian product of the
    /// factor atoms. Size is the product of factor sizes.
    pub fn materialize(&self) -> Result<WeightedEmbedding> {
        let sizes: Vec<usize> = self.factors.iter().map(|(_, e)| e.len()).collect();
        let total: usize = sizes.iter().product();
        let mut index_sets: Vec<Vec<usize>> = vec![Vec::with_capacity(total); sizes.len()];
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; sizes.len()];
        for _ in 0..total {
            let mut w = 1.0;
            for (f, &i) in idx.iter().enumerate() {
                index_sets[f].push(i);
                w *= self.factors[f].1.weights[i];
            }
            weights.push(w);
            for f in (0..sizes.len()).rev() {
                idx[f] += 1;
                if idx[f] < sizes[f] {
                    break;
                }
                idx[f] = 0;
            }
        }
        let parts: Vec<PointSet> = self
            .factors
            .iter()
            .zip(&index_sets)
            .map(|((_, e), ix)| e.atoms.select(ix))
            .collect();
        let named: Vec<(&str, &PointSet)> = self
            .factors
            .iter()
            .zip(&parts)
            .map(|((name, _), p)| (name.as_str(), p))
            .collect();
        WeightedEmbedding::new(PointSet::join(&named)?, weights, self.spec.clone())
    }
}

impl MeanEmbedding for TensorEmbedding {
    fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    fn evaluate(&self, points: &PointSet) -> Result<Vec<f64>> {
        let mut out = vec![1.0; points.len()];
        for (name, e) in &self.factors {
            let vals = e.evaluate(&points.block(name)?)?;
            for (o, v) in out.iter_mut().zip(vals) {
                *o *= v;
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_same_spec(a: &KernelSpec, b: &KernelSpec) -> Result<()> {
    if a != b {
        return Err(Error::SpecMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Uniform-weight empirical embedding `(1/n) Σ k(·, xᵢ)`.
pub fn mean_embed(sample: &PointSet, spec: &KernelSpec) -> Result<WeightedEmbedding> {
    if sample.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let w = 1.0 / sample.len() as f64;
    WeightedEmbedding::new(sample.clone(), vec![w; sample.len()], spec.clone())
}

/// RKHS inner product `⟨a, b⟩`.
pub fn embedding_inner(a: &WeightedEmbedding, b: &dyn MeanEmbedding) -> Result<f64> {
    check_same_spec(&a.spec, b.spec())?;
    Ok(dot(&a.weights, &b.evaluate(&a.atoms)?))
}

/// Squared RKHS distance between two embeddings.
pub fn embedding_distance2(a: &WeightedEmbedding, b: &WeightedEmbedding) -> Result<f64> {
    check_same_spec(&a.spec, &b.spec)?;
    let aa = embedding_inner(a, a)?;
    let bb = embedding_inner(b, b)?;
    let ab = embedding_inner(a, b)?;
    Ok(aa + bb - 2.0 * ab)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdEstimator {
    /// V-statistic `‖μ̂_P − μ̂_Q‖²`; never negative.
    Biased,
    /// U-statistic with within-sample diagonal terms removed.
    Unbiased,
}

/// Squared maximum mean discrepancy between two samples.
pub fn mmd2(p: &PointSet, q: &PointSet, spec: &KernelSpec, estimator: MmdEstimator) -> Result<f64> {
    let needed = match estimator {
        MmdEstimator::Biased => 1,
        MmdEstimator::Unbiased => 2,
    };
    for s in [p, q] {
        if s.len() < needed {
            return Err(Error::SampleTooSmall {
                needed,
                found: s.len(),
            });
        }
    }
    let kpp = gram(spec, p, p)?;
    let kqq = gram(spec, q, q)?;
    let kpq = gram(spec, p, q)?;
    let (n, m) = (p.len() as f64, q.len() as f64);
    let sum = |k: &faer::Mat<f64>| row_sums(k.as_ref()).iter().sum::<f64>();
    let trace = |k: &faer::Mat<f64>| (0..k.nrows()).map(|i| k[(i, i)]).sum::<f64>();
    Ok(match estimator {
        MmdEstimator::Biased => {
            let v = sum(&kpp) / (n * n) + sum(&kqq) / (m * m) - 2.0 * sum(&kpq) / (n * m);
            v.max(0.0)
        }
        MmdEstimator::Unbiased => {
            (sum(&kpp) - trace(&kpp)) / (n * (n - 1.0))
                + (sum(&kqq) - trace(&kqq)) / (m * (m - 1.0))
                - 2.0 * sum(&kpq) / (n * m)
        }
    })
}

/// Doubly centred Gram matrix `H K H`, stored row-major.
pub(crate) fn centered(k: &faer::Mat<f64>) -> Vec<f64> {
    let n = k.nrows();
    let nf = n as f64;
    let means: Vec<f64> = row_sums(k.as_ref()).into_iter().map(|s| s / nf).collect();
    let grand = means.iter().sum::<f64>() / nf;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = k[(i, j)] - means[i] - means[j] + grand;
        }
    }
    out
}

/// Biased HSIC, `(1/n²)·trace(K H L H)`.
pub fn hsic(x: &PointSet, y: &PointSet, spec_x: &KernelSpec, spec_y: &KernelSpec) -> Result<f64> {
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
    let l = gram(spec_y, y, y)?;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += kc[i * n + j] * l[(i, j)];
        }
    }
    Ok((acc / (n * n) as f64).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    #[test]
    fn mean_embed_examples() {
        let e = mean_embed(&PointSet::from_scalars(&[0.0, 1.0]), &g1()).unwrap();
        let v = e.evaluate_at(&PointSet::point(&[0.0])).unwrap();
        assert!((v - (1.0 + (-0.5f64).exp()) / 2.0).abs() < 1e-15);
        assert!((v - 0.803265).abs() < 1e-6);
        let s = mean_embed(&PointSet::from_scalars(&[3.0]), &g1()).unwrap();
        assert_eq!(s.evaluate_at(&PointSet::point(&[3.0])).unwrap(), 1.0);
        let many = mean_embed(&PointSet::from_scalars(&[1.0, 2.0, 5.0, 7.0]), &g1()).unwrap();
        assert_eq!(many.weight_sum(), 1.0);
        assert!(mean_embed(&PointSet::from_scalars(&[]), &g1()).is_err());
    }

    #[test]
    fn inner_examples() {
        let a = WeightedEmbedding::point_mass(PointSet::point(&[0.0]), g1()).unwrap();
        let b = WeightedEmbedding::point_mass(PointSet::point(&[1.0]), g1()).unwrap();
        assert_eq!(embedding_inner(&a, &a).unwrap(), 1.0);
        assert!((embedding_inner(&a, &b).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let c = b.with_spec(KernelSpec::gaussian(2.0).unwrap());
        assert!(matches!(embedding_inner(&a, &c), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn mmd_examples() {
        let p = PointSet::from_scalars(&[0.0]);
        let q = PointSet::from_scalars(&[1.0]);
        let want = 2.0 - 2.0 * (-0.5f64).exp();
        let v = mmd2(&p, &q, &g1(), MmdEstimator::Biased).unwrap();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.786939).abs() < 1e-6);
        let s = PointSet::from_scalars(&[0.3, -1.2, 2.0]);
        assert!(mmd2(&s, &s, &g1(), MmdEstimator::Biased).unwrap().abs() < 1e-12);
        assert!(matches!(
            mmd2(&p, &q, &g1(), MmdEstimator::Unbiased),
            Err(Error::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn hsic_constant_y_is_zero() {
        let x = PointSet::from_scalars(&[0.1, 0.5, -2.0, 3.0]);
        let y = PointSet::from_scalars(&[1.0; 4]);
        assert!(hsic(&x, &y, &g1(), &g1()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hsic_two_points_matches_brute_force() {
        // brute force: trace(K H L H)/n² with explicit 2×2 matrices
        let (a, b) = (0.0, 1.3);
        let (c, d) = (2.0, -0.4);
        let kx = (-(a - b) * (a - b) / 2.0f64).exp();
        let ky = (-(c - d) * (c - d) / 2.0f64).exp();
        let k = [[1.0, kx], [kx, 1.0]];
        let l = [[1.0, ky], [ky, 1.0]];
        let h = [[0.5, -0.5], [-0.5, 0.5]];
        let mul = |p: [[f64; 2]; 2], q: [[f64; 2]; 2]| {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for t in 0..2 {
                        r[i][j] += p[i][t] * q[t][j];
                    }
                }
            }
            r
        };
        let m = mul(mul(mul(k, h), l), h);
        let brute = (m[0][0] + m[1][1]) / 4.0;
        let got = hsic(&PointSet::from_scalars(&[a, b]), &PointSet::from_scalars(&[c, d]), &g1(), &g1())
            .unwrap();
        assert!((got - brute).abs() < 1e-12);
        assert!((brute - (1.0 - kx) * (1.0 - ky) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn hsic_length_mismatch() {
        let x = PointSet::from_scalars(&[0.0, 1.0]);
        let y = PointSet::from_scalars(&[0.0, 1.0, 2.0]);
        assert!(matches!(hsic(&x, &y, &g1(), &g1()), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn tensor_materialize_matches_factored_evaluation() {
        let a = mean_embed(&PointSet::from_scalars(&[0.0, 1.0, 2.0]), &g1()).unwrap();
        let b = WeightedEmbedding::new(PointSet::from_scalars(&[-1.0, 0.5]), vec![0.3, -0.8], KernelSpec::linear())
            .unwrap();
        let t = TensorEmbedding::new(vec![("s".into(), a), ("t".into(), b)]).unwrap();
        let m = t.materialize().unwrap();
        assert_eq!(m.len(), 6);
        let s = PointSet::from_scalars(&[0.2, 1.7]);
        let tt = PointSet::from_scalars(&[0.4, -2.0]);
        let q = PointSet::join(&[("s", &s), ("t", &tt)]).unwrap();
        let direct = t.evaluate(&q).unwrap();
        let expanded = m.evaluate(&q).unwrap();
        for (u, v) in direct.iter().zip(&expanded) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_value_requires_scalar_atoms() {
        let e = WeightedEmbedding::new(PointSet::from_scalars(&[1.0, 3.0]), vec![0.25, 0.5], g1()).unwrap();
        assert_eq!(e.mean_value().unwrap(), 1.75);
        let v = WeightedEmbedding::new(PointSet::from_rows(&[[1.0, 2.0]]).unwrap(), vec![1.0], g1()).unwrap();
        assert!(matches!(v.mean_value(), Err(Error::Unsupported(_))));
    }
}
