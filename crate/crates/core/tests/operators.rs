mod common;

use common::{bernoulli, mean, normals, ridge_predict, rng};
use kecausal::estimators::split_halves;
use kecausal::scenarios::InstrumentLinear;
use kecausal::{
    apply_cmo, cme_embedding, fit_cmo, fit_dmo, generate, DmoData, EstimatorConfig, Instrument, KernelSpec, PointSet,
    Role, ScenarioSpec, WeightedEmbedding,
};
use rand::Rng;

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

#[test]
fn cme_reproduces_identity_regression() {
    let mut r = rng(1);
    let x: Vec<f64> = (0..500).map(|_| r.random::<f64>() * 3.0 - 1.5).collect();
    let xs = PointSet::from_scalars(&x);
    let cmo = fit_cmo(&xs, &xs, &KernelSpec::gaussian_median(&xs).unwrap(), &KernelSpec::linear(), 1e-4).unwrap();
    for q in grid(-1.0, 1.0, 21) {
        let v = cme_embedding(&cmo, &PointSet::point(&[q])).unwrap().mean_value().unwrap();
        assert!((v - q).abs() <= 0.05, "{q}: {v}");
    }
}

#[test]
fn cme_tracks_noisy_conditional_mean() {
    let mut r = rng(2);
    let x: Vec<f64> = (0..1000).map(|_| r.random::<f64>() * 3.0 - 1.5).collect();
    let noise = normals(&mut r, 1000);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a + 0.1f64.sqrt() * e).collect();
    let xs = PointSet::from_scalars(&x);
    let cmo = fit_cmo(
        &xs,
        &PointSet::from_scalars(&y),
        &KernelSpec::gaussian_median(&xs).unwrap(),
        &KernelSpec::linear(),
        1e-3,
    )
    .unwrap();
    for q in grid(-1.0, 1.0, 11) {
        let v = cme_embedding(&cmo, &PointSet::point(&[q])).unwrap().mean_value().unwrap();
        assert!((v - q).abs() <= 0.05, "{q}: {v}");
    }
    let mut queries = rng(3);
    for _ in 0..100 {
        let q = PointSet::point(&[queries.random::<f64>() * 4.0 - 2.0]);
        assert!(cmo.residual(&q).unwrap() <= 1e-8);
        let direct: f64 = {
            let w = cmo.weights(&q).unwrap();
            w.iter().zip(&y).map(|(a, b)| a * b).sum()
        };
        let emb = cme_embedding(&cmo, &q).unwrap();
        assert!((emb.mean_value().unwrap() - direct).abs() < 1e-12);
    }
}

#[test]
fn apply_is_linear_in_input_weights() {
    let mut r = rng(4);
    let x = PointSet::from_scalars(&normals(&mut r, 80));
    let y = PointSet::from_scalars(&normals(&mut r, 80));
    let kx = KernelSpec::gaussian(0.7).unwrap();
    let ky = KernelSpec::gaussian(1.1).unwrap();
    let cmo = fit_cmo(&x, &y, &kx, &ky, 1e-3).unwrap();
    let a1 = PointSet::from_scalars(&normals(&mut r, 6));
    let a2 = PointSet::from_scalars(&normals(&mut r, 4));
    let w1: Vec<f64> = normals(&mut r, 6);
    let w2: Vec<f64> = normals(&mut r, 4);
    let e1 = WeightedEmbedding::new(a1.clone(), w1.clone(), kx.clone()).unwrap();
    let e2 = WeightedEmbedding::new(a2.clone(), w2.clone(), kx.clone()).unwrap();
    let (a, b) = (0.7, -1.9);
    let combined_weights: Vec<f64> = w1.iter().map(|w| a * w).chain(w2.iter().map(|w| b * w)).collect();
    let combined = WeightedEmbedding::new(a1.concat(&a2).unwrap(), combined_weights, kx).unwrap();
    let lhs = apply_cmo(&cmo, &combined).unwrap();
    let (r1, r2) = (apply_cmo(&cmo, &e1).unwrap(), apply_cmo(&cmo, &e2).unwrap());
    for i in 0..80 {
        let expect = a * r1.weights()[i] + b * r2.weights()[i];
        assert!((lhs.weights()[i] - expect).abs() < 1e-10);
    }
}

#[test]
fn chained_operators_match_two_step_expectation() {
    // X → S → Y with binary variables.
    let mut r = rng(5);
    let n = 2000;
    let (mut x, mut s, mut y) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let xv = bernoulli(&mut r, 0.4);
        let sv = bernoulli(&mut r, 0.2 + 0.6 * xv);
        x.push(xv);
        s.push(sv);
        y.push(bernoulli(&mut r, 0.3 + 0.5 * sv));
    }
    let (xs, ss, ys) = (PointSet::from_scalars(&x), PointSet::from_scalars(&s), PointSet::from_scalars(&y));
    let k = KernelSpec::gaussian(1.0).unwrap();
    let s_given_x = fit_cmo(&xs, &ss, &k, &k, 1e-3).unwrap();
    let y_given_s = fit_cmo(&ss, &ys, &k, &KernelSpec::linear(), 1e-3).unwrap();
    for xv in [0.0, 1.0] {
        let inner = cme_embedding(&s_given_x, &PointSet::point(&[xv])).unwrap();
        let out = apply_cmo(&y_given_s, &inner).unwrap().mean_value().unwrap();
        let exact = 0.3 + 0.5 * (0.2 + 0.6 * xv);
        assert!((out - exact).abs() <= 0.05, "x={xv}: {out} vs {exact}");
    }
}

#[test]
fn dmo_with_identical_stages_is_kernel_ridge() {
    let mut r = rng(6);
    let t: Vec<f64> = (0..100).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
    let y: Vec<f64> = t.iter().zip(normals(&mut r, 100)).map(|(a, e)| a.sin() + 0.2 * e).collect();
    let (ts, ys) = (PointSet::from_scalars(&t), PointSet::from_scalars(&y));
    let k = KernelSpec::gaussian(0.8).unwrap();
    let xi = 1e-3;
    let dmo = fit_dmo(
        DmoData {
            z: &ts,
            t: &ts,
            z_tilde: &ts,
            labels: &ys,
        },
        &k,
        &k,
        &KernelSpec::linear(),
        1e-8,
        xi,
    )
    .unwrap();
    for q in grid(-1.8, 1.8, 13) {
        let got = dmo.value(&PointSet::point(&[q])).unwrap();
        let want = ridge_predict(&t, &y, 0.8, 100.0 * xi, q);
        assert!((got - want).abs() <= 1e-4, "{q}: {got} vs {want}");
    }
}

#[test]
fn dmo_fits_constant_labels() {
    let mut r = rng(7);
    let t: Vec<f64> = (0..200).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let ts = PointSet::from_scalars(&t);
    let labels = PointSet::from_scalars(&vec![2.5; 200]);
    let k = KernelSpec::gaussian(0.5).unwrap();
    let dmo = fit_dmo(
        DmoData {
            z: &ts,
            t: &ts,
            z_tilde: &ts,
            labels: &labels,
        },
        &k,
        &k,
        &KernelSpec::linear(),
        1e-6,
        1e-6,
    )
    .unwrap();
    for q in grid(-0.9, 0.9, 10) {
        assert!((dmo.value(&PointSet::point(&[q])).unwrap() - 2.5).abs() <= 0.05);
    }
}

#[test]
fn dmo_is_linear_in_labels() {
    let mut r = rng(8);
    let z = PointSet::from_scalars(&normals(&mut r, 50));
    let t = PointSet::from_scalars(&normals(&mut r, 50));
    let zt = PointSet::from_scalars(&normals(&mut r, 40));
    let (l1, l2) = (normals(&mut r, 40), normals(&mut r, 40));
    let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| 3.0 * a - b).collect();
    let k = KernelSpec::gaussian(1.0).unwrap();
    let fit = |labels: &[f64]| {
        let labels = PointSet::from_scalars(labels);
        fit_dmo(DmoData { z: &z, t: &t, z_tilde: &zt, labels: &labels }, &k, &k, &KernelSpec::linear(), 1e-3, 1e-3)
            .unwrap()
    };
    let (d1, d2, d3) = (fit(&l1), fit(&l2), fit(&sum));
    for q in [-1.0, 0.0, 0.5] {
        let p = PointSet::point(&[q]);
        let expect = 3.0 * d1.value(&p).unwrap() - d2.value(&p).unwrap();
        assert!((d3.value(&p).unwrap() - expect).abs() < 1e-10);
    }
}

/// Two-sample 2SLS without intercept, with the same ridge terms as the
/// linear-kernel operator: first stage on half `a`, second on half `b`.
fn split_two_stage(z: &[f64], t: &[f64], y: &[f64], a: &[usize], b: &[usize], lambda: f64, xi: f64) -> f64 {
    let szt: f64 = a.iter().map(|&i| z[i] * t[i]).sum();
    let szz: f64 = a.iter().map(|&i| z[i] * z[i]).sum();
    let pi = szt / (szz + a.len() as f64 * lambda);
    let szy: f64 = b.iter().map(|&i| z[i] * y[i]).sum();
    let szz_b: f64 = b.iter().map(|&i| z[i] * z[i]).sum();
    pi * szy / (pi * pi * szz_b + b.len() as f64 * xi)
}

#[test]
fn linear_kernel_instrument_is_two_stage_least_squares() {
    let spec = ScenarioSpec::InstrumentLinear(InstrumentLinear::default());
    let data = generate(&spec, 2000, 11).unwrap();
    let d = data.single().unwrap();
    let cfg = EstimatorConfig {
        split_seed: 11,
        ..Default::default()
    }
    .with_kernel(Role::Z, KernelSpec::linear())
    .with_kernel(Role::T, KernelSpec::linear())
    .with_kernel(Role::Y, KernelSpec::linear());
    let iv = Instrument::fit(d, &cfg).unwrap();
    let s = iv.settings();
    let slope = iv.ate_at(1.0).unwrap() - iv.ate_at(0.0).unwrap();
    let (a, b) = split_halves(2000, 11, "instrument-split");
    let z = d.scalar(Role::Z).unwrap();
    let t = d.scalar(Role::T).unwrap();
    let y = d.scalar(Role::Y).unwrap();
    let exact = split_two_stage(z, t, y, &a, &b, s.lambda, s.xi.unwrap());
    assert!((slope - exact).abs() <= 1e-6, "{slope} vs {exact}");
}

#[test]
fn linear_instrument_tracks_structural_line() {
    let spec = ScenarioSpec::instrument_linear();
    let mut worst = Vec::new();
    for seed in 0..10 {
        let data = generate(&spec, 2000, seed).unwrap();
        let d = data.single().unwrap();
        let cfg = EstimatorConfig {
            split_seed: seed,
            ..Default::default()
        }
        .with_kernel(Role::Z, KernelSpec::linear())
        .with_kernel(Role::T, KernelSpec::linear());
        let iv = Instrument::fit(d, &cfg).unwrap();
        let mut t = d.scalar(Role::T).unwrap().to_vec();
        t.sort_by(f64::total_cmp);
        let (q1, q3) = (t[500], t[1500]);
        let err = grid(q1, q3, 9)
            .into_iter()
            .map(|v| (iv.ate_at(v).unwrap() - 2.0 * v).abs())
            .fold(0.0, f64::max);
        worst.push(err);
    }
    assert!(common::median(&worst) <= 0.2, "{worst:?}");
}

#[test]
fn holdout_error_falls_with_sample_size() {
    let f = |x: f64| (2.0 * x).sin();
    let mut errs = Vec::new();
    for n in [100, 400, 1600] {
        let mut per_seed = Vec::new();
        for seed in 0..5 {
            let mut r = rng(100 * seed + n as u64);
            let x: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
            let y: Vec<f64> = x.iter().zip(normals(&mut r, n)).map(|(a, e)| f(*a) + 0.3 * e).collect();
            let xs = PointSet::from_scalars(&x);
            let cmo = fit_cmo(&xs, &PointSet::from_scalars(&y), &KernelSpec::gaussian(0.5).unwrap(), &KernelSpec::linear(), 1e-3)
                .unwrap();
            let test: Vec<f64> = (0..200).map(|_| r.random::<f64>() * 3.6 - 1.8).collect();
            let mse: Vec<f64> = test
                .iter()
                .map(|&q| {
                    let v = cme_embedding(&cmo, &PointSet::point(&[q])).unwrap().mean_value().unwrap();
                    (v - f(q)).powi(2)
                })
                .collect();
            per_seed.push(mean(&mse));
        }
        errs.push(mean(&per_seed));
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
