use kecausal::embeddings::MeanEmbedding;
use kecausal::weighting::normalize;
use kecausal::{apply_cmo, fit_cmo, gram, mean_embed, permutation_p_value, KernelSpec, PointSet, WeightedEmbedding};
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|b| KernelSpec::gaussian(b).unwrap()),
        (prop_oneof![Just(0.5), Just(1.5), Just(2.5)], 0.2f64..5.0)
            .prop_map(|(nu, l)| KernelSpec::matern(nu, l).unwrap()),
    ]
}

fn points(max: usize, dim: usize) -> impl Strategy<Value = PointSet> {
    (1..=max).prop_flat_map(move |n| {
        prop::collection::vec(-3.0f64..3.0, n * dim).prop_map(move |v| PointSet::from_flat(v, dim).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_bounded_and_psd(spec in kernel(), x in points(12, 2), seed in any::<u64>()) {
        let k = gram(&spec, &x, &x).unwrap();
        let n = x.len();
        for i in 0..n {
            prop_assert!((k[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((k[(i, j)] - k[(j, i)]).abs() < 1e-12);
                prop_assert!(k[(i, j)] > -1e-12 && k[(i, j)] <= 1.0 + 1e-12);
            }
        }
        let v: Vec<f64> = (0..n).map(|i| ((seed.rotate_left(i as u32) % 1000) as f64 / 500.0) - 1.0).collect();
        let q: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| v[i] * k[(i, j)] * v[j]).sum();
        prop_assert!(q >= -1e-9 * n as f64);
    }

    #[test]
    fn evaluation_is_the_weighted_kernel_sum(
        spec in kernel(),
        x in points(10, 1),
        w in prop::collection::vec(-2.0f64..2.0, 10),
        y in -3.0f64..3.0,
    ) {
        let w = w[..x.len()].to_vec();
        let e = WeightedEmbedding::new(x.clone(), w.clone(), spec.clone()).unwrap();
        let q = PointSet::from_scalars(&[y]);
        let direct: f64 = x.rows().zip(&w).map(|(r, wi)| wi * spec.eval_slices(r, &[y]).unwrap()).sum();
        prop_assert!((e.evaluate(&q).unwrap()[0] - direct).abs() < 1e-10);
    }

    #[test]
    fn operator_application_is_linear(
        x in points(8, 1),
        a in points(5, 1),
        b in points(5, 1),
        c in -2.0f64..2.0,
    ) {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let cmo = fit_cmo(&x, &x, &spec, &spec, 1e-2).unwrap();
        let ea = mean_embed(&a, &spec).unwrap();
        let eb = mean_embed(&b, &spec).unwrap();
        let combo = WeightedEmbedding::new(
            a.concat(&b).unwrap(),
            ea.weights().iter().map(|w| c * w).chain(eb.weights().iter().copied()).collect(),
            spec.clone(),
        )
        .unwrap();
        let lhs = apply_cmo(&cmo, &combo).unwrap();
        let ra = apply_cmo(&cmo, &ea).unwrap();
        let rb = apply_cmo(&cmo, &eb).unwrap();
        for i in 0..x.len() {
            let expect = c * ra.weights()[i] + rb.weights()[i];
            prop_assert!((lhs.weights()[i] - expect).abs() < 1e-8 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn p_values_lie_in_the_add_one_range(observed in -5.0f64..5.0, permuted in prop::collection::vec(-5.0f64..5.0, 1..300)) {
        let p = permutation_p_value(observed, &permuted);
        let b = permuted.len() as f64;
        prop_assert!(p >= 1.0 / (b + 1.0) && p <= 1.0);
    }

    #[test]
    fn normalized_propensities_form_a_clipped_pmf(raw in prop::collection::vec(-1.0f64..3.0, 2..8), eps in 0.001f64..0.05) {
        let p = normalize(&raw, eps);
        prop_assert_eq!(p.len(), raw.len());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for v in &p {
            prop_assert!(*v >= eps - 1e-12 && *v <= 1.0 - eps + 1e-12);
        }
    }
}
