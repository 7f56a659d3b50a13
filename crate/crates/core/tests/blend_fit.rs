use chrono::NaiveDate;
use onsetblend::blend::{fit_blend, predict_blend, BlendError, BlendModel, BlendObjective, FeatureRow, Standardization, N_PARAMS};
use onsetblend::Bin;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

fn zero_row(outcome: usize) -> FeatureRow {
    FeatureRow {
        grid_id: "g".into(),
        init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
        pi: [0.0; 4],
        alpha: [0.0; 4],
        nu: [0.0; 4],
        beta: [0.0; 4],
        mu: [0.0; 4],
        outcome: Some(Bin::from_index(outcome)),
    }
}

fn random_features(rng: &mut ChaCha8Rng) -> FeatureRow {
    let mut v = || -> [f64; 4] { std::array::from_fn(|_| StandardNormal.sample(rng)) };
    FeatureRow {
        grid_id: "g".into(),
        init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
        pi: v(),
        alpha: v(),
        nu: v(),
        beta: v(),
        mu: v(),
        outcome: None,
    }
}

#[test]
fn intercept_only_recovers_frequencies() {
    let counts = [10, 20, 30, 20, 20];
    let rows: Vec<FeatureRow> = counts.iter().enumerate().flat_map(|(k, &c)| (0..c).map(move |_| zero_row(k))).collect();
    let model = fit_blend(&rows, 0.0).unwrap();
    let p = predict_blend(&model, &rows[0]);
    for (j, &c) in counts.iter().enumerate() {
        assert!((p[j] - c as f64 / 100.0).abs() < 1e-6, "{p:?}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<FeatureRow> = (0..50)
        .map(|_| {
            let mut r = random_features(&mut rng);
            r.outcome = Some(Bin::from_index(rng.gen_range(0..5)));
            r
        })
        .collect();
    let obj = BlendObjective::new(&rows, 1e-3).unwrap();
    let c: Vec<f64> = (0..N_PARAMS).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let (_, g) = obj.value_and_gradient(&c);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..N_PARAMS {
        let mut up = c.clone();
        let mut dn = c.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()));
    }
    assert!(worst < 1e-6, "max relative error {worst}");

    let d = obj.derivatives(&c);
    for (a, b) in d.gradient.iter().zip(&g) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<FeatureRow> = (0..300)
        .map(|_| {
            let mut r = random_features(&mut rng);
            r.outcome = Some(Bin::from_index(rng.gen_range(0..5)));
            r
        })
        .collect();
    let obj = BlendObjective::new(&rows, 1e-2).unwrap();
    let c: Vec<f64> = (0..N_PARAMS).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let d = obj.derivatives(&c);
    let h = 1e-6;
    for i in (0..N_PARAMS).step_by(7) {
        let mut up = c.clone();
        let mut dn = c.clone();
        up[i] += h;
        dn[i] -= h;
        let (gu, gd) = (obj.value_and_gradient(&up).1, obj.value_and_gradient(&dn).1);
        for j in 0..N_PARAMS {
            let fd = (gu[j] - gd[j]) / (2.0 * h);
            assert!((d.hessian[(j, i)] - fd).abs() < 1e-6, "H[{j},{i}]");
        }
    }
}

#[test]
fn recovers_generating_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut truth = BlendModel {
        t: [[[0.0; 4]; 4]; 10],
        standardization: Standardization::identity(),
        diagnostics: None,
    };
    // Main effects (pi, alpha, nu, beta, mu) larger than interactions.
    for (l, plane) in truth.t.iter_mut().enumerate().skip(1) {
        let bound = if matches!(l, 1..=3 | 8 | 9) { 0.25 } else { 0.08 };
        for row in plane.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
    }
    for j in 0..4 {
        for k in 0..4 {
            truth.t[0][j][k] = 0.1 * (k as f64 - 1.5) / 4.0;
        }
    }
    // Features with sd 2 carry more information per row than unit ones.
    let rows: Vec<FeatureRow> = (0..20_000)
        .map(|_| {
            let mut r = random_features(&mut rng);
            for arr in [&mut r.pi, &mut r.alpha, &mut r.nu, &mut r.beta, &mut r.mu] {
                arr.iter_mut().for_each(|v| *v *= 2.0);
            }
            let p = predict_blend(&truth, &r);
            let k = WeightedIndex::new(p.as_array()).unwrap().sample(&mut rng);
            r.outcome = Some(Bin::from_index(k));
            r
        })
        .collect();
    let fitted = fit_blend(&rows, 1e-8).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in fitted.t.iter().flatten().flatten().zip(truth.t.iter().flatten().flatten()) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 0.05, "max abs coefficient error {worst}");
}

#[test]
fn fit_is_order_independent_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut rows: Vec<FeatureRow> = (0..1500)
        .map(|_| {
            let mut r = random_features(&mut rng);
            let k = if r.alpha[0] + 0.5 * r.pi[1] > 0.3 { 0 } else { rng.gen_range(1..5) };
            r.outcome = Some(Bin::from_index(k));
            r
        })
        .collect();
    let a = fit_blend(&rows, 1e-6).unwrap();
    let trace = &a.diagnostics.as_ref().unwrap().objective_trace;
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
    rows.shuffle(&mut rng);
    let b = fit_blend(&rows, 1e-6).unwrap();
    let ca = a.standardized_coefficients();
    let cb = b.standardized_coefficients();
    for (x, y) in ca.iter().zip(&cb) {
        assert!((x - y).abs() < 1e-8, "{x} vs {y}");
    }
}

#[test]
fn single_class_is_rejected() {
    let rows = vec![zero_row(2); 10];
    assert!(matches!(fit_blend(&rows, 1e-6), Err(BlendError::SingleClass(_))));
}
