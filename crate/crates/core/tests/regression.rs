use proptest::prelude::*;
use pvfc_core::features::{ColumnSource, DesignMatrix};
use pvfc_core::ingestion::Cell;
use pvfc_core::linalg::Matrix;
use pvfc_core::regression::*;
use pvfc_core::Timestamp;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn instance(seed: u64, rows: usize, cols: usize, corr: f64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = vec![0.0; rows * cols];
    for i in 0..rows {
        let common = g();
        for j in 0..cols {
            x[i * cols + j] = corr * common + g() * (1.0 + j as f64 * 0.3) + j as f64;
        }
    }
    let beta: Vec<f64> = (0..cols).map(|j| if j % 2 == 0 { 0.0 } else { 1.0 / (1.0 + j as f64) }).collect();
    let y = (0..rows).map(|i| 2.0 + (0..cols).map(|j| x[i * cols + j] * beta[j]).sum::<f64>() + g()).collect();
    DesignMatrix {
        horizon_steps: 1,
        columns: (0..cols).map(|j| ColumnSource::Pixel(Cell::new(j, 0))).collect(),
        x: Matrix::from_row_major(rows, cols, x),
        y,
        row_times: (0..rows).map(|i| Timestamp(i as i64 * 900)).collect(),
    }
}

/// Independent standardization: returns (X~ column-major, y~, stds).
fn standardize(dm: &DesignMatrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = dm.n_rows() as f64;
    let mut cols = Vec::new();
    let mut stds = Vec::new();
    for j in 0..dm.n_cols() {
        let c = dm.x.column(j);
        let m = c.iter().sum::<f64>() / n;
        let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        cols.push(c.iter().map(|v| (v - m) / s).collect());
        stds.push(s);
    }
    let my = dm.y.iter().sum::<f64>() / n;
    (cols, dm.y.iter().map(|v| v - my).collect(), stds)
}

/// Largest KKT violation on the standardized problem.
fn kkt_violation(dm: &DesignMatrix, c: &Coefficients, lambda: f64) -> f64 {
    let (xs, ys, stds) = standardize(dm);
    let n = dm.n_rows() as f64;
    let bt: Vec<f64> = c.weights.iter().zip(&stds).map(|(w, s)| w * s).collect();
    let mut r = ys.clone();
    for (j, b) in bt.iter().enumerate() {
        for i in 0..r.len() {
            r[i] -= b * xs[j][i];
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..bt.len() {
        let g: f64 = xs[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n;
        let v = if bt[j] == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * bt[j].signum()).abs() };
        worst = worst.max(v);
    }
    worst
}

#[test]
fn kkt_along_a_path() {
    let dm = instance(3, 200, 20, 0.8);
    let cfg = LassoConfig::default();
    for lambda in lambda_path(&dm, &LassoConfig { path_length: 10, ..cfg }) {
        let c = lasso_fit(&dm, &cfg.with_lambda(lambda)).unwrap();
        assert!(c.diagnostics.converged);
        assert!(kkt_violation(&dm, &c, lambda) <= 10.0 * cfg.tol, "lambda {lambda}");
    }
}

#[test]
fn affine_invariant_predictions_under_lasso() {
    let dm = instance(5, 150, 6, 0.2);
    let cfg = LassoConfig { tol: 1e-10, ..LassoConfig::default() }.with_lambda(0.05);
    let a = lasso_fit(&dm, &cfg).unwrap().predict(&dm);
    let mut moved = dm.clone();
    for i in 0..moved.n_rows() {
        let v = moved.x.get(i, 1) * -3.0 + 40.0;
        moved.x.set(i, 1, v);
    }
    let b = lasso_fit(&moved, &cfg).unwrap().predict(&moved);
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-8);
    }
}

#[test]
fn support_shrinks_with_lambda_in_most_instances() {
    let cfg = LassoConfig::default();
    let mut monotone = 0;
    let total = 40;
    for seed in 0..total {
        let dm = instance(1000 + seed, 120, 12, 0.5);
        let path = lambda_path(&dm, &LassoConfig { path_length: 15, ..cfg });
        let sizes: Vec<usize> =
            path.iter().map(|&l| lasso_fit(&dm, &cfg.with_lambda(l)).unwrap().n_nonzero()).collect();
        // Path runs from large to small lambda: the support may only grow.
        if sizes.windows(2).all(|w| w[0] <= w[1]) {
            monotone += 1;
        } else {
            eprintln!("non-monotone support on seed {}: {sizes:?}", 1000 + seed);
        }
    }
    assert!(monotone * 100 >= total * 95, "{monotone}/{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kkt_holds(seed in 0u64..10_000, frac in 0.01f64..0.9, corr in 0.0f64..2.0) {
        let dm = instance(seed, 80, 8, corr);
        let cfg = LassoConfig::default();
        let lmax = lambda_path(&dm, &LassoConfig { path_length: 1, ..cfg })[0];
        let c = lasso_fit(&dm, &cfg.with_lambda(frac * lmax)).unwrap();
        prop_assert!(kkt_violation(&dm, &c, frac * lmax) <= 10.0 * cfg.tol);
    }

    #[test]
    fn objective_never_increases(seed in 0u64..10_000, frac in 0.0f64..0.5) {
        let dm = instance(seed, 60, 10, 1.5);
        let cfg = LassoConfig::default();
        let lmax = lambda_path(&dm, &LassoConfig { path_length: 1, ..cfg })[0];
        let c = lasso_fit(&dm, &cfg.with_lambda(frac * lmax)).unwrap();
        for w in c.diagnostics.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
    }
}
