use nalgebra::DMatrix;
use popdyn::model::LinearSection;
use popdyn::models::{kretzschmar, KretzschmarParams};
use popdyn::ode::{eval_solution, ode_solve_with, OdeOptions};
use popdyn::semigroup::{mild_solve_with, mu_norm_dense, p_matrix, r_apply, MildOptions, TruncatedQ};
use popdyn::Weight;
use proptest::prelude::*;

/// A random section whose columns satisfy the drift condition with growth
/// rate `w`: off-diagonals are nonnegative and each diagonal entry absorbs
/// the weighted column sum plus a nonnegative leak.
fn random_section() -> impl Strategy<Value = (DMatrix<f64>, f64)> {
    (2usize..9).prop_flat_map(|k| {
        let n = k + 1;
        (
            proptest::collection::vec(prop_oneof![1 => Just(0.0), 2 => 0.0f64..3.0], n * n),
            proptest::collection::vec(0.0f64..1.0, n),
            0.0f64..1.5,
        )
            .prop_map(move |(off, leak, w)| {
                let mu = Weight::linear();
                let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { off[i * n + j] });
                for c in 0..n {
                    let out: f64 = (0..n).filter(|&r| r != c).map(|r| a[(r, c)] * mu.eval(r) / mu.eval(c)).sum();
                    a[(c, c)] = w - out - leak[c];
                }
                (a, w)
            })
    })
}

fn kr_initial(k: usize) -> Vec<f64> {
    let mut x = vec![0.0; k + 1];
    x[0] = 0.6;
    x[1] = 0.3;
    x[3] = 0.1;
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_matrix_is_stochastic((a, w) in random_section(), t in 0.0f64..3.0) {
        let q = TruncatedQ::new(LinearSection::from_dense(&a), &Weight::linear(), w).unwrap();
        let p = p_matrix(&q, t, 1e-15);
        let tol = 1e-12;
        for i in 0..p.nrows() {
            let row: f64 = p.row(i).iter().sum();
            prop_assert!((row - 1.0).abs() <= tol, "row {} sums to {}", i, row);
            prop_assert!(p.row(i).iter().all(|&v| v >= -tol));
        }
    }

    #[test]
    fn tilted_semigroup_growth_bound(
        (a, w) in random_section(),
        t in 0.0f64..2.0,
        raw in proptest::collection::vec(-1.0f64..1.0, 9),
    ) {
        let q = TruncatedQ::new(LinearSection::from_dense(&a), &Weight::linear(), w).unwrap();
        let x = &raw[..=q.k()];
        let y = r_apply(&q, t, x, 1e-15);
        let bound = (w * t).exp() * mu_norm_dense(x, q.mu());
        prop_assert!(mu_norm_dense(&y, q.mu()) <= bound * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn mild_grid_stable_under_step_halving() {
    let model = kretzschmar(Default::default()).unwrap();
    let x0 = kr_initial(60);
    let coarse = mild_solve_with(&model, &x0, 1.0, &MildOptions { step: 0.02, ..MildOptions::default() }).unwrap();
    let fine = mild_solve_with(&model, &x0, 1.0, &MildOptions { step: 0.01, ..MildOptions::default() }).unwrap();
    let mu: Vec<f64> = (0..=60).map(|j| j as f64 + 1.0).collect();
    for (i, t) in coarse.times.iter().enumerate() {
        let f = &fine.values[2 * i];
        assert!((fine.times[2 * i] - t).abs() < 1e-12);
        let diff: Vec<f64> = coarse.values[i].iter().zip(f).map(|(a, b)| a - b).collect();
        let d = mu_norm_dense(&diff, &mu);
        assert!(d < 1e-6, "t = {t}: step halving moved the solution by {d}");
    }
}

#[test]
fn picard_residual_contracts_for_weak_infection() {
    let model = kretzschmar(KretzschmarParams { lambda: 0.2, ..Default::default() }).unwrap();
    let sol = mild_solve_with(&model, &kr_initial(40), 1.0, &MildOptions::default()).unwrap();
    assert!(!sol.residual_history.is_empty());
    for hist in &sol.residual_history {
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "residuals {hist:?}");
        }
    }
    assert!(sol.residual <= 1e-12);
}

#[test]
fn doubling_truncation_moves_ode_by_tail_budget() {
    let model = kretzschmar(Default::default()).unwrap();
    let x0 = kr_initial(3);
    let eps_tail = 1e-10;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, eps_tail, ..OdeOptions::default() };
    let adaptive = ode_solve_with(&model, &x0, 2.0, &opts).unwrap();
    let k = adaptive.k;
    let wide = ode_solve_with(
        &model,
        &x0,
        2.0,
        &OdeOptions { fixed_k: true, k_initial: Some(2 * k), ..opts.clone() },
    )
    .unwrap();
    for t in [0.5, 1.0, 2.0] {
        let a = eval_solution(&adaptive, t).unwrap();
        let b = eval_solution(&wide, t).unwrap();
        let diff: Vec<f64> = (0..b.len()).map(|j| a.get(j).copied().unwrap_or(0.0) - b[j]).collect();
        let d = wide.mu_norm(&diff);
        assert!(d < 4.0 * eps_tail, "t = {t}: K = {k} vs {}: {d}", 2 * k);
    }
}

#[test]
fn ode_stays_nonnegative() {
    for lambda in [0.2, 2.0, 4.0] {
        let model = kretzschmar(KretzschmarParams { lambda, ..Default::default() }).unwrap();
        let opts = OdeOptions::default();
        let sol = ode_solve_with(&model, &kr_initial(3), 2.0, &opts).unwrap();
        for v in &sol.values {
            assert!(v.iter().all(|&x| x >= -opts.atol));
        }
        for i in 0..=40 {
            let x = eval_solution(&sol, 2.0 * i as f64 / 40.0).unwrap();
            assert!(x.iter().all(|&v| v >= -10.0 * opts.atol));
        }
    }
}
