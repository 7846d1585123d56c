//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use popdyn::harness::{exceedance_probe, fit_rate, run_convergence, Correction, ExperimentPlan};
use popdyn::model::{drift_consistency, PopulationModel};
use popdyn::models::{arrigoni, finite_generator, kretzschmar, BuiltinModel, FiniteTestModel};
use popdyn::moments::sample_states;
use popdyn::ode::{eval_solution, ode_solve_with, OdeOptions};
use popdyn::semigroup::{build_q, check_semigroup_props, mild_solve};
use popdyn::ssa::{
    ensemble, ensemble_with, martingale_mean_test, moment_bound_check, simulate, PathObserver, SimConfig,
};
use popdyn::state::densify;
use popdyn::SparseState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn builtins() -> Vec<BuiltinModel> {
    vec![
        BuiltinModel::Kretzschmar(kretzschmar(Default::default()).unwrap()),
        BuiltinModel::Arrigoni(arrigoni(Default::default()).unwrap()),
    ]
}

fn default_initial(model: &BuiltinModel) -> Vec<(usize, f64)> {
    match model {
        BuiltinModel::Arrigoni(_) => vec![(0, 0.5), (1, 0.5)],
        _ => vec![(0, 0.6), (1, 0.3), (2, 0.1)],
    }
}

fn ssa_oracle() -> Outcome {
    let cap = 30;
    let model = FiniteTestModel::birth_death(10.0, 1.0, Some(cap)).unwrap();
    let x0 = SparseState::from_pairs(&[(0, 5)]);
    let (states, q) = finite_generator(&model, 1).unwrap();
    let p = (q * 1.0).exp();
    let start = states.iter().position(|s| *s == x0).unwrap();
    let law: Vec<f64> = (0..states.len()).map(|j| p[(start, j)]).collect();

    let reps = 100_000u64;
    let mut counts = vec![0u64; states.len()];
    let cfg = SimConfig {
        record_grid: vec![1.0],
        tracked_r: vec![],
        tracked_components: vec![],
        store_events: false,
        ..SimConfig::new(1, 1.0, 1)
    };
    for i in 0..reps {
        let sim = simulate(&model, &x0, &SimConfig { seed: 1 + i, ..cfg.clone() }).unwrap();
        let end = &sim.trajectory.states[0];
        counts[states.iter().position(|s| s == end).unwrap()] += 1;
    }
    let tv: f64 = 0.5 * law.iter().zip(&counts).map(|(p, &c)| (p - c as f64 / reps as f64).abs()).sum::<f64>();
    Outcome { passed: tv < 0.02, detail: format!("TV = {tv:.4} over {reps} replicates (bound 0.02)") }
}

fn drift_split() -> Outcome {
    let mut worst: f64 = 0.0;
    for model in builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in sample_states(&model, &mut rng, 1000, 100, 30) {
            let x = s.scaled(1000.0, 0);
            worst = worst.max(drift_consistency(&model, &x, 40).unwrap());
        }
    }
    Outcome { passed: worst < 1e-10, detail: format!("worst interior residual {worst:.2e} (bound 1e-10)") }
}

fn semigroup_numerics() -> Outcome {
    let model = kretzschmar(Default::default()).unwrap();
    let q = build_q(&model, 60).unwrap();
    let rep = check_semigroup_props(&q, &[0.1, 1.0], 1e-6);
    let mut law = check_semigroup_props(&q, &[1.0], 1e-6).semigroup_error;
    law = law.max(rep.semigroup_error);
    let passed = rep.interior == 40 && rep.column_excess <= 1e-8 && law < 1e-6;
    Outcome {
        passed,
        detail: format!(
            "column excess {:.2e} (bound 1e-8), |R(.5)R(.5)-R(1)| = {law:.2e} (bound 1e-6), derivative {:.2e}, interior j <= {}",
            rep.column_excess, rep.derivative_error, rep.interior
        ),
    }
}

fn mild_vs_ode() -> Outcome {
    let k = 80;
    let mut worst: f64 = 0.0;
    for model in builtins() {
        let x0 = densify(&default_initial(&model), k + 1);
        let mild = mild_solve(&model, &x0, 2.0, 1e-13).unwrap();
        let opts = OdeOptions {
            rtol: 1e-11,
            atol: 1e-14,
            fixed_k: true,
            k_initial: Some(k),
            ..OdeOptions::default()
        };
        let ode = ode_solve_with(&model, &x0, 2.0, &opts).unwrap();
        for (t, v) in mild.times.iter().zip(&mild.values) {
            let o = eval_solution(&ode, *t).unwrap();
            let d: f64 = (0..=k).map(|i| model.weights().mu.eval(i) * (o[i] - v[i]).abs()).sum();
            worst = worst.max(d);
        }
    }
    Outcome { passed: worst < 1e-6, detail: format!("sup-grid mu-distance {worst:.2e} (bound 1e-6)") }
}

fn lln_rate(plan: &ExperimentPlan) -> (Outcome, Outcome) {
    let table = run_convergence(plan).unwrap();
    let means: Vec<f64> = table.rows.iter().map(|r| r.mean_sup_err).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]) && table.rows.len() == plan.n_grid.len();
    let fit = fit_rate(&table, Correction::SqrtLog).unwrap();
    let passed = decreasing && (-0.60..=-0.40).contains(&fit.slope) && fit.ci_width() < 0.15;
    let rate = Outcome {
        passed,
        detail: format!(
            "means {:?}, slope {:.4}, CI [{:.4}, {:.4}] width {:.4}",
            means.iter().map(|m| format!("{m:.4e}")).collect::<Vec<_>>(),
            fit.slope,
            fit.ci.0,
            fit.ci.1,
            fit.ci_width()
        ),
    };
    let k2 = 2.0 * fit.prefactor();
    let curve = exceedance_probe(&table, &[k2]);
    let fr = &curve.fractions[0];
    let exceed = Outcome {
        passed: fr.windows(2).all(|w| w[1] <= w[0]),
        detail: format!("K2 = {k2:.4}, fractions {fr:?}"),
    };
    (rate, exceed)
}

fn moment_bound() -> Outcome {
    let model = kretzschmar(Default::default()).unwrap();
    let n = 1000;
    let x0 = SparseState::from_density(&[(0, 0.6), (1, 0.3), (2, 0.1)], n);
    let cfg = SimConfig::new(n, 2.0, 6_000);
    let sum = ensemble(&model, &x0, &cfg, 200, threads()).unwrap();
    let margins = moment_bound_check(&sum, &model, 1).unwrap();
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome {
        passed: sum.failures.is_empty() && worst >= 0.0,
        detail: format!("smallest margin {worst:.4e} over {} grid times", margins.len()),
    }
}

struct Conservation {
    n: u64,
    violations: usize,
    pieces: usize,
}

impl PathObserver for Conservation {
    fn hold(&mut self, _: f64, _: f64, _: &[f64], state: &SparseState) {
        self.pieces += 1;
        if state.total() != self.n {
            self.violations += 1;
        }
    }

    fn statistic(&self) -> f64 {
        self.violations as f64 + 1e-9 * self.pieces as f64
    }
}

fn conservation() -> Outcome {
    let model = arrigoni(Default::default()).unwrap();
    let n = 1000;
    let x0 = SparseState::from_density(&[(0, 0.5), (1, 0.5)], n);
    let cfg = SimConfig::new(n, 2.0, 7_000);
    let sum = ensemble_with(&model, &x0, &cfg, 50, threads(), |_| Conservation { n, violations: 0, pieces: 0 }).unwrap();
    let stats = sum.statistics();
    let violations: f64 = stats.iter().map(|s| s.floor()).sum();
    let pieces: f64 = stats.iter().map(|s| (s.fract() * 1e9).round()).sum();
    Outcome {
        passed: sum.failures.is_empty() && sum.replicates.len() == 50 && violations == 0.0,
        detail: format!("{violations} violations over {pieces} constant pieces in 50 replicates"),
    }
}

fn martingale_zero_mean() -> Outcome {
    let mut worst: f64 = 0.0;
    for (idx, model) in builtins().into_iter().enumerate() {
        let n = 1000;
        let x0 = SparseState::from_density(&default_initial(&model), n);
        let cfg = SimConfig { tracked_components: vec![0, 1, 2], ..SimConfig::new(n, 2.0, 8_000 + 1_000 * idx as u64) };
        let sum = ensemble(&model, &x0, &cfg, 200, threads()).unwrap();
        for k in 0..3 {
            let z = martingale_mean_test(&sum, k).unwrap();
            worst = worst.max(z.last().unwrap().abs());
        }
    }
    Outcome { passed: worst <= 4.0, detail: format!("largest |z| at T = {worst:.3} (bound 4)") }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!("criterion {id} [{verdict}] {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    };
    report(1, "SSA matches the finite-generator law", &mut ssa_oracle);
    report(2, "drift split consistency", &mut drift_split);
    report(3, "tilted semigroup numerics", &mut semigroup_numerics);
    report(4, "mild solution agrees with ODE", &mut mild_vs_ode);

    let plan = ExperimentPlan { threads: threads(), ..ExperimentPlan::default() };
    let start = Instant::now();
    let (rate, exceed) = lln_rate(&plan);
    let secs = start.elapsed().as_secs_f64();
    report(5, "law-of-large-numbers rate", &mut || Outcome { passed: rate.passed, detail: format!("{} ({secs:.1}s run)", rate.detail) });
    report(6, "first-moment bound", &mut moment_bound);
    report(7, "conservation of patches", &mut conservation);
    report(8, "martingale zero mean", &mut martingale_zero_mean);
    report(9, "exceedance decay", &mut || Outcome { passed: exceed.passed, detail: exceed.detail.clone() });

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
