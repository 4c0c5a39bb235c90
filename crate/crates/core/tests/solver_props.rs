use chdarcy::diagnostics::{continuous_dependence_experiment, energy_budget};
use chdarcy::grid::{mean, BcKind, Grid, ScalarField};
use chdarcy::oracles::*;
use chdarcy::potential::PotentialSpec;
use chdarcy::solver::*;
use chdarcy::source::{GammaPreset, GammaSpec, SourceModel};
use proptest::prelude::*;

fn random_state(grid: Grid, seed: u64, spec: &PotentialSpec, source: &SourceModel, cfg: &StepperConfig) -> SimState {
    let ic = InitialCondition {
        kind: InitialKind::Random { seed },
        m0: 0.1,
        amplitude: 0.6,
    };
    initial_state(grid, &ic, spec, source, cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn homogeneous_oracle_stays_inside(phi0 in -0.999f64..0.999, g in -5.0f64..5.0, t in 0.0f64..50.0) {
        let v = homogeneous_exact(phi0, g, t).unwrap();
        prop_assert!(v.abs() <= 1.0);
        prop_assert!(v.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mean_is_conserved_without_source_or_flow(seed in 0u64..1000, lambda in 0.0f64..4.0) {
        let grid = Grid::new(12, 10, 3.0, 2.5).unwrap();
        let spec = PotentialSpec::strongly_separating(lambda, 0.05).unwrap();
        let source = SourceModel::Mass(GammaSpec::zero());
        let mut cfg = StepperConfig::new(5e-3);
        cfg.transport = false;
        let mut state = random_state(grid, seed, &spec, &source, &cfg);
        for _ in 0..10 {
            let next = step(&state, &spec, &source, &cfg).unwrap().state;
            prop_assert!((mean(&next.phi) - mean(&state.phi)).abs() < 1e-12);
            state = next;
        }
    }
}

#[test]
fn brute_force_matches_production_stepper() {
    for seed in [7, 42, 123] {
        let r = brute_force_small_grid(seed, 1e-4, 10).unwrap();
        assert_eq!(r.per_step.len(), 10);
        assert!(r.max_deviation() < 1e-9, "seed {seed}: {:?}", r.per_step);
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let grid = Grid::new(16, 16, 4.0, 4.0).unwrap();
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let source = SourceModel::Mass(GammaSpec::new(GammaPreset::SpaceBump { x0: (2.0, 2.0), w: 1.0 }, 1.0));
    let cfg = StepperConfig::new(1e-3);
    let go = || {
        let s = random_state(grid, 9, &spec, &source, &cfg);
        let mut rows = Vec::new();
        run(&s, 0.05, &spec, &source, &cfg, &mut |rec, _| rows.push(rec.csv_row())).unwrap();
        rows
    };
    assert_eq!(go(), go());
}

#[test]
fn positive_gamma_drives_mean_down() {
    let grid = Grid::new(16, 16, 4.0, 4.0).unwrap();
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let source = SourceModel::Mass(GammaSpec::constant(0.3));
    let cfg = StepperConfig::new(1e-2);
    let ic = InitialCondition {
        kind: InitialKind::Random { seed: 1 },
        m0: 0.0,
        amplitude: 0.2,
    };
    let s = initial_state(grid, &ic, &spec, &source, &cfg).unwrap();
    let mut means = Vec::new();
    run(&s, 0.5, &spec, &source, &cfg, &mut |rec, _| means.push(rec.mean_phi)).unwrap();
    assert!(means.windows(2).all(|w| w[1] < w[0]));
    assert!(*means.last().unwrap() < -0.1);
}

#[test]
fn toy_mean_oracle_tracks_the_ode() {
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let grid = Grid::new(16, 16, 4.0, 4.0).unwrap();
    let r = toy_mean_experiment(grid, &spec, 0.6, 1.0, 0.2, 1e-3, 1.0).unwrap();
    assert!(r.passed(), "{} vs {}", r.max_error(), r.tolerance);
    // first order: halving dt halves the error
    let r2 = toy_mean_experiment(grid, &spec, 0.6, 1.0, 0.2, 5e-4, 1.0).unwrap();
    let ratio = r.max_error() / r2.max_error();
    assert!((1.8..2.2).contains(&ratio), "{ratio}");
}

#[test]
fn coupled_energy_residual_vanishes_under_refinement() {
    // With Darcy coupling on, the budget residual is O(dt) numerical
    // dissipation plus an O(h^2) spatial defect; refining (h, dt) -> (h/2, dt/2)
    // must shrink it by a factor between 2 and 4.
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let source = SourceModel::Mass(GammaSpec::constant(0.5));
    let residual = |n: usize, dt: f64| {
        let grid = Grid::new(n, n, 4.0, 4.0).unwrap();
        let cfg = StepperConfig::new(1e-3);
        let phi = ScalarField::from_fn(grid, BcKind::NeumannZero, |x, y| 0.6 * (1.2 - (x - 2.0).hypot(y - 2.0)).tanh());
        let start = SimState::from_phi(phi, 0.0, &spec, &source, &cfg).unwrap();
        // relax the stiff initial transient first
        let relaxed = run(&start, 0.3, &spec, &source, &cfg, &mut |_, _| {}).unwrap();
        let next = step_with(&relaxed, &spec, &source, &cfg, dt).unwrap().state;
        energy_budget(&relaxed, &next, dt, &spec, &source).unwrap().abs()
    };
    let (a, b, c) = (residual(16, 4e-4), residual(32, 2e-4), residual(64, 1e-4));
    for ratio in [a / b, b / c] {
        assert!((1.8..4.4).contains(&ratio), "{a} {b} {c}");
    }
}

#[test]
fn decoupled_budget_residual_is_dissipative() {
    let grid = Grid::new(16, 16, 4.0, 4.0).unwrap();
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let source = SourceModel::Mass(GammaSpec::zero());
    let mut cfg = StepperConfig::new(1e-2);
    cfg.transport = false;
    let mut state = random_state(grid, 5, &spec, &source, &cfg);
    for _ in 0..50 {
        let next = step(&state, &spec, &source, &cfg).unwrap().state;
        assert!(energy_budget(&state, &next, cfg.dt, &spec, &source).unwrap() <= 1e-8);
        state = next;
    }
}

#[test]
fn continuous_dependence_zero_and_linear() {
    let grid = Grid::new(16, 16, 4.0, 4.0).unwrap();
    let spec = PotentialSpec::strongly_separating(3.0, 0.05).unwrap();
    let source = SourceModel::Mass(GammaSpec::constant(0.3));
    let cfg = StepperConfig::new(2e-3);
    let phi = ScalarField::from_fn(grid, BcKind::NeumannZero, |x, y| 0.5 * ((x - 2.0).hypot(y - 2.0) - 1.0).tanh());
    let zero = continuous_dependence_experiment(&phi, &spec, &source, &cfg, 0.1, 0.0).unwrap();
    assert!(zero.diff_norms.iter().all(|&d| d == 0.0));
    let a = continuous_dependence_experiment(&phi, &spec, &source, &cfg, 0.1, 1e-4).unwrap();
    let b = continuous_dependence_experiment(&phi, &spec, &source, &cfg, 0.1, 5e-5).unwrap();
    let half = b.diff_norms.last().unwrap() / a.diff_norms.last().unwrap();
    assert!((0.45..0.55).contains(&half), "{half}");
    // no step-to-step jumps far beyond the local trend
    for w in a.diff_norms.windows(3) {
        let trend = (w[1] - w[0]).abs().max(1e-3 * w[1]);
        assert!((w[2] - w[1]).abs() <= 10.0 * trend);
    }
}
