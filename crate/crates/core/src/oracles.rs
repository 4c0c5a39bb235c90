//! Reference solutions used as independent ground truth: closed forms for
//! reduced dynamics and a dense re-implementation of one coupled step on a
//! tiny grid.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{inner, BcKind, Grid, ScalarField};
use crate::potential::{eval_f, eval_fprime, PotentialSpec};
use crate::solver::{self, SimState, StepperConfig};
use crate::source::{gamma_eval, GammaSpec, SourceModel};

/// `tanh(artanh(phi0) - gamma0 t)`: the solution of
/// `phi' = -(1 - phi^2) gamma0`, the spatially homogeneous reduction.
pub fn homogeneous_exact(phi0: f64, gamma0: f64, t: f64) -> Result<f64> {
    if phi0.is_nan() || phi0.abs() >= 1.0 {
        return Err(Error::Domain { value: phi0 });
    }
    Ok((phi0.atanh() - gamma0 * t).tanh())
}

/// `m(t)` solving `m' + k m = sbar`.
pub fn toy_mean_exact(m0: f64, k: f64, sbar: f64, t: f64) -> f64 {
    let eq = sbar / k;
    eq + (m0 - eq) * (-k * t).exp()
}

/// Growth rate `-kappa^4 + (lambda - 2) kappa^2` of a cosine mode about
/// `phi = 0`, where `f'(0) = 2`.
pub fn dispersion_rate(kappa: f64, lambda: f64) -> f64 {
    let k2 = kappa * kappa;
    -k2 * k2 + (lambda - 2.0) * k2
}

/// Time series produced by a simulation/oracle pair.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub exact: Vec<f64>,
    pub tolerance: f64,
    pub records: Vec<DiagnosticsRecord>,
}

impl OracleResult {
    pub fn abs_errors(&self) -> Vec<f64> {
        self.values.iter().zip(&self.exact).map(|(a, b)| (a - b).abs()).collect()
    }

    pub fn max_error(&self) -> f64 {
        self.abs_errors().into_iter().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.tolerance
    }
}

/// Homogeneous run `phi0` everywhere with constant `gamma0`, compared with
/// [`homogeneous_exact`] at every step.
pub fn homogeneous_experiment(
    grid: Grid,
    spec: &PotentialSpec,
    phi0: f64,
    gamma0: f64,
    dt: f64,
    t_end: f64,
) -> Result<OracleResult> {
    let source = SourceModel::Mass(GammaSpec::constant(gamma0));
    let cfg = StepperConfig::new(dt);
    let initial = SimState::from_phi(ScalarField::constant(grid, BcKind::NeumannZero, phi0), 0.0, spec, &source, &cfg)?;
    let mut out = OracleResult {
        name: "homogeneous".into(),
        times: Vec::new(),
        values: Vec::new(),
        exact: Vec::new(),
        tolerance: 1e-3,
        records: Vec::new(),
    };
    solver::run(&initial, t_end, spec, &source, &cfg, &mut |rec, state| {
        // spatially constant by symmetry; track the worst node
        let worst = state
            .phi
            .values
            .iter()
            .copied()
            .max_by(|a, b| {
                let ea = (a - homogeneous_exact(phi0, gamma0, state.t).unwrap_or(f64::NAN)).abs();
                let eb = (b - homogeneous_exact(phi0, gamma0, state.t).unwrap_or(f64::NAN)).abs();
                ea.total_cmp(&eb)
            })
            .unwrap_or(f64::NAN);
        out.times.push(state.t);
        out.values.push(worst);
        out.exact.push(homogeneous_exact(phi0, gamma0, state.t).unwrap_or(f64::NAN));
        out.records.push(rec.clone());
    })?;
    Ok(out)
}

/// Mean value under the linear relaxation source `-k phi + sbar`, compared
/// with [`toy_mean_exact`]. The initial datum is a non-uniform stripe so the
/// Cahn-Hilliard flux is active while the mean follows the ODE.
pub fn toy_mean_experiment(
    grid: Grid,
    spec: &PotentialSpec,
    m0: f64,
    k: f64,
    sbar: f64,
    dt: f64,
    t_end: f64,
) -> Result<OracleResult> {
    let source = SourceModel::Relaxation { rate: k, sbar };
    let mut cfg = StepperConfig::new(dt);
    cfg.transport = false;
    let lx = grid.lx;
    let phi = ScalarField::from_fn(grid, BcKind::NeumannZero, |x, _| {
        m0 + 0.2 * (std::f64::consts::PI * x / lx).cos()
    });
    let initial = SimState::from_phi(phi, 0.0, spec, &source, &cfg)?;
    let mut out = OracleResult {
        name: "toy-mean".into(),
        times: Vec::new(),
        values: Vec::new(),
        exact: Vec::new(),
        // forward-Euler mean: global error <= t k |m0 - sbar/k| k dt / 2
        tolerance: dt * k * k * (m0 - sbar / k).abs() * t_end.max(1.0) + 1e-12,
        records: Vec::new(),
    };
    solver::run(&initial, t_end, spec, &source, &cfg, &mut |rec, state| {
        out.times.push(state.t);
        out.values.push(rec.mean_phi);
        out.exact.push(toy_mean_exact(m0, k, sbar, state.t));
        out.records.push(rec.clone());
    })?;
    Ok(out)
}

/// Measured early-time growth rate of the Neumann mode `cos(m pi x / lx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRate {
    pub mode: usize,
    pub kappa: f64,
    pub measured: f64,
    pub predicted: f64,
}

impl ModeRate {
    pub fn relative_error(&self) -> f64 {
        ((self.measured - self.predicted) / self.predicted).abs()
    }
}

/// Seeds `amp cos(m pi x / lx)` with the Darcy coupling and source off and
/// fits the growth rate of the mode's projection over `[0, t_end]`.
pub fn dispersion_experiment(
    grid: Grid,
    lambda: f64,
    eps: f64,
    mode: usize,
    amp: f64,
    dt: f64,
    t_end: f64,
) -> Result<ModeRate> {
    let spec = PotentialSpec::strongly_separating(lambda, eps)?;
    let source = SourceModel::Mass(GammaSpec::zero());
    let mut cfg = StepperConfig::new(dt);
    cfg.transport = false;
    let kappa = mode as f64 * std::f64::consts::PI / grid.lx;
    let shape = ScalarField::from_fn(grid, BcKind::NeumannZero, |x, _| (kappa * x).cos());
    let initial = SimState::from_phi(shape.map(|v| amp * v), 0.0, &spec, &source, &cfg)?;
    let norm2 = inner(&shape, &shape);
    let a0 = inner(&initial.phi, &shape) / norm2;
    let mut samples: Vec<(f64, f64)> = vec![(0.0, a0.ln())];
    solver::run(&initial, t_end, &spec, &source, &cfg, &mut |_, state| {
        let a = inner(&state.phi, &shape) / norm2;
        samples.push((state.t, a.abs().ln()));
    })?;
    // least-squares slope of ln(amplitude) against t
    let n = samples.len() as f64;
    let (st, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    Ok(ModeRate {
        mode,
        kappa,
        measured: num / den,
        predicted: dispersion_rate(kappa, lambda),
    })
}

// ---------------------------------------------------------------------------
// Dense brute force.
// ---------------------------------------------------------------------------

/// Node-wise snapshot from the dense oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub t: f64,
    pub phi: DVector<f64>,
    pub mu: DVector<f64>,
    pub p: DVector<f64>,
    pub ux: DVector<f64>,
    pub uy: DVector<f64>,
}

/// Explicitly assembled operators of the discretisation.
pub struct DenseOperators {
    pub grid: Grid,
    /// `-laplacian` with no-flux closure.
    pub a: DMatrix<f64>,
    /// `-laplacian` with homogeneous Dirichlet closure.
    pub b: DMatrix<f64>,
    pub gx_neumann: DMatrix<f64>,
    pub gy_neumann: DMatrix<f64>,
    pub gx_dirichlet: DMatrix<f64>,
    pub gy_dirichlet: DMatrix<f64>,
    pub div_x: DMatrix<f64>,
    pub div_y: DMatrix<f64>,
}

impl DenseOperators {
    /// Assembles every operator row by row from face fluxes and neighbour
    /// lookups.
    pub fn assemble(grid: Grid) -> Self {
        let n = grid.nx * grid.ny;
        let (hx, hy) = (grid.lx / grid.nx as f64, grid.ly / grid.ny as f64);
        let at = |i: isize, j: isize| -> Option<usize> {
            (i >= 0 && j >= 0 && (i as usize) < grid.nx && (j as usize) < grid.ny)
                .then(|| j as usize * grid.nx + i as usize)
        };
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        let mut gxn = DMatrix::zeros(n, n);
        let mut gyn = DMatrix::zeros(n, n);
        let mut gxd = DMatrix::zeros(n, n);
        let mut gyd = DMatrix::zeros(n, n);
        let mut dx = DMatrix::zeros(n, n);
        let mut dy = DMatrix::zeros(n, n);
        for j in 0..grid.ny as isize {
            for i in 0..grid.nx as isize {
                let row = at(i, j).unwrap();
                let dirs = [(1isize, 0isize, hx, 1.0), (-1, 0, hx, -1.0), (0, 1, hy, 1.0), (0, -1, hy, -1.0)];
                for (di, dj, h, sign) in dirs {
                    let (gn, gd, dv) = if di != 0 { (&mut gxn, &mut gxd, &mut dx) } else { (&mut gyn, &mut gyd, &mut dy) };
                    match at(i + di, j + dj) {
                        Some(col) => {
                            // interior face: flux difference / h^2
                            a[(row, row)] += 1.0 / (h * h);
                            a[(row, col)] -= 1.0 / (h * h);
                            b[(row, row)] += 1.0 / (h * h);
                            b[(row, col)] -= 1.0 / (h * h);
                            gn[(row, col)] += sign / (2.0 * h);
                            gd[(row, col)] += sign / (2.0 * h);
                            dv[(row, col)] += sign / (2.0 * h);
                        }
                        None => {
                            // wall: zero flux for A; value pinned to zero on
                            // the face for B (half-cell distance)
                            b[(row, row)] += 2.0 / (h * h);
                            gn[(row, row)] += sign / (2.0 * h);
                            gd[(row, row)] -= sign / (2.0 * h);
                            dv[(row, row)] += sign / (2.0 * h);
                        }
                    }
                }
            }
        }
        Self {
            grid,
            a,
            b,
            gx_neumann: gxn,
            gy_neumann: gyn,
            gx_dirichlet: gxd,
            gy_dirichlet: gyd,
            div_x: dx,
            div_y: dy,
        }
    }

    fn source_terms(&self, gamma: &GammaSpec, phi: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>) {
        let g = self.grid;
        let mut s = DVector::zeros(phi.len());
        let mut eff = DVector::zeros(phi.len());
        for k in 0..phi.len() {
            let (i, j) = (k % g.nx, k / g.nx);
            let x = ((i as f64 + 0.5) * g.lx / g.nx as f64, (j as f64 + 0.5) * g.ly / g.ny as f64);
            let r = phi[k];
            s[k] = -(1.0 + r).max(0.0) * gamma_eval(gamma, x, t, r);
            eff[k] = (1.0 - r).max(0.0) * s[k];
        }
        (s, eff)
    }

    fn velocity(&self, phi: &DVector<f64>, mu: &DVector<f64>, gamma: &GammaSpec, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let kx = (&self.gx_neumann * phi).component_mul(mu);
        let ky = (&self.gy_neumann * phi).component_mul(mu);
        let (s, _) = self.source_terms(gamma, phi, t);
        let rhs = s - (&self.div_x * &kx + &self.div_y * &ky);
        let p = self.b.clone().lu().solve(&rhs).expect("Dirichlet Laplacian is nonsingular");
        let ux = kx - &self.gx_dirichlet * &p;
        let uy = ky - &self.gy_dirichlet * &p;
        (p, ux, uy)
    }

    fn f_vec(spec: &PotentialSpec, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(v.len());
        for k in 0..v.len() {
            out[k] = eval_f(spec, v[k])?;
        }
        Ok(out)
    }

    pub fn initial(&self, phi: &[f64], spec: &PotentialSpec, gamma: &GammaSpec) -> Result<DenseState> {
        let phi = DVector::from_column_slice(phi);
        let mu = &self.a * &phi + Self::f_vec(spec, &phi)? - &phi * spec.lambda;
        let (p, ux, uy) = self.velocity(&phi, &mu, gamma, 0.0);
        Ok(DenseState { t: 0.0, phi, mu, p, ux, uy })
    }

    /// One coupled step with dense Newton and direct solves.
    pub fn step(&self, state: &DenseState, spec: &PotentialSpec, gamma: &GammaSpec, dt: f64) -> Result<DenseState> {
        let n = state.phi.len();
        let (_, eff) = self.source_terms(gamma, &state.phi, state.t);
        let adv = (&self.gx_neumann * &state.phi).component_mul(&state.ux)
            + (&self.gy_neumann * &state.phi).component_mul(&state.uy);
        let rhs = &state.phi + (eff - adv) * dt;
        let concave = &state.phi * spec.lambda;
        let mut x = rhs.clone();
        for _ in 0..100 {
            let w = &self.a * &x + Self::f_vec(spec, &x)? - &concave;
            let g = &x + &self.a * w * dt - &rhs;
            if g.amax() < 1e-14 {
                break;
            }
            let mut d = DMatrix::zeros(n, n);
            for k in 0..n {
                d[(k, k)] = eval_fprime(spec, x[k])?;
            }
            let jac = DMatrix::identity(n, n) + &self.a * (&self.a + d) * dt;
            let delta = jac.lu().solve(&(-g)).ok_or(Error::NonConvergence { iterations: 0, residual: f64::NAN })?;
            x += delta;
        }
        let t = state.t + dt;
        let mu = &self.a * &x + Self::f_vec(spec, &x)? - &x * spec.lambda;
        let (p, ux, uy) = self.velocity(&x, &mu, gamma, t);
        Ok(DenseState { t, phi: x, mu, p, ux, uy })
    }
}

/// Largest node-wise gap between the dense oracle and the production stepper
/// over each of `n_steps` coupled steps.
#[derive(Debug, Clone)]
pub struct BruteForceReport {
    pub seed: u64,
    pub per_step: Vec<f64>,
}

impl BruteForceReport {
    pub fn max_deviation(&self) -> f64 {
        self.per_step.iter().copied().fold(0.0, f64::max)
    }
}

/// Frozen 4x4 scenario: `lambda = 3`, `eps = 0.05`, constant `gamma = 0.3`,
/// Darcy coupling on, random `phi0` in `0.1 +- 0.5`.
pub fn brute_force_small_grid(seed: u64, dt: f64, n_steps: usize) -> Result<BruteForceReport> {
    let grid = Grid::new(4, 4, 4.0, 4.0)?;
    let spec = PotentialSpec::strongly_separating(3.0, 0.05)?;
    let gamma = GammaSpec::constant(0.3);
    let source = SourceModel::Mass(gamma);
    let mut cfg = StepperConfig::new(dt);
    cfg.newton_tol = 1e-13;
    cfg.cg_tol = 1e-14;
    let ic = solver::InitialCondition {
        kind: solver::InitialKind::Random { seed },
        m0: 0.1,
        amplitude: 0.5,
    };
    let phi0 = solver::initial_phi(grid, &ic)?;
    let ops = DenseOperators::assemble(grid);
    let mut dense = ops.initial(&phi0.values, &spec, &gamma)?;
    let mut state = SimState::from_phi(phi0, 0.0, &spec, &source, &cfg)?;
    let mut per_step = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        dense = ops.step(&dense, &spec, &gamma, dt)?;
        state = solver::try_step(&state, &spec, &source, &cfg, dt)?.state;
        let gap = |a: &DVector<f64>, b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        per_step.push(
            gap(&dense.phi, &state.phi.values)
                .max(gap(&dense.mu, &state.mu.values))
                .max(gap(&dense.p, &state.p.values))
                .max(gap(&dense.ux, &state.u.ux))
                .max(gap(&dense.uy, &state.u.uy)),
        );
    }
    Ok(BruteForceReport { seed, per_step })
}
