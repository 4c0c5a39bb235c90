//! Semi-implicit time stepping of the regularised Cahn-Hilliard-Darcy system.
//!
//! One step from `t_n` to `t_n + dt`:
//!
//! 1. freeze `R = (1 - phi)^+ S - u . grad(phi)` at `t_n`;
//! 2. solve `phi + dt A (A phi + f(phi) - lambda phi_n) = phi_n + dt R` for
//!    `phi` by Newton's method, `A = -laplacian` with no-flux closure. The
//!    convex part of the energy is implicit and the concave `-lambda phi^2/2`
//!    explicit, which makes the uncoupled scheme energy dissipative for any
//!    `dt`;
//! 3. `B p = S - div(mu grad phi)` with `B = -laplacian` under Dirichlet data;
//! 4. `u = -grad p + mu grad phi`.
//!
//! The Newton Jacobian `J = I + dt A M`, `M = A + diag(f'(phi))`, is not
//! symmetric but is self-adjoint and positive definite in the `M` inner
//! product on mean-free vectors, so the inner solves run conjugate gradients
//! in that inner product. Updates are projected onto mean-free vectors,
//! which pins the mean of the iterate to its exact post-step value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{
    advection, divergence, dot, gradient, l2norm, laplacian, mean, neg_laplacian_into, solve_poisson_dirichlet_from,
    BcKind, Grid, ScalarField, VectorField,
};
use crate::potential::{eval_f, eval_fprime, PotentialSpec};
use crate::source::SourceModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub p: ScalarField,
    pub u: VectorField,
}

impl SimState {
    pub fn grid(&self) -> Grid {
        self.phi.grid
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.mu.is_finite() && self.p.is_finite() && self.u.is_finite()
    }

    /// Builds a consistent state from an order parameter: `mu` from the
    /// chemical potential, then pressure and velocity (zero when transport
    /// is disabled).
    pub fn from_phi(
        phi: ScalarField,
        t: f64,
        spec: &PotentialSpec,
        source: &SourceModel,
        cfg: &StepperConfig,
    ) -> Result<Self> {
        let phi = phi.with_bc(BcKind::NeumannZero);
        let mu = chemical_potential(&phi, spec)?;
        let zero_p = ScalarField::zeros(phi.grid, BcKind::DirichletZero);
        let (p, u, _) = darcy(&phi, &mu, t, source, cfg, &zero_p)?;
        Ok(Self { t, phi, mu, p, u })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub cfl_safety: f64,
    pub dt_min: f64,
    /// Darcy coupling: when false, `p = u = 0` and the transport term drops.
    pub transport: bool,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            newton_tol: 1e-10,
            newton_max: 50,
            cg_tol: 1e-11,
            cg_max: 5000,
            cfl_safety: 0.5,
            dt_min: dt / 1024.0,
            transport: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(0, "dt must be positive"));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt) {
            return Err(Error::config(0, "dt_min must lie in (0, dt)"));
        }
        if !(self.newton_tol > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::config(0, "tolerances must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config(0, "cfl_safety must lie in (0, 1]"));
        }
        if self.newton_max == 0 || self.cg_max == 0 {
            return Err(Error::config(0, "iteration caps must be positive"));
        }
        Ok(())
    }
}

/// `mu = -laplacian(phi) + f(phi) - lambda phi`.
pub fn chemical_potential(phi: &ScalarField, spec: &PotentialSpec) -> Result<ScalarField> {
    let lap = laplacian(&phi.clone().with_bc(BcKind::NeumannZero));
    let mut values = Vec::with_capacity(phi.values.len());
    for (&p, &l) in phi.values.iter().zip(&lap.values) {
        values.push(-l + eval_f(spec, p)? - spec.lambda * p);
    }
    Ok(ScalarField::from_values(phi.grid, BcKind::NeumannZero, values))
}

/// Largest step allowed by the advective CFL cap for velocity `u`.
pub fn cfl_cap(u: &VectorField, cfl_safety: f64) -> f64 {
    let h = u.grid.hx().min(u.grid.hy());
    cfl_safety * h / u.linfnorm().max(1e-12)
}

/// Pressure and velocity reconstruction from `(phi, mu)` at time `t`.
fn darcy(
    phi: &ScalarField,
    mu: &ScalarField,
    t: f64,
    source: &SourceModel,
    cfg: &StepperConfig,
    guess: &ScalarField,
) -> Result<(ScalarField, VectorField, usize)> {
    let grid = phi.grid;
    if !cfg.transport {
        return Ok((ScalarField::zeros(grid, BcKind::DirichletZero), VectorField::zeros(grid), 0));
    }
    let (s, _) = source.evaluate(phi, t);
    let korteweg = gradient(phi).scaled_by(mu);
    let div_k = divergence(&korteweg, BcKind::DirichletZero);
    let rhs_values = s.values.iter().zip(&div_k.values).map(|(a, b)| a - b).collect();
    let rhs = ScalarField::from_values(grid, BcKind::DirichletZero, rhs_values);
    let max_iter = 50 * (grid.nx + grid.ny) + 100;
    let sol = solve_poisson_dirichlet_from(&rhs, guess, cfg.cg_tol, max_iter)?;
    let gp = gradient(&sol.field);
    let mut u = korteweg;
    for k in 0..grid.len() {
        u.ux[k] -= gp.ux[k];
        u.uy[k] -= gp.uy[k];
    }
    Ok((sol.field, u, sol.iterations))
}

/// Per-step solver statistics.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SimState,
    pub dt_used: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
    /// Newton residual norms, one per evaluation.
    pub residuals: Vec<f64>,
}

/// One attempt at step size `dt`, no retries.
pub fn try_step(
    state: &SimState,
    spec: &PotentialSpec,
    source: &SourceModel,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<StepOutcome> {
    let cap = if cfg.transport { cfl_cap(&state.u, cfg.cfl_safety) } else { f64::INFINITY };
    if dt > cap {
        return Err(Error::CflViolation { dt, cap });
    }
    let grid = state.grid();
    let (_, eff) = source.evaluate(&state.phi, state.t);
    let mut explicit = eff.values;
    if cfg.transport {
        let adv = advection(&state.u, &state.phi);
        for (r, a) in explicit.iter_mut().zip(&adv.values) {
            *r -= a;
        }
    }
    let newton = newton_solve(&state.phi, &explicit, spec, cfg, dt).map_err(|e| match e {
        Error::NewtonDivergence { residual, .. } => Error::NewtonDivergence {
            t: state.t,
            dt,
            residual,
        },
        other => other,
    })?;
    let t_next = state.t + dt;
    let phi = ScalarField::from_values(grid, BcKind::NeumannZero, newton.phi);
    let mu = chemical_potential(&phi, spec)?;
    let (p, u, poisson_iters) = darcy(&phi, &mu, t_next, source, cfg, &state.p)?;
    let next = SimState { t: t_next, phi, mu, p, u };
    if !next.is_finite() {
        return Err(Error::NewtonDivergence {
            t: state.t,
            dt,
            residual: f64::NAN,
        });
    }
    Ok(StepOutcome {
        state: next,
        dt_used: dt,
        newton_iters: newton.iterations,
        cg_iters: newton.cg_iterations + poisson_iters,
        residuals: newton.residuals,
    })
}

/// Advances by `dt`, halving on Newton failure down to `cfg.dt_min`.
pub fn step_with(
    state: &SimState,
    spec: &PotentialSpec,
    source: &SourceModel,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<StepOutcome> {
    let mut h = dt;
    loop {
        match try_step(state, spec, source, cfg, h) {
            Err(Error::NewtonDivergence { .. }) | Err(Error::NonConvergence { .. }) if h / 2.0 >= cfg.dt_min => {
                h /= 2.0;
            }
            other => return other,
        }
    }
}

/// [`step_with`] at the configured `cfg.dt`.
pub fn step(state: &SimState, spec: &PotentialSpec, source: &SourceModel, cfg: &StepperConfig) -> Result<StepOutcome> {
    step_with(state, spec, source, cfg, cfg.dt)
}

/// Time loop with adaptive halving and re-doubling.
///
/// The step is halved on Newton failure or CFL violation and doubled again
/// after ten clean steps, never above `cfg.dt`. `hook` sees every
/// accepted step's diagnostics and state.
pub fn run(
    initial: &SimState,
    t_end: f64,
    spec: &PotentialSpec,
    source: &SourceModel,
    cfg: &StepperConfig,
    hook: &mut dyn FnMut(&DiagnosticsRecord, &SimState),
) -> Result<SimState> {
    cfg.validate()?;
    let mut state = initial.clone();
    let mut current = cfg.dt;
    let mut clean = 0usize;
    let mut n = 0usize;
    let slack = 1e-12 * t_end.abs().max(1.0);
    while state.t < t_end - slack {
        if cfg.transport {
            let cap = cfl_cap(&state.u, cfg.cfl_safety);
            while current > cap {
                current /= 2.0;
                clean = 0;
                if current < cfg.dt_min {
                    return Err(Error::CflViolation { dt: current, cap });
                }
            }
        }
        let remaining = t_end - state.t;
        let attempt = if remaining < current * (1.0 + 1e-9) { remaining } else { current };
        let outcome = step_with(&state, spec, source, cfg, attempt)?;
        if outcome.dt_used < attempt {
            current = outcome.dt_used;
            clean = 0;
        } else {
            clean += 1;
            if clean >= 10 && current < cfg.dt {
                current = (2.0 * current).min(cfg.dt);
                clean = 0;
            }
        }
        n += 1;
        let record = diagnostics::record(n, &state, &outcome, spec, source)?;
        hook(&record, &outcome.state);
        state = outcome.state;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Newton / Krylov.
// ---------------------------------------------------------------------------

struct NewtonResult {
    phi: Vec<f64>,
    iterations: usize,
    cg_iterations: usize,
    residuals: Vec<f64>,
}

struct Workspace<'a> {
    grid: &'a Grid,
    dt: f64,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
}

impl Workspace<'_> {
    fn a(&self, x: &[f64], out: &mut [f64]) {
        neg_laplacian_into(self.grid, BcKind::NeumannZero, x, out);
    }

    /// `out = M x = A x + d x`.
    fn m(&self, d: &[f64], x: &[f64], out: &mut [f64]) {
        self.a(x, out);
        for k in 0..x.len() {
            out[k] += d[k] * x[k];
        }
    }

    /// `out = J x = x + dt A M x`.
    fn j(&mut self, d: &[f64], x: &[f64], out: &mut [f64]) {
        let mut mx = std::mem::take(&mut self.tmp);
        self.m(d, x, &mut mx);
        self.a(&mx, out);
        for k in 0..x.len() {
            out[k] = x[k] + self.dt * out[k];
        }
        self.tmp = mx;
    }

    /// `G(x) = x + dt A (A x + f(x) - lambda phi_n) - b`.
    fn residual(&mut self, x: &[f64], b: &[f64], phi_n: &[f64], spec: &PotentialSpec, out: &mut [f64]) -> Result<()> {
        let mut w = std::mem::take(&mut self.tmp2);
        self.a(x, &mut w);
        for k in 0..x.len() {
            w[k] += eval_f(spec, x[k])? - spec.lambda * phi_n[k];
        }
        self.a(&w, out);
        for k in 0..x.len() {
            out[k] = x[k] + self.dt * out[k] - b[k];
        }
        self.tmp2 = w;
        Ok(())
    }
}

fn project_mean_free(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Conjugate gradients for `J x = c` in the `M` inner product.
fn m_cg(ws: &mut Workspace, d: &[f64], c: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = c.len();
    let mut x = vec![0.0; n];
    let mut r = c.to_vec();
    project_mean_free(&mut r);
    let mut mr = vec![0.0; n];
    ws.m(d, &r, &mut mr);
    let mut rr = dot(&r, &mr);
    if rr <= 0.0 || !rr.is_finite() {
        return (x, 0);
    }
    let target = rel_tol * rel_tol * rr;
    let mut p = r.clone();
    let mut q = vec![0.0; n];
    let mut mq = vec![0.0; n];
    let mut iters = 0;
    while iters < max_iter {
        ws.j(d, &p, &mut q);
        ws.m(d, &q, &mut mq);
        let pmq = dot(&p, &mq);
        if pmq <= 0.0 || !pmq.is_finite() {
            break;
        }
        let alpha = rr / pmq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            mr[k] -= alpha * mq[k];
        }
        iters += 1;
        let rr_new = dot(&r, &mr);
        if rr_new <= target {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    project_mean_free(&mut x);
    (x, iters)
}

fn newton_solve(
    phi_n: &ScalarField,
    explicit: &[f64],
    spec: &PotentialSpec,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<NewtonResult> {
    let grid = phi_n.grid;
    let n = grid.len();
    let w = grid.cell_area();
    let norm = |v: &[f64]| (w * dot(v, v)).sqrt();
    let b: Vec<f64> = phi_n.values.iter().zip(explicit).map(|(p, r)| p + dt * r).collect();
    let tol = cfg.newton_tol * l2norm(phi_n).max(1.0);
    let fail = |residual: f64| Error::NewtonDivergence { t: 0.0, dt, residual };

    let mut ws = Workspace {
        grid: &grid,
        dt,
        tmp: vec![0.0; n],
        tmp2: vec![0.0; n],
    };
    let mut x = b.clone();
    let mut g = vec![0.0; n];
    ws.residual(&x, &b, &phi_n.values, spec, &mut g)?;
    let mut res = norm(&g);
    let mut residuals = vec![res];
    let mut cg_total = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut d = vec![0.0; n];
    for iter in 0..cfg.newton_max {
        if !res.is_finite() {
            return Err(fail(res));
        }
        if res <= tol {
            return Ok(NewtonResult {
                phi: x,
                iterations: iter,
                cg_iterations: cg_total,
                residuals,
            });
        }
        for k in 0..n {
            d[k] = eval_fprime(spec, x[k])?;
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let (delta, its) = m_cg(&mut ws, &d, &rhs, cfg.cg_tol, cfg.cg_max);
        cg_total += its;

        // backtracking on the residual norm
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            for k in 0..n {
                trial[k] = x[k] + s * delta[k];
            }
            ws.residual(&trial, &b, &phi_n.values, spec, &mut g_trial)?;
            let r_trial = norm(&g_trial);
            if r_trial.is_finite() && r_trial <= (1.0 - 1e-4 * s) * res {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                res = r_trial;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        residuals.push(res);
        if !accepted {
            return Err(fail(res));
        }
    }
    if res <= tol {
        return Ok(NewtonResult {
            phi: x,
            iterations: cfg.newton_max,
            cg_iterations: cg_total,
            residuals,
        });
    }
    Err(fail(res))
}

// ---------------------------------------------------------------------------
// Initial data.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialKind {
    /// Uniform noise in `[-1, 1]`, mean-corrected.
    Random { seed: u64 },
    /// `tanh((x - lx/2) / width)` across the domain.
    Stripe { width: f64 },
    /// `tanh((radius - |x - centre|) / width)`.
    Disk { radius: f64, width: f64 },
    Constant,
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::Random { .. } => "random",
            InitialKind::Stripe { .. } => "stripe",
            InitialKind::Disk { .. } => "disk",
            InitialKind::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub kind: InitialKind,
    pub m0: f64,
    pub amplitude: f64,
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude.is_nan() || self.amplitude < 0.0 {
            return Err(Error::config(0, "initial amplitude must be >= 0"));
        }
        if (self.m0.abs() + self.amplitude).is_nan() || self.m0.abs() + self.amplitude >= 1.0 {
            return Err(Error::config(
                0,
                format!(
                    "|m0| + amplitude = {} must be < 1 so that |phi0| < 1",
                    self.m0.abs() + self.amplitude
                ),
            ));
        }
        Ok(())
    }
}

/// Initial order parameter; every value satisfies `|phi0| <= |m0| + amplitude`.
pub fn initial_phi(grid: Grid, ic: &InitialCondition) -> Result<ScalarField> {
    ic.validate()?;
    let (m0, a) = (ic.m0, ic.amplitude);
    let field = match ic.kind {
        InitialKind::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xi: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            project_mean_free(&mut xi);
            let peak = xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if peak > 1.0 {
                xi.iter_mut().for_each(|v| *v /= peak);
            }
            let values = xi.iter().map(|v| m0 + a * v).collect();
            ScalarField::from_values(grid, BcKind::NeumannZero, values)
        }
        InitialKind::Stripe { width } => {
            let xc = 0.5 * grid.lx;
            ScalarField::from_fn(grid, BcKind::NeumannZero, |x, _| m0 + a * ((x - xc) / width).tanh())
        }
        InitialKind::Disk { radius, width } => {
            let (xc, yc) = (0.5 * grid.lx, 0.5 * grid.ly);
            ScalarField::from_fn(grid, BcKind::NeumannZero, |x, y| {
                let r = (x - xc).hypot(y - yc);
                m0 + a * ((radius - r) / width).tanh()
            })
        }
        InitialKind::Constant => ScalarField::constant(grid, BcKind::NeumannZero, m0),
    };
    Ok(field)
}

/// Consistent state at `t = 0`.
pub fn initial_state(
    grid: Grid,
    ic: &InitialCondition,
    spec: &PotentialSpec,
    source: &SourceModel,
    cfg: &StepperConfig,
) -> Result<SimState> {
    let phi = initial_phi(grid, ic)?;
    SimState::from_phi(phi, 0.0, spec, source, cfg)
}

/// Mean of `phi` used by tests and diagnostics alike.
pub fn mean_phi(state: &SimState) -> f64 {
    mean(&state.phi)
}
