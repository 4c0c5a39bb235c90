//! Per-step audit of the discrete energy budget, mass balance, separation
//! and mean-value confinement.

use crate::error::Result;
use crate::grid::{
    boundary_flux, divergence, gradient, h1seminorm, inner, l2norm, mean, BcKind, ScalarField,
};
use crate::potential::{bulk_energy, coercivity_shift, eval_big_f, PotentialSpec};
use crate::solver::{self, SimState, StepOutcome, StepperConfig};
use crate::source::SourceModel;

pub const CSV_HEADER: &str = "step,t,energy,energy_residual,mean_phi,min_phi,max_phi,overshoot_plus,overshoot_minus,grad_excess,mass_residual,boundary_transport,l2_u,l2_grad_mu,newton_iters,cg_iters,dt_used";

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub energy_residual: f64,
    pub mean_phi: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub overshoot_plus: f64,
    pub overshoot_minus: f64,
    pub grad_excess: f64,
    pub mass_residual: f64,
    pub boundary_transport: f64,
    pub l2_u: f64,
    pub l2_grad_mu: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub dt_used: f64,
}

/// Real formatted with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        let reals = [
            self.t,
            self.energy,
            self.energy_residual,
            self.mean_phi,
            self.min_phi,
            self.max_phi,
            self.overshoot_plus,
            self.overshoot_minus,
            self.grad_excess,
            self.mass_residual,
            self.boundary_transport,
            self.l2_u,
            self.l2_grad_mu,
        ];
        let mut row = self.step.to_string();
        for v in reals {
            row.push(',');
            row.push_str(&fmt_real(v));
        }
        row.push_str(&format!(",{},{},{}", self.newton_iters, self.cg_iters, fmt_real(self.dt_used)));
        row
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.energy,
            self.energy_residual,
            self.mean_phi,
            self.min_phi,
            self.max_phi,
            self.overshoot_plus,
            self.overshoot_minus,
            self.grad_excess,
            self.mass_residual,
            self.boundary_transport,
            self.l2_u,
            self.l2_grad_mu,
            self.dt_used,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Regularised energy of the state's order parameter.
pub fn total_energy(state: &SimState, spec: &PotentialSpec) -> Result<f64> {
    bulk_energy(&state.phi, spec)
}

/// Residual of the discrete energy identity
/// `dE/dt + |grad mu|^2 + |u|^2 = <(1 - phi)^+ S, mu> + <S, p>`.
///
/// `mu` is taken at the scheme's level (implicit convex part, explicit
/// `lambda phi_n`); source, pressure and velocity at `t_n`.
pub fn energy_budget(
    prev: &SimState,
    next: &SimState,
    dt: f64,
    spec: &PotentialSpec,
    source: &SourceModel,
) -> Result<f64> {
    let e0 = bulk_energy(&prev.phi, spec)?;
    let e1 = bulk_energy(&next.phi, spec)?;
    let mu_scheme = ScalarField::from_values(
        next.mu.grid,
        BcKind::NeumannZero,
        next.mu
            .values
            .iter()
            .zip(next.phi.values.iter().zip(&prev.phi.values))
            .map(|(m, (a, b))| m + spec.lambda * (a - b))
            .collect(),
    );
    let (s, eff) = source.evaluate(&prev.phi, prev.t);
    let grad_mu = h1seminorm(&mu_scheme);
    let u2 = prev.u.l2norm().powi(2);
    Ok((e1 - e0) / dt + grad_mu * grad_mu + u2 - inner(&eff, &mu_scheme) - inner(&s, &prev.p))
}

/// Residual of the discrete mean-value balance and the boundary transport
/// term `int_Gamma phi u . n` that enters it.
///
/// The residual is expressed per unit area:
/// `(mean(phi_{n+1}) - mean(phi_n)) / dt
///   - (sum eff h^2 - boundary_flux + sum phi div(u) h^2) / |Omega|`,
/// the last two terms being the Gauss-Green split of `sum u . grad(phi) h^2`.
pub fn mass_balance(prev: &SimState, next: &SimState, dt: f64, source: &SourceModel) -> (f64, f64) {
    let grid = prev.grid();
    let (_, eff) = source.evaluate(&prev.phi, prev.t);
    let flux = boundary_flux(&prev.phi, &prev.u);
    let div_u = divergence(&prev.u, BcKind::NeumannZero);
    let interior = inner(&prev.phi, &div_u);
    let produced = eff.values.iter().sum::<f64>() * grid.cell_area();
    let rate = (mean(&next.phi) - mean(&prev.phi)) / dt;
    let residual = rate - (produced - flux + interior) / grid.area();
    (residual, flux)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub max_abs: f64,
    pub overshoot_plus: f64,
    pub overshoot_minus: f64,
    pub grad_excess: f64,
}

/// Excess of `phi` beyond `+-(1 - eps)` and `|grad phi|^2` over those cells.
pub fn separation_report(phi: &ScalarField, eps: f64) -> SeparationReport {
    let grid = phi.grid;
    let edge = 1.0 - eps;
    let g = gradient(phi);
    let mut report = SeparationReport {
        max_abs: 0.0,
        overshoot_plus: 0.0,
        overshoot_minus: 0.0,
        grad_excess: 0.0,
    };
    for (k, &v) in phi.values.iter().enumerate() {
        report.max_abs = report.max_abs.max(v.abs());
        let outside = if v > edge {
            report.overshoot_plus += (v - edge).powi(2);
            true
        } else if -v > edge {
            report.overshoot_minus += (-v - edge).powi(2);
            true
        } else {
            false
        };
        if outside {
            report.grad_excess += g.ux[k] * g.ux[k] + g.uy[k] * g.uy[k];
        }
    }
    let h2 = grid.cell_area();
    report.overshoot_plus *= h2;
    report.overshoot_minus *= h2;
    report.grad_excess *= h2;
    report
}

/// Jensen bound on the mean value.
///
/// Coercivity `F/2 - lambda r^2/2 + k >= 0` turns an energy level `e0` into
/// `mean(F(phi)) <= 2 (e0 / |Omega| + k)`, and Jensen's inequality moves the
/// bound onto `F(mean(phi))`. Inverting the even, increasing-on-`[0, 1)`
/// potential by bisection yields `delta` with `|mean| <= 1 - delta`.
pub fn mean_confinement_check(history: &[f64], e0: f64, spec: &PotentialSpec, area: f64) -> Result<(f64, bool)> {
    let k = coercivity_shift(spec)?;
    let bound = 2.0 * (e0 / area + k);
    let top = eval_big_f(spec, 1.0).unwrap_or(f64::INFINITY);
    let m_star = if bound <= 0.0 {
        0.0
    } else if top <= bound {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = eval_big_f(spec, mid).unwrap_or(f64::INFINITY);
            if v <= bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let delta = (1.0 - m_star).max(0.0);
    let ok = history.iter().all(|m| m.abs() <= 1.0 - delta + 1e-12);
    Ok((delta, ok))
}

/// Assembles the audit row for one accepted step.
pub fn record(
    step: usize,
    prev: &SimState,
    outcome: &StepOutcome,
    spec: &PotentialSpec,
    source: &SourceModel,
) -> Result<DiagnosticsRecord> {
    let next = &outcome.state;
    let dt = outcome.dt_used;
    let energy = bulk_energy(&next.phi, spec)?;
    let energy_residual = energy_budget(prev, next, dt, spec, source)?;
    let (mass_residual, boundary_transport) = mass_balance(prev, next, dt, source);
    let sep = separation_report(&next.phi, spec.eps.unwrap_or(0.0));
    Ok(DiagnosticsRecord {
        step,
        t: next.t,
        energy,
        energy_residual,
        mean_phi: mean(&next.phi),
        min_phi: next.phi.min(),
        max_phi: next.phi.max(),
        overshoot_plus: sep.overshoot_plus,
        overshoot_minus: sep.overshoot_minus,
        grad_excess: sep.grad_excess,
        mass_residual,
        boundary_transport,
        l2_u: next.u.l2norm(),
        l2_grad_mu: h1seminorm(&next.mu),
        newton_iters: outcome.newton_iters,
        cg_iters: outcome.cg_iters,
        dt_used: dt,
    })
}

/// `H^1` norm `(|f|^2 + |grad f|^2)^(1/2)`.
pub fn v_norm(f: &ScalarField) -> f64 {
    l2norm(f).hypot(h1seminorm(f))
}

/// Difference of two runs started `delta0` apart in the `V` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTable {
    pub delta0: f64,
    pub times: Vec<f64>,
    pub diff_norms: Vec<f64>,
    /// `diff_norms / delta0`, one at `t = 0` by construction.
    pub ratios: Vec<f64>,
    /// Smallest `Lambda >= 0` with `ratio(t) <= exp(Lambda t)` on the table.
    pub lambda_fit: f64,
}

/// Runs `initial.phi` and `initial.phi + delta0 psi / |psi|_V` side by side,
/// `psi = cos(pi x / lx) cos(pi y / ly)`, and tabulates their separation.
pub fn continuous_dependence_experiment(
    initial: &ScalarField,
    spec: &PotentialSpec,
    source: &SourceModel,
    cfg: &StepperConfig,
    t_end: f64,
    delta0: f64,
) -> Result<GrowthTable> {
    let grid = initial.grid;
    let psi = ScalarField::from_fn(grid, BcKind::NeumannZero, |x, y| {
        (std::f64::consts::PI * x / grid.lx).cos() * (std::f64::consts::PI * y / grid.ly).cos()
    });
    let scale = delta0 / v_norm(&psi);
    let shifted = ScalarField::from_values(
        grid,
        BcKind::NeumannZero,
        initial.values.iter().zip(&psi.values).map(|(a, b)| a + scale * b).collect(),
    );
    let trajectory = |phi: ScalarField| -> Result<Vec<(f64, ScalarField)>> {
        let start = SimState::from_phi(phi, 0.0, spec, source, cfg)?;
        let mut out = vec![(0.0, start.phi.clone())];
        solver::run(&start, t_end, spec, source, cfg, &mut |_, s| out.push((s.t, s.phi.clone())))?;
        Ok(out)
    };
    let a = trajectory(initial.clone())?;
    let b = trajectory(shifted)?;
    let mut table = GrowthTable {
        delta0,
        times: Vec::new(),
        diff_norms: Vec::new(),
        ratios: Vec::new(),
        lambda_fit: 0.0,
    };
    // both runs share the step sequence unless one of them had to halve;
    // compare on the common time levels only
    let mut j = 0;
    for (t, pa) in &a {
        while j < b.len() && b[j].0 < *t {
            j += 1;
        }
        if j == b.len() || b[j].0 != *t {
            continue;
        }
        let diff = ScalarField::from_values(
            grid,
            BcKind::NeumannZero,
            pa.values.iter().zip(&b[j].1.values).map(|(x, y)| x - y).collect(),
        );
        let norm = v_norm(&diff);
        let ratio = if delta0 > 0.0 { norm / delta0 } else { 0.0 };
        if *t > 0.0 && ratio > 1.0 {
            table.lambda_fit = table.lambda_fit.max(ratio.ln() / t);
        }
        table.times.push(*t);
        table.diff_norms.push(norm);
        table.ratios.push(ratio);
    }
    Ok(table)
}
