//! Mass-source law `S = -(1 + phi)^+ gamma(x, t, phi)` with a small catalogue
//! of bounded, Lipschitz `gamma` presets.

use crate::grid::{BcKind, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPreset {
    Constant,
    /// Gaussian bump `exp(-|x - x0|^2 / w^2)`.
    SpaceBump { x0: (f64, f64), w: f64 },
    /// Linear ramp `min(t / t_ramp, 1)`.
    TimeRamp { t_ramp: f64 },
    /// `tanh(r)`, matching the sign of the order parameter.
    SignedLogistic,
}

impl GammaPreset {
    pub fn name(&self) -> &'static str {
        match self {
            GammaPreset::Constant => "constant",
            GammaPreset::SpaceBump { .. } => "space-bump",
            GammaPreset::TimeRamp { .. } => "time-ramp",
            GammaPreset::SignedLogistic => "signed-logistic",
        }
    }

    /// Lipschitz constant in `r` of the unscaled preset.
    fn lipschitz(&self) -> f64 {
        match self {
            GammaPreset::SignedLogistic => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    pub preset: GammaPreset,
    pub amplitude: f64,
}

impl GammaSpec {
    pub fn new(preset: GammaPreset, amplitude: f64) -> Self {
        Self { preset, amplitude }
    }

    pub fn constant(amplitude: f64) -> Self {
        Self::new(GammaPreset::Constant, amplitude)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Lipschitz constant of `r -> gamma(x, t, r)`.
    pub fn lipschitz_r(&self) -> f64 {
        self.amplitude.abs() * (self.preset.lipschitz() + 2.0)
    }

    /// Lipschitz constant of `r -> (1 + r)^+ gamma(x, t, r)`; `gamma`
    /// vanishes for `|r| >= 2`, so `(1 + r)^+ <= 3` on its support.
    pub fn source_lipschitz(&self) -> f64 {
        self.amplitude.abs() + 3.0 * self.lipschitz_r()
    }
}

/// Linear taper `clamp((2 - |r|) / 0.5, 0, 1)`: one on `|r| <= 1.5`, zero
/// for `|r| >= 2`.
pub fn cutoff(r: f64) -> f64 {
    ((2.0 - r.abs()) / 0.5).clamp(0.0, 1.0)
}

pub fn gamma_eval(spec: &GammaSpec, x: (f64, f64), t: f64, r: f64) -> f64 {
    let base = match spec.preset {
        GammaPreset::Constant => 1.0,
        GammaPreset::SpaceBump { x0, w } => {
            let d2 = (x.0 - x0.0).powi(2) + (x.1 - x0.1).powi(2);
            (-d2 / (w * w)).exp()
        }
        GammaPreset::TimeRamp { t_ramp } => (t / t_ramp).min(1.0),
        GammaPreset::SignedLogistic => r.tanh(),
    };
    spec.amplitude * base * cutoff(r)
}

/// Node-wise `S = -(1 + phi)^+ gamma(x, t, phi)`.
pub fn source_s(spec: &GammaSpec, phi: &ScalarField, t: f64) -> ScalarField {
    let g = phi.grid;
    let mut values = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let r = phi.at(i, j);
            values.push(-(1.0 + r).max(0.0) * gamma_eval(spec, (g.x(i), g.y(j)), t, r));
        }
    }
    ScalarField::from_values(g, BcKind::NeumannZero, values)
}

/// Node-wise `(1 - phi)^+ S`, the source contribution to the phase equation.
pub fn effective_source(phi: &ScalarField, s: &ScalarField) -> ScalarField {
    let values = phi
        .values
        .iter()
        .zip(&s.values)
        .map(|(p, s)| (1.0 - p).max(0.0) * s)
        .collect();
    ScalarField::from_values(phi.grid, BcKind::NeumannZero, values)
}

/// Right-hand side driving the phase equation.
///
/// `Mass` is the tumour-growth law above. `Relaxation` is the linear law
/// `-k phi + sbar`, whose spatial mean obeys a closed-form ODE; it carries no
/// volumetric Darcy source and exists to validate the mass balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    Mass(GammaSpec),
    Relaxation { rate: f64, sbar: f64 },
}

impl SourceModel {
    /// `(S, effective source)` at `(phi, t)`.
    pub fn evaluate(&self, phi: &ScalarField, t: f64) -> (ScalarField, ScalarField) {
        match self {
            SourceModel::Mass(gamma) => {
                let s = source_s(gamma, phi, t);
                let eff = effective_source(phi, &s);
                (s, eff)
            }
            SourceModel::Relaxation { rate, sbar } => {
                let eff = phi.map(|p| -rate * p + sbar).with_bc(BcKind::NeumannZero);
                (ScalarField::zeros(phi.grid, BcKind::NeumannZero), eff)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SourceModel::Mass(g) => g.is_zero(),
            SourceModel::Relaxation { rate, sbar } => *rate == 0.0 && *sbar == 0.0,
        }
    }
}
