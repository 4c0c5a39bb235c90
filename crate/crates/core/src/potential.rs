//! Convex parts of the configuration potential and their regularisation by
//! first-order Taylor extension of `f = F'` outside `[-1 + eps, 1 - eps]`.
//!
//! All three families are even in `F`, odd in `f` and even in `f'`; the
//! evaluators work on `|r|` and restore the sign, so these symmetries hold
//! bit for bit.

use crate::error::{Error, Result};
use crate::grid::{h1seminorm, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `F(r) = -ln(1 - r^2)`, unbounded at `r = +-1`.
    StronglySeparating,
    /// `F(r) = (1 + r) ln(1 + r) + (1 - r) ln(1 - r)`.
    Logarithmic,
    /// `F(r) = r^4`.
    Quartic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::StronglySeparating => "strongly-separating",
            Family::Logarithmic => "logarithmic",
            Family::Quartic => "quartic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strongly-separating" => Some(Family::StronglySeparating),
            "logarithmic" => Some(Family::Logarithmic),
            "quartic" => Some(Family::Quartic),
            _ => None,
        }
    }

    fn is_singular(self) -> bool {
        !matches!(self, Family::Quartic)
    }

    /// `(F, f, f')` at `a >= 0`, `a < 1` for the singular families.
    fn core(self, a: f64) -> (f64, f64, f64) {
        match self {
            Family::StronglySeparating => {
                let q = 1.0 - a * a;
                (-(-a * a).ln_1p(), 2.0 * a / q, 2.0 * (1.0 + a * a) / (q * q))
            }
            Family::Logarithmic => {
                let big = (1.0 + a) * a.ln_1p() + (1.0 - a) * (-a).ln_1p();
                (big, a.ln_1p() - (-a).ln_1p(), 2.0 / (1.0 - a * a))
            }
            Family::Quartic => (a.powi(4), 4.0 * a.powi(3), 12.0 * a * a),
        }
    }
}

/// Values of `F`, `f`, `f'` at the right junction `1 - eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extension {
    pub r_plus: f64,
    pub big_f_plus: f64,
    pub f_plus: f64,
    pub fp_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub family: Family,
    pub lambda: f64,
    pub eps: Option<f64>,
    extension: Option<Extension>,
}

impl PotentialSpec {
    pub fn new(family: Family, lambda: f64, eps: Option<f64>) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(0, format!("lambda must be >= 0 (got {lambda})")));
        }
        let extension = match eps {
            Some(e) => {
                if !(e > 0.0 && e < 0.25) {
                    return Err(Error::config(0, "eps must lie in (0, 0.25)"));
                }
                let r_plus = 1.0 - e;
                let (big_f_plus, f_plus, fp_plus) = family.core(r_plus);
                Some(Extension {
                    r_plus,
                    big_f_plus,
                    f_plus,
                    fp_plus,
                })
            }
            None => None,
        };
        Ok(Self {
            family,
            lambda,
            eps,
            extension,
        })
    }

    /// Strongly separating family regularised with `eps`.
    pub fn strongly_separating(lambda: f64, eps: f64) -> Result<Self> {
        Self::new(Family::StronglySeparating, lambda, Some(eps))
    }

    pub fn extension(&self) -> Option<&Extension> {
        self.extension.as_ref()
    }

    pub fn is_regularized(&self) -> bool {
        self.extension.is_some()
    }

    /// Same family and `lambda`, without regularisation.
    pub fn unregularized(&self) -> Self {
        Self {
            eps: None,
            extension: None,
            ..*self
        }
    }

    /// `(F, f, f')` at `|r|`, before applying parity.
    fn eval_abs(&self, a: f64) -> Result<(f64, f64, f64)> {
        match &self.extension {
            Some(ext) if a > ext.r_plus => {
                let s = a - ext.r_plus;
                Ok((
                    ext.big_f_plus + ext.f_plus * s + 0.5 * ext.fp_plus * s * s,
                    ext.f_plus + ext.fp_plus * s,
                    ext.fp_plus,
                ))
            }
            Some(_) => Ok(self.family.core(a)),
            None => {
                if self.family.is_singular() && (a.is_nan() || a >= 1.0) {
                    Err(Error::Domain { value: a })
                } else {
                    Ok(self.family.core(a))
                }
            }
        }
    }
}

pub fn eval_big_f(spec: &PotentialSpec, r: f64) -> Result<f64> {
    spec.eval_abs(r.abs()).map(|v| v.0)
}

pub fn eval_f(spec: &PotentialSpec, r: f64) -> Result<f64> {
    spec.eval_abs(r.abs()).map(|v| if r < 0.0 { -v.1 } else { v.1 })
}

pub fn eval_fprime(spec: &PotentialSpec, r: f64) -> Result<f64> {
    spec.eval_abs(r.abs()).map(|v| v.2)
}

/// Smallest `k >= 0` found such that `F_eps(r)/2 - lambda r^2/2 + k >= 0`
/// for all real `r` and every `eps` in `(0, 1/4)`.
///
/// The bound is certified numerically: a dense sample of the core interval
/// refined by golden-section search, plus the closed-form maximum of the
/// quadratic tail. The supremum over `eps` is taken over a ladder that
/// includes the spec's own `eps` and the endpoint `1/4`, where the Taylor
/// extension sits furthest below `F`.
pub fn coercivity_shift(spec: &PotentialSpec) -> Result<f64> {
    let lambda = spec.lambda;
    if spec.family == Family::Quartic {
        // max of lambda r^2 / 2 - r^4 / 2 is at r^2 = lambda / 2
        return Ok(lambda * lambda / 8.0);
    }
    let mut ladder = vec![0.25, 0.2, 0.1, 0.05, 0.025, 0.0125, 1e-3];
    if let Some(e) = spec.eps {
        ladder.push(e);
    }
    let mut sup = 0.0_f64;
    for eps in ladder {
        let regular = PotentialSpec {
            eps: Some(eps),
            extension: Some({
                let r_plus = 1.0 - eps;
                let (big_f_plus, f_plus, fp_plus) = spec.family.core(r_plus);
                Extension {
                    r_plus,
                    big_f_plus,
                    f_plus,
                    fp_plus,
                }
            }),
            ..*spec
        };
        let ext = regular.extension.unwrap();
        let deficit = |r: f64| 0.5 * lambda * r * r - 0.5 * regular.family.core(r).0;
        sup = sup.max(max_on_interval(deficit, 0.0, ext.r_plus));

        // Tail r = r_plus + s, s >= 0: a s^2 + b s + c.
        let a = 0.5 * lambda - 0.25 * ext.fp_plus;
        if a >= 0.0 {
            return Err(Error::CoercivityFailure { lambda });
        }
        let b = lambda * ext.r_plus - 0.5 * ext.f_plus;
        let c = 0.5 * lambda * ext.r_plus * ext.r_plus - 0.5 * ext.big_f_plus;
        let s_star = -b / (2.0 * a);
        let tail = if s_star > 0.0 { c - b * b / (4.0 * a) } else { c };
        sup = sup.max(tail);
    }
    Ok(if sup > 0.0 { sup * (1.0 + 1e-9) } else { 0.0 })
}

fn max_on_interval(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const N: usize = 20_000;
    let h = (hi - lo) / N as f64;
    let mut best = (g(lo), 0usize);
    for k in 1..=N {
        let v = g(lo + k as f64 * h);
        if v > best.0 {
            best = (v, k);
        }
    }
    // golden-section refinement inside the bracketing cells
    let k = best.1;
    let mut a = lo + k.saturating_sub(1) as f64 * h;
    let mut b = (lo + (k + 1) as f64 * h).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..80 {
        if g1 < g2 {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + inv_phi * (b - a);
            g2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - inv_phi * (b - a);
            g1 = g(x1);
        }
    }
    best.0.max(g1).max(g2)
}

/// `E(phi) = |grad phi|^2 / 2 + sum (F(phi) - lambda phi^2 / 2) hx hy`.
pub fn bulk_energy(phi: &ScalarField, spec: &PotentialSpec) -> Result<f64> {
    let grad = h1seminorm(phi);
    let mut bulk = 0.0;
    for &v in &phi.values {
        bulk += eval_big_f(spec, v)? - 0.5 * spec.lambda * v * v;
    }
    Ok(0.5 * grad * grad + bulk * phi.grid.cell_area())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BcKind, Grid};

    fn ss(eps: f64) -> PotentialSpec {
        PotentialSpec::strongly_separating(0.0, eps).unwrap()
    }

    #[test]
    fn extension_constants_match_closed_forms() {
        for eps in [0.2, 0.1, 0.05, 0.025] {
            let ext = *ss(eps).extension().unwrap();
            let f_plus = (2.0 - 2.0 * eps) / (2.0 * eps - eps * eps);
            let fp_plus = 2.0 * (1.0 + (1.0 - eps).powi(2)) / (1.0 - (1.0 - eps).powi(2)).powi(2);
            let big_f_plus = -(2.0 - eps).ln() - eps.ln();
            assert!((ext.f_plus - f_plus).abs() < 1e-12 * f_plus);
            assert!((ext.fp_plus - fp_plus).abs() < 1e-12 * fp_plus);
            assert!((ext.big_f_plus - big_f_plus).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_values() {
        let spec = ss(0.1);
        assert_eq!(eval_big_f(&spec, 0.0).unwrap(), 0.0);
        let f09 = eval_big_f(&spec, 0.9).unwrap();
        assert!((f09 - 1.660731).abs() < 1e-6, "{f09}");
        assert!((f09 - (-(1.9f64).ln() - (0.1f64).ln())).abs() < 1e-13);

        let expected = f09 + (1.8 / 0.19) * 0.1 + 0.5 * (2.0 * 1.81 / (0.19 * 0.19)) * 0.01;
        assert!((eval_big_f(&spec, 1.0).unwrap() - expected).abs() < 1e-12);

        let free = spec.unregularized();
        assert!((eval_f(&free, 0.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(eval_f(&free, 0.0).unwrap(), 0.0);
        assert_eq!(eval_fprime(&free, 0.0).unwrap(), 2.0);
        assert!((eval_fprime(&spec, 1.5).unwrap() - 100.2770).abs() < 1e-4);
    }

    #[test]
    fn extended_energy_matches_quadrature_of_extended_f() {
        // independent route: Simpson quadrature of f_eps from 0 to r
        let spec = ss(0.1);
        for r in [0.95, 1.0, 1.3] {
            let n = 20_000;
            let h = r / n as f64;
            let mut acc = eval_f(&spec, 0.0).unwrap() + eval_f(&spec, r).unwrap();
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * eval_f(&spec, k as f64 * h).unwrap();
            }
            let quad = acc * h / 3.0;
            let direct = eval_big_f(&spec, r).unwrap();
            assert!((quad - direct).abs() < 1e-8 * direct.max(1.0), "r={r}: {quad} vs {direct}");
        }
    }

    #[test]
    fn junction_is_continuous() {
        let spec = ss(0.1);
        let below = eval_f(&spec, 0.9 - 1e-15).unwrap();
        let at = eval_f(&spec, 0.9).unwrap();
        let above = eval_f(&spec, 0.9 + 1e-15).unwrap();
        assert!((below - 1.8 / 0.19).abs() < 1e-9);
        assert!((at - above).abs() < 1e-9 && (at - below).abs() < 1e-9);
    }

    #[test]
    fn singular_families_reject_out_of_domain() {
        let free = PotentialSpec::new(Family::StronglySeparating, 0.0, None).unwrap();
        assert!(matches!(eval_big_f(&free, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(eval_f(&free, -1.2), Err(Error::Domain { .. })));
        let log = PotentialSpec::new(Family::Logarithmic, 0.0, None).unwrap();
        assert!(eval_fprime(&log, 1.0).is_err());
        let quartic = PotentialSpec::new(Family::Quartic, 1.0, None).unwrap();
        assert_eq!(eval_big_f(&quartic, 2.0).unwrap(), 16.0);
        assert_eq!(eval_f(&quartic, -2.0).unwrap(), -32.0);
        assert_eq!(eval_fprime(&quartic, 2.0).unwrap(), 48.0);
    }

    #[test]
    fn eps_bounds_are_enforced() {
        assert!(PotentialSpec::strongly_separating(1.0, 0.3).is_err());
        assert!(PotentialSpec::strongly_separating(1.0, 0.0).is_err());
        assert!(PotentialSpec::strongly_separating(-1.0, 0.1).is_err());
    }

    #[test]
    fn coercivity_shift_cases() {
        assert_eq!(coercivity_shift(&PotentialSpec::strongly_separating(0.0, 0.1).unwrap()).unwrap(), 0.0);

        let spec = PotentialSpec::strongly_separating(2.0, 0.1).unwrap();
        let k = coercivity_shift(&spec).unwrap();
        assert!(k.is_finite() && k > 0.0);
        for n in 0..=100_000 {
            let r = -10.0 + 20.0 * n as f64 / 100_000.0;
            let phi = 0.5 * eval_big_f(&spec, r).unwrap() - r * r + k;
            assert!(phi >= 0.0, "Phi({r}) = {phi}");
        }

        let mut last = 0.0;
        for lambda in [0.0, 0.5, 1.0, 2.0, 3.0, 5.0] {
            let k = coercivity_shift(&PotentialSpec::strongly_separating(lambda, 0.05).unwrap()).unwrap();
            assert!(k >= last);
            last = k;
        }

        let too_big = PotentialSpec::strongly_separating(50.0, 0.05).unwrap();
        assert!(matches!(coercivity_shift(&too_big), Err(Error::CoercivityFailure { .. })));
    }

    #[test]
    fn bulk_energy_values() {
        let grid = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let spec = ss(0.05);
        let zero = ScalarField::zeros(grid, BcKind::NeumannZero);
        assert_eq!(bulk_energy(&zero, &spec).unwrap(), 0.0);

        let free = PotentialSpec::new(Family::StronglySeparating, 0.0, None).unwrap();
        let half = ScalarField::constant(grid, BcKind::NeumannZero, 0.5);
        let e = bulk_energy(&half, &free).unwrap();
        assert!((e - (-(0.75f64).ln())).abs() < 1e-14);
        assert!((e - 0.287682).abs() < 1e-6);
    }
}
