//! Scenario files: `[section]` headers, `key = value` pairs and `#`
//! comments. Every key is optional except that the `grid`, `time` and
//! `potential` sections must be present; unknown keys are errors.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potential::{Family, PotentialSpec};
use crate::solver::{InitialCondition, InitialKind, StepperConfig};
use crate::source::{GammaPreset, GammaSpec, SourceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot every this many accepted steps; 0 keeps only the first and
    /// last fields.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSection {
    pub family: Family,
    pub lambda: f64,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSection {
    /// `constant`, `space-bump`, `time-ramp` or `signed-logistic`.
    pub preset: String,
    pub amplitude: f64,
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub t_ramp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSection {
    /// `random`, `stripe`, `disk` or `constant`.
    pub kind: String,
    pub m0: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub width: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_max: usize,
    pub cg_tol: f64,
    pub cfl_safety: f64,
    pub transport: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub potential: PotentialSection,
    pub gamma: GammaSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

/// Defaults, as listed by `chdarcy --help`.
pub const DEFAULTS_HELP: &str = "\
config defaults:
  [grid]      nx = 64, ny = 64, lx = 8, ly = 8
  [time]      dt = 0.001, t_end = 1, snapshot_every = 0
  [potential] family = strongly-separating, lambda = 3, eps = 0.05 (none for quartic)
  [gamma]     preset = constant, amplitude = 0, x0 = lx/2, y0 = ly/2, width = lx/8, t_ramp = 1
  [initial]   kind = random, m0 = 0, amplitude = 0.1, seed = 42, width = lx/16, radius = lx/4
  [solver]    newton_tol = 1e-10, newton_max = 50, cg_tol = 1e-11, cfl_safety = 0.5, transport = true
  [output]    dir = out, prefix = run";

const SECTIONS: [(&str, &[&str]); 7] = [
    ("grid", &["nx", "ny", "lx", "ly"]),
    ("time", &["dt", "t_end", "snapshot_every"]),
    ("potential", &["family", "lambda", "eps"]),
    ("gamma", &["preset", "amplitude", "x0", "y0", "width", "t_ramp"]),
    ("initial", &["kind", "m0", "amplitude", "seed", "width", "radius"]),
    ("solver", &["newton_tol", "newton_max", "cg_tol", "cfl_safety", "transport"]),
    ("output", &["dir", "prefix"]),
];

/// Raw `section.key -> (value, line)` table.
struct Entries(HashMap<String, (String, usize)>);

impl Entries {
    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(_, l)| *l)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| Error::config(*line, format!("cannot parse {key} = '{v}'"))),
        }
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.0.get(key).map_or_else(|| default.to_string(), |(v, _)| v.clone())
    }
}

fn check(ok: bool, line: usize, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(line, reason))
    }
}

fn with_line(e: Error, line: usize) -> Error {
    match e {
        Error::Config { reason, .. } => Error::config(line, reason),
        other => other,
    }
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut entries = HashMap::new();
    let mut seen = Vec::new();
    let mut section: Option<&'static str> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            let found = SECTIONS.iter().find(|(s, _)| *s == name);
            let (s, _) = found.ok_or_else(|| Error::config(line, format!("unknown section [{name}]")))?;
            check(!seen.contains(s), line, format!("duplicate section [{name}]"))?;
            seen.push(*s);
            section = Some(*s);
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected 'key = value', got '{body}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| Error::config(line, "key outside of any section"))?;
        let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        check(allowed.contains(&key), line, format!("unknown key '{key}' in [{sec}]"))?;
        let full = format!("{sec}.{key}");
        check(!entries.contains_key(&full), line, format!("duplicate key '{key}' in [{sec}]"))?;
        entries.insert(full, (value.to_string(), line));
    }
    for required in ["grid", "time", "potential"] {
        check(seen.contains(&required), 0, format!("missing required section [{required}]"))?;
    }
    let e = Entries(entries);

    let grid = GridSection {
        nx: e.get("grid.nx", 64)?,
        ny: e.get("grid.ny", 64)?,
        lx: e.get("grid.lx", 8.0)?,
        ly: e.get("grid.ly", 8.0)?,
    };
    Grid::new(grid.nx, grid.ny, grid.lx, grid.ly).map_err(|err| with_line(err, e.line("grid.nx").max(e.line("grid.lx"))))?;

    let time = TimeSection {
        dt: e.get("time.dt", 1e-3)?,
        t_end: e.get("time.t_end", 1.0)?,
        snapshot_every: e.get("time.snapshot_every", 0)?,
    };
    check(time.dt > 0.0 && time.dt.is_finite(), e.line("time.dt"), "dt must be > 0")?;
    check(time.t_end >= 0.0 && time.t_end.is_finite(), e.line("time.t_end"), "t_end must be >= 0")?;

    let family_text = e.text("potential.family", "strongly-separating");
    let family = Family::parse(&family_text)
        .ok_or_else(|| Error::config(e.line("potential.family"), format!("unknown family '{family_text}'")))?;
    let eps = match e.0.get("potential.eps") {
        Some((v, line)) if v == "none" => {
            check(family == Family::Quartic, *line, "eps may be absent only for the quartic family")?;
            None
        }
        Some(_) => Some(e.get("potential.eps", 0.0)?),
        None if family == Family::Quartic => None,
        None => Some(0.05),
    };
    let potential = PotentialSection {
        family,
        lambda: e.get("potential.lambda", 3.0)?,
        eps,
    };
    PotentialSpec::new(potential.family, potential.lambda, potential.eps).map_err(|err| {
        let line = if potential.eps.is_some_and(|v| !(v > 0.0 && v < 0.25)) {
            e.line("potential.eps")
        } else {
            e.line("potential.lambda")
        };
        with_line(err, line)
    })?;

    let gamma = GammaSection {
        preset: e.text("gamma.preset", "constant"),
        amplitude: e.get("gamma.amplitude", 0.0)?,
        x0: e.get("gamma.x0", grid.lx / 2.0)?,
        y0: e.get("gamma.y0", grid.ly / 2.0)?,
        width: e.get("gamma.width", grid.lx / 8.0)?,
        t_ramp: e.get("gamma.t_ramp", 1.0)?,
    };
    check(
        ["constant", "space-bump", "time-ramp", "signed-logistic"].contains(&gamma.preset.as_str()),
        e.line("gamma.preset"),
        format!("unknown gamma preset '{}'", gamma.preset),
    )?;
    check(gamma.amplitude.is_finite(), e.line("gamma.amplitude"), "gamma amplitude must be finite")?;
    check(gamma.width > 0.0, e.line("gamma.width"), "gamma width must be > 0")?;
    check(gamma.t_ramp > 0.0, e.line("gamma.t_ramp"), "gamma t_ramp must be > 0")?;

    let initial = InitialSection {
        kind: e.text("initial.kind", "random"),
        m0: e.get("initial.m0", 0.0)?,
        amplitude: e.get("initial.amplitude", 0.1)?,
        seed: e.get("initial.seed", 42)?,
        width: e.get("initial.width", grid.lx / 16.0)?,
        radius: e.get("initial.radius", grid.lx / 4.0)?,
    };
    check(
        ["random", "stripe", "disk", "constant"].contains(&initial.kind.as_str()),
        e.line("initial.kind"),
        format!("unknown initial kind '{}'", initial.kind),
    )?;
    check(initial.width > 0.0, e.line("initial.width"), "initial width must be > 0")?;
    check(initial.radius > 0.0, e.line("initial.radius"), "initial radius must be > 0")?;
    initial
        .condition()
        .validate()
        .map_err(|err| with_line(err, e.line("initial.m0").max(e.line("initial.amplitude"))))?;

    let solver = SolverSection {
        newton_tol: e.get("solver.newton_tol", 1e-10)?,
        newton_max: e.get("solver.newton_max", 50)?,
        cg_tol: e.get("solver.cg_tol", 1e-11)?,
        cfl_safety: e.get("solver.cfl_safety", 0.5)?,
        transport: e.get("solver.transport", true)?,
    };
    let output = OutputSection {
        dir: e.text("output.dir", "out"),
        prefix: e.text("output.prefix", "run"),
    };
    let config = SimConfig {
        grid,
        time,
        potential,
        gamma,
        initial,
        solver,
        output,
    };
    config.stepper().validate().map_err(|err| with_line(err, e.line("solver.newton_tol")))?;
    Ok(config)
}

impl GammaSection {
    pub fn spec(&self) -> GammaSpec {
        let preset = match self.preset.as_str() {
            "space-bump" => GammaPreset::SpaceBump {
                x0: (self.x0, self.y0),
                w: self.width,
            },
            "time-ramp" => GammaPreset::TimeRamp { t_ramp: self.t_ramp },
            "signed-logistic" => GammaPreset::SignedLogistic,
            _ => GammaPreset::Constant,
        };
        GammaSpec::new(preset, self.amplitude)
    }
}

impl InitialSection {
    pub fn condition(&self) -> InitialCondition {
        let kind = match self.kind.as_str() {
            "stripe" => InitialKind::Stripe { width: self.width },
            "disk" => InitialKind::Disk {
                radius: self.radius,
                width: self.width,
            },
            "constant" => InitialKind::Constant,
            _ => InitialKind::Random { seed: self.seed },
        };
        InitialCondition {
            kind,
            m0: self.m0,
            amplitude: self.amplitude,
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly).expect("validated at parse time")
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec::new(self.potential.family, self.potential.lambda, self.potential.eps)
            .expect("validated at parse time")
    }

    pub fn source(&self) -> SourceModel {
        SourceModel::Mass(self.gamma.spec())
    }

    pub fn stepper(&self) -> StepperConfig {
        let mut cfg = StepperConfig::new(self.time.dt);
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max = self.solver.newton_max;
        cfg.cg_tol = self.solver.cg_tol;
        cfg.cfl_safety = self.solver.cfl_safety;
        cfg.transport = self.solver.transport;
        cfg
    }

    /// Text form accepted by [`parse_config`], listing every key.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let (g, t, p, ga, i, so, o) = (
            &self.grid,
            &self.time,
            &self.potential,
            &self.gamma,
            &self.initial,
            &self.solver,
            &self.output,
        );
        let eps = p.eps.map_or_else(|| "none".to_string(), |v| v.to_string());
        // `{}` on f64 prints the shortest string that parses back exactly
        let _ = write!(
            s,
            "[grid]\nnx = {}\nny = {}\nlx = {}\nly = {}\n\n\
             [time]\ndt = {}\nt_end = {}\nsnapshot_every = {}\n\n\
             [potential]\nfamily = {}\nlambda = {}\neps = {eps}\n\n\
             [gamma]\npreset = {}\namplitude = {}\nx0 = {}\ny0 = {}\nwidth = {}\nt_ramp = {}\n\n\
             [initial]\nkind = {}\nm0 = {}\namplitude = {}\nseed = {}\nwidth = {}\nradius = {}\n\n\
             [solver]\nnewton_tol = {}\nnewton_max = {}\ncg_tol = {}\ncfl_safety = {}\ntransport = {}\n\n\
             [output]\ndir = {}\nprefix = {}\n",
            g.nx,
            g.ny,
            g.lx,
            g.ly,
            t.dt,
            t.t_end,
            t.snapshot_every,
            p.family.name(),
            p.lambda,
            ga.preset,
            ga.amplitude,
            ga.x0,
            ga.y0,
            ga.width,
            ga.t_ramp,
            i.kind,
            i.m0,
            i.amplitude,
            i.seed,
            i.width,
            i.radius,
            so.newton_tol,
            so.newton_max,
            so.cg_tol,
            so.cfl_safety,
            so.transport,
            o.dir,
            o.prefix,
        );
        s
    }
}
