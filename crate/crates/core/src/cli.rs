//! Command-line front end and the scenario drivers behind it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, SimConfig, DEFAULTS_HELP};
use crate::diagnostics::{fmt_real, mean_confinement_check, DiagnosticsRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::grid::{write_snapshot, Grid};
use crate::oracles::{self, OracleResult};
use crate::potential::{bulk_energy, Family};
use crate::solver::{self, SimState};

#[derive(Parser, Debug)]
#[command(name = "chdarcy", version, about = "Cahn-Hilliard-Darcy simulator with a mass source", after_help = DEFAULTS_HELP)]
pub struct Cli {
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for random initial data (overrides `initial.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Time step (overrides `time.dt`).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Final time (overrides `time.t_end`).
    #[arg(long = "t-end", global = true)]
    pub t_end: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario, writing diagnostics, snapshots and a summary.
    Run { config: PathBuf },
    /// Repeat a scenario over several eps values and fit the grad_excess slope.
    SweepEps {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
        eps: Vec<f64>,
    },
    /// Run a simulation against a reference solution.
    Oracle {
        /// homogeneous, toy-mean, dispersion or brute-force.
        name: String,
        #[arg(long, default_value_t = 0.3)]
        phi0: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma0: f64,
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Relaxation rate of the toy-mean source.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0.2)]
        sbar: f64,
        #[arg(long, default_value_t = 0.6)]
        m0: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// Run one scenario under the quartic, logarithmic and strongly separating potentials.
    ComparePotentials {
        config: PathBuf,
        #[arg(long, default_value_t = 0.025)]
        eps: f64,
    },
}

/// Outcome of a scenario run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    pub initial_energy: f64,
    /// `(delta, ok)` of the Jensen mean bound; `None` when the potential
    /// admits no eps-uniform coercivity shift, so the bound does not apply.
    pub confinement: Option<(f64, bool)>,
    pub sup_abs_phi: f64,
    pub final_state: SimState,
}

struct Outputs {
    dir: PathBuf,
    prefix: String,
    csv: BufWriter<fs::File>,
    error: Option<std::io::Error>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

impl Outputs {
    fn create(dir: &Path, prefix: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(format!("{prefix}_diagnostics.csv"));
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{CSV_HEADER}").map_err(|e| io_err(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            csv,
            error: None,
        })
    }

    fn snapshot(&mut self, state: &SimState, index: usize) {
        let path = self.dir.join(format!("{}_phi_{index:06}.chdf", self.prefix));
        if let Err(e) = fs::write(&path, write_snapshot(&state.phi, "phi", state.t)) {
            self.error.get_or_insert(e);
        }
    }

    fn row(&mut self, rec: &DiagnosticsRecord) {
        if let Err(e) = writeln!(self.csv, "{}", rec.csv_row()) {
            self.error.get_or_insert(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        let flushed = self.csv.flush();
        match self.error.take() {
            Some(e) => Err(Error::Io(format!("{}: {e}", self.dir.display()))),
            None => flushed.map_err(|e| io_err(&self.dir, e)),
        }
    }
}

/// Runs `config`; with `out`, writes the diagnostics CSV, `phi` snapshots,
/// the effective configuration and a summary table under that directory.
pub fn run_scenario(config: &SimConfig, out: Option<&Path>) -> Result<RunSummary> {
    let grid = config.grid();
    let spec = config.potential();
    let source = config.source();
    let cfg = config.stepper();
    let initial = solver::initial_state(grid, &config.initial.condition(), &spec, &source, &cfg)?;
    let initial_energy = bulk_energy(&initial.phi, &spec)?;
    let mut outputs = match out {
        Some(dir) => {
            let o = Outputs::create(dir, &config.output.prefix)?;
            write_file(&dir.join(format!("{}_config.cfg", config.output.prefix)), &config.render())?;
            Some(o)
        }
        None => None,
    };
    if let Some(o) = outputs.as_mut() {
        o.snapshot(&initial, 0);
    }
    let mut records = Vec::new();
    let mut sup = initial.phi.max().abs().max(initial.phi.min().abs());
    let every = config.time.snapshot_every;
    let final_state = solver::run(&initial, config.time.t_end, &spec, &source, &cfg, &mut |rec, state| {
        sup = sup.max(rec.max_phi.abs()).max(rec.min_phi.abs());
        if let Some(o) = outputs.as_mut() {
            o.row(rec);
            if every > 0 && rec.step % every == 0 {
                o.snapshot(state, rec.step);
            }
        }
        records.push(rec.clone());
    })?;
    let means: Vec<f64> = records.iter().map(|r| r.mean_phi).collect();
    // a source can raise the energy, so the bound uses its largest value on [0, T]
    let energy_bound = records.iter().fold(initial_energy, |m, r| m.max(r.energy));
    let confinement = match mean_confinement_check(&means, energy_bound, &spec, grid.area()) {
        Ok(v) => Some(v),
        Err(Error::CoercivityFailure { .. }) => None,
        Err(e) => return Err(e),
    };
    let summary = RunSummary {
        records,
        initial_energy,
        confinement,
        sup_abs_phi: sup,
        final_state,
    };
    if let (Some(mut o), Some(dir)) = (outputs, out) {
        let last = summary.records.last().map_or(0, |r| r.step);
        if every == 0 || !last.is_multiple_of(every) {
            o.snapshot(&summary.final_state, last);
        }
        o.finish()?;
        write_file(&dir.join(format!("{}_summary.csv", config.output.prefix)), &summary_table(config, &summary))?;
    }
    Ok(summary)
}

fn summary_table(config: &SimConfig, s: &RunSummary) -> String {
    let max_mass = s.records.iter().fold(0.0_f64, |m, r| m.max(r.mass_residual.abs()));
    let rows = [
        ("t_end", fmt_real(s.final_state.t)),
        ("dt", fmt_real(config.time.dt)),
        ("steps", s.records.len().to_string()),
        ("seed", config.initial.seed.to_string()),
        ("initial_energy", fmt_real(s.initial_energy)),
        ("final_energy", s.records.last().map_or_else(|| fmt_real(s.initial_energy), |r| fmt_real(r.energy))),
        ("sup_abs_phi", fmt_real(s.sup_abs_phi)),
        ("max_abs_mass_residual", fmt_real(max_mass)),
        ("delta", s.confinement.map_or_else(|| "n/a".to_string(), |c| fmt_real(c.0))),
        ("confinement_ok", s.confinement.map_or_else(|| "n/a".to_string(), |c| c.1.to_string())),
    ];
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

/// One row of the eps sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub integrated_grad_excess: f64,
    pub max_overshoot: f64,
    pub sup_abs_phi: f64,
}

impl SweepRow {
    pub fn separated(&self) -> bool {
        self.sup_abs_phi < 1.0 + self.eps
    }

    pub fn within_sup_bound(&self) -> bool {
        self.sup_abs_phi <= 1.0 + 2.0 * self.eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(integrated grad_excess)` against `ln(eps)`.
    pub slope: f64,
}

impl SweepSummary {
    pub fn slope_ok(&self) -> bool {
        (1.7..=2.3).contains(&self.slope)
    }
}

/// Least-squares slope through `(x, y)` points.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    num / den
}

/// Runs `config` once per eps; with `out`, each run writes its own files.
pub fn sweep_eps(config: &SimConfig, eps_list: &[f64], out: Option<&Path>) -> Result<SweepSummary> {
    if eps_list.len() < 3 {
        return Err(Error::config(0, "sweep-eps needs at least three eps values"));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        let mut c = config.clone();
        c.potential.eps = Some(eps);
        c.output.prefix = format!("{}_eps{eps}", config.output.prefix);
        crate::potential::PotentialSpec::new(c.potential.family, c.potential.lambda, c.potential.eps)?;
        let run = run_scenario(&c, out)?;
        let integrated = run.records.iter().map(|r| r.grad_excess * r.dt_used).sum();
        let max_overshoot = run
            .records
            .iter()
            .fold(0.0_f64, |m, r| m.max(r.overshoot_plus).max(r.overshoot_minus));
        rows.push(SweepRow {
            eps,
            integrated_grad_excess: integrated,
            max_overshoot,
            sup_abs_phi: run.sup_abs_phi,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps.ln(), r.integrated_grad_excess.ln())).collect();
    let summary = SweepSummary {
        slope: fit_slope(&points),
        rows,
    };
    if let Some(dir) = out {
        let mut text = String::from("eps,integrated_grad_excess,max_overshoot,sup_abs_phi,separated,slope\n");
        for r in &summary.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_real(r.eps),
                fmt_real(r.integrated_grad_excess),
                fmt_real(r.max_overshoot),
                fmt_real(r.sup_abs_phi),
                r.separated(),
                fmt_real(summary.slope)
            ));
        }
        write_file(&dir.join(format!("{}_sweep.csv", config.output.prefix)), &text)?;
    }
    Ok(summary)
}

/// One family's run in a potential comparison.
#[derive(Debug, Clone)]
pub struct FamilyRun {
    pub family: Family,
    pub eps: Option<f64>,
    pub sup_abs_phi: f64,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
}

pub fn compare_potentials(config: &SimConfig, eps: f64, out: Option<&Path>) -> Result<Vec<FamilyRun>> {
    let mut runs = Vec::new();
    for (family, e) in [
        (Family::Quartic, None),
        (Family::Logarithmic, Some(eps)),
        (Family::StronglySeparating, Some(eps)),
    ] {
        let mut c = config.clone();
        c.potential.family = family;
        c.potential.eps = e;
        c.output.prefix = format!("{}_{}", config.output.prefix, family.name());
        crate::potential::PotentialSpec::new(family, c.potential.lambda, e)?;
        let run = run_scenario(&c, out)?;
        runs.push(FamilyRun {
            family,
            eps: e,
            sup_abs_phi: run.sup_abs_phi,
            times: run.records.iter().map(|r| r.t).collect(),
            means: run.records.iter().map(|r| r.mean_phi).collect(),
        });
    }
    if let Some(dir) = out {
        let mut table = String::from("family,eps,max_abs_phi,final_mean\n");
        let mut series = String::from("family,t,mean_phi\n");
        for r in &runs {
            let eps = r.eps.map_or_else(|| "none".to_string(), fmt_real);
            table.push_str(&format!(
                "{},{eps},{},{}\n",
                r.family.name(),
                fmt_real(r.sup_abs_phi),
                fmt_real(r.means.last().copied().unwrap_or(f64::NAN))
            ));
            for (t, m) in r.times.iter().zip(&r.means) {
                series.push_str(&format!("{},{},{}\n", r.family.name(), fmt_real(*t), fmt_real(*m)));
            }
        }
        write_file(&dir.join(format!("{}_compare.csv", config.output.prefix)), &table)?;
        write_file(&dir.join(format!("{}_compare_means.csv", config.output.prefix)), &series)?;
    }
    Ok(runs)
}

fn load_config(path: &Path, cli: &Cli) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut config = parse_config(&text).map_err(|e| match e {
        Error::Config { line, reason } => Error::config(line, format!("{}: {reason}", path.display())),
        other => other,
    })?;
    if let Some(seed) = cli.seed {
        config.initial.seed = seed;
    }
    if let Some(dt) = cli.dt {
        config.time.dt = dt;
    }
    if let Some(t) = cli.t_end {
        config.time.t_end = t;
    }
    if let Some(dir) = &cli.out {
        config.output.dir = dir.display().to_string();
    }
    // re-validate with the overrides applied
    parse_config(&config.render())
}

fn oracle_csv(result: &OracleResult) -> String {
    let mut out = format!("{CSV_HEADER},abs_error\n");
    for (rec, err) in result.records.iter().zip(result.abs_errors()) {
        out.push_str(&format!("{},{}\n", rec.csv_row(), fmt_real(err)));
    }
    out
}

/// Outcome of a command: `Ok(true)` success, `Ok(false)` a check that did
/// not hold (already reported).
fn execute(cli: &Cli) -> Result<bool> {
    let out_dir = |config: Option<&SimConfig>| -> PathBuf {
        cli.out
            .clone()
            .or_else(|| config.map(|c| PathBuf::from(&c.output.dir)))
            .unwrap_or_else(|| PathBuf::from("out"))
    };
    match &cli.command {
        Command::Run { config } => {
            let config = load_config(config, cli)?;
            let dir = out_dir(Some(&config));
            let s = run_scenario(&config, Some(&dir))?;
            if let Some((delta, false)) = s.confinement {
                report_failure("invariant", "mean confinement violated", json!({ "delta": delta }));
                return Ok(false);
            }
            println!(
                "run complete: {} steps, t = {}, sup|phi| = {:.6}, delta = {}",
                s.records.len(),
                s.final_state.t,
                s.sup_abs_phi,
                s.confinement.map_or_else(|| "n/a".to_string(), |c| format!("{:.6}", c.0))
            );
            Ok(true)
        }
        Command::SweepEps { config, eps } => {
            let config = load_config(config, cli)?;
            let dir = out_dir(Some(&config));
            let s = sweep_eps(&config, eps, Some(&dir))?;
            for r in &s.rows {
                println!(
                    "eps = {:<8} integrated grad_excess = {:.6e}  sup|phi| = {:.6}{}",
                    r.eps,
                    r.integrated_grad_excess,
                    r.sup_abs_phi,
                    if r.separated() { "  (separated)" } else { "" }
                );
            }
            println!("slope = {:.4}", s.slope);
            if !s.slope_ok() {
                report_failure("check", "grad_excess slope outside [1.7, 2.3]", json!({ "slope": s.slope }));
            }
            Ok(s.slope_ok())
        }
        Command::Oracle {
            name,
            phi0,
            gamma0,
            lambda,
            eps,
            rate,
            sbar,
            m0,
            steps,
        } => {
            let dir = out_dir(None);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let spec = crate::potential::PotentialSpec::strongly_separating(*lambda, *eps)?;
            match name.as_str() {
                "homogeneous" | "toy-mean" => {
                    let dt = cli.dt.unwrap_or(1e-3);
                    let result = if name == "homogeneous" {
                        let t_end = cli.t_end.unwrap_or(2.0);
                        oracles::homogeneous_experiment(Grid::new(64, 64, 1.0, 1.0)?, &spec, *phi0, *gamma0, dt, t_end)?
                    } else {
                        let t_end = cli.t_end.unwrap_or(1.0);
                        oracles::toy_mean_experiment(Grid::new(32, 32, 4.0, 4.0)?, &spec, *m0, *rate, *sbar, dt, t_end)?
                    };
                    write_file(&dir.join(format!("oracle_{name}.csv")), &oracle_csv(&result))?;
                    println!("{name}: max abs error {:.3e} (tolerance {:.1e})", result.max_error(), result.tolerance);
                    Ok(result.passed())
                }
                "dispersion" => {
                    let dt = cli.dt.unwrap_or(1e-3);
                    let t_end = cli.t_end.unwrap_or(0.5);
                    let mut table = String::from("mode,kappa,measured,predicted,relative_error\n");
                    let mut ok = true;
                    for mode in 1..=3 {
                        let r = oracles::dispersion_experiment(Grid::new(64, 4, 8.0, 0.5)?, *lambda, *eps, mode, 0.01, dt, t_end)?;
                        ok &= r.relative_error() < 0.05;
                        println!("mode {mode}: measured {:.6} predicted {:.6}", r.measured, r.predicted);
                        table.push_str(&format!(
                            "{mode},{},{},{},{}\n",
                            fmt_real(r.kappa),
                            fmt_real(r.measured),
                            fmt_real(r.predicted),
                            fmt_real(r.relative_error())
                        ));
                    }
                    write_file(&dir.join("oracle_dispersion.csv"), &table)?;
                    Ok(ok)
                }
                "brute-force" => {
                    let seed = cli.seed.unwrap_or(7);
                    let r = oracles::brute_force_small_grid(seed, cli.dt.unwrap_or(1e-4), *steps)?;
                    let mut table = String::from("step,max_deviation\n");
                    for (k, d) in r.per_step.iter().enumerate() {
                        table.push_str(&format!("{},{}\n", k + 1, fmt_real(*d)));
                    }
                    write_file(&dir.join(format!("oracle_brute_force_{seed}.csv")), &table)?;
                    println!("brute-force seed {seed}: max deviation {:.3e}", r.max_deviation());
                    Ok(r.max_deviation() < 1e-9)
                }
                other => Err(Error::UnknownOracle(other.to_string())),
            }
        }
        Command::ComparePotentials { config, eps } => {
            let config = load_config(config, cli)?;
            let dir = out_dir(Some(&config));
            for r in compare_potentials(&config, *eps, Some(&dir))? {
                println!(
                    "{:<20} max|phi| = {:.6}  final mean = {:.6}",
                    r.family.name(),
                    r.sup_abs_phi,
                    r.means.last().copied().unwrap_or(f64::NAN)
                );
            }
            Ok(true)
        }
    }
}

fn report_failure(kind: &str, message: &str, extra: serde_json::Value) {
    let mut report = json!({ "status": "failure", "kind": kind, "message": message });
    if let (Some(obj), serde_json::Value::Object(more)) = (report.as_object_mut(), extra) {
        obj.extend(more);
    }
    eprintln!("{report}");
}

fn error_details(e: &Error) -> serde_json::Value {
    match e {
        Error::Config { line, .. } => json!({ "line": line }),
        Error::NewtonDivergence { t, dt, residual } => json!({ "t": t, "dt": dt, "residual": residual }),
        Error::NonConvergence { iterations, residual } => json!({ "iterations": iterations, "residual": residual }),
        Error::CflViolation { dt, cap } => json!({ "dt": dt, "cap": cap }),
        _ => json!({}),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("").to_string();
            report_failure("usage", &first, json!({}));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            report_failure(e.kind(), &e.to_string(), error_details(&e));
            if matches!(e, Error::Config { .. } | Error::UnknownOracle(_)) {
                2
            } else {
                1
            }
        }
    }
}
