//! Command-line front end: configuration, the five commands and their output formats.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use thiserror::Error;

use residue_lab::conformal::{energy_breakdown, spheroid_energies, ConformalError};
use residue_lab::continuation::{
    beta_eval, body_beta, body_profile, distance_profile, polygon_beta, residue_from_profile, BetaEvaluation,
    ContinuationError, ProfileOptions, WeightKind,
};
use residue_lab::manifold::{ManifoldError, ManifoldSpec, Shape, ShapeConfig};
use residue_lab::residues::{body_residues, closed_residues, nu_residue_m8, residue_m8, ResidueError, ResidueReport};
use residue_lab::verify::run_acceptance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Beta,
    Residues,
    Gw,
    Verify,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Report,
}

#[derive(Clone, Debug, Parser)]
#[command(name = "residue-lab", version, about = "Meromorphic energies, residues and conformal energies of manifolds")]
pub struct Args {
    /// Command to run.
    #[arg(long)]
    pub cmd: Command,
    /// Shape configuration: a JSON file path, or inline JSON starting with '{'.
    #[arg(long)]
    pub shape: Option<String>,
    /// Comma-separated real z values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub z: Vec<f64>,
    /// Spheroid axis range a0:a1:step.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Weight of the distance distribution.
    #[arg(long, default_value = "one")]
    pub weight: String,
    /// Gauss–Legendre points per π.
    #[arg(long, default_value_t = 24)]
    pub order: usize,
    /// Cutoff δ of the small-distance model.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Highest even coefficient index of the model.
    #[arg(long)]
    pub fit_degree: Option<usize>,
    /// Largest accepted relative residual of the model fit.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads.
    #[arg(long, env = "RESIDUE_LAB_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("verification failed at check {0}")]
    Verify(String, String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(..) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<ManifoldError> for CliError {
    fn from(e: ManifoldError) -> Self {
        match e {
            ManifoldError::Config(s) => CliError::Config(s),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<ContinuationError> for CliError {
    fn from(e: ContinuationError) -> Self {
        match e {
            ContinuationError::Manifold(m) => m.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<ResidueError> for CliError {
    fn from(e: ResidueError) -> Self {
        match e {
            ResidueError::Manifold(m) => m.into(),
            ResidueError::Continuation(c) => c.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ConformalError> for CliError {
    fn from(e: ConformalError) -> Self {
        match e {
            ConformalError::Manifold(m) => m.into(),
            ConformalError::Residue(r) => r.into(),
            ConformalError::Dimension(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub cmd: Command,
    pub shape: Option<ManifoldSpec>,
    pub z: Vec<f64>,
    pub sweep: Vec<f64>,
    pub weight: WeightKind,
    pub order: usize,
    pub opts: ProfileOptions,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

fn parse_sweep(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("bad --sweep '{s}': {e}")))?;
    let [a0, a1, step] = parts[..] else {
        return Err(CliError::Config(format!("--sweep expects a0:a1:step, got '{s}'")));
    };
    if !(step > 0.0) || !(a1 >= a0) || !(a0 > 0.0) {
        return Err(CliError::Config(format!("--sweep needs 0 < a0 ≤ a1 and step > 0, got '{s}'")));
    }
    let count = ((a1 - a0) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| a0 + k as f64 * step).collect())
}

fn load_shape(s: &str) -> Result<ManifoldSpec, CliError> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("cannot read shape '{s}': {e}")))?
    };
    Ok(ShapeConfig::from_json(&text)?.build()?)
}

impl RunConfig {
    pub fn from_args(a: &Args) -> Result<Self, CliError> {
        let weight = WeightKind::parse(&a.weight).ok_or_else(|| CliError::Config(format!("unknown weight '{}'", a.weight)))?;
        if a.order < 4 {
            return Err(CliError::Config(format!("--order must be at least 4, got {}", a.order)));
        }
        if !(a.tol > 0.0) {
            return Err(CliError::Config("--tol must be positive".into()));
        }
        if a.workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        if let Some(d) = a.delta {
            if !(d > 0.0) {
                return Err(CliError::Config("--delta must be positive".into()));
            }
        }
        let shape = a.shape.as_deref().map(load_shape).transpose()?;
        let needs_shape = matches!(a.cmd, Command::Beta | Command::Residues | Command::Gw);
        if needs_shape && shape.is_none() {
            return Err(CliError::Config("--shape is required for this command".into()));
        }
        if a.cmd == Command::Beta && a.z.is_empty() {
            return Err(CliError::Config("--z is required for beta".into()));
        }
        let sweep = match (&a.sweep, a.cmd) {
            (Some(s), _) => parse_sweep(s)?,
            (None, Command::Sweep) => parse_sweep("0.5:3:0.05")?,
            (None, _) => vec![],
        };
        let opts = ProfileOptions { order: a.order, delta: a.delta, fit_degree: a.fit_degree, fit_tol: a.tol, ..Default::default() };
        Ok(RunConfig {
            cmd: a.cmd,
            shape,
            z: a.z.clone(),
            sweep,
            weight,
            order: a.order,
            opts,
            format: a.format,
            out: a.out.clone(),
            workers: a.workers,
        })
    }

    fn spec(&self) -> &ManifoldSpec {
        self.shape.as_ref().expect("validated")
    }
}

/// Seventeen significant digits.
fn num(x: f64) -> String {
    // adding zero folds −0 into +0
    format!("{:.16e}", x + 0.0)
}

/// One row of the beta table: a value, or the residue at a guarded pole.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaRow {
    pub z: f64,
    pub value: Option<Complex64>,
    pub residue: Option<f64>,
    pub method: String,
}

fn beta_row(z: f64, r: Result<BetaEvaluation, ContinuationError>, method: &str) -> Result<BetaRow, CliError> {
    match r {
        Ok(b) => Ok(BetaRow { z, value: Some(b.value), residue: None, method: b.method.tag().into() }),
        Err(ContinuationError::PoleProximity { residue, .. }) => {
            Ok(BetaRow { z, value: None, residue: Some(residue), method: format!("{method}-pole") })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_beta(cfg: &RunConfig) -> Result<Vec<BetaRow>, CliError> {
    let spec = cfg.spec();
    let c = |z: f64| Complex64::new(z, 0.0);
    if let Shape::PolygonKnot { vertices } = &spec.shape {
        if !spec.map.is_identity() {
            return Err(CliError::Config("polygon knots take no transforms".into()));
        }
        return cfg.z.iter().map(|&z| beta_row(z, polygon_beta(vertices, c(z)), "polygon")).collect();
    }
    if spec.is_body {
        let p = body_profile(spec, &cfg.opts)?;
        return cfg.z.iter().map(|&z| beta_row(z, body_beta(&p, spec.n, c(z)), "boundary-reduction")).collect();
    }
    let p = distance_profile(spec, &cfg.weight, &cfg.opts)?;
    cfg.z.iter().map(|&z| beta_row(z, beta_eval(&p, c(z)), "profile")).collect()
}

pub fn beta_csv(rows: &[BetaRow]) -> String {
    let mut s = String::from("z,re,im,method,residue\n");
    for r in rows {
        let (re, im) = r.value.map(|v| (num(v.re), num(v.im))).unwrap_or_default();
        let res = r.residue.map(num).unwrap_or_default();
        let _ = writeln!(s, "{},{re},{im},{},{res}", num(r.z), r.method);
    }
    s
}

pub fn beta_report(rows: &[BetaRow]) -> String {
    let mut s = String::new();
    for r in rows {
        match (r.value, r.residue) {
            (Some(v), _) => {
                let _ = writeln!(s, "z={} re={} im={} method={}", num(r.z), num(v.re), num(v.im), r.method);
            }
            (None, res) => {
                let _ = writeln!(s, "z={} residue={} method={}", num(r.z), num(res.unwrap_or(f64::NAN)), r.method);
            }
        }
    }
    s
}

/// Curvature residues, with the profile-method values at the same poles.
pub fn cmd_residues(cfg: &RunConfig) -> Result<ResidueReport, CliError> {
    let spec = cfg.spec();
    if spec.is_polygon() {
        return Err(CliError::Config("polygon residues come from the beta command".into()));
    }
    if spec.is_body {
        return Ok(body_residues(spec, cfg.order)?);
    }
    let mut r = closed_residues(spec, cfg.order)?;
    let opts = ProfileOptions { far_field: false, ..cfg.opts.clone() };
    let p = distance_profile(spec, &WeightKind::One, &opts)?;
    let m = spec.m as f64;
    for pole in [-m, -m - 2.0] {
        r.push(pole, residue_from_profile(&p, pole)?, "profile");
    }
    Ok(r)
}

pub fn residues_csv(r: &ResidueReport) -> String {
    let mut s = String::from("pole,weight,value,method,error\n");
    for e in &r.entries {
        let _ = writeln!(s, "{},{},{},{},{}", num(e.pole), e.weight, num(e.value), e.method, num(e.error));
    }
    s
}

pub fn cmd_gw(cfg: &RunConfig) -> Result<String, CliError> {
    let b = energy_breakdown(cfg.spec(), cfg.order)?;
    Ok(match cfg.format {
        Format::Report => b.to_text(),
        Format::Csv => {
            let mut s = String::from("gw,weyl,chern,z_energy,r8,r8_nu,residual\n");
            let v = [b.gw, b.weyl, b.chern, b.z_energy, b.r8, b.r8_nu, b.residual];
            let _ = writeln!(s, "{}", v.map(num).join(","));
            s
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub a: f64,
    pub gw: f64,
    pub r8: f64,
    pub r8_nu: f64,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.sweep
        .iter()
        .map(|&a| {
            let spec = ManifoldSpec::spheroid(a)?;
            Ok(SweepRow {
                a,
                gw: spheroid_energies(a)?.gw,
                r8: residue_m8(&spec, cfg.order)?.raw.value,
                r8_nu: nu_residue_m8(&spec, cfg.order)?.raw.value,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("a,gw,r8,r8_nu\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", num(r.a), num(r.gw), num(r.r8), num(r.r8_nu));
    }
    s
}

/// Whether the row closest to the round sphere has the smallest energy.
pub fn sweep_minimum_at_round(rows: &[SweepRow]) -> bool {
    let Some(round) = rows.iter().min_by(|x, y| (x.a - 1.0).abs().total_cmp(&(y.a - 1.0).abs())) else {
        return true;
    };
    rows.iter().all(|r| round.gw <= r.gw)
}

/// Run a validated configuration and return the rendered output.
pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| match cfg.cmd {
        Command::Beta => {
            let rows = cmd_beta(cfg)?;
            Ok(match cfg.format {
                Format::Csv => beta_csv(&rows),
                Format::Report => beta_report(&rows),
            })
        }
        Command::Residues => {
            let r = cmd_residues(cfg)?;
            Ok(match cfg.format {
                Format::Csv => residues_csv(&r),
                Format::Report => r.to_text(),
            })
        }
        Command::Gw => cmd_gw(cfg),
        Command::Verify => {
            let rep = run_acceptance();
            let text = rep.to_text();
            match rep.first_failure() {
                None => Ok(text),
                Some(c) => Err(CliError::Verify(format!("{} ({})", c.id, c.name), text)),
            }
        }
        Command::Sweep => {
            let rows = cmd_sweep(cfg)?;
            if !sweep_minimum_at_round(&rows) {
                return Err(CliError::Verify("sweep minimum".into(), sweep_csv(&rows)));
            }
            Ok(sweep_csv(&rows))
        }
    })
}

fn emit(cfg_out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match cfg_out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parse, validate, run and write; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::from_args(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let result = execute(&cfg);
    let text = match &result {
        Ok(t) => t.as_str(),
        Err(CliError::Verify(_, t)) => t.as_str(),
        Err(_) => "",
    };
    if !text.is_empty() {
        if let Err(e) = emit(cfg.out.as_ref(), text) {
            eprintln!("{e}");
            return e.exit_code();
        }
    }
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
