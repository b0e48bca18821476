use std::fs;
use std::io::Write;
use std::path::Path;

use lbm_ce::diffop::{MultiIndex, DEFAULT_DEGREE_CAP};
use lbm_ce::dispersion::{
    amplification_series, compare, engine_series, slow_log_series, slow_subspace_series_numeric, KSampling,
};
use lbm_ce::exec::Execution;
use lbm_ce::expansion::{assemble_pde, expand_with_cap, MAX_ORDER};
use lbm_ce::number::{format_gauss, rat};
use lbm_ce::render::{render, Format};
use lbm_ce::scheme::{builtin, BUILTIN_SCHEMES};
use lbm_ce::scheme_file::{resolve_scheme, to_toml};
use lbm_ce::simulator::{convergence_study, Initialization, ModeConfig};
use lbm_ce::{Error, LatticeScheme};
use serde::Serialize;

use crate::args::{Command, DeriveArgs, InitArg, OutputFormat, SchemesAction, SimulateArgs, VerifyArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_INSTABILITY: u8 = 4;

pub const CAP_ENV: &str = "CE_EXPAND_DEGREE_CAP";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NumericInstability { .. } | Error::FitResidual { .. } => EXIT_INSTABILITY,
            _ => EXIT_VALIDATION,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Derive(a) => derive(&a),
        Command::Verify(a) => verify(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Schemes { action } => schemes(&action),
    }
}

fn load(source: &str) -> CliResult<LatticeScheme> {
    resolve_scheme(source).map_err(|e| match e {
        Error::Io(io) => CliError::new(EXIT_VALIDATION, format!("{source}: {io}")),
        Error::SchemeFile { line, message } => CliError::new(EXIT_VALIDATION, format!("{source}:{line}: {message}")),
        other => other.into(),
    })
}

fn emit(text: &str, output: Option<&Path>) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::new(EXIT_VALIDATION, format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

/// Degree cap from the environment; at most 4.
fn degree_cap() -> CliResult<u32> {
    match std::env::var(CAP_ENV) {
        Err(_) => Ok(DEFAULT_DEGREE_CAP),
        Ok(raw) => {
            let cap: u32 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::new(EXIT_VALIDATION, format!("{CAP_ENV}={raw} is not a non-negative integer")))?;
            if cap > MAX_ORDER as u32 {
                return Err(CliError::new(EXIT_VALIDATION, format!("{CAP_ENV}={cap} exceeds the supported maximum {MAX_ORDER}")));
            }
            Ok(cap)
        }
    }
}

fn derive(a: &DeriveArgs) -> CliResult<()> {
    let scheme = load(&a.scheme.scheme)?;
    let cap = degree_cap()?;
    let result = expand_with_cap(&scheme, a.order as usize, cap)?;
    let pde = assemble_pde(&result, &scheme);
    let format = match a.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Latex => Format::Latex,
        OutputFormat::Json => Format::Json,
    };
    let mut text = render(&pde, format);
    text.push('\n');
    emit(&text, a.output.as_deref())
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    scheme: String,
    conserved: usize,
    order: usize,
    exact_match: bool,
    first_mismatch: Option<MismatchReport>,
    numeric_residual: f64,
    numeric_radius: f64,
    numeric_condition: f64,
    numeric_samples: usize,
    min_separation: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct MismatchReport {
    row: usize,
    col: usize,
    beta: Vec<u8>,
    oracle: String,
    engine: String,
}

fn verify(a: &VerifyArgs) -> CliResult<()> {
    let scheme = load(&a.scheme.scheme)?;
    let order = a.order as usize;
    let mut result = expand_with_cap(&scheme, order, degree_cap()?)?;
    if let Some(j) = a.inject_fault {
        if j == 0 || j > order {
            return Err(CliError::new(EXIT_USAGE, format!("--inject-fault {j} outside 1..={order}")));
        }
        let mut beta = vec![0u8; scheme.dim];
        beta[0] = j as u8;
        let g = &mut result.gamma[j - 1];
        let mut p = g.get(0, 0).clone();
        p.add_term(MultiIndex::new(beta), rat(1, 1000));
        g.set(0, 0, p);
    }
    let oracle = slow_log_series(&amplification_series(&scheme)?)?;
    let engine = engine_series(&result);
    let cmp = compare(&oracle, &engine, order as u32);
    let sampling = match a.radius {
        Some(r) if r > 0.0 && r.is_finite() => KSampling::with_radius(scheme.dim, r),
        Some(r) => return Err(CliError::new(EXIT_USAGE, format!("--radius {r} must be positive"))),
        None => KSampling::for_scheme(&scheme),
    };
    let numeric = slow_subspace_series_numeric(&scheme, &sampling, Execution::default())?;
    let residual = numeric.max_deviation_up_to(&engine, order as u32);
    let first = cmp.first_mismatch().map(|m| MismatchReport {
        row: m.row,
        col: m.col,
        beta: m.beta.exponents().to_vec(),
        oracle: format_gauss(&m.oracle),
        engine: format_gauss(&m.engine),
    });
    let pass = cmp.matches() && residual < a.tolerance;
    let report = VerifyReport {
        scheme: scheme.name.clone(),
        conserved: scheme.conserved,
        order,
        exact_match: cmp.matches(),
        first_mismatch: first,
        numeric_residual: residual,
        numeric_radius: sampling.radius,
        numeric_condition: numeric.condition,
        numeric_samples: numeric.samples,
        min_separation: numeric.min_separation,
        tolerance: a.tolerance,
        pass,
    };
    let text = match a.format {
        OutputFormat::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        _ => verify_text(&report),
    };
    emit(&text, None)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::new(EXIT_MISMATCH, "oracle and expansion disagree"))
    }
}

fn verify_text(r: &VerifyReport) -> String {
    let mut s = format!("scheme {} (conserved moments: {}, order {})\n", r.scheme, r.conserved, r.order);
    match &r.first_mismatch {
        None => s.push_str(&format!("exact series up to degree {}: match\n", r.order)),
        Some(m) => s.push_str(&format!(
            "exact series up to degree {}: mismatch at entry ({}, {}) beta {:?}: oracle {} engine {}\n",
            r.order, m.row, m.col, m.beta, m.oracle, m.engine
        )),
    }
    s.push_str(&format!(
        "numeric fit: residual {:.3e} (tolerance {:.1e}), radius {:.3e}, condition {:.3e}, {} samples\n",
        r.numeric_residual, r.tolerance, r.numeric_radius, r.numeric_condition, r.numeric_samples
    ));
    s.push_str(if r.pass { "PASS\n" } else { "FAIL\n" });
    s
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let scheme = load(&a.scheme.scheme)?;
    if a.grids.is_empty() || a.grids.contains(&0) {
        return Err(CliError::new(EXIT_USAGE, "--grids needs positive sizes"));
    }
    let mut cfg = ModeConfig::new(scheme.dim, a.grids[0], a.steps);
    if let Some(m) = &a.mode {
        if m.len() != scheme.dim {
            return Err(CliError::new(EXIT_USAGE, format!("--mode needs {} components", scheme.dim)));
        }
        cfg.mode = m.clone();
    }
    cfg.amplitude = a.amplitude;
    cfg.init = match a.init {
        InitArg::Equilibrium => Initialization::Equilibrium,
        InitArg::Corrected => Initialization::FirstOrderCorrected,
    };
    cfg.exec = if a.sequential { Execution::Sequential } else { Execution::default() };
    let study = if a.steps == 0 {
        lbm_ce::simulator::ConvergenceStudy { rows: vec![] }
    } else {
        convergence_study(&scheme, &a.grids, &cfg)?
    };
    if let Some(path) = &a.dat {
        emit(&study.to_dat(), Some(path))?;
    }
    emit(&study.to_csv(), a.output.as_deref())
}

fn schemes(action: &SchemesAction) -> CliResult<()> {
    match action {
        SchemesAction::List => {
            let mut s = String::new();
            for (name, about) in BUILTIN_SCHEMES {
                s.push_str(&format!("{name:<16} {about}\n"));
            }
            emit(&s, None)
        }
        SchemesAction::Show { name } => {
            let scheme = builtin(name).ok_or_else(|| CliError::new(EXIT_VALIDATION, format!("unknown built-in scheme '{name}'")))?;
            emit(&to_toml(&scheme), None)
        }
    }
}
