//! Command-line front end: config ingestion, experiment dispatch, result
//! emission.
//!
//! Exit codes: 0 success, 1 config error, 2 regime validation failure
//! without --force, 3 convergence/step-limit failure, 4 I/O failure.

use crate::device::{default_block_params, validate_regime, BlockParams, ChainParams, OpKind};
use crate::error::{Error, Result};
use crate::evolve::IntegratorConfig;
use crate::experiments::{
    auto_truncation, conventions, convergence_study, default_output_name, default_sweep_axis,
    run_beamsplitter_experiment, run_bs_blocking_check, run_displacement_check, run_gate,
    run_single_mode_sweep, write_results, ExperimentConfig, GateTargets, OutputFormat, SweepAxis,
    SweepResult,
};
use crate::fock::{make_state, FactorSpec, SubsystemLayout};
use crate::gates::{compile_schedule, ideal_gate, GateSpec};
use crate::hamiltonians::ModelOptions;
use crate::metrics::{wigner, DensityMatrix, GridSpec};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Pulse-level simulator and gate calibrator for a superconducting
/// continuous-variable processor.
#[derive(Debug, Parser)]
#[command(name = "cvqpu", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML config file with [device], [experiment], [integrator],
    /// [output] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-key overrides applied after file parsing, e.g.
    /// `--set device.omega_r=4e9`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output file path (a name is generated when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Run even when the regime report fails.
    #[arg(long)]
    pub force: bool,
    /// Print per-row details.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fidelity sweep of one operation over its device parameter.
    Sweep {
        /// rotation | squeezing | kerr | beamsplitter
        #[arg(long)]
        op: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Resonant displacement check (vacuum to |alpha| = 2).
    Displace {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one calibrated gate and summarize the final state.
    Gate {
        /// Gate in circuit syntax, e.g. "R 3.14159 0" or "S 1.7 0.0 0".
        #[arg(long)]
        gate: String,
        /// Initial mode state: vacuum | fock:<n> | coherent:<re>[,<im>]
        #[arg(long, default_value = "coherent:2")]
        state: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit the Wigner function of a state or a gate output.
    Wigner {
        /// Initial mode state: vacuum | fock:<n> | coherent:<re>[,<im>]
        #[arg(long, default_value = "coherent:2")]
        state: String,
        /// Optional gate (circuit syntax) applied ideally before sampling.
        #[arg(long)]
        gate: Option<String>,
        /// Grid as min:max:points.
        #[arg(long, default_value = "-5:5:121", allow_hyphen_values = true)]
        grid: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compile a circuit file into a pulse schedule.
    Compile {
        /// One gate per line: R <theta> <mode> | D <re> <im> <mode> |
        /// S <re> <im> <mode> | K <chi> <mode> | B <beta> <phi> <m1> <m2>
        #[arg(long)]
        circuit: PathBuf,
        /// Number of modes in the chain (default: largest target + 1).
        #[arg(long)]
        modes: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Truncation convergence study of one operation.
    Converge {
        #[arg(long)]
        op: String,
        /// Comma-separated truncation ladder; automatic when omitted.
        #[arg(long)]
        truncations: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the regime report for one operation.
    Validate {
        #[arg(long)]
        op: String,
        /// Mean photon number entering the dispersive conditions.
        #[arg(long, default_value_t = 4.0)]
        nbar: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

// ---- config file schema -------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSection {
    omega_m: Option<f64>,
    omega_f: Option<f64>,
    omega_r: Option<f64>,
    omega_b: Option<f64>,
    g_mr: Option<f64>,
    g_mb: Option<f64>,
    g_mf: Option<f64>,
    g0: Option<f64>,
    lambda: Option<f64>,
    #[serde(rename = "omega_S_drive")]
    omega_s_drive: Option<f64>,
    #[serde(rename = "omega_D_drive")]
    omega_d_drive: Option<f64>,
    #[serde(rename = "Omega_S")]
    drive_s: Option<f64>,
    #[serde(rename = "Omega_D")]
    drive_d: Option<f64>,
    omega_1: Option<f64>,
}

impl DeviceSection {
    fn apply(&self, p: &mut BlockParams) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(
            omega_m, omega_f, omega_r, omega_b, g_mr, g_mb, g_mf, g0, lambda, omega_s_drive,
            omega_d_drive, drive_s, drive_d, omega_1
        );
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    op: Option<String>,
    swept_name: Option<String>,
    grid: Option<Vec<f64>>,
    theta: Option<f64>,
    xi_re: Option<f64>,
    xi_im: Option<f64>,
    chi: Option<f64>,
    beta: Option<f64>,
    alpha_re: Option<f64>,
    alpha_im: Option<f64>,
    trunc_n: Option<usize>,
    nu: Option<f64>,
    regime_threshold: Option<f64>,
    kappa0_variant: Option<String>,
    kerr_coupling: Option<String>,
    rotation_coupling: Option<String>,
    squeeze_sideband_amp: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    rtol: Option<f64>,
    atol: Option<f64>,
    initial_step: Option<f64>,
    max_steps: Option<usize>,
    krylov_threshold: Option<usize>,
    krylov_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    path: Option<String>,
    format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    device: DeviceSection,
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    integrator: IntegratorSection,
    #[serde(default)]
    output: OutputSection,
}

fn parse_enum_variant<T: serde::de::DeserializeOwned>(name: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("invalid {name} `{value}`")))
}

/// Resolved configuration: the experiment plus output destination.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    pub out_path: Option<PathBuf>,
    pub format: OutputFormat,
}

fn raw_to_config(raw: RawConfig, default_op: OpKind) -> Result<ResolvedConfig> {
    let mut params = default_block_params();
    raw.device.apply(&mut params);

    let op_kind = match &raw.experiment.op {
        Some(s) => OpKind::parse(s)?,
        None => default_op,
    };
    let mut cfg = ExperimentConfig::defaults_for(op_kind);
    cfg.params = params;
    let ex = &raw.experiment;
    if let Some(v) = &ex.kappa0_variant {
        cfg.options.kappa0_variant = parse_enum_variant("kappa0_variant", v)?;
    }
    if let Some(v) = &ex.kerr_coupling {
        cfg.options.kerr_coupling = parse_enum_variant("kerr_coupling", v)?;
    }
    if let Some(v) = &ex.rotation_coupling {
        cfg.options.rotation_coupling = parse_enum_variant("rotation_coupling", v)?;
        cfg.options.bs_coupling = cfg.options.rotation_coupling;
    }
    if let Some(v) = ex.squeeze_sideband_amp {
        cfg.options.squeeze_sideband_amp = v;
    }
    let mut gate = GateTargets::default();
    if let Some(v) = ex.theta {
        gate.theta = v;
    }
    if let Some(v) = ex.xi_re {
        gate.xi_re = v;
    }
    if let Some(v) = ex.xi_im {
        gate.xi_im = v;
    }
    if let Some(v) = ex.chi {
        gate.chi = v;
    }
    if let Some(v) = ex.beta {
        gate.beta = v;
    }
    if let Some(v) = ex.alpha_re {
        gate.alpha_re = v;
    }
    if let Some(v) = ex.alpha_im {
        gate.alpha_im = v;
    }
    cfg.gate = gate;
    if let Some(v) = ex.trunc_n {
        cfg.trunc_n = v;
    }
    if let Some(v) = ex.nu {
        cfg.nu = v;
    }
    if let Some(v) = ex.regime_threshold {
        cfg.regime_threshold = v;
    }
    match (&ex.swept_name, &ex.grid) {
        (Some(name), Some(grid)) => {
            cfg.swept = Some(SweepAxis { name: name.clone(), grid: grid.clone() });
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config(
                "swept_name and grid must be given together".into(),
            ));
        }
    }
    let integ = &raw.integrator;
    let mut icfg = IntegratorConfig::default();
    if let Some(v) = integ.rtol {
        icfg.rtol = v;
    }
    if let Some(v) = integ.atol {
        icfg.atol = v;
    }
    if integ.initial_step.is_some() {
        icfg.initial_step = integ.initial_step;
    }
    if let Some(v) = integ.max_steps {
        icfg.max_steps = v;
    }
    if let Some(v) = integ.krylov_threshold {
        icfg.krylov_threshold = v;
    }
    if let Some(v) = integ.krylov_tol {
        icfg.krylov_tol = v;
    }
    cfg.integrator = icfg;

    let format = match raw.output.format.as_deref() {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => return Err(Error::Config(format!("unknown output format `{other}`"))),
    };
    Ok(ResolvedConfig {
        experiment: cfg,
        out_path: raw.output.path.as_ref().map(PathBuf::from),
        format,
    })
}

fn parse_toml_value(s: &str) -> toml::Value {
    if let Ok(i) = s.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = s.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(s.to_string())
}

fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{ov}` is not KEY=VALUE")))?;
        let mut parts = key.split('.');
        let (section, field) = (
            parts.next().unwrap_or_default(),
            parts.next().ok_or_else(|| Error::Config(format!("override key `{key}` needs section.key")))?,
        );
        if parts.next().is_some() {
            return Err(Error::Config(format!("override key `{key}` has too many components")));
        }
        let sec = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sec_table = sec
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("section `{section}` is not a table")))?;
        sec_table.insert(field.to_string(), parse_toml_value(value));
    }
    Ok(())
}

/// Parse a config file plus dotted-key overrides into an experiment
/// configuration. Unknown keys are hard errors; omitted keys take the
/// documented defaults (the published operating point).
pub fn parse_config(
    path: Option<&Path>,
    overrides: &[String],
    default_op: OpKind,
) -> Result<ResolvedConfig> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
            // validate the file alone first: unknown keys and syntax
            // errors are reported with line/column positions
            toml::from_str::<RawConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    apply_overrides(&mut table, overrides)?;
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("config: {e}")))?;
    raw_to_config(raw, default_op)
}

// ---- gate / state mini-languages ----------------------------------------

/// Parse one circuit line: `R <theta> <mode>` etc.
pub fn parse_gate_line(line: &str) -> Result<GateSpec> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number `{s}` in gate `{line}`")))
    };
    let idx = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("bad mode index `{s}` in gate `{line}`")))
    };
    match toks.as_slice() {
        ["R", theta, mode] => Ok(GateSpec::Rotation { theta: num(theta)?, mode: idx(mode)? }),
        ["D", re, im, mode] => Ok(GateSpec::Displacement {
            alpha: C64::new(num(re)?, num(im)?),
            mode: idx(mode)?,
        }),
        ["S", re, im, mode] => Ok(GateSpec::Squeeze {
            xi: C64::new(num(re)?, num(im)?),
            mode: idx(mode)?,
        }),
        ["K", chi, mode] => Ok(GateSpec::Kerr { chi: num(chi)?, mode: idx(mode)? }),
        ["B", beta, phi, m1, m2] => Ok(GateSpec::BeamSplitter {
            beta: num(beta)?,
            phi: num(phi)?,
            mode_a: idx(m1)?,
            mode_b: idx(m2)?,
        }),
        _ => Err(Error::Config(format!("unparseable gate line `{line}`"))),
    }
}

fn parse_state_spec(spec: &str, n: usize) -> Result<crate::fock::QState> {
    let layout = SubsystemLayout::single_mode(n);
    let factor = if spec == "vacuum" {
        FactorSpec::Fock(0)
    } else if let Some(rest) = spec.strip_prefix("fock:") {
        FactorSpec::Fock(
            rest.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad fock level `{rest}`")))?,
        )
    } else if let Some(rest) = spec.strip_prefix("coherent:") {
        let mut it = rest.split(',');
        let re: f64 = it
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Config(format!("bad coherent amplitude `{rest}`")))?;
        let im: f64 = match it.next() {
            Some(s) => s.parse().map_err(|_| Error::Config(format!("bad coherent amplitude `{rest}`")))?,
            None => 0.0,
        };
        FactorSpec::Coherent(C64::new(re, im))
    } else {
        return Err(Error::Config(format!("unknown state spec `{spec}`")));
    };
    Ok(make_state(&[factor], &layout)?.state)
}

fn parse_grid_spec(spec: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("grid `{spec}` is not min:max:points")));
    }
    let min: f64 = parts[0].parse().map_err(|_| Error::Config("bad grid min".into()))?;
    let max: f64 = parts[1].parse().map_err(|_| Error::Config("bad grid max".into()))?;
    let points: usize = parts[2].parse().map_err(|_| Error::Config("bad grid points".into()))?;
    if max <= min || points < 2 {
        return Err(Error::Config(format!("degenerate grid `{spec}`")));
    }
    Ok(GridSpec { min, max, points })
}

// ---- dispatch ------------------------------------------------------------

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 4,
        Error::StepLimit { .. } => 3,
        _ => 1,
    }
}

fn print_conventions(opts: &ModelOptions) {
    let conv = conventions(opts);
    println!("# conventions: {}", conv.quadrature);
    println!("# gate phases: {}", conv.gate_phases);
    println!(
        "# variants: kappa0={}, quadratic_coupling={}, {}",
        conv.kappa0_variant,
        conv.quadratic_coupling_variant,
        opts.convention_id()
    );
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn emit_sweep(
    result: &SweepResult,
    common: &CommonArgs,
    format: OutputFormat,
    out_path: Option<&Path>,
    swept_name: &str,
) -> Result<PathBuf> {
    let path = common
        .out
        .clone()
        .or_else(|| out_path.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(default_output_name(result.metadata.op_kind, swept_name, format)));
    write_results(result, &path, format)?;
    Ok(path)
}

fn gate_regime(cfg: &ExperimentConfig, force: bool) -> Result<bool> {
    let report = validate_regime(cfg.op_kind, &cfg.params, cfg.nu * cfg.nu, cfg.regime_threshold)?;
    if !report.pass {
        eprint!("{}", report.summary());
        if !force {
            return Ok(false);
        }
        eprintln!("--force given: running anyway");
    }
    Ok(true)
}

fn cmd_sweep(op: &str, common: &CommonArgs) -> Result<i32> {
    let op_kind = OpKind::parse(op)?;
    let resolved = parse_config(common.config.as_deref(), &common.overrides, op_kind)?;
    let mut cfg = resolved.experiment;
    cfg.op_kind = op_kind;
    let format = match common.format.as_str() {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(Error::Config(format!("unknown format `{other}`"))),
    };
    print_conventions(&cfg.options);
    if !gate_regime(&cfg, common.force)? {
        return Ok(2);
    }
    let swept_name = cfg
        .swept
        .as_ref()
        .map(|a| a.name.clone())
        .or_else(|| default_sweep_axis(op_kind, &cfg.params).map(|a| a.name))
        .unwrap_or_else(|| "omega_D_drive".into());

    let (result, extra) = match op_kind {
        OpKind::Beamsplitter => {
            let (result, snapshot) = run_beamsplitter_experiment(&cfg)?;
            let (plain, gauge) = run_bs_blocking_check(&cfg)?;
            let extra = format!(
                "transfer: alpha_fit = {:.4}{:+.4}i (|alpha| = {:.4}, coherent fidelity {:.4})\n\
                 blocking: M1 retention = {:.5} (gauge {:.5})",
                snapshot.alpha_re,
                snapshot.alpha_im,
                (snapshot.alpha_re.powi(2) + snapshot.alpha_im.powi(2)).sqrt(),
                snapshot.coherent_fidelity,
                plain,
                gauge
            );
            (result, Some(extra))
        }
        OpKind::Displacement => (run_displacement_check(&cfg)?, None),
        _ => (run_single_mode_sweep(&cfg)?, None),
    };
    let path = emit_sweep(&result, common, format, resolved.out_path.as_deref(), &swept_name)?;
    let best = result.rows.iter().cloned().reduce(|a, b| if b.fidelity > a.fidelity { b } else { a });
    if let Some(b) = best {
        println!(
            "headline: ratio {:.4}, fidelity {:.6} (gauge {:.6}), gate time {:.6e} s, N = {}",
            b.ratio, b.fidelity, b.fidelity_gauge, b.gate_time_s, b.trunc_n
        );
    }
    if common.verbose {
        for r in &result.rows {
            println!(
                "  {} = {:.6e}: ratio {:.4}, F = {:.6}, tau = {:.4e} s{}",
                r.swept_name,
                r.swept_value,
                r.ratio,
                r.fidelity,
                r.gate_time_s,
                if r.flagged { "  [flagged]" } else { "" }
            );
        }
    }
    if let Some(extra) = extra {
        println!("{extra}");
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_displace(common: &CommonArgs) -> Result<i32> {
    let resolved = parse_config(common.config.as_deref(), &common.overrides, OpKind::Displacement)?;
    let mut cfg = resolved.experiment;
    cfg.op_kind = OpKind::Displacement;
    print_conventions(&cfg.options);
    if !gate_regime(&cfg, common.force)? {
        return Ok(2);
    }
    let result = run_displacement_check(&cfg)?;
    let format = if common.format == "json" { OutputFormat::Json } else { OutputFormat::Csv };
    let path = emit_sweep(&result, common, format, resolved.out_path.as_deref(), "omega_D_drive")?;
    let r = &result.rows[0];
    println!(
        "displacement: fidelity {:.6}, tau = {:.4e} s, norm drift {:.2e}",
        r.fidelity, r.gate_time_s, r.norm_drift
    );
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_gate(gate: &str, state: &str, common: &CommonArgs) -> Result<i32> {
    let spec = parse_gate_line(gate)?;
    let resolved = parse_config(common.config.as_deref(), &common.overrides, spec.op_kind())?;
    let mut cfg = resolved.experiment;
    cfg.op_kind = spec.op_kind();
    print_conventions(&cfg.options);
    if !gate_regime(&cfg, common.force)? {
        return Ok(2);
    }
    // honor a custom initial mode state through the nu knob where possible
    if let Some(rest) = state.strip_prefix("coherent:") {
        if let Ok(re) = rest.split(',').next().unwrap_or_default().parse::<f64>() {
            cfg.nu = re;
        }
    } else if state == "vacuum" {
        cfg.nu = 0.0;
    }
    let (report, _rho) = run_gate(&cfg, &spec)?;
    println!(
        "gate {:?}\n  realized {:?}\n  tau = {:.6e} s\n  fidelity {:.6} (gauge {:.6} at {:+.4e} rad)\n  \
         mean photons {:.4}, purity {:.6}\n  leakage {:.2e}, norm drift {:.2e}, regime pass: {}",
        spec,
        report.realized,
        report.tau,
        report.fidelity,
        report.fidelity_gauge,
        report.gauge_angle,
        report.mean_photons,
        report.purity,
        report.leakage,
        report.norm_drift,
        report.regime_pass
    );
    Ok(0)
}

fn cmd_wigner(state: &str, gate: Option<&str>, grid: &str, common: &CommonArgs) -> Result<i32> {
    let resolved = parse_config(common.config.as_deref(), &common.overrides, OpKind::Displacement)?;
    let cfg = resolved.experiment;
    print_conventions(&cfg.options);
    let n = cfg.resolved_trunc().max(60);
    let mut psi = parse_state_spec(state, n)?;
    if let Some(g) = gate {
        let gspec = parse_gate_line(g)?;
        if matches!(gspec, GateSpec::BeamSplitter { .. }) {
            return Err(Error::Config("wigner displays a single mode".into()));
        }
        let u = ideal_gate(&gspec, n)?;
        psi = crate::fock::apply(&u, &psi)?.renormalized();
    }
    let rho = DensityMatrix::from_pure(&psi);
    let gspec = parse_grid_spec(grid)?;
    let w = wigner(&rho, &gspec)?;
    let (px, pp) = w.argmax();
    println!(
        "wigner: peak {:.4} at (x, p) = ({:.3}, {:.3}), min {:.4}, integral {:.5}",
        w.max(),
        px,
        pp,
        w.min(),
        w.integral()
    );
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("wigner.csv"));
    let content = if common.format == "json" { w.to_json() } else { w.to_csv() };
    write_text(&path, &content)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_compile(circuit: &Path, modes: Option<usize>, common: &CommonArgs) -> Result<i32> {
    let resolved = parse_config(common.config.as_deref(), &common.overrides, OpKind::Rotation)?;
    let cfg = resolved.experiment;
    print_conventions(&cfg.options);
    let text = std::fs::read_to_string(circuit)
        .map_err(|e| Error::io(circuit.display().to_string(), e))?;
    let mut gates = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        gates.push(parse_gate_line(line)?);
    }
    let n_modes = modes
        .or_else(|| gates.iter().flat_map(|g| g.targets()).max().map(|m| m + 1))
        .unwrap_or(1);
    let chain = ChainParams::uniform(cfg.params, n_modes)?;
    let schedule = compile_schedule(&gates, &chain, &cfg.options)?;
    println!(
        "schedule: {} segments over {} modes, total duration {:.6e} s",
        schedule.segments.len(),
        n_modes,
        schedule.total_duration
    );
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("schedule.txt"));
    let content = if common.format == "json" { schedule.to_json()? } else { schedule.to_text() };
    write_text(&path, &content)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_converge(op: &str, truncations: Option<&str>, common: &CommonArgs) -> Result<i32> {
    let op_kind = OpKind::parse(op)?;
    let resolved = parse_config(common.config.as_deref(), &common.overrides, op_kind)?;
    let mut cfg = resolved.experiment;
    cfg.op_kind = op_kind;
    print_conventions(&cfg.options);
    match truncations {
        Some(list) => {
            let ns: Result<Vec<usize>> = list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad truncation `{s}`")))
                })
                .collect();
            let report = convergence_study(&cfg, &ns?)?;
            for e in &report.entries {
                println!("  N = {:>4}: F = {:.8}, leakage = {:.3e}", e.trunc_n, e.fidelity, e.leakage);
            }
            if !report.leakage_monotone {
                println!("warning: leakage is not monotone in N");
            }
            match report.converged_n {
                Some(n) => {
                    println!("converged at N = {n} (|dF| < 1e-4)");
                    Ok(0)
                }
                None => {
                    println!("not converged on the given ladder");
                    Ok(3)
                }
            }
        }
        None => {
            let (start, step, cap) = match op_kind {
                OpKind::Squeezing => (96, 32, 512),
                OpKind::Beamsplitter => (20, 4, 64),
                _ => (24, 8, 128),
            };
            match auto_truncation(&cfg, start, step, cap) {
                Ok(n) => {
                    println!("converged at N = {n} (|dF| < 1e-4)");
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(3)
                }
            }
        }
    }
}

fn cmd_validate(op: &str, nbar: f64, common: &CommonArgs) -> Result<i32> {
    let op_kind = OpKind::parse(op)?;
    let resolved = parse_config(common.config.as_deref(), &common.overrides, op_kind)?;
    let cfg = resolved.experiment;
    print_conventions(&cfg.options);
    let report = validate_regime(op_kind, &cfg.params, nbar, cfg.regime_threshold)?;
    print!("{}", report.summary());
    if report.pass || common.force {
        Ok(0)
    } else {
        Ok(2)
    }
}

/// Run one parsed invocation; returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    if let Ok(threads) = std::env::var("CVQPU_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let outcome = match &cli.command {
        Command::Sweep { op, common } => cmd_sweep(op, common),
        Command::Displace { common } => cmd_displace(common),
        Command::Gate { gate, state, common } => cmd_gate(gate, state, common),
        Command::Wigner { state, gate, grid, common } => {
            cmd_wigner(state, gate.as_deref(), grid, common)
        }
        Command::Compile { circuit, modes, common } => cmd_compile(circuit, *modes, common),
        Command::Converge { op, truncations, common } => {
            cmd_converge(op, truncations.as_deref(), common)
        }
        Command::Validate { op, nbar, common } => cmd_validate(op, *nbar, common),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_device_section_gives_defaults() {
        let resolved = parse_config(None, &[], OpKind::Rotation).unwrap();
        assert_eq!(resolved.experiment.params, default_block_params());
    }

    #[test]
    fn overrides_apply_after_file() {
        let resolved =
            parse_config(None, &["device.omega_r=4.0e9".into()], OpKind::Rotation).unwrap();
        assert_eq!(resolved.experiment.params.omega_r, 4.0e9);
        let resolved =
            parse_config(None, &["experiment.trunc_n=48".into()], OpKind::Rotation).unwrap();
        assert_eq!(resolved.experiment.trunc_n, 48);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = parse_config(None, &["device.omega_q=1e9".into()], OpKind::Rotation);
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("omega_q"), "message was: {msg}");
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = std::env::temp_dir().join("cvqpu_cli_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("conf.toml");
        std::fs::write(
            &path,
            "[device]\nomega_r = 4.0e9\n\n[experiment]\nop = \"rotation\"\ntrunc_n = 32\n\n[integrator]\nrtol = 1e-8\n",
        )
        .unwrap();
        let resolved = parse_config(Some(&path), &[], OpKind::Kerr).unwrap();
        assert_eq!(resolved.experiment.op_kind, OpKind::Rotation);
        assert_eq!(resolved.experiment.trunc_n, 32);
        assert_eq!(resolved.experiment.integrator.rtol, 1e-8);
        assert_eq!(resolved.experiment.params.omega_r, 4.0e9);

        std::fs::write(&path, "[device]\nomega_q = 1e9\n").unwrap();
        let err = parse_config(Some(&path), &[], OpKind::Kerr);
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("omega_q"));
        // the toml error carries position information
        assert!(msg.contains("line") || msg.contains("column") || msg.contains('2'), "{msg}");
    }

    #[test]
    fn gate_lines_parse() {
        assert!(matches!(
            parse_gate_line("R 3.14159 0").unwrap(),
            GateSpec::Rotation { mode: 0, .. }
        ));
        assert!(matches!(
            parse_gate_line("D 2.0 0.0 1").unwrap(),
            GateSpec::Displacement { mode: 1, .. }
        ));
        assert!(matches!(
            parse_gate_line("B 0.785 0.0 0 1").unwrap(),
            GateSpec::BeamSplitter { mode_a: 0, mode_b: 1, .. }
        ));
        assert!(parse_gate_line("X 1.0 0").is_err());
        assert!(parse_gate_line("R 1.0").is_err());
    }

    #[test]
    fn state_and_grid_specs_parse() {
        assert!(parse_state_spec("vacuum", 16).is_ok());
        assert!(parse_state_spec("fock:3", 16).is_ok());
        assert!(parse_state_spec("coherent:2", 40).is_ok());
        assert!(parse_state_spec("coherent:1.5,-0.5", 40).is_ok());
        assert!(parse_state_spec("thermal:3", 16).is_err());
        let g = parse_grid_spec("-5:5:121").unwrap();
        assert_eq!(g.points, 121);
        assert!(parse_grid_spec("5:-5:10").is_err());
    }
}
