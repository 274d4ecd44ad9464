use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ladder_qed::dressed::{DressedBasis, SIDEBAND_PAIRS};
use ladder_qed::model::Op3;
use ladder_qed::registry::{stationary_solvers, transmission_methods};
use ladder_qed::response::LinearResponse;
use ladder_qed::sweep::{export, export_table, run_sweep, ExportFormat, Output, SweepResult};
use ladder_qed::twolevel::{fit_traces, power_ladder, read_traces, synthesize_traces, write_traces};
use rayon::prelude::*;
use serde::Serialize;

mod checks;
mod config;

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "ladder-qed", version, about = "Driven three-level emitter in a 1D transmission line")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_path`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config key, e.g. `--set drive.rabi10=0.8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record the wall-clock time in output metadata.
    #[arg(long, global = true)]
    timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dressed energies, bare/dressed overlaps and sideband table over the drive axis.
    Dressed,
    /// Stationary density matrix in the dressed basis over the drive axis.
    Populations {
        #[arg(long, default_value = "linear")]
        solver: String,
    },
    /// Probe transmission map over drive strength and probe frequency.
    Map,
    /// Sideband frequencies and transmission at the configured drive.
    Sidebands,
    /// Fit the two-level model to transmission traces.
    Fit {
        /// Trace file: power_dbm,detuning_ghz,re_t,im_t.
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Fit noisy traces generated from the configured parameters.
        #[arg(long)]
        synthetic: bool,
        /// Seed for --synthetic (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-check solvers against independent routes.
    Selfcheck {
        #[arg(long, hide = true)]
        corrupt_xi: bool,
    },
    /// Compare a reference strategy against the primary solvers at the configured point.
    Oracle {
        #[arg(long, default_value = "evolve")]
        solver: String,
        #[arg(long, default_value = "two-tone")]
        method: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("input error: {0}")]
    Input(String),
    #[error("solver error: {0}")]
    Solver(#[from] ladder_qed::Error),
    #[error("output error: {0}")]
    Output(String),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Solver(_) | CliError::Output(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    timestamp: bool,
}

impl Ctx {
    fn write(&self, name: &str, text: &str) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Output(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn sweep(&self, outputs: Vec<Output>) -> CliResult<SweepResult> {
        let mut r = run_sweep(&self.cfg.system, &self.cfg.sweep_spec(outputs))?;
        if self.timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            r.metadata.timestamp = Some(format!("{secs}"));
        }
        let failed = r.rows.iter().filter(|row| row.error.is_some()).count();
        if failed > 0 {
            eprintln!("warning: {failed} drive points failed and are flagged");
        }
        Ok(r)
    }
}

fn cmd_dressed(ctx: &Ctx) -> CliResult<()> {
    let r = ctx.sweep(vec![Output::DressedEnergies, Output::Overlaps, Output::Sidebands])?;
    for o in [Output::DressedEnergies, Output::Overlaps, Output::Sidebands] {
        ctx.write(&format!("{}.csv", o.name()), &export_table(&r, o)?)?;
    }
    Ok(())
}

fn cmd_populations(ctx: &Ctx, solver: &str) -> CliResult<()> {
    let reg = stationary_solvers();
    let solver = reg.get(solver).map_err(|e| ConfigError::new(None, e.to_string()))?;
    let p = ctx.cfg.system;
    let spec = ctx.cfg.sweep_spec(vec![Output::Populations]);
    spec.validate()?;
    let values = spec.drive_values();
    let rows: Vec<String> = values
        .par_iter()
        .map(|&v| {
            let drive = spec.drive_at(&p, v);
            let rabi = drive.rabi10_ghz(&p).unwrap_or(f64::NAN);
            let cell = || -> ladder_qed::Result<String> {
                let basis = DressedBasis::new(&p, &drive)?;
                let rho_bare = solver.solve(&p, &drive, &spec.channels)?;
                let rho = basis.to_dressed(&rho_bare)?.matrix;
                let b = rho_bare.matrix;
                Ok(format!(
                    "{v},{rabi},{},{},{},{},{},{},{},{},{},0",
                    rho[(0, 0)].re,
                    rho[(1, 1)].re,
                    rho[(2, 2)].re,
                    rho[(0, 1)].norm(),
                    rho[(1, 2)].norm(),
                    rho[(0, 2)].norm(),
                    b[(0, 0)].re,
                    b[(1, 1)].re,
                    b[(2, 2)].re
                ))
            };
            cell().unwrap_or_else(|_| format!("{v},{rabi},NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,1"))
        })
        .collect();
    let mut s = format!("# ladder-qed populations\n# solver = {}\n", solver.name());
    s.push_str("drive_value,rabi10_ghz,rho_gg,rho_mm,rho_ee,abs_rho_gm,abs_rho_me,abs_rho_ge,p0,p1,p2,flag\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    ctx.write("populations.csv", &s)
}

fn cmd_map(ctx: &Ctx) -> CliResult<()> {
    let r = ctx.sweep(vec![Output::TransmissionMap])?;
    ctx.write("transmission_long.csv", &export(&r, ExportFormat::Long)?)?;
    ctx.write("transmission_matrix.txt", &export(&r, ExportFormat::Matrix)?)?;
    if r.failed_cells() > 0 {
        eprintln!("warning: {} cells failed and are flagged", r.failed_cells());
    }
    Ok(())
}

fn cmd_sidebands(ctx: &Ctx) -> CliResult<()> {
    let p = ctx.cfg.system;
    let d = ctx.cfg.drive_config();
    let lr = LinearResponse::new(&p, &d, &ctx.cfg.channels)?;
    let pops = lr.stationary.populations();
    let mut s = String::new();
    let _ = writeln!(s, "# ladder-qed sidebands");
    let _ = writeln!(s, "# omega_d = {}", d.omega_d);
    let _ = writeln!(s, "# rabi10 = {}", d.rabi10_ghz(&p)?);
    let _ = writeln!(s, "# populations g,m,e = {},{},{}", pops[0], pops[1], pops[2]);
    s.push_str("lower,upper,frequency_ghz,kind,closed_re,closed_im,full_re,full_im,full_abs\n");
    let mut table = ladder_qed::dressed::sideband_frequencies(&lr.stationary.model.basis)?;
    table.classify(pops);
    for sb in &table.entries {
        let closed = lr.sideband_transmission(sb.lower, sb.upper)?;
        let full = lr.transmission(sb.frequency)?.t;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            sb.lower,
            sb.upper,
            sb.frequency,
            sb.kind,
            closed.re,
            closed.im,
            full.re,
            full.im,
            full.norm()
        );
    }
    debug_assert_eq!(table.entries.len(), SIDEBAND_PAIRS.len());
    print!("{s}");
    ctx.write("sidebands.csv", &s)
}

#[derive(Serialize)]
struct FitReport {
    converged: bool,
    iterations: usize,
    n_points: usize,
    chi2: f64,
    rank: usize,
    weak_power_abs_t: f64,
    params: FitReportParams,
    std_errors: FitReportParams,
    anchor_dbm: f64,
}

#[derive(Serialize)]
struct FitReportParams {
    gamma10: f64,
    gamma10_nr: f64,
    gamma_phi: f64,
    omega10: f64,
    anchor_rabi10: f64,
}

impl FitReportParams {
    fn from(v: [f64; 5]) -> Self {
        FitReportParams { gamma10: v[0], gamma10_nr: v[1], gamma_phi: v[2], omega10: v[3], anchor_rabi10: v[4] }
    }
}

fn cmd_fit(ctx: &Ctx, data: Option<&Path>, synthetic: bool, seed: Option<u64>) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let opts = cfg.fit_options();
    let traces = match (data, synthetic) {
        (Some(path), _) => {
            let f = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            read_traces(f).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        (None, true) => {
            let f = cfg.fit_section();
            let det: Vec<f64> = (0..f.detunings)
                .map(|k| -f.detuning_span_ghz + 2.0 * f.detuning_span_ghz * k as f64 / (f.detunings - 1) as f64)
                .collect();
            let truth = cfg.fit_truth();
            let t = synthesize_traces(
                &truth,
                cfg.calibration_or_default().anchor_dbm,
                opts.reference,
                &power_ladder(f.top_dbm, f.step_db, f.powers),
                &det,
                f.noise,
                seed.unwrap_or(cfg.seed),
            );
            ctx.write("synthetic_traces.csv", &write_traces(&t))?;
            t
        }
        (None, false) => return Err(CliError::Input("fit needs --data FILE or --synthetic".into())),
    };
    let (start, cal) = cfg.fit_start();
    let fit = fit_traces(&traces, &start, &cal, &opts)?;
    let fp = fit.fit_params();
    let report = FitReport {
        converged: fit.converged,
        iterations: fit.iterations,
        n_points: fit.n_points,
        chi2: fit.chi2,
        rank: fit.rank,
        weak_power_abs_t: fp.extinction(),
        params: FitReportParams::from([fp.gamma10, fp.gamma10_nr, fp.gamma_phi, fp.omega10, fp.anchor_rabi10]),
        std_errors: FitReportParams::from(fit.std_errors()),
        anchor_dbm: fit.calibration.anchor_dbm,
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Output(e.to_string()))?;
    print!("{text}");
    if !fit.converged {
        eprintln!("warning: fit stopped after {} iterations without converging", fit.iterations);
    }
    ctx.write("fit_report.toml", &text)
}

fn report(ctx: &Ctx, name: &str, results: &[checks::Check]) -> CliResult<()> {
    let mut s = String::new();
    for c in results {
        println!("{}", c.line());
        s.push_str(&c.line());
        s.push('\n');
    }
    ctx.write(name, &s)?;
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}

fn cmd_selfcheck(ctx: &Ctx, corrupt_xi: bool) -> CliResult<()> {
    let mut channels = ctx.cfg.channels;
    channels.corrupt_relaxation = corrupt_xi;
    let results = checks::run_all(&ctx.cfg.system, &channels);
    report(ctx, "selfcheck.txt", &results)
}

fn cmd_oracle(ctx: &Ctx, solver: &str, method: &str) -> CliResult<()> {
    let as_config = |e: ladder_qed::Error| ConfigError::new(None, e.to_string());
    let solvers = stationary_solvers();
    let methods = transmission_methods();
    let (reference, primary) = (solvers.get(solver).map_err(as_config)?, solvers.get("linear")?);
    let p = ctx.cfg.system;
    let d = ctx.cfg.drive_config();
    let ch = ctx.cfg.channels;
    let a: Op3 = primary.solve(&p, &d, &ch)?;
    let b: Op3 = reference.solve(&p, &d, &ch)?;
    let diff = (a.matrix - b.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut results = vec![checks::Check {
        name: "stationary",
        passed: diff < 1e-6,
        detail: format!("{} vs {}: max |Δρ| = {diff:.2e} (tol 1e-6)", primary.name(), reference.name()),
    }];
    if let Some(probe) = ctx.cfg.probe_config() {
        let (reference, primary) = (methods.get(method).map_err(as_config)?, methods.get("linear-response")?);
        let ta = primary.transmission(&p, &d, probe.omega_p, &ch)?;
        let tb = reference.transmission(&p, &d, probe.omega_p, &ch)?;
        let dt = (ta.norm() - tb.norm()).abs();
        results.push(checks::Check {
            name: "transmission",
            passed: dt < 1e-3,
            detail: format!(
                "ω_p = {} GHz: {} t = {ta:.6}, {} t = {tb:.6}, ||t| difference| = {dt:.2e} (tol 1e-3)",
                probe.omega_p,
                primary.name(),
                reference.name()
            ),
        });
    }
    report(ctx, "oracle.txt", &results)
}

fn run(cli: Cli) -> CliResult<()> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = RunConfig::parse(&text, &cli.overrides).map_err(|mut e| {
        if let Some(path) = &cli.config {
            e.path = Some(path.clone());
        }
        e
    })?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::new(None, "--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Output(format!("thread pool: {e}")))?;
    }
    let out = cli.out.clone().or_else(|| cfg.output_path.clone()).unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { cfg, out, timestamp: cli.timestamp };
    match &cli.command {
        Command::Dressed => cmd_dressed(&ctx),
        Command::Populations { solver } => cmd_populations(&ctx, solver),
        Command::Map => cmd_map(&ctx),
        Command::Sidebands => cmd_sidebands(&ctx),
        Command::Fit { data, synthetic, seed } => cmd_fit(&ctx, data.as_deref(), *synthetic, *seed),
        Command::Selfcheck { corrupt_xi } => cmd_selfcheck(&ctx, *corrupt_xi),
        Command::Oracle { solver, method } => cmd_oracle(&ctx, solver, method),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
