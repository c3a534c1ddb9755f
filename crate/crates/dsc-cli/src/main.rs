//! `dsc`: distributional synthetic control from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsc_core::{
    default_qte_grid, design_eigen_diagnostic, draw_uniforms, fit_dsc, load_panel_csv,
    pretreatment_fit_diagnostics, qte_curve, run_grid, w2_empirical_equal_n, w2_grid,
    write_qte_csv, Dgp, DrawMode, DscError, EmpiricalQuantileFn, EstimationConfig, LambdaSpec,
    PanelDataset, QuantileFnRef, SimulationGrid,
};

#[derive(Parser)]
#[command(name = "dsc", version, about = "Distributional synthetic control estimator and simulation laboratory")]
struct Cli {
    /// Worker threads (falls back to DSC_THREADS, then all cores). Output
    /// never depends on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit DSC weights on a panel CSV and write fit + QTE files
    Estimate(EstimateArgs),
    /// Run a Monte Carlo grid and write the report CSV
    Simulate(SimulateArgs),
    /// 2-Wasserstein distance between two sample files
    Wasserstein(WassersteinArgs),
    /// Pre-treatment fit and design diagnostics for a panel CSV
    Diagnose(EstimateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Panel CSV with header `unit,time,value`
    #[arg(long)]
    data: PathBuf,
    /// Last pre-treatment period
    #[arg(long)]
    t0: u32,
    /// Number of uniform draws M (overrides --c)
    #[arg(long)]
    m: Option<usize>,
    /// Draw-count multiplier: M = ceil(C * n)
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform` or comma-separated weights over pre-treatment periods
    #[arg(long, default_value = "uniform")]
    lambda: String,
    /// Number of QTE grid points
    #[arg(long, default_value_t = 99)]
    qte_grid: usize,
    /// Output path prefix
    #[arg(long, default_value = "dsc")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// `model-free` or `factor`
    #[arg(long)]
    dgp: String,
    /// Comma-separated numbers of control units
    #[arg(long)]
    j: String,
    /// Comma-separated draw counts
    #[arg(long)]
    m: String,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    t0: usize,
    #[arg(long, default_value_t = 5)]
    t1: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV path
    #[arg(long)]
    out: PathBuf,
    /// Also write per-replication rows to this CSV
    #[arg(long)]
    per_rep: Option<PathBuf>,
    /// Evaluation-sample size for the factor DGP's oracle
    #[arg(long, default_value_t = dsc_core::sim::DEFAULT_ORACLE_EVAL)]
    oracle_eval: usize,
}

#[derive(Args)]
struct WassersteinArgs {
    /// Single-column sample files
    a: PathBuf,
    b: PathBuf,
    /// Integration grid size when the samples differ in length
    #[arg(long, default_value_t = dsc_core::DEFAULT_GRID)]
    grid: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; everything else is usage
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("DSC_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(3);
        }
    }

    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Wasserstein(args) => cmd_wasserstein(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 = usage, 2 = data, 3 = numerical.
fn exit_code(e: &DscError) -> u8 {
    match e {
        DscError::InvalidArgument(_) => 1,
        DscError::Io { .. }
        | DscError::MalformedRow { .. }
        | DscError::EmptyCell { .. }
        | DscError::UnevenGroup { .. }
        | DscError::InvalidPanel(_) => 2,
        DscError::NoConvergence { .. }
        | DscError::DegenerateOracle
        | DscError::ReplicationFailed { .. } => 3,
    }
}

fn parse_lambda(s: &str) -> Result<LambdaSpec, DscError> {
    if s == "uniform" {
        return Ok(LambdaSpec::Uniform);
    }
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| DscError::InvalidArgument(format!("bad lambda entry {v:?}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(LambdaSpec::Explicit(values))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>, DscError> {
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| DscError::InvalidArgument(format!("bad {what} entry {v:?}")))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    if values.is_empty() {
        return Err(DscError::InvalidArgument(format!("{what} list is empty")));
    }
    Ok(values)
}

fn load_and_fit(args: &EstimateArgs) -> Result<(PanelDataset, dsc_core::DscFit), DscError> {
    let panel = load_panel_csv(&args.data, args.t0)?;
    let config = EstimationConfig {
        m: args.m,
        c: Some(args.c),
        seed: args.seed,
        lambda: parse_lambda(&args.lambda)?,
        draw_mode: DrawMode::Iid,
    };
    let fit = fit_dsc(&panel, &config)?;
    if !fit.converged() {
        let kkt = fit
            .per_period
            .values()
            .map(|p| p.kkt_residual)
            .fold(0.0f64, f64::max);
        return Err(DscError::NoConvergence {
            max_iter: dsc_core::DEFAULT_MAX_ITER,
            kkt_residual: kkt,
        });
    }
    Ok((panel, fit))
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), DscError> {
    println!("seed: {}", args.seed);
    let (panel, fit) = load_and_fit(args)?;

    let mut fit_path = args.out.as_os_str().to_owned();
    fit_path.push(".fit.json");
    fit.write_json(fit_path.as_ref())?;

    if args.qte_grid == 0 {
        return Err(DscError::InvalidArgument(
            "--qte-grid must be at least 1".into(),
        ));
    }
    let grid = default_qte_grid(args.qte_grid);
    let curves = panel
        .post_periods()
        .iter()
        .map(|&t| qte_curve(&fit, &panel, t, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let mut qte_path = args.out.as_os_str().to_owned();
    qte_path.push(".qte.csv");
    write_qte_csv(&curves, qte_path.as_ref())?;

    println!("M: {}", fit.m_used);
    println!("weights:");
    for (c, w) in fit.aggregated.as_slice().iter().enumerate() {
        println!("  {}: {w:.6}", panel.units()[c + 1]);
    }
    println!("xi_bar_hat: {:.6e}", fit.xi_bar_hat());
    Ok(())
}

fn cmd_diagnose(args: &EstimateArgs) -> Result<(), DscError> {
    println!("seed: {}", args.seed);
    let (panel, fit) = load_and_fit(args)?;
    let diag = pretreatment_fit_diagnostics(&fit);
    let draws = draw_uniforms(fit.m_used, DrawMode::Iid, fit.seed)?;

    let mut rows = Vec::new();
    println!("t,xi_hat,eigen_min,eigen_max");
    for &t in &panel.pre_periods() {
        let xi = diag.xi_hat[&t];
        let (emin, emax) = design_eigen_diagnostic(&panel, &draws, t)?;
        println!("{t},{xi:.6e},{emin:.6e},{emax:.6e}");
        if emin < 1e-8 * emax.max(1.0) {
            println!("  warning: near-singular design at t={t} (duplicated or collinear controls)");
        }
        rows.push(format!("{t},{xi},{emin},{emax}"));
    }
    println!("xi_bar_hat: {:.6e}", diag.xi_bar_hat);
    if !diag.perfect_fit_periods.is_empty() {
        println!("perfect-fit periods: {:?}", diag.perfect_fit_periods);
    }

    let mut path = args.out.as_os_str().to_owned();
    path.push(".diag.csv");
    let body = format!("t,xi_hat,eigen_min,eigen_max\n{}\n", rows.join("\n"));
    std::fs::write(std::path::Path::new(&path), body).map_err(|source| DscError::Io {
        path: PathBuf::from(&path),
        source,
    })?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), DscError> {
    println!("seed: {}", args.seed);
    let dgp = match args.dgp.as_str() {
        "model-free" => Dgp::ModelFree { j: 2 },
        "factor" => Dgp::QuantileFactor { j: 2 },
        other => {
            return Err(DscError::InvalidArgument(format!(
                "unknown DGP {other:?}; expected model-free or factor"
            )))
        }
    };
    let grid = SimulationGrid {
        t0: args.t0,
        t1: args.t1,
        oracle_eval_size: args.oracle_eval,
        ..SimulationGrid::new(
            dgp,
            parse_list(&args.j, "J")?,
            parse_list(&args.m, "M")?,
            args.reps,
            args.seed,
        )
    };
    let report = run_grid(&grid)?;
    report.write_csv(&args.out)?;
    if let Some(per_rep) = &args.per_rep {
        report.write_per_rep_csv(per_rep)?;
    }
    for row in &report.rows {
        println!(
            "{} J={} M={}: mean_ratio={:.4} mean_wdist={:.4}",
            row.dgp_tag, row.j, row.m, row.mean_ratio, row.mean_wdist
        );
    }
    Ok(())
}

fn load_samples(path: &PathBuf) -> Result<Vec<f64>, DscError> {
    let text = std::fs::read_to_string(path).map_err(|source| DscError::Io {
        path: path.clone(),
        source,
    })?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| DscError::MalformedRow {
            line: i + 1,
            message: format!("expected a number, got {line:?}"),
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(DscError::MalformedRow {
            line: 1,
            message: format!("{} contains no samples", path.display()),
        });
    }
    Ok(values)
}

fn cmd_wasserstein(args: &WassersteinArgs) -> Result<(), DscError> {
    println!("seed: n/a (deterministic)");
    let a = load_samples(&args.a)?;
    let b = load_samples(&args.b)?;
    let w2 = if a.len() == b.len() {
        w2_empirical_equal_n(&a, &b)?
    } else {
        if args.grid == 0 {
            return Err(DscError::InvalidArgument("--grid must be at least 1".into()));
        }
        let fa = QuantileFnRef::Empirical(EmpiricalQuantileFn::fit(&a)?);
        let fb = QuantileFnRef::Empirical(EmpiricalQuantileFn::fit(&b)?);
        w2_grid(&fa, &fb, args.grid)
    };
    println!("{w2:.6}");
    Ok(())
}
