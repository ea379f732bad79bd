use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use derf::dataio::Regime;
use derf::experiments::{
    cmd_attention_bench, cmd_fit_dump, cmd_kernel_classify, cmd_variance_compare, log_grid,
    parse_sigma_grid, ExperimentConfig, ExperimentResult, MechanismKind, SchemeKind,
};
use derf::Error;

/// Variance-optimal positive random features: experiments and parameter fits.
#[derive(Parser, Debug)]
#[command(name = "derf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean log relative variance of single-draw estimates per mechanism and σ
    VarianceCompare(Flags),
    /// Nadaraya–Watson classification with exact and random-feature kernels
    KernelClassify(Flags),
    /// Exact versus random-feature attention error (and time with --timing)
    AttentionBench(Flags),
    /// Fitted parameters and closed-form objectives as JSON
    FitDump(Flags),
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Synthetic sampling regime: normal, sphere or heterogen
    #[arg(long)]
    regime: Option<String>,
    /// CSV file with a header row
    #[arg(long)]
    csv: Option<String>,
    /// Label column of the CSV (classification)
    #[arg(long = "label-col")]
    label_col: Option<String>,
    /// Single data scale σ
    #[arg(long, conflicts_with = "sigma_grid")]
    sigma: Option<f64>,
    /// Log-spaced σ grid lo:hi:n
    #[arg(long = "sigma-grid")]
    sigma_grid: Option<String>,
    /// Data dimension for synthetic data
    #[arg(long)]
    d: Option<usize>,
    /// Set size or sequence length; attention-bench accepts a list
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    /// Number of random features
    #[arg(long = "M", conflicts_with = "m_grid")]
    m: Option<usize>,
    /// List of feature counts
    #[arg(long = "M-grid", value_delimiter = ',')]
    m_grid: Option<Vec<usize>>,
    /// Mechanisms: trig, pos, gerf, saderf, aderf, sderf
    #[arg(long, value_delimiter = ',')]
    mechs: Option<Vec<String>>,
    /// Draw scheme: iid, orthogonal or qmc
    #[arg(long, default_value = "iid")]
    scheme: String,
    /// QMC correlation for every coordinate (default -1/(M-1))
    #[arg(long = "qmc-psi", allow_hyphen_values = true)]
    qmc_psi: Option<f64>,
    /// Add a small ridge to singular moment matrices (aderf)
    #[arg(long)]
    ridge: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds or set pairs
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<usize>,
    /// Write JSON here instead of stdout
    #[arg(long)]
    out: Option<String>,
    /// Also measure wall-clock times (attention-bench); output is then not reproducible
    #[arg(long)]
    timing: bool,
}

struct Defaults {
    sigmas: Vec<f64>,
    d: usize,
    l: Vec<usize>,
    m: Vec<usize>,
    mechs: Vec<MechanismKind>,
    seeds: usize,
}

fn defaults(cmd: &Command) -> Defaults {
    use MechanismKind::*;
    match cmd {
        Command::VarianceCompare(_) => Defaults {
            sigmas: vec![0.25, 0.5, 1.0],
            d: 8,
            l: vec![32],
            m: vec![1],
            mechs: MechanismKind::ALL.to_vec(),
            seeds: 5,
        },
        Command::KernelClassify(_) => Defaults {
            sigmas: log_grid(1e-2, 1e2, 10).expect("valid grid"),
            d: 2,
            l: vec![400],
            m: vec![16, 32, 64, 128],
            mechs: MechanismKind::ALL.to_vec(),
            seeds: 5,
        },
        Command::AttentionBench(_) => Defaults {
            sigmas: vec![1.0],
            d: 16,
            l: vec![256, 512, 1024],
            m: vec![32],
            mechs: vec![Pos, Gerf, Sderf],
            seeds: 3,
        },
        Command::FitDump(_) => Defaults {
            sigmas: vec![1.0],
            d: 4,
            l: vec![32],
            m: vec![1],
            mechs: vec![Gerf, Saderf, Aderf, Sderf],
            seeds: 1,
        },
    }
}

fn build_config(cmd: &Command, f: &Flags) -> Result<ExperimentConfig, Error> {
    let def = defaults(cmd);
    let sigmas = match (&f.sigma, &f.sigma_grid) {
        (Some(s), _) => vec![*s],
        (None, Some(g)) => parse_sigma_grid(g)?,
        (None, None) => def.sigmas,
    };
    let mechs = match &f.mechs {
        Some(list) => list.iter().map(|s| s.trim().parse()).collect::<Result<Vec<_>, _>>()?,
        None => def.mechs,
    };
    let regime = match &f.regime {
        Some(r) => Some(r.parse::<Regime>()?),
        None if f.csv.is_none() => Some(Regime::Normal),
        None => None,
    };
    let cfg = ExperimentConfig {
        regime,
        csv: f.csv.clone(),
        label_col: f.label_col.clone(),
        sigmas,
        d: f.d.unwrap_or(def.d),
        l: f.l.clone().unwrap_or(def.l),
        m: match (&f.m, &f.m_grid) {
            (Some(m), _) => vec![*m],
            (None, Some(g)) => g.clone(),
            (None, None) => def.m,
        },
        mechs,
        scheme: f.scheme.parse::<SchemeKind>()?,
        qmc_psi: f.qmc_psi,
        ridge: f.ridge,
        seed: f.seed,
        seeds: f.seeds.unwrap_or(def.seeds),
        timing: f.timing,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &Command) -> Result<ExperimentResult, Error> {
    let flags = match cmd {
        Command::VarianceCompare(f)
        | Command::KernelClassify(f)
        | Command::AttentionBench(f)
        | Command::FitDump(f) => f,
    };
    let cfg = build_config(cmd, flags)?;
    let go = || match cmd {
        Command::VarianceCompare(_) => cmd_variance_compare(&cfg),
        Command::KernelClassify(_) => cmd_kernel_classify(&cfg),
        Command::AttentionBench(_) => cmd_attention_bench(&cfg),
        Command::FitDump(_) => cmd_fit_dump(&cfg),
    };
    match flags.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numeric() {
        ExitCode::from(3)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::VarianceCompare(f)
        | Command::KernelClassify(f)
        | Command::AttentionBench(f)
        | Command::FitDump(f) => f.out.clone(),
    };
    let result = match run(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let json = result.to_json() + "\n";
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, json) {
                eprintln!("error: cannot write {path}: {e}");
                return ExitCode::from(2);
            }
        }
        None => print!("{json}"),
    }
    if result.errors.is_empty() {
        ExitCode::SUCCESS
    } else if result.errors.iter().any(|e| e.kind == "numeric") {
        ExitCode::from(3)
    } else {
        ExitCode::from(2)
    }
}
