//! `deltametrics` command-line tool.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use deltametrics::cluster::ClusterSummary;
use deltametrics::crossover::{
    decompose_complete_incomplete, fit_crossover, fit_crossover_lmm, fit_crossover_relative, metric_cov,
    AugmentedPanel, Group,
};
use deltametrics::io::{read_cluster_csv, read_crossover_csv, read_ratio_csv};
use deltametrics::moments::PairedMoments;
use deltametrics::quantile::{bootstrap_ci, outer_ci, Adjust, ClusteredSample, QuantileQuery};
use deltametrics::ratio::{ratio_ci, RatioInput, RATIO_METHODS};
use deltametrics::report::{coverage_json, coverage_table, to_json, to_table, write_coverage_csv, Report};
use deltametrics::sim::{run_table, table_scenarios, CoverageReport};
use deltametrics::{Error, Method};

#[derive(Parser)]
#[command(name = "deltametrics", version, about = "Delta-method confidence intervals for experiment metrics")]
struct Cli {
    /// Two-sided significance level, in (0, 1]
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,

    /// Base seed for anything random
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "DELTAMETRICS_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RatioMethod {
    Fieller,
    Delta,
    DeltaBc,
    Edgeworth,
    EdgeworthBc,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdjustArg {
    Pre,
    Post,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CrossoverMethod {
    DeltaGls,
    Relative,
    Lmm,
    Decompose,
}

#[derive(Subcommand)]
enum Command {
    /// Percent change of paired x (control), y (treatment) samples
    RatioCi {
        /// CSV with columns x,y
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = RatioMethod::DeltaBc)]
        method: RatioMethod,
    },
    /// Mean of a clustered metric, naive and Delta standard errors
    ClusterCi {
        /// CSV with columns unit_id,value
        file: PathBuf,
    },
    /// Quantile of a clustered metric with an outer confidence interval
    QuantileCi {
        /// CSV with columns unit_id,value
        file: PathBuf,
        /// Quantile level in (0, 1)
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value_t = AdjustArg::Post)]
        adjust: AdjustArg,
        /// Also run a cluster bootstrap with this many replicates
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Treatment effect in a two-period cross-over design
    Crossover {
        /// CSV with columns user_id,group,period,value
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = CrossoverMethod::DeltaGls)]
        method: CrossoverMethod,
    },
    /// Monte-Carlo coverage study
    Simulate {
        /// Study to run, 1 to 5
        #[arg(long)]
        table: u8,
        /// Simulations per cell (default: the study's own)
        #[arg(long)]
        sims: Option<usize>,
        /// Bootstrap replicates for quantile studies (0 disables)
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Write the report here; `.csv` selects CSV, anything else JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open(path: &Path) -> Result<Box<dyn Read>, Error> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin()));
    }
    File::open(path)
        .map(|f| Box::new(io::BufReader::new(f)) as Box<dyn Read>)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))
}

fn ratio_reports(path: &Path, method: RatioMethod, alpha: f64) -> Result<Vec<Report>, Error> {
    let pairs = read_ratio_csv(open(path)?)?;
    let n = pairs.len() as u64;
    let input = RatioInput::paired(&PairedMoments::from_pairs(pairs)?, alpha)?;
    let methods: Vec<Method> = match method {
        RatioMethod::All => RATIO_METHODS.to_vec(),
        RatioMethod::Fieller => vec![Method::Fieller],
        RatioMethod::Delta => vec![Method::Delta],
        RatioMethod::DeltaBc => vec![Method::DeltaBc],
        RatioMethod::Edgeworth => vec![Method::Edgeworth],
        RatioMethod::EdgeworthBc => vec![Method::EdgeworthBc],
    };
    methods
        .into_iter()
        .map(|m| ratio_ci(&input, m).map(|ci| Report::from_interval(&ci, n)))
        .collect()
}

fn cluster_reports(path: &Path, alpha: f64) -> Result<Vec<Report>, Error> {
    let summary = ClusterSummary::from_observations(read_cluster_csv(open(path)?)?)?;
    let n = summary.num_observations();
    let naive = summary.naive_variance()?;
    let delta = summary.delta_variance()?;
    Ok(vec![
        Report::from_cluster(&naive, alpha, n),
        Report::from_cluster(&delta, alpha, n),
    ])
}

fn quantile_reports(
    path: &Path,
    p: f64,
    adjust: AdjustArg,
    bootstrap: Option<usize>,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Report>, Error> {
    let adjust = match adjust {
        AdjustArg::Pre => Adjust::Pre,
        AdjustArg::Post => Adjust::Post,
    };
    let query = QuantileQuery::new(p, alpha, adjust)?;
    let data = ClusteredSample::from_observations(read_cluster_csv(open(path)?)?)?;
    let mut out = vec![Report::from_quantile(&outer_ci(&data, &query)?)];
    if let Some(b) = bootstrap {
        out.push(Report::from_quantile(&bootstrap_ci(&data, p, alpha, b, seed)?));
    }
    Ok(out)
}

fn crossover_reports(path: &Path, method: CrossoverMethod, alpha: f64) -> Result<Vec<Report>, Error> {
    let panel = AugmentedPanel::augment(read_crossover_csv(open(path)?)?)?;
    let n = panel.users.len() as u64;
    let groups = || -> Result<_, Error> { Ok((metric_cov(&panel, Group::I)?, metric_cov(&panel, Group::II)?)) };
    Ok(match method {
        CrossoverMethod::DeltaGls => {
            let (g1, g2) = groups()?;
            vec![Report::from_crossover(&fit_crossover(&g1, &g2, alpha)?, n)]
        }
        CrossoverMethod::Relative => {
            let (g1, g2) = groups()?;
            vec![Report::from_crossover(&fit_crossover_relative(&g1, &g2, alpha)?, n)]
        }
        CrossoverMethod::Lmm => vec![Report::from_crossover(&fit_crossover_lmm(&panel, alpha)?, n)],
        CrossoverMethod::Decompose => {
            let d = decompose_complete_incomplete(&panel)?;
            vec![
                Report::from_subgroup(Method::CompleteLmm, &d.complete, alpha),
                Report::from_subgroup(Method::IncompleteOls, &d.incomplete, alpha),
                Report::from_subgroup(Method::WeightedAverage, &d.weighted, alpha),
            ]
        }
    })
}

fn simulate(cli: &Cli, table: u8, sims: Option<usize>, bootstrap: Option<usize>) -> Result<Vec<CoverageReport>, Error> {
    let mut scenarios = table_scenarios(table, cli.seed)?;
    for s in &mut scenarios {
        if let Some(m) = sims {
            s.sims = m;
        }
        if let Some(b) = bootstrap {
            s.bootstrap = b;
        }
        s.alpha = cli.alpha;
        s.validate()?;
    }
    scenarios.iter().map(run_table).collect()
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    let io_err = |e: io::Error| Error::InvalidParameter(format!("cannot write output: {e}"));
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    deltametrics::error::check_alpha(cli.alpha)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let reports = match &cli.command {
        Command::RatioCi { file, method } => ratio_reports(file, *method, cli.alpha)?,
        Command::ClusterCi { file } => cluster_reports(file, cli.alpha)?,
        Command::QuantileCi { file, p, adjust, bootstrap } => {
            quantile_reports(file, *p, *adjust, *bootstrap, cli.alpha, cli.seed)?
        }
        Command::Crossover { file, method } => crossover_reports(file, *method, cli.alpha)?,
        Command::Simulate { table, sims, bootstrap, out } => {
            let reports = simulate(cli, *table, *sims, *bootstrap)?;
            let csv = out
                .as_deref()
                .and_then(|p| p.extension())
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let text = if csv {
                let mut buf = Vec::new();
                write_coverage_csv(&reports, &mut buf)?;
                String::from_utf8(buf).expect("utf-8 csv")
            } else if cli.format == Format::Table && out.is_none() {
                coverage_table(&reports)
            } else {
                coverage_json(&reports)? + "\n"
            };
            return emit(&text, out.as_deref());
        }
    };
    let text = match cli.format {
        Format::Json => to_json(&reports)? + "\n",
        Format::Table => to_table(&reports),
    };
    emit(&text, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
