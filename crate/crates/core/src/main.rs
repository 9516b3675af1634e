use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use newsalpha::config::RunConfig;
use newsalpha::pipeline::{run_pipeline, Stage};
use newsalpha::synth::{generate_synthetic, SyntheticSpec};
use newsalpha::{Error, Result};

/// News-sentiment research pipeline.
#[derive(Debug, Parser)]
#[command(name = "newsalpha", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-stock and novelty filtering; writes funnel.json.
    Filter(RunArgs),
    /// Filtering plus three-day excess-return labels; writes labels.csv.
    Label(RunArgs),
    /// Through scoring; writes scores.csv.
    Score(RunArgs),
    /// Through classification metrics; writes metrics.json.
    Evaluate(RunArgs),
    /// Through the fixed-effects regressions; writes regression.json.
    Regress(RunArgs),
    /// Through the portfolio backtest; writes strategies.json and cumulative.csv.
    Backtest(RunArgs),
    /// Every stage.
    Run(RunArgs),
    /// Writes a seeded synthetic dataset and a matching run.conf.
    Synth(SynthArgs),
}

/// Settings override the config file; the config file overrides defaults.
#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "NEWSALPHA_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    news: Option<PathBuf>,
    #[arg(long)]
    bars: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// External scores CSV (article_id,model_name,score).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Market return CSV (date,market_ret) replacing the cap-weighted index.
    #[arg(long)]
    market: Option<PathBuf>,
    /// true|false
    #[arg(long)]
    lexicon_scoring: Option<String>,
    #[arg(long)]
    novelty_window_days: Option<String>,
    /// calendar|business
    #[arg(long)]
    novelty_window_unit: Option<String>,
    #[arg(long)]
    similarity_threshold: Option<String>,
    /// same_ticker|corpus_wide
    #[arg(long)]
    novelty_scope: Option<String>,
    #[arg(long)]
    label_horizon: Option<String>,
    /// sum|compound
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    #[arg(long)]
    validation_fraction: Option<String>,
    /// random|time_ordered
    #[arg(long)]
    split_mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    classification_threshold: Option<String>,
    /// Regressor sets, e.g. "lexicon; signal; lexicon+signal".
    #[arg(long)]
    regressions: Option<String>,
    /// two_way|firm|date|none
    #[arg(long)]
    cluster: Option<String>,
    #[arg(long)]
    small_sample_correction: Option<String>,
    #[arg(long)]
    demean_tolerance: Option<String>,
    #[arg(long)]
    max_sweeps: Option<String>,
    #[arg(long)]
    quantile_fraction: Option<String>,
    #[arg(long)]
    cost_bps: Option<String>,
    /// round_trip|per_side
    #[arg(long)]
    cost_convention: Option<String>,
    #[arg(long)]
    start_date: Option<String>,
    #[arg(long)]
    end_date: Option<String>,
    #[arg(long)]
    annualization: Option<String>,
    /// Annual risk-free rate, decimal.
    #[arg(long)]
    risk_free: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let pairs: [(&str, Option<String>); 30] = [
            ("output_dir", path(&self.output_dir)),
            ("news", path(&self.news)),
            ("bars", path(&self.bars)),
            ("lexicon", path(&self.lexicon)),
            ("scores", path(&self.scores)),
            ("market", path(&self.market)),
            ("lexicon_scoring", self.lexicon_scoring.clone()),
            ("novelty_window_days", self.novelty_window_days.clone()),
            ("novelty_window_unit", self.novelty_window_unit.clone()),
            ("similarity_threshold", self.similarity_threshold.clone()),
            ("novelty_scope", self.novelty_scope.clone()),
            ("label_horizon", self.label_horizon.clone()),
            ("aggregation", self.aggregation.clone()),
            ("test_fraction", self.test_fraction.clone()),
            ("validation_fraction", self.validation_fraction.clone()),
            ("split_mode", self.split_mode.clone()),
            ("seed", self.seed.clone()),
            ("classification_threshold", self.classification_threshold.clone()),
            ("regressions", self.regressions.clone()),
            ("cluster", self.cluster.clone()),
            ("small_sample_correction", self.small_sample_correction.clone()),
            ("demean_tolerance", self.demean_tolerance.clone()),
            ("max_sweeps", self.max_sweeps.clone()),
            ("quantile_fraction", self.quantile_fraction.clone()),
            ("cost_bps", self.cost_bps.clone()),
            ("cost_convention", self.cost_convention.clone()),
            ("start_date", self.start_date.clone()),
            ("end_date", self.end_date.clone()),
            ("annualization", self.annualization.clone()),
            ("risk_free", self.risk_free.clone()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v, None)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for the generated files.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().n_firms)]
    firms: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().n_dates)]
    dates: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().articles_per_day)]
    articles_per_day: f64,
    /// Planted effect, percent next-day return per unit score.
    #[arg(long, default_value_t = SyntheticSpec::default().gamma)]
    gamma: f64,
    /// Idiosyncratic return volatility, percent.
    #[arg(long, default_value_t = SyntheticSpec::default().noise_sigma)]
    noise_sigma: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().duplicate_rate)]
    duplicate_rate: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().multi_ticker_rate)]
    multi_ticker_rate: f64,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    seed: u64,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_firms: args.firms,
        n_dates: args.dates,
        articles_per_day: args.articles_per_day,
        gamma: args.gamma,
        noise_sigma: args.noise_sigma,
        duplicate_rate: args.duplicate_rate,
        multi_ticker_rate: args.multi_ticker_rate,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec)?;
    data.write_to(&args.out_dir)?;
    println!(
        "wrote {} articles ({} duplicates) and {} bars to {}",
        data.articles.len(),
        data.duplicates.len(),
        data.bars.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run(args: &RunArgs, until: Stage) -> Result<()> {
    let cfg = args.resolve()?;
    let results = run_pipeline(&cfg, until)?;
    if let Some(m) = &results.manifest {
        for f in &m.outputs {
            println!("{}", cfg.output_dir.join(f).display());
        }
    }
    Ok(())
}

fn report(e: &Error) {
    eprintln!("error: {e}");
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Filter(a) => run(a, Stage::Filter),
        Command::Label(a) => run(a, Stage::Label),
        Command::Score(a) => run(a, Stage::Score),
        Command::Evaluate(a) => run(a, Stage::Evaluate),
        Command::Regress(a) => run(a, Stage::Regress),
        Command::Backtest(a) => run(a, Stage::Backtest),
        Command::Run(a) => run(a, Stage::Backtest),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
