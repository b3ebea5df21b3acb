use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quarantine_core::pipeline::{self, PipelineConfig, PipelineError, Stage, StageSummary, OUT_DIR_ENV};
use quarantine_core::synthgen::{generate, ScenarioSpec};

#[derive(Parser, Debug)]
#[command(name = "revq", version, about = "Find popular reviewers who leave deceptive ratings on spiky businesses")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse the input files into a corpus snapshot.
    Ingest(PipelineArgs),
    /// Sweep k-means over user features and pick the popular cluster.
    Cluster(PipelineArgs),
    /// List businesses reviewed by popular users.
    Extract(PipelineArgs),
    /// Detect review spikes on the extracted businesses.
    Rsd(PipelineArgs),
    /// Spam scores for reviews and businesses.
    Score(PipelineArgs),
    /// Trusted scores and the quarantine threshold sweep.
    Quarantine(PipelineArgs),
    /// Render SVG plots from existing CSV outputs.
    Report(PipelineArgs),
    /// Every stage in order.
    Run(PipelineArgs),
    /// Write a synthetic corpus with planted ground truth.
    Synth(SynthArgs),
}

/// Settings shared by the pipeline stages. Flags override the config file,
/// which overrides the defaults. The output directory may also come from
/// the environment, below flags and above the file.
#[derive(Args, Debug, Default)]
struct PipelineArgs {
    /// key=value config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    users: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    reviews: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    businesses: Option<PathBuf>,
    #[arg(long, short = 'o', value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// First day of the analysis window (YYYY-MM-DD).
    #[arg(long)]
    window_start: Option<String>,
    /// Last day of the analysis window (YYYY-MM-DD).
    #[arg(long)]
    window_end: Option<String>,
    /// What to do with reviews of unknown users or businesses: drop or stub.
    #[arg(long)]
    link_policy: Option<String>,
    /// Largest tolerated fraction of malformed lines per file.
    #[arg(long)]
    max_error_rate: Option<String>,
    #[arg(long)]
    k_min: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    /// k-means restarts per k.
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// Year tenure is measured against (default: latest review year).
    #[arg(long)]
    reference_year: Option<String>,
    /// Reviews a business needs to be extracted.
    #[arg(long)]
    min_reviews: Option<String>,
    /// Active days a polarity needs before fences are computed.
    #[arg(long)]
    min_active_days: Option<String>,
    /// Spam score above which a review or business is flagged.
    #[arg(long)]
    s_threshold: Option<String>,
    /// Allowed distance between a rating and the trusted score.
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    theta_min: Option<String>,
    #[arg(long)]
    theta_max: Option<String>,
    /// Quarantine at count >= theta (at-least) or count > theta (exceeds).
    #[arg(long)]
    strictness: Option<String>,
    /// Trusted mean over the kept reviews (subset) or over all (full-count).
    #[arg(long)]
    trust_mode: Option<String>,
    /// feature=H|L orientation table.
    #[arg(long, value_name = "FILE")]
    orientations: Option<PathBuf>,
}

impl PipelineArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let pairs = [
            ("users", path(&self.users)),
            ("reviews", path(&self.reviews)),
            ("businesses", path(&self.businesses)),
            ("out_dir", path(&self.out_dir)),
            ("window_start", self.window_start.clone()),
            ("window_end", self.window_end.clone()),
            ("link_policy", self.link_policy.clone()),
            ("max_error_rate", self.max_error_rate.clone()),
            ("k_min", self.k_min.clone()),
            ("k_max", self.k_max.clone()),
            ("restarts", self.restarts.clone()),
            ("seed", self.seed.clone()),
            ("max_iters", self.max_iters.clone()),
            ("reference_year", self.reference_year.clone()),
            ("min_reviews", self.min_reviews.clone()),
            ("min_active_days", self.min_active_days.clone()),
            ("s_threshold", self.s_threshold.clone()),
            ("tolerance", self.tolerance.clone()),
            ("theta_min", self.theta_min.clone()),
            ("theta_max", self.theta_max.clone()),
            ("strictness", self.strictness.clone()),
            ("trust_mode", self.trust_mode.clone()),
            ("orientations", path(&self.orientations)),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut config = PipelineConfig::default();
        if let Some(file) = &self.config {
            config.apply_file(file)?;
        }
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                config.set("out_dir", &dir)?;
            }
        }
        for (k, v) in self.flag_pairs() {
            config.set(k, &v)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory for the three record files, the ground truth and a config file.
    #[arg(long, short = 'o', value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ordinary_users: Option<usize>,
    #[arg(long)]
    popular_users: Option<usize>,
    #[arg(long)]
    spammers: Option<usize>,
    #[arg(long)]
    businesses: Option<usize>,
    #[arg(long)]
    attacked: Option<usize>,
    #[arg(long)]
    campaign_reviews_per_day: Option<u32>,
    #[arg(long)]
    campaign_days: Option<u32>,
    #[arg(long)]
    campaign_stars: Option<u8>,
}

/// Config file `synth` leaves next to the corpus, pointing at its files.
const SYNTH_CONFIG: &str = "pipeline.conf";

fn synth(args: &SynthArgs) -> Result<(), PipelineError> {
    let mut spec = ScenarioSpec::default();
    macro_rules! take {
        ($field:expr, $arg:expr) => {
            if let Some(v) = $arg {
                $field = v;
            }
        };
    }
    take!(spec.seed, args.seed);
    take!(spec.n_ordinary_users, args.ordinary_users);
    take!(spec.n_popular_users, args.popular_users);
    take!(spec.n_spammer_popular_users, args.spammers);
    take!(spec.n_businesses, args.businesses);
    take!(spec.n_attacked_businesses, args.attacked);
    take!(spec.campaign.reviews_per_day, args.campaign_reviews_per_day);
    take!(spec.campaign.duration_days, args.campaign_days);
    take!(spec.campaign.star_value, args.campaign_stars);
    let corpus = generate(&spec).map_err(|e| match e {
        quarantine_core::synthgen::SynthError::Infeasible(m) => {
            PipelineError::Config(pipeline::ConfigError::Invalid(m))
        }
        other => PipelineError::Internal(other.to_string()),
    })?;
    let paths = corpus
        .write_to(&args.out_dir)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    let absolute = |p: &PathBuf| std::fs::canonicalize(p).unwrap_or_else(|_| p.clone());
    let text = [("users", &paths.users), ("reviews", &paths.reviews), ("businesses", &paths.businesses)]
        .iter()
        .map(|(k, p)| format!("{k}={}\n", absolute(p).display()))
        .collect::<String>();
    let conf = args.out_dir.join(SYNTH_CONFIG);
    std::fs::write(&conf, text).map_err(|e| PipelineError::Internal(e.to_string()))?;
    println!("users        {}", paths.users.display());
    println!("reviews      {}", paths.reviews.display());
    println!("businesses   {}", paths.businesses.display());
    println!("ground truth {}", paths.ground_truth.display());
    println!("config       {}", conf.display());
    Ok(())
}

fn print_summary(s: &StageSummary) {
    let counts: Vec<String> = s.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{:<10} {}", s.stage.name(), counts.join(" "));
}

fn dispatch(command: &Command) -> Result<(), PipelineError> {
    let (stage, args) = match command {
        Command::Synth(args) => return synth(args),
        Command::Run(args) => {
            let config = args.resolve()?;
            for s in pipeline::run(&config)? {
                print_summary(&s);
            }
            println!("outputs in {}", config.out_dir.display());
            return Ok(());
        }
        Command::Ingest(a) => (Stage::Ingest, a),
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Extract(a) => (Stage::Extract, a),
        Command::Rsd(a) => (Stage::Rsd, a),
        Command::Score(a) => (Stage::Score, a),
        Command::Quarantine(a) => (Stage::Quarantine, a),
        Command::Report(a) => (Stage::Report, a),
    };
    let config = args.resolve()?;
    print_summary(&pipeline::run_stage(stage, &config)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
