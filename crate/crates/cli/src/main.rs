use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use dcsbm::asymptotics::{chi2_failure_n, poisson_moments, PoissonMomentConfig, VarianceMode};
use dcsbm::bp::{fit, FitConfig, Schedule};
use dcsbm::graph::{load_edge_list, DuplicatePolicy, Graph, LoadOptions, LoadReport};
use dcsbm::models::{block_models, sample_dcsbm, sample_sbm, GenerateSpec};
use dcsbm::selection::{run_test, statistics, DegreeSource, TestConfig};

#[derive(Parser)]
#[command(name = "dcsbm", version, about = "Fit and compare ordinary and degree-corrected block models")]
struct Cli {
    /// Worker threads for restarts and bootstrap replicates (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a parameter document.
    Generate(GenerateArgs),
    /// Fit block models to an edge list.
    Fit(FitArgs),
    /// Test the ordinary model against the degree-corrected one.
    Test(TestArgs),
    /// Tabulate the Poisson moment functions and the chi-squared failure sizes.
    Curves(CurvesArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML parameter document.
    #[arg(long)]
    params: PathBuf,
    /// Overrides the document's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Edge list output.
    #[arg(long)]
    out: PathBuf,
    /// Planted labels, one `node block` line per node.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Resolved parameter document, including the seed actually used.
    #[arg(long)]
    echo: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Edge list: `u v` or `u v w` per line.
    #[arg(long)]
    input: PathBuf,
    /// Count repeated pairs once instead of summing them.
    #[arg(long)]
    collapse_duplicates: bool,
}

#[derive(Args, Clone)]
struct FitOverrides {
    /// TOML or JSON file with defaults for the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    em_iterations: Option<usize>,
    #[arg(long)]
    em_tolerance: Option<f64>,
    /// One BP sweep per EM step.
    #[arg(long)]
    interleave: bool,
    #[arg(long)]
    bp_tolerance: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Sequential,
    Parallel,
}

impl FitOverrides {
    fn apply(&self, fit: &mut FitConfig) {
        if let Some(v) = self.restarts {
            fit.restarts = v;
        }
        if let Some(v) = self.em_iterations {
            fit.em_iterations = v;
        }
        if let Some(v) = self.em_tolerance {
            fit.em_tolerance = v;
        }
        if self.interleave {
            fit.interleave = true;
        }
        if let Some(v) = self.bp_tolerance {
            fit.bp.tolerance = v;
        }
        if let Some(v) = self.max_sweeps {
            fit.bp.max_sweeps = v;
        }
        if let Some(v) = self.damping {
            fit.bp.damping = v;
        }
        if let Some(s) = self.schedule {
            fit.bp.schedule = match s {
                ScheduleArg::Sequential => Schedule::Sequential,
                ScheduleArg::Parallel => Schedule::Parallel,
            };
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(short, long, default_value_t = 2)]
    k: usize,
    /// Models to fit, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sbm,dc")]
    model: Vec<String>,
    /// Output path; `{model}` is replaced by the model name. With several
    /// models and no placeholder, the name is inserted before the extension.
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-node marginals.
    #[arg(long)]
    marginals: bool,
    #[command(flatten)]
    overrides: FitOverrides,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(short, long)]
    k: Option<usize>,
    /// `ground` or `free-energy`.
    #[arg(long)]
    statistic: Option<String>,
    /// Parametric bootstrap replicates (0 disables).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Restarts per bootstrap refit, the first warm-started.
    #[arg(long)]
    bootstrap_restarts: Option<usize>,
    #[arg(long, value_enum)]
    variance: Option<VarianceArg>,
    #[arg(long, value_enum)]
    degrees: Option<DegreesArg>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of bootstrap replicate statistics.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    overrides: FitOverrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Limiting,
    FiniteN,
}

#[derive(Clone, Copy, ValueEnum)]
enum DegreesArg {
    Empirical,
    Fitted,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, default_value_t = 1.0)]
    mu_min: f64,
    #[arg(long, default_value_t = 10.0)]
    mu_max: f64,
    #[arg(long, default_value_t = 0.5)]
    mu_step: f64,
    /// f, phi, c, v table (default: stdout).
    #[arg(long)]
    moments: Option<PathBuf>,
    /// Chi-squared failure table.
    #[arg(long)]
    failure: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    nominal: f64,
    #[arg(long, default_value_t = 0.95)]
    actual: f64,
    #[arg(short, long, default_value_t = 2)]
    k: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let outcome = configure_threads(cli.jobs).and_then(|()| match cli.command {
        Command::Generate(args) => generate(args),
        Command::Fit(args) => fit_models(args),
        Command::Test(args) => test(args),
        Command::Curves(args) => curves(args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// Writes to `path`, or to stdout when `None`.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn load_graph(args: &GraphArgs) -> Result<(Graph, LoadReport)> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let options = LoadOptions {
        duplicates: if args.collapse_duplicates {
            DuplicatePolicy::Collapse
        } else {
            DuplicatePolicy::Sum
        },
    };
    let (graph, report) = load_edge_list(BufReader::new(file), options)
        .with_context(|| format!("reading {}", args.input.display()))?;
    log::info!("loaded {} nodes and {} edges from {}", graph.n(), graph.m(), args.input.display());
    Ok((graph, report))
}

#[derive(Serialize)]
struct InputInfo<'a> {
    path: &'a Path,
    nodes: usize,
    edges: u64,
    #[serde(flatten)]
    load: LoadReport,
}

fn generate(args: GenerateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.params).with_context(|| format!("reading {}", args.params.display()))?;
    let mut spec = GenerateSpec::parse(&text).with_context(|| format!("parsing {}", args.params.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let params = spec.params()?;
    let (graph, labels) = match spec.theta_rule()? {
        Some(rule) => {
            let sample = sample_dcsbm(spec.n, &params, rule.as_ref(), spec.seed)?;
            (sample.graph, sample.assignment.labels)
        }
        None => {
            let (graph, assignment) = sample_sbm(spec.n, &params, spec.seed)?;
            (graph, assignment.labels)
        }
    };
    log::info!("sampled {} edges on {} nodes (seed {})", graph.m(), graph.n(), spec.seed);

    let mut out = sink(Some(&args.out))?;
    graph.write_edge_list(&mut out)?;
    out.flush()?;
    if let Some(path) = &args.labels {
        let mut out = sink(Some(path))?;
        for (u, g) in labels.iter().enumerate() {
            writeln!(out, "{} {}", graph.name(u), g + 1)?;
        }
        out.flush()?;
    }
    if let Some(path) = &args.echo {
        fs::write(path, spec.resolved()?.to_toml()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a, D> {
    command: &'static str,
    input: InputInfo<'a>,
    k: usize,
    config: &'a FitConfig,
    fit: D,
}

fn fit_output_path(out: &Path, model: &str, several: bool) -> PathBuf {
    let text = out.to_string_lossy();
    if text.contains("{model}") {
        return PathBuf::from(text.replace("{model}", model));
    }
    if !several {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{model}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{model}"),
    };
    out.with_file_name(name)
}

fn fit_models(args: FitArgs) -> Result<()> {
    let mut config: FitConfig = read_config(args.overrides.config.as_deref())?;
    args.overrides.apply(&mut config);
    if let Some(seed) = args.overrides.seed {
        config.seed = seed;
    }
    config.validate()?;
    let models = args
        .model
        .iter()
        .map(|name| block_models().get(name))
        .collect::<dcsbm::Result<Vec<_>>>()?;
    if models.is_empty() {
        bail!("no model given");
    }
    let (graph, load) = load_graph(&args.graph)?;

    let mut documents = Vec::new();
    for model in &models {
        let result = fit(&graph, args.k, model.as_ref(), &config, None)?;
        if !result.converged {
            log::warn!("{} fit did not converge", result.model);
        }
        log::info!("{}: log-evidence {:.4}", result.model, result.log_evidence);
        documents.push((result.model, result.document(&graph, args.marginals)));
    }

    let input = |path| InputInfo {
        path,
        nodes: graph.n(),
        edges: graph.m(),
        load,
    };
    match &args.out {
        Some(out) => {
            for (name, doc) in documents {
                let output = FitOutput {
                    command: "fit",
                    input: input(&args.graph.input),
                    k: args.k,
                    config: &config,
                    fit: doc,
                };
                write_json(Some(&fit_output_path(out, name, models.len() > 1)), &output)?;
            }
        }
        None => {
            let fits: Vec<_> = documents.into_iter().map(|(_, d)| d).collect();
            let output = FitOutput {
                command: "fit",
                input: input(&args.graph.input),
                k: args.k,
                config: &config,
                fit: fits,
            };
            write_json(None, &output)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TestOutput<'a> {
    command: &'static str,
    input: InputInfo<'a>,
    config: &'a TestConfig,
    report: &'a dcsbm::selection::TestReport,
}

fn test(args: TestArgs) -> Result<()> {
    let mut config: TestConfig = read_config(args.overrides.config.as_deref())?;
    args.overrides.apply(&mut config.fit);
    if let Some(seed) = args.overrides.seed {
        config.seed = seed;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(s) = args.statistic {
        config.statistic = s;
    }
    if let Some(b) = args.bootstrap {
        config.bootstrap = b;
    }
    if let Some(r) = args.bootstrap_restarts {
        config.bootstrap_restarts = r;
    }
    if let Some(v) = args.variance {
        config.variance = match v {
            VarianceArg::Limiting => VarianceMode::Limiting,
            VarianceArg::FiniteN => VarianceMode::FiniteN,
        };
    }
    if let Some(d) = args.degrees {
        config.degrees = match d {
            DegreesArg::Empirical => DegreeSource::Empirical,
            DegreesArg::Fitted => DegreeSource::Fitted,
        };
    }
    config.validate().with_context(|| format!("known statistics: {}", statistics().names().join(", ")))?;
    if args.samples.is_some() && config.bootstrap == 0 {
        bail!("--samples needs --bootstrap B with B > 0");
    }
    let (graph, load) = load_graph(&args.graph)?;

    let report = run_test(&graph, &config)?;
    for flag in &report.flags {
        log::warn!("{flag}");
    }
    log::info!(
        "lambda {:.4}, z {:.3}, p_gaussian {:.4}, p_chi2 {:.4}",
        report.lambda,
        report.z_score,
        report.p_gaussian,
        report.p_chi2
    );

    if let (Some(path), Some(b)) = (&args.samples, &report.bootstrap) {
        let mut out = sink(Some(path))?;
        writeln!(out, "replicate,lambda")?;
        for (i, x) in b.samples.iter().enumerate() {
            writeln!(out, "{i},{x}")?;
        }
        out.flush()?;
    }
    let output = TestOutput {
        command: "test",
        input: InputInfo {
            path: &args.graph.input,
            nodes: graph.n(),
            edges: graph.m(),
            load,
        },
        config: &config,
        report: &report,
    };
    write_json(args.out.as_deref(), &output)
}

fn mu_grid(args: &CurvesArgs) -> Result<Vec<f64>> {
    if !(args.mu_min > 0.0 && args.mu_min.is_finite() && args.mu_max.is_finite()) {
        bail!("--mu-min must be positive and the range finite");
    }
    if !(args.mu_step > 0.0) {
        bail!("--mu-step must be positive");
    }
    if args.mu_max < args.mu_min {
        bail!("empty mu grid: --mu-max is below --mu-min");
    }
    let count = ((args.mu_max - args.mu_min) / args.mu_step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| args.mu_min + i as f64 * args.mu_step).collect())
}

fn curves(args: CurvesArgs) -> Result<()> {
    let grid = mu_grid(&args)?;
    let cfg = PoissonMomentConfig::default();

    let mut out = sink(args.moments.as_deref())?;
    writeln!(out, "mu,f,phi,c,v,expanded")?;
    for &mu in &grid {
        let m = poisson_moments(mu, &cfg);
        writeln!(out, "{mu},{},{},{},{},{}", m.f, m.phi, m.c, m.v(), m.expanded)?;
    }
    out.flush()?;

    if let Some(path) = &args.failure {
        let mut out = sink(Some(path))?;
        writeln!(out, "mu,nominal,actual,k,n")?;
        for &mu in &grid {
            let n = chi2_failure_n(mu, args.nominal, args.actual, args.k, &cfg)?;
            let n = n.map(|n| n.to_string()).unwrap_or_default();
            writeln!(out, "{mu},{},{},{},{n}", args.nominal, args.actual, args.k)?;
        }
        out.flush()?;
    }
    Ok(())
}
