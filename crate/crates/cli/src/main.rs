use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use xkpgm_core::estimation::{average_moments, choose_n};
use xkpgm_core::io::{
    load_graph, read_samples_csv, write_edge_list, write_histogram_csv, write_population_dir, write_summary_csv,
};
use xkpgm_core::population::{
    build_population, variance_sweep, FireConfig, Histogram, Metric, MetricSummary, PopulationSource,
};
use xkpgm_core::stats::count_moments;
use xkpgm_core::{
    fit, sample, Error, FitConfig, Graph, GraphStatistics, ModelParamsFile, MomentWeights, SampleOptions,
    StatsConfig, StreamSeed,
};

const SEED_MAX: u64 = i64::MAX as u64;

#[derive(Parser)]
#[command(name = "xkpgm", version, about = "Mixture Kronecker graph models: fit, generate and evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to the moments of one graph or the average of several.
    Fit(FitArgs),
    /// Sample graphs from a parameter file.
    Generate(GenerateArgs),
    /// Print statistics of one graph as CSV.
    Stats(StatsArgs),
    /// Forest-fire subsamples of a graph and their statistics.
    Subsample(SubsampleArgs),
    /// Edge-count mean and spread across tying levels.
    Sweep(SweepArgs),
    /// Model populations next to an observed population.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Random seed; drawn from entropy and reported when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=SEED_MAX))]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::rng().random_range(0..=SEED_MAX);
            eprintln!("seed: {s}");
            s
        })
    }
}

#[derive(Args)]
struct FitArgs {
    /// Edge-list file to fit.
    #[arg(long, required_unless_present = "graphs", conflicts_with = "graphs")]
    graph: Option<PathBuf>,
    /// Directory of edge-list files whose moments are averaged.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Kronecker iterations; by default chosen from the node count.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    /// Moment weights `e,h,t,tri`.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<MomentWeights>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Largest node count a sample may have.
    #[arg(long, default_value_t = xkpgm_core::sampler::DEFAULT_MAX_ORDER)]
    max_nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Smallest degree in the power-law tail.
    #[arg(long, default_value_t = 1)]
    dmin: usize,
}

#[derive(Args)]
struct SubsampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Subsample size as a fraction of the graph's nodes.
    #[arg(long, default_value_t = 0.25)]
    target_frac: f64,
    /// Burn probability.
    #[arg(long, default_value_t = FireConfig::DEFAULT_BURN_PROBABILITY)]
    pf: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    params_base: PathBuf,
    /// Tying levels: `a..b` (inclusive) or a comma-separated list; defaults
    /// to `1..n`.
    #[arg(long, value_parser = parse_levels)]
    l: Option<Levels>,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    /// Count every Bernoulli cell of the matrix, diagonal included.
    #[arg(long)]
    directed: bool,
    #[command(flatten)]
    seed: SeedArg,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Samples CSV of the observed population.
    #[arg(long)]
    population: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// Samples drawn per model.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

fn parse_weights(s: &str) -> Result<MomentWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = parts
        .try_into()
        .map_err(|_| "expected four comma-separated weights".to_string())?;
    let w = MomentWeights(arr);
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

#[derive(Clone)]
struct Levels(Vec<u32>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    let levels: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
        let b: u32 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if levels.is_empty() {
        return Err("no tying levels given".into());
    }
    Ok(Levels(levels))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 1,
        Error::Parse { .. } | Error::EmptyGraph(_) | Error::Io { .. } | Error::Csv(_) | Error::Bounds { .. } => 2,
        Error::Estimation(_) | Error::Undefined(_) | Error::Unsupported(_) | Error::Overflow => 3,
        Error::Resource { .. } => 4,
    }
}

fn create_dir(dir: &Path) -> xkpgm_core::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn create_file(path: &Path) -> xkpgm_core::Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load(path: &Path) -> xkpgm_core::Result<Graph> {
    let loaded = load_graph(path)?;
    log::info!(
        "{}: {} nodes, {} edges, {} self-loops dropped, {} duplicates collapsed",
        path.display(),
        loaded.graph.node_count(),
        loaded.graph.edge_count(),
        loaded.self_loops,
        loaded.duplicates
    );
    Ok(loaded.graph)
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn run_fit(args: FitArgs) -> xkpgm_core::Result<()> {
    let seed = args.seed.resolve();
    let (graphs, source) = match (&args.graph, &args.graphs) {
        (Some(path), _) => (vec![load(path)?], path.display().to_string()),
        (None, Some(dir)) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            let graphs = paths.iter().map(|p| load(p)).collect::<xkpgm_core::Result<Vec<_>>>()?;
            if graphs.is_empty() {
                return Err(Error::EmptyGraph(dir.clone()));
            }
            (graphs, dir.display().to_string())
        }
        (None, None) => unreachable!("clap requires one of --graph or --graphs"),
    };
    let observed = average_moments(&graphs)?;
    let n = match args.n {
        Some(n) => n,
        None => {
            let nodes = graphs.iter().map(Graph::node_count).sum::<usize>() as f64 / graphs.len() as f64;
            let choice = choose_n(nodes.round().max(2.0) as u64, &[2])?;
            if choice.approximate {
                log::info!("{} nodes is not a power of two; using n = {}", nodes, choice.n);
            }
            choice.n
        }
    };
    let mut config = FitConfig::new(args.k, n);
    config.restarts = args.restarts;
    config.seed = seed;
    if let Some(w) = args.weights {
        config.weights = w;
    }
    let result = fit(&observed, &config)?;
    let provenance = format!(
        "source={source}; objective={}; k={}; n={n}; restarts={}; weights={:?}",
        result.objective, args.k, args.restarts, config.weights.0
    );
    ModelParamsFile::from_model(&result.model, Some(seed), provenance).save(&args.out)?;

    let mut out = io::stdout().lock();
    let report = (|| -> io::Result<()> {
        writeln!(out, "objective: {:e}", result.objective)?;
        writeln!(out, "winning restart: {}", result.restart)?;
        writeln!(out, "moment,observed,expected,relative_error")?;
        for (i, name) in xkpgm_core::MomentVector::NAMES.iter().enumerate() {
            writeln!(
                out,
                "{name},{},{},{}",
                observed[i], result.expected[i], result.relative_errors[i]
            )?;
        }
        Ok(())
    })();
    report.map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn run_generate(args: GenerateArgs) -> xkpgm_core::Result<()> {
    let seed = args.seed.resolve();
    let params = ModelParamsFile::load(&args.params)?;
    let model = params.model()?;
    create_dir(&args.out)?;
    let opts = SampleOptions {
        max_order: args.max_nodes,
        ..SampleOptions::default()
    };
    let mut manifest = csv::Writer::from_writer(create_file(&args.out.join("manifest.csv"))?);
    manifest.write_record(["sample_id", "nodes", "edges", "seed"])?;
    let width = args.samples.saturating_sub(1).to_string().len().max(4);
    for i in 0..args.samples {
        let sample_seed = StreamSeed::new(seed).derive(i as u64);
        let g = sample(&model, sample_seed, opts)?.to_graph();
        write_edge_list(args.out.join(format!("sample_{i:0width$}.txt")), &g)?;
        manifest.write_record([
            i.to_string(),
            g.node_count().to_string(),
            g.edge_count().to_string(),
            sample_seed.value().to_string(),
        ])?;
    }
    manifest.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn run_stats(args: StatsArgs) -> xkpgm_core::Result<()> {
    let g = load(&args.graph)?;
    let config = StatsConfig {
        d_min: args.dmin,
        ..StatsConfig::default()
    };
    let s = GraphStatistics::compute(&g, &config);
    let m = count_moments(&g);
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["alpha", "edges", "triangles", "hairpins", "tripins", "apl", "acc", "nodes"])?;
    w.write_record([
        na(s.alpha),
        m.edges.to_string(),
        m.triangles.to_string(),
        m.hairpins.to_string(),
        m.tripins.to_string(),
        na(s.apl),
        s.acc.to_string(),
        s.node_count.to_string(),
    ])?;
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn run_subsample(args: SubsampleArgs) -> xkpgm_core::Result<()> {
    let seed = args.seed.resolve();
    if !(args.target_frac > 0.0 && args.target_frac <= 1.0) {
        return Err(Error::Parameter(format!(
            "--target-frac {} outside (0, 1]",
            args.target_frac
        )));
    }
    let g = load(&args.graph)?;
    let target = ((g.node_count() as f64 * args.target_frac).round() as usize).max(1);
    let config = FireConfig {
        burn_probability: args.pf,
        ..FireConfig::new(target)
    };
    let source = PopulationSource::ForestFire { graph: &g, config };
    let report = build_population(&source, args.count, &StatsConfig::default(), StreamSeed::new(seed))?;
    write_population_dir(&args.out, &report)
}

fn run_sweep(args: SweepArgs) -> xkpgm_core::Result<()> {
    let seed = args.seed.resolve();
    let model = ModelParamsFile::load(&args.params_base)?.model()?;
    let levels = args.l.map_or_else(|| (1..=model.n()).collect(), |l| l.0);
    let opts = if args.directed {
        SampleOptions::directed()
    } else {
        SampleOptions::default()
    };
    let rows = variance_sweep(&model, &levels, args.count, opts, StreamSeed::new(seed))?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create_file(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["l", "mean_edges", "std_edges"])?;
    for r in rows {
        w.write_record([r.l.to_string(), r.mean_edges.to_string(), r.std_edges.to_string()])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn run_compare(args: CompareArgs) -> xkpgm_core::Result<()> {
    let seed = args.seed.resolve();
    let observed = read_samples_csv(&args.population)?;
    let mut labels = vec!["population".to_string()];
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Metric::ALL
        .iter()
        .enumerate()
        .map(|(j, _)| observed.iter().filter_map(|row| row[j]).collect())
        .collect()];

    for (i, path) in args.models.iter().enumerate() {
        let model = ModelParamsFile::load(path)?.model()?;
        let source = PopulationSource::Model {
            model: &model,
            options: SampleOptions::default(),
        };
        let report = build_population(
            &source,
            args.count,
            &StatsConfig::default(),
            StreamSeed::new(seed).derive(i as u64),
        )?;
        let stem = path.file_stem().map_or_else(|| format!("model{i}"), |s| s.to_string_lossy().into_owned());
        labels.push(if labels.contains(&stem) { format!("{stem}_{i}") } else { stem });
        columns.push(Metric::ALL.iter().map(|&m| report.values(m)).collect());
    }

    let summaries: Vec<Vec<MetricSummary>> = columns
        .iter()
        .map(|cols| Metric::ALL.iter().zip(cols).map(|(&m, v)| MetricSummary::of(m, v)).collect())
        .collect();
    let mut hist_rows: Vec<(usize, Metric, Histogram)> = Vec::new();
    for (j, &metric) in Metric::ALL.iter().enumerate() {
        let samples: Vec<&[f64]> = columns.iter().map(|c| c[j].as_slice()).collect();
        for (s, h) in Histogram::shared(&samples).into_iter().enumerate() {
            hist_rows.push((s, metric, h));
        }
    }
    hist_rows.sort_by_key(|&(s, _, _)| s);

    create_dir(&args.out)?;
    let labelled: Vec<(&str, &[MetricSummary])> = labels
        .iter()
        .zip(&summaries)
        .map(|(l, s)| (l.as_str(), s.as_slice()))
        .collect();
    write_summary_csv(create_file(&args.out.join("summary.csv"))?, &labelled, true)?;
    let rows: Vec<(&str, Metric, &Histogram)> = hist_rows
        .iter()
        .map(|(s, m, h)| (labels[*s].as_str(), *m, h))
        .collect();
    write_histogram_csv(create_file(&args.out.join("histogram.csv"))?, &rows, true)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("XKPGM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("XKPGM_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Generate(a) => run_generate(a),
        Command::Stats(a) => run_stats(a),
        Command::Subsample(a) => run_subsample(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Compare(a) => run_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
