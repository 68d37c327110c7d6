use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use conceptq::discovery::{discover_concepts_with, parse_itemsets, ClusterOptions, KChoice};
use conceptq::harness::{
    generate_world, run_experiment_1_with, run_experiment_2_with, set_metrics, Exp1Config,
    Exp2Config, WorldSpec,
};
use conceptq::learner::{learn_concept_query, reliable_negatives, LearnerConfig};
use conceptq::query::{evaluate_with, parse_query, serialize_query};
use conceptq::schema::{
    load_dataset, load_dataset_with_schema, match_rows_by_value, parse_id_list, Dataset, Item,
};
use conceptq::seed::DEFAULT_SEED;
use conceptq::{Error, Execution, IdSet, NegativeMethod, QueryType};

/// Learn concept queries over categorical catalogs from positive examples.
#[derive(Parser)]
#[command(name = "conceptq", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a dataset's schema.
    Inspect {
        #[command(flatten)]
        data: DataArgs,
        /// Write the inferred schema as a sidecar JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the reliable negatives of a positive set, one item id per line.
    Negatives {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        positives: PositiveArgs,
        #[arg(long, default_value_t = NegativeMethod::Likelihood)]
        method: NegativeMethod,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a concept query from positive examples.
    Learn {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        positives: PositiveArgs,
        #[command(flatten)]
        learner: LearnerArgs,
        /// Query output; the learn report goes next to it as report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster itemsets and learn one concept query per cluster.
    Discover {
        #[command(flatten)]
        data: DataArgs,
        /// JSON lines: {"id": ..., "items": [{feature: value, ...}, ...]}.
        #[arg(long)]
        itemsets: PathBuf,
        /// Number of clusters, or "auto" for silhouette selection over 2..=20.
        #[arg(long, default_value = "auto")]
        k: KChoice,
        #[command(flatten)]
        learner: LearnerArgs,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid on a synthetic catalog.
    Simulate {
        experiment: Experiment,
        /// JSON config; see docs/simulate-config.md.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults used when no config is given.
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        /// Worker threads for grid cells; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a query against a ground-truth id set.
    Eval {
        #[arg(long)]
        query: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Ground-truth item ids, one per line.
        #[arg(long)]
        truth: PathBuf,
        /// Also write the metrics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Categorical CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Sidecar JSON pinning each feature's value list.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct PositiveArgs {
    /// Item ids (one per line) or a CSV of items matched by value.
    #[arg(long)]
    positives: PathBuf,
}

#[derive(Args)]
struct LearnerArgs {
    #[arg(long, default_value_t = NegativeMethod::Likelihood)]
    method: NegativeMethod,
    #[arg(long = "query", default_value_t = QueryType::Items)]
    query_type: QueryType,
    /// Minimum positive-leaf size as a fraction of the positive set.
    #[arg(long, default_value_t = 0.0, value_parser = parse_fraction)]
    discard: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Exp1,
    Exp2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig<E> {
    world: Option<WorldSpec>,
    experiment: Option<E>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    k: usize,
    k_scores: Option<&'a [(usize, f64)]>,
    iterations: usize,
    converged: bool,
    inertia: f64,
    clusters: Vec<ManifestCluster>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct ManifestCluster {
    cluster: usize,
    itemsets: Vec<String>,
    merged_items: usize,
    positives: usize,
    query_file: Option<String>,
    report: Option<conceptq::LearnReport>,
    error: Option<String>,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let d: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&d) {
        Ok(d)
    } else {
        Err(format!("{d} is outside [0, 1]"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    eprintln!("seed: {}", cli.seed);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> conceptq::Result<()> {
    let seed = cli.seed;
    let jobs = match cli.command {
        Command::Simulate { jobs, .. } => jobs,
        _ => 1,
    };
    let exec = configure_threads(jobs)?;
    match cli.command {
        Command::Inspect { data, out } => {
            let data = load(&data)?;
            print!("{}", describe(&data));
            if let Some(out) = out {
                write(&out, data.schema.to_sidecar() + "\n")?;
            }
        }
        Command::Negatives {
            data,
            positives,
            method,
            out,
        } => {
            let data = load(&data)?;
            let s = load_positives(&positives.positives, &data)?;
            let ids: IdSet = reliable_negatives(&s, &data, method)?
                .into_iter()
                .map(|i| i.id)
                .collect();
            let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
            match out {
                Some(out) => write(&out, text)?,
                None => print!("{text}"),
            }
        }
        Command::Learn {
            data,
            positives,
            learner,
            out,
        } => {
            let data = load(&data)?;
            let s = load_positives(&positives.positives, &data)?;
            let (query, report) = learn_concept_query(&s, &data, &learner.config(seed))?;
            write(&out, serialize_query(&query, &data.schema) + "\n")?;
            write(&out.with_file_name("report.json"), pretty(&report)?)?;
            eprintln!(
                "{} disjuncts from {} positives and {} negatives",
                query.disjuncts.len(),
                report.positives,
                report.negatives
            );
        }
        Command::Discover {
            data,
            itemsets,
            k,
            learner,
            max_iter,
            restarts,
            out,
        } => {
            let data = load(&data)?;
            let sets = parse_itemsets(&read(&itemsets)?, &data)?;
            let options = ClusterOptions { max_iter, restarts };
            let found =
                discover_concepts_with(&sets, &data, &k, &learner.config(seed), &options, exec)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut clusters = Vec::new();
            for c in &found.concepts {
                let (query_file, report, error) = match &c.outcome {
                    Ok((query, report)) => {
                        let name = format!("cluster-{:02}.json", c.cluster);
                        write(
                            &out.join(&name),
                            serialize_query(query, &data.schema) + "\n",
                        )?;
                        (Some(name), Some(report.clone()), None)
                    }
                    Err(e) => (None, None, Some(e.to_string())),
                };
                clusters.push(ManifestCluster {
                    cluster: c.cluster,
                    itemsets: c.itemset_ids.clone(),
                    merged_items: c.merged_items,
                    positives: c.positives,
                    query_file,
                    report,
                    error,
                });
            }
            for w in &found.warnings {
                eprintln!("warning: {w}");
            }
            let manifest = Manifest {
                seed,
                k: found.model.k,
                k_scores: found.k_selection.as_ref().map(|s| s.scores.as_slice()),
                iterations: found.model.iterations,
                converged: found.model.converged,
                inertia: found.model.inertia(),
                clusters,
                warnings: &found.warnings,
            };
            write(&out.join("manifest.json"), pretty(&manifest)?)?;
        }
        Command::Simulate {
            experiment,
            config,
            preset,
            out,
            ..
        } => {
            let text = config.as_deref().map(read).transpose()?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            match experiment {
                Experiment::Exp1 => {
                    let (spec, mut cfg) = simulate_config(
                        text.as_deref(),
                        preset,
                        Exp1Config::desk,
                        Exp1Config::full,
                    )?;
                    cfg.master_seed = seed;
                    let world = generate_world(&spec, seed)?;
                    let report = run_experiment_1_with(&world, &cfg, exec)?;
                    let mut rows = Vec::new();
                    report.write_csv(&mut rows)?;
                    write(&out.join("rows.csv"), rows)?;
                    let mut summary = Vec::new();
                    report.write_summary_csv(&mut summary)?;
                    write(&out.join("summary.csv"), summary)?;
                    write(&out.join("report.json"), pretty(&report)?)?;
                    eprintln!(
                        "{} cells, {} summary rows",
                        report.rows.len(),
                        report.summary.len()
                    );
                }
                Experiment::Exp2 => {
                    let (spec, mut cfg) = simulate_config(
                        text.as_deref(),
                        preset,
                        Exp2Config::desk,
                        Exp2Config::full,
                    )?;
                    cfg.master_seed = seed;
                    let world = generate_world(&spec, seed)?;
                    let report = run_experiment_2_with(&world, &cfg, exec)?;
                    let mut rows = Vec::new();
                    report.write_csv(&mut rows)?;
                    write(&out.join("rows.csv"), rows)?;
                    let mut summary = Vec::new();
                    report.write_summary_csv(&mut summary)?;
                    write(&out.join("summary.csv"), summary)?;
                    write(&out.join("report.json"), pretty(&report)?)?;
                    eprintln!(
                        "{} rows, {} summary rows",
                        report.rows.len(),
                        report.summary.len()
                    );
                }
            }
        }
        Command::Eval {
            query,
            data,
            truth,
            out,
        } => {
            let data = load(&data)?;
            let q = parse_query(&read(&query)?, &data.schema)?;
            let truth_ids = parse_id_list(&read(&truth)?)?;
            if let Some(&bad) = truth_ids.iter().find(|&&id| id >= data.len()) {
                return Err(Error::SchemaMismatch(format!(
                    "truth id {bad} is not a dataset item"
                )));
            }
            let truth: IdSet = truth_ids.into_iter().collect();
            let predicted = evaluate_with(&q, &data, exec)?;
            let m = set_metrics(&predicted, &truth);
            println!("predicted: {}", predicted.len());
            println!("precision: {}", m.precision);
            println!("recall: {}", m.recall);
            println!("f1: {}", m.f1);
            if let Some(out) = out {
                write(&out, pretty(&m)?)?;
            }
        }
    }
    Ok(())
}

impl LearnerArgs {
    fn config(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            negative_method: self.method,
            query_type: self.query_type,
            discard_threshold: self.discard,
            seed,
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(jobs: usize) -> conceptq::Result<Execution> {
    if jobs == 1 {
        return Ok(Execution::Sequential);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(Execution::Parallel)
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(jobs: usize) -> conceptq::Result<Execution> {
    if jobs > 1 {
        eprintln!("warning: built without the parallel feature; --jobs {jobs} runs sequentially");
    }
    Ok(Execution::Sequential)
}

fn simulate_config<E: for<'de> Deserialize<'de>>(
    text: Option<&str>,
    preset: Preset,
    desk: fn() -> E,
    full: fn() -> E,
) -> conceptq::Result<(WorldSpec, E)> {
    let (spec, cfg) = match preset {
        Preset::Desk => (WorldSpec::desk(), desk()),
        Preset::Full => (WorldSpec::full(), full()),
    };
    let Some(text) = text else {
        return Ok((spec, cfg));
    };
    let parsed: SimulateConfig<E> = serde_json::from_str(text)?;
    Ok((
        parsed.world.unwrap_or(spec),
        parsed.experiment.unwrap_or(cfg),
    ))
}

fn load(args: &DataArgs) -> conceptq::Result<Dataset> {
    match &args.schema {
        Some(schema) => load_dataset_with_schema(&args.data, schema),
        None => load_dataset(&args.data),
    }
}

fn load_positives(path: &Path, data: &Dataset) -> conceptq::Result<Vec<Item>> {
    let text = read(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let items = if is_csv {
        match_rows_by_value(&text, data)?
    } else {
        data.select(&parse_id_list(&text)?)?
    };
    if items.is_empty() {
        return Err(Error::Empty("positive set"));
    }
    Ok(items)
}

fn describe(data: &Dataset) -> String {
    let schema = &data.schema;
    let mut text = format!(
        "items: {}\nfeatures: {}\nbinary width: {}\n",
        data.len(),
        schema.num_features(),
        schema.width()
    );
    for f in schema.features() {
        text += &format!("{} ({}): {}\n", f.name, f.values.len(), f.values.join(", "));
    }
    text
}

fn read(path: &Path) -> conceptq::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> conceptq::Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> conceptq::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
