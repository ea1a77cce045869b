use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irt_arena::calibration::{calibrate_items, estimate_abilities, CalibrationConfig};
use irt_arena::data::{build_response_matrix, ResponseMatrix};
use irt_arena::evaluation::{default_grid, filter_negative_discrimination, DEFAULT_BINS};
use irt_arena::io;
use irt_arena::irt::theta_grid;
use irt_arena::pipeline::{
    calibration_report, evaluate_models, filtered_evaluations, iccmc_all, irt_scores, metric_table,
    run_report, score_rows, warn_calibration, write_fixture, ComparisonReport, FilterReport,
    IccmcReport, InputPaths, Loaded, Manifest, ReportOptions, THETA_SOURCE,
};
use irt_arena::stats::compare;
use irt_arena::synthesis::FixtureSpec;
use irt_arena::{Error, Result};

const THREADS_VAR: &str = "IRT_ARENA_THREADS";

#[derive(Parser)]
#[command(
    name = "irt-arena",
    version,
    about = "Evaluate binary classifiers with Item Response Theory"
)]
struct Cli {
    /// Timestamp recorded in the manifest. Defaults to SOURCE_DATE_EPOCH; omitted when neither is set.
    #[arg(long, global = true)]
    timestamp: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Inputs {
    /// CSV with header `instance_id,label`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Prediction CSVs (`instance_id,prediction`) or directories of them.
    #[arg(long, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Label symbol of the positive class when labels are not 0/1.
    #[arg(long)]
    positive_label: Option<String>,
}

impl Inputs {
    fn paths(&self, evaluate: &[PathBuf]) -> InputPaths {
        InputPaths {
            labels: self.labels.clone(),
            positive_label: self.positive_label.clone(),
            predictions: self.predictions.clone(),
            evaluate: evaluate.to_vec(),
        }
    }
}

#[derive(Args, Clone)]
struct Out {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate 3PL item parameters.
    Calibrate {
        #[command(flatten)]
        inputs: Inputs,
        /// Response matrix CSV, instead of labels and predictions.
        #[arg(long, conflicts_with_all = ["labels", "predictions"])]
        responses: Option<PathBuf>,
        /// Calibration settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Estimate abilities against calibrated items.
    Ability {
        #[arg(long)]
        items: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, conflicts_with_all = ["labels", "predictions"])]
        responses: Option<PathBuf>,
        /// Ability search interval `lo,hi`.
        #[arg(long, allow_hyphen_values = true)]
        theta_bounds: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// True and Total Scores with their ranks.
    Score {
        #[arg(long)]
        items: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, allow_hyphen_values = true)]
        theta_bounds: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Classic metrics with competition ranks; adds IRT scores when items are given.
    Metrics {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        items: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        theta_bounds: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Item characteristic curves split by confusion-matrix cell.
    Iccmc {
        #[arg(long)]
        items: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, allow_hyphen_values = true)]
        theta_bounds: Option<String>,
        /// Ability grid `lo,hi,step`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[command(flatten)]
        out: Out,
    },
    /// Classic metrics without negatively discriminating instances.
    Filter {
        #[arg(long)]
        items: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        out: Out,
    },
    /// Friedman and Nemenyi tests over a score table.
    Compare {
        /// CSV whose first column names the models.
        #[arg(long)]
        table: PathBuf,
        /// Comma-separated columns to compare; defaults to every metric column.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        #[command(flatten)]
        out: Out,
    },
    /// Write a synthetic benchmark.
    Synth {
        /// Fixture settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Full pipeline: calibrate on the prediction population, then score,
    /// dissect, filter and compare the evaluated models.
    Report {
        #[command(flatten)]
        inputs: Inputs,
        /// Held-out models to evaluate; defaults to the prediction population.
        #[arg(long, num_args = 1..)]
        evaluate: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        theta_bounds: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Histogram bins per parameter.
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[command(flatten)]
        out: Out,
    },
}

fn parse_reals(text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Invalid(format!("{what} `{text}` is not a list of numbers")))?;
    if values.len() != n {
        return Err(Error::Invalid(format!(
            "{what} needs {n} comma-separated numbers, got `{text}`"
        )));
    }
    Ok(values)
}

fn theta_bounds(text: Option<&str>, default: (f64, f64)) -> Result<(f64, f64)> {
    match text {
        None => Ok(default),
        Some(t) => {
            let v = parse_reals(t, 2, "--theta-bounds")?;
            Ok((v[0], v[1]))
        }
    }
}

fn grid(text: Option<&str>) -> Result<Vec<f64>> {
    match text {
        None => Ok(default_grid()),
        Some(t) => {
            let v = parse_reals(t, 3, "--grid")?;
            theta_grid(v[0], v[1], v[2])
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<CalibrationConfig> {
    let mut config: CalibrationConfig = match path {
        Some(p) => io::read_json(p)?,
        None => CalibrationConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn timestamp(flag: Option<String>) -> Option<String> {
    flag.or_else(|| {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .filter(|s| !s.is_empty())
    })
}

/// Manifest plus the output directory, written together at the end.
struct Run {
    manifest: Manifest,
    out: PathBuf,
    written: Vec<String>,
}

impl Run {
    fn start(command: &str, out: &Path, stamp: Option<String>) -> Result<Self> {
        let mut manifest = Manifest::new(command);
        manifest.timestamp = stamp;
        Ok(Self {
            manifest,
            out: out.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> Result<PathBuf> {
        io::create_dir(&self.out)?;
        self.written.push(file.to_string());
        Ok(self.out.join(file))
    }

    fn finish(mut self) -> Result<()> {
        for f in &self.written {
            self.manifest.record_output(&self.out, f)?;
        }
        self.manifest.write(&self.out)
    }
}

fn load_items(run: &mut Run, path: &Path) -> Result<Vec<irt_arena::Item>> {
    run.manifest.add_input("items", path)?;
    io::read_items(path)
}

fn load_inputs(run: &mut Run, inputs: &Inputs) -> Result<Loaded> {
    inputs.paths(&[]).load(&mut run.manifest)
}

fn response_matrix(
    run: &mut Run,
    inputs: &Inputs,
    responses: Option<&Path>,
) -> Result<ResponseMatrix> {
    match responses {
        Some(p) => {
            run.manifest.add_input("responses", p)?;
            io::read_response_matrix(p)
        }
        None => {
            let loaded = load_inputs(run, inputs)?;
            build_response_matrix(&loaded.labels, &loaded.population)
        }
    }
}

fn warn_bounds(run: &mut Run, abilities: &[irt_arena::Ability]) {
    for a in abilities.iter().filter(|a| a.at_bound) {
        run.manifest.warn(format!(
            "ability of `{}` is clamped at the search bound {}",
            a.respondent_id,
            io::fmt_float(a.theta)
        ));
    }
}

fn execute(cli: Cli) -> Result<()> {
    let stamp = timestamp(cli.timestamp);
    match cli.command {
        Command::Calibrate {
            inputs,
            responses,
            config,
            seed,
            out,
        } => {
            let mut run = Run::start("calibrate", &out.out, stamp)?;
            if let Some(p) = &config {
                run.manifest.add_input("config", p)?;
            }
            let config = load_config(config.as_deref(), seed)?;
            run.manifest.set_config(&config)?;
            run.manifest.seed = Some(config.seed);
            let matrix = response_matrix(&mut run, &inputs, responses.as_deref())?;
            let result = calibrate_items(&matrix, &config)?;
            warn_calibration(&mut run.manifest, &result);
            io::write_items(&run.path("items.csv")?, &result.items)?;
            let path = run.path("calibration.json")?;
            io::write_json(&path, &calibration_report(&run.manifest, &matrix, &result))?;
            run.finish()
        }
        Command::Ability {
            items,
            inputs,
            responses,
            theta_bounds: tb,
            out,
        } => {
            let mut run = Run::start("ability", &out.out, stamp)?;
            let bounds = theta_bounds(tb.as_deref(), CalibrationConfig::default().ability_bounds)?;
            run.manifest
                .set_config(&serde_json::json!({ "theta_bounds": bounds }))?;
            let items = load_items(&mut run, &items)?;
            let matrix = response_matrix(&mut run, &inputs, responses.as_deref())?;
            let abilities = estimate_abilities(&matrix, &items, bounds)?;
            warn_bounds(&mut run, &abilities);
            io::write_abilities(&run.path("abilities.csv")?, &abilities)?;
            run.finish()
        }
        Command::Score {
            items,
            inputs,
            theta_bounds: tb,
            out,
        } => {
            let mut run = Run::start("score", &out.out, stamp)?;
            let bounds = theta_bounds(tb.as_deref(), CalibrationConfig::default().ability_bounds)?;
            run.manifest
                .set_config(&serde_json::json!({ "theta_bounds": bounds }))?;
            let items = load_items(&mut run, &items)?;
            let loaded = load_inputs(&mut run, &inputs)?;
            let evals = evaluate_models(&loaded.labels, &loaded.population)?;
            let scores = irt_scores(&items, &evals, bounds)?;
            let abilities: Vec<_> = scores.iter().map(|s| s.ability.clone()).collect();
            warn_bounds(&mut run, &abilities);
            io::write_abilities(&run.path("abilities.csv")?, &abilities)?;
            io::write_scores(&run.path("scores.csv")?, &score_rows(&scores)?)?;
            run.finish()
        }
        Command::Metrics {
            inputs,
            items,
            theta_bounds: tb,
            out,
        } => {
            let mut run = Run::start("metrics", &out.out, stamp)?;
            let bounds = theta_bounds(tb.as_deref(), CalibrationConfig::default().ability_bounds)?;
            run.manifest
                .set_config(&serde_json::json!({ "theta_bounds": bounds }))?;
            let items = items.map(|p| load_items(&mut run, &p)).transpose()?;
            let loaded = load_inputs(&mut run, &inputs)?;
            let evals = evaluate_models(&loaded.labels, &loaded.population)?;
            let scores = items
                .map(|it| irt_scores(&it, &evals, bounds))
                .transpose()?;
            let table = metric_table(&evals, scores.as_deref())?;
            for row in &table.rows {
                for m in &row.metrics.degenerate {
                    run.manifest.warn(format!(
                        "model `{}`: {m} has a zero denominator and is reported as 0",
                        row.model_id
                    ));
                }
            }
            io::write_metric_table(&run.path("metrics.csv")?, &table)?;
            run.finish()
        }
        Command::Iccmc {
            items,
            inputs,
            theta_bounds: tb,
            grid: g,
            out,
        } => {
            let mut run = Run::start("iccmc", &out.out, stamp)?;
            let bounds = theta_bounds(tb.as_deref(), CalibrationConfig::default().ability_bounds)?;
            let grid = grid(g.as_deref())?;
            run.manifest.set_config(&serde_json::json!({
                "theta_bounds": bounds,
                "grid": { "lo": grid.first(), "hi": grid.last(), "points": grid.len() },
            }))?;
            let items = load_items(&mut run, &items)?;
            let loaded = load_inputs(&mut run, &inputs)?;
            let evals = evaluate_models(&loaded.labels, &loaded.population)?;
            let scores = irt_scores(&items, &evals, bounds)?;
            let models = iccmc_all(&evals, &items, &scores, &grid)?;
            for m in &models {
                if !m.dropped.is_empty() {
                    run.manifest.warn(format!(
                        "model `{}`: {} instances without calibrated parameters left out of the ICCMC",
                        m.model_id,
                        m.dropped.len()
                    ));
                }
            }
            let path = run.path("iccmc.json")?;
            io::write_json(
                &path,
                &IccmcReport {
                    input_hash: &run.manifest.input_hash,
                    theta_source: THETA_SOURCE,
                    models: &models,
                },
            )?;
            run.finish()
        }
        Command::Filter { items, inputs, out } => {
            let mut run = Run::start("filter", &out.out, stamp)?;
            let items = load_items(&mut run, &items)?;
            let loaded = load_inputs(&mut run, &inputs)?;
            let evals = evaluate_models(&loaded.labels, &loaded.population)?;
            let filter = filter_negative_discrimination(&items);
            let filtered = filtered_evaluations(&evals, &filter)?;
            io::write_metric_table(
                &run.path("filtered_metrics.csv")?,
                &metric_table(&filtered, None)?,
            )?;
            let path = run.path("filter.json")?;
            io::write_json(
                &path,
                &FilterReport {
                    input_hash: &run.manifest.input_hash,
                    removed: &filter.removed,
                    retained: &filter.retained,
                },
            )?;
            run.finish()
        }
        Command::Compare {
            table,
            columns,
            out,
        } => {
            let mut run = Run::start("compare", &out.out, stamp)?;
            run.manifest.add_input("table", &table)?;
            run.manifest
                .set_config(&serde_json::json!({ "columns": columns }))?;
            let st = io::read_score_table(&table, columns.as_deref())?;
            let test = compare(&st)?;
            let path = run.path("comparison.json")?;
            io::write_json(
                &path,
                &ComparisonReport {
                    input_hash: &run.manifest.input_hash,
                    blocks: &st.block_ids,
                    scores: &st.scores,
                    test: &test,
                },
            )?;
            run.finish()
        }
        Command::Synth { config, seed, out } => {
            let mut spec: FixtureSpec = match &config {
                Some(p) => io::read_json(p)?,
                None => FixtureSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            write_fixture(&spec, &out.out, stamp).map(|_| ())
        }
        Command::Report {
            inputs,
            evaluate,
            config,
            seed,
            theta_bounds: tb,
            grid: g,
            bins,
            out,
        } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            cfg.ability_bounds = theta_bounds(tb.as_deref(), cfg.ability_bounds)?;
            let options = ReportOptions {
                config: cfg,
                grid: grid(g.as_deref())?,
                bins,
                timestamp: stamp,
            };
            run_report(
                &inputs.paths(&evaluate),
                config.as_deref(),
                &options,
                &out.out,
            )
            .map(|_| ())
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "{THREADS_VAR} must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body =
                serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
