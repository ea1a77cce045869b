//! End-to-end steps behind the command-line tool: load inputs, calibrate,
//! score, dissect, filter, compare, and write every artifact together with a
//! run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calibration::{
    calibrate_items, estimate_ability, CalibrationConfig, CalibrationResult, ExcludedItem,
};
use crate::data::{
    build_response_matrix, join_outcomes, AbilityEstimate, BinaryOutcome, ConfusionPartition,
    ItemParameters, LabeledInstance, ModelPredictions, ResponseMatrix,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    competition_ranks, confusion_counts, filter_negative_discrimination, filter_outcomes,
    iccmc_summaries, metrics_from_counts, parameter_distributions, ClassicMetrics, ConfusionCounts,
    DiscriminationFilter, Iccmc, Metric, MetricRow, MetricTable, ParameterDistributions,
};
use crate::io::{self, LabelCodec, ScoreRow};
use crate::irt::score_pair;
use crate::stats::{compare, ScoreTable, TestReport};
use crate::synthesis::{generate_fixture, predictions_from_responses, FixtureSpec, GENERATOR_ID};

pub const TOOL_NAME: &str = "irt-arena";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBalance {
    pub n_instances: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub positive_fraction: f64,
    pub negative_fraction: f64,
    /// Positive and negative shares, e.g. `44.4%/55.6%`.
    pub summary: String,
}

impl ClassBalance {
    pub fn of(labels: &[LabeledInstance]) -> Self {
        let n = labels.len();
        let pos = labels.iter().filter(|l| l.label == 1).count();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            n_instances: n,
            n_positive: pos,
            n_negative: n - pos,
            positive_fraction: frac(pos),
            negative_fraction: frac(n - pos),
            summary: format!("{:.1}%/{:.1}%", 100.0 * frac(pos), 100.0 * frac(n - pos)),
        }
    }
}

/// Provenance of one run: inputs with digests, configuration and warnings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputRecord>,
    /// Digest over input roles and contents; cited by every JSON report.
    pub input_hash: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_balance: Option<ClassBalance>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self {
            tool: TOOL_NAME.into(),
            version: VERSION.into(),
            command: command.into(),
            inputs: Vec::new(),
            input_hash: String::new(),
            config: serde_json::Value::Null,
            seed: None,
            generator: None,
            timestamp: None,
            class_balance: None,
            warnings: Vec::new(),
            outputs: Vec::new(),
        };
        m.rehash();
        m
    }

    fn rehash(&mut self) {
        let text: String = self
            .inputs
            .iter()
            .map(|i| format!("{}:{}\n", i.role, i.sha256))
            .collect();
        self.input_hash = io::sha256_hex(text.as_bytes());
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = io::sha256_file(path)?;
        self.inputs.push(InputRecord {
            role: role.into(),
            path: path.display().to_string(),
            sha256,
        });
        self.rehash();
        Ok(())
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.config = serde_json::to_value(config)?;
        Ok(())
    }

    /// Records a warning once; repeats are ignored.
    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }

    pub fn record_output(&mut self, out_dir: &Path, file: &str) -> Result<()> {
        let sha256 = io::sha256_file(&out_dir.join(file))?;
        self.outputs.push(OutputRecord {
            file: file.into(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        io::write_json(&out_dir.join("manifest.json"), self)
    }
}

/// Labels, the population that calibrates the items, and the models to
/// evaluate.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub labels: Option<PathBuf>,
    pub positive_label: Option<String>,
    pub predictions: Vec<PathBuf>,
    /// Held-out models; when empty the prediction models are evaluated.
    pub evaluate: Vec<PathBuf>,
}

pub struct Loaded {
    pub labels: Vec<LabeledInstance>,
    pub codec: LabelCodec,
    pub population: Vec<ModelPredictions>,
    pub evaluated: Vec<ModelPredictions>,
}

impl InputPaths {
    pub fn load(&self, manifest: &mut Manifest) -> Result<Loaded> {
        let labels_path = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("--labels is required"))?;
        manifest.add_input("labels", labels_path)?;
        let set = io::read_labels(labels_path, self.positive_label.as_deref())?;
        manifest.class_balance = Some(ClassBalance::of(&set.instances));
        if self.predictions.is_empty() {
            return Err(Error::invalid("--predictions is required"));
        }
        let load = |paths: &[PathBuf],
                    role: &str,
                    manifest: &mut Manifest|
         -> Result<Vec<ModelPredictions>> {
            let files = io::expand_prediction_paths(paths)?;
            for f in &files {
                manifest.add_input(role, f)?;
            }
            io::read_prediction_set(&files, &set.codec)
        };
        let population = load(&self.predictions, "predictions", manifest)?;
        let evaluated = if self.evaluate.is_empty() {
            population.clone()
        } else {
            load(&self.evaluate, "evaluate", manifest)?
        };
        Ok(Loaded {
            labels: set.instances,
            codec: set.codec,
            population,
            evaluated,
        })
    }
}

/// Hard-prediction outcomes of one model with its classic metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcomes {
    pub model_id: String,
    pub outcomes: Vec<BinaryOutcome>,
    pub counts: ConfusionCounts,
    pub metrics: ClassicMetrics<f64>,
}

pub fn evaluate_models(
    truth: &[LabeledInstance],
    models: &[ModelPredictions],
) -> Result<Vec<ModelOutcomes>> {
    models
        .iter()
        .map(|m| {
            let outcomes = join_outcomes(truth, m)?;
            let counts = confusion_counts(&outcomes)?;
            Ok(ModelOutcomes {
                model_id: m.model_id.clone(),
                metrics: metrics_from_counts(&counts)?,
                outcomes,
                counts,
            })
        })
        .collect()
}

fn warn_degenerate(manifest: &mut Manifest, evals: &[ModelOutcomes], context: &str) {
    for e in evals {
        for m in &e.metrics.degenerate {
            manifest.warn(format!(
                "model `{}`: {m}{context} has a zero denominator and is reported as 0",
                e.model_id
            ));
        }
    }
}

/// Ability and IRT scores of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrtScores {
    pub ability: AbilityEstimate<f64>,
    /// Normalized by the number of scored items.
    pub true_score: f64,
    pub total_score: f64,
    pub n_items: usize,
    pub n_errors: usize,
}

/// Responses of a model on `items`, in item order.
fn responses_on(items: &[ItemParameters<f64>], model: &ModelOutcomes) -> Result<Vec<u8>> {
    let correct: BTreeMap<&str, bool> = model
        .outcomes
        .iter()
        .map(|o| (o.instance_id.as_str(), o.is_correct()))
        .collect();
    items
        .iter()
        .map(|it| {
            correct
                .get(it.item_id.as_str())
                .map(|&c| c as u8)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "model `{}` has no outcome for item `{}`",
                        model.model_id, it.item_id
                    ))
                })
        })
        .collect()
}

pub fn irt_scores(
    items: &[ItemParameters<f64>],
    models: &[ModelOutcomes],
    bounds: (f64, f64),
) -> Result<Vec<IrtScores>> {
    use rayon::prelude::*;
    models
        .par_iter()
        .map(|m| {
            let responses = responses_on(items, m)?;
            let ability = estimate_ability(&m.model_id, &responses, items, bounds)?;
            let pair = score_pair(ability.theta, items, &responses, true)?;
            Ok(IrtScores {
                n_errors: responses.iter().filter(|&&u| u == 0).count(),
                n_items: items.len(),
                true_score: pair.true_score,
                total_score: pair.total_score,
                ability,
            })
        })
        .collect()
}

fn warn_bounds(manifest: &mut Manifest, abilities: &[AbilityEstimate<f64>]) {
    for a in abilities.iter().filter(|a| a.at_bound) {
        manifest.warn(format!(
            "ability of `{}` is clamped at the search bound {}",
            a.respondent_id,
            io::fmt_float(a.theta)
        ));
    }
}

pub fn score_rows(scores: &[IrtScores]) -> Result<Vec<ScoreRow>> {
    let t: Vec<f64> = scores.iter().map(|s| s.true_score).collect();
    let g: Vec<f64> = scores.iter().map(|s| s.total_score).collect();
    let tr = competition_ranks(&t)?;
    let gr = competition_ranks(&g)?;
    Ok(scores
        .iter()
        .enumerate()
        .map(|(k, s)| ScoreRow {
            model_id: s.ability.respondent_id.clone(),
            true_score: s.true_score,
            total_score: s.total_score,
            true_rank: tr[k],
            total_rank: gr[k],
        })
        .collect())
}

pub fn metric_table(
    evals: &[ModelOutcomes],
    scores: Option<&[IrtScores]>,
) -> Result<MetricTable<f64>> {
    let by_id: BTreeMap<&str, &IrtScores> = scores
        .unwrap_or_default()
        .iter()
        .map(|s| (s.ability.respondent_id.as_str(), s))
        .collect();
    MetricTable::new(
        evals
            .iter()
            .map(|e| {
                let s = by_id.get(e.model_id.as_str());
                MetricRow {
                    model_id: e.model_id.clone(),
                    counts: e.counts,
                    metrics: e.metrics.clone(),
                    true_score: s.map(|s| s.true_score),
                    total_score: s.map(|s| s.total_score),
                }
            })
            .collect(),
    )
}

/// Classic metrics recomputed without negatively discriminating instances.
pub fn filtered_evaluations(
    evals: &[ModelOutcomes],
    filter: &DiscriminationFilter,
) -> Result<Vec<ModelOutcomes>> {
    evals
        .iter()
        .map(|e| {
            let outcomes = filter_outcomes(&e.outcomes, filter);
            let counts = confusion_counts(&outcomes).map_err(|_| {
                Error::invalid(format!(
                    "filtering removes every instance of model `{}`",
                    e.model_id
                ))
            })?;
            Ok(ModelOutcomes {
                model_id: e.model_id.clone(),
                metrics: metrics_from_counts(&counts)?,
                outcomes,
                counts,
            })
        })
        .collect()
}

/// Score table with blocks = models and treatments = the eight metrics.
pub fn comparison_table(table: &MetricTable<f64>) -> Result<ScoreTable> {
    let treatments: Vec<String> = Metric::ALL.iter().map(|m| m.name().to_string()).collect();
    let columns = Metric::ALL
        .iter()
        .map(|&m| table.column(m))
        .collect::<Result<Vec<_>>>()?;
    let scores = (0..table.rows.len())
        .map(|r| columns.iter().map(|c| c[r]).collect())
        .collect();
    ScoreTable::new(
        table.rows.iter().map(|r| r.model_id.clone()).collect(),
        treatments,
        scores,
    )
}

pub fn iccmc_all(
    evals: &[ModelOutcomes],
    items: &[ItemParameters<f64>],
    scores: &[IrtScores],
    grid: &[f64],
) -> Result<Vec<Iccmc<f64>>> {
    evals
        .iter()
        .zip(scores)
        .map(|(e, s)| {
            debug_assert_eq!(e.model_id, s.ability.respondent_id);
            let partition = ConfusionPartition::from_outcomes(&e.outcomes)?;
            iccmc_summaries(&partition, items, &s.ability, grid)
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct CalibrationReport<'a> {
    pub input_hash: &'a str,
    pub n_respondents: usize,
    pub n_items: usize,
    pub log_likelihood: f64,
    pub log_likelihood_trace: &'a [f64],
    pub iterations_used: usize,
    pub converged: bool,
    pub excluded_items: &'a [ExcludedItem],
}

#[derive(Debug, Serialize)]
pub struct IccmcReport<'a> {
    pub input_hash: &'a str,
    /// Ability at which mean information is evaluated.
    pub theta_source: &'a str,
    pub models: &'a [Iccmc<f64>],
}

#[derive(Debug, Serialize)]
pub struct FilterReport<'a> {
    pub input_hash: &'a str,
    pub removed: &'a BTreeSet<String>,
    pub retained: &'a BTreeSet<String>,
}

#[derive(Debug, Serialize)]
pub struct ComparisonReport<'a> {
    pub input_hash: &'a str,
    pub blocks: &'a [String],
    pub scores: &'a [Vec<f64>],
    #[serde(flatten)]
    pub test: &'a TestReport,
}

#[derive(Debug, Serialize)]
pub struct DistributionsReport<'a> {
    pub input_hash: &'a str,
    #[serde(flatten)]
    pub distributions: &'a ParameterDistributions<f64>,
}

pub fn warn_calibration(manifest: &mut Manifest, result: &CalibrationResult) {
    for ex in &result.excluded_items {
        manifest.warn(format!("item `{}` excluded: {}", ex.item_id, ex.reason));
    }
    if !result.converged {
        manifest.warn(format!(
            "calibration stopped after {} EM iterations without meeting the tolerance",
            result.iterations_used
        ));
    }
}

pub fn calibration_report<'a>(
    manifest: &'a Manifest,
    matrix: &ResponseMatrix,
    r: &'a CalibrationResult,
) -> CalibrationReport<'a> {
    CalibrationReport {
        input_hash: &manifest.input_hash,
        n_respondents: matrix.n_respondents(),
        n_items: matrix.n_items(),
        log_likelihood: r.log_likelihood,
        log_likelihood_trace: &r.log_likelihood_trace,
        iterations_used: r.iterations_used,
        converged: r.converged,
        excluded_items: &r.excluded_items,
    }
}

/// Settings of a full report run.
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub config: CalibrationConfig,
    pub grid: Vec<f64>,
    pub bins: usize,
    pub timestamp: Option<String>,
}

pub const THETA_SOURCE: &str = "estimated ability of each model";

/// Runs the whole pipeline and writes every artifact into `out`.
pub fn run_report(
    inputs: &InputPaths,
    config_path: Option<&Path>,
    options: &ReportOptions,
    out: &Path,
) -> Result<Manifest> {
    options.config.validate()?;
    let mut manifest = Manifest::new("report");
    manifest.timestamp = options.timestamp.clone();
    if let Some(p) = config_path {
        manifest.add_input("config", p)?;
    }
    manifest.set_config(&serde_json::json!({
        "calibration": options.config,
        "grid": { "lo": options.grid.first(), "hi": options.grid.last(), "points": options.grid.len() },
        "bins": options.bins,
    }))?;
    manifest.seed = Some(options.config.seed);
    let loaded = inputs.load(&mut manifest)?;
    io::create_dir(out)?;

    let matrix = build_response_matrix(&loaded.labels, &loaded.population)?;
    let calibration = calibrate_items(&matrix, &options.config)?;
    warn_calibration(&mut manifest, &calibration);
    let items = &calibration.items;
    let mut written = Vec::new();

    io::write_items(&out.join("items.csv"), items)?;
    written.push("items.csv");
    io::write_json(
        &out.join("calibration.json"),
        &calibration_report(&manifest, &matrix, &calibration),
    )?;
    written.push("calibration.json");

    let evals = evaluate_models(&loaded.labels, &loaded.evaluated)?;
    warn_degenerate(&mut manifest, &evals, "");
    let scores = irt_scores(items, &evals, options.config.ability_bounds)?;
    let abilities: Vec<AbilityEstimate<f64>> = scores.iter().map(|s| s.ability.clone()).collect();
    warn_bounds(&mut manifest, &abilities);
    io::write_abilities(&out.join("abilities.csv"), &abilities)?;
    written.push("abilities.csv");
    io::write_scores(&out.join("scores.csv"), &score_rows(&scores)?)?;
    written.push("scores.csv");

    let table = metric_table(&evals, Some(&scores))?;
    io::write_metric_table(&out.join("metrics.csv"), &table)?;
    written.push("metrics.csv");

    let iccmc = iccmc_all(&evals, items, &scores, &options.grid)?;
    for m in &iccmc {
        if !m.dropped.is_empty() {
            manifest.warn(format!(
                "model `{}`: {} instances without calibrated parameters left out of the ICCMC",
                m.model_id,
                m.dropped.len()
            ));
        }
    }
    io::write_json(
        &out.join("iccmc.json"),
        &IccmcReport {
            input_hash: &manifest.input_hash,
            theta_source: THETA_SOURCE,
            models: &iccmc,
        },
    )?;
    written.push("iccmc.json");

    let filter = filter_negative_discrimination(items);
    if !filter.removed.is_empty() {
        manifest.warn(format!(
            "{} items with negative discrimination removed for the filtered metrics",
            filter.removed.len()
        ));
    }
    let filtered = filtered_evaluations(&evals, &filter)?;
    warn_degenerate(&mut manifest, &filtered, " (filtered)");
    io::write_metric_table(
        &out.join("filtered_metrics.csv"),
        &metric_table(&filtered, None)?,
    )?;
    written.push("filtered_metrics.csv");
    io::write_json(
        &out.join("filter.json"),
        &FilterReport {
            input_hash: &manifest.input_hash,
            removed: &filter.removed,
            retained: &filter.retained,
        },
    )?;
    written.push("filter.json");

    if evals.len() >= 2 {
        let st = comparison_table(&table)?;
        let test = compare(&st)?;
        if test.friedman.degenerate {
            manifest.warn("all metrics tie within every model; the Friedman statistic is 0");
        }
        io::write_json(
            &out.join("comparison.json"),
            &ComparisonReport {
                input_hash: &manifest.input_hash,
                blocks: &st.block_ids,
                scores: &st.scores,
                test: &test,
            },
        )?;
        written.push("comparison.json");
    } else {
        manifest.warn("fewer than two evaluated models; statistical comparison skipped");
    }

    let dist = parameter_distributions(items, &loaded.labels, options.bins)?;
    io::write_json(
        &out.join("distributions.json"),
        &DistributionsReport {
            input_hash: &manifest.input_hash,
            distributions: &dist,
        },
    )?;
    written.push("distributions.json");

    for f in written {
        manifest.record_output(out, f)?;
    }
    manifest.write(out)?;
    Ok(manifest)
}

/// Writes a synthetic benchmark: labels, population and held-out
/// predictions, the population response matrix and the true parameters.
pub fn write_fixture(
    spec: &FixtureSpec,
    out: &Path,
    timestamp: Option<String>,
) -> Result<Manifest> {
    let mut manifest = Manifest::new("synth");
    manifest.timestamp = timestamp;
    manifest.set_config(spec)?;
    manifest.seed = Some(spec.seed);
    manifest.generator = Some(GENERATOR_ID.into());
    let fixture = generate_fixture(spec)?;
    manifest.class_balance = Some(ClassBalance::of(&fixture.labels));

    io::create_dir(out)?;
    let mut written: Vec<String> = Vec::new();
    io::write_labels(&out.join("labels.csv"), &fixture.labels)?;
    written.push("labels.csv".into());
    for (dir, pop) in [
        ("predictions", &fixture.population),
        ("heldout", &fixture.heldout),
    ] {
        io::create_dir(&out.join(dir))?;
        for model in predictions_from_responses(&fixture.labels, &pop.matrix)? {
            let file = format!("{dir}/{}.csv", model.model_id);
            io::write_predictions(&out.join(&file), &model)?;
            written.push(file);
        }
    }
    io::write_response_matrix(&out.join("responses.csv"), &fixture.population.matrix)?;
    written.push("responses.csv".into());
    io::write_items(&out.join("true_items.csv"), &fixture.items)?;
    written.push("true_items.csv".into());
    let truth: Vec<AbilityEstimate<f64>> = [&fixture.population, &fixture.heldout]
        .iter()
        .flat_map(|p| {
            p.matrix
                .respondent_ids()
                .iter()
                .zip(&p.abilities)
                .map(|(id, &theta)| AbilityEstimate {
                    respondent_id: id.clone(),
                    theta,
                    at_bound: false,
                })
        })
        .collect();
    io::write_abilities(&out.join("true_abilities.csv"), &truth)?;
    written.push("true_abilities.csv".into());

    for f in &written {
        manifest.record_output(out, f)?;
    }
    manifest.write(out)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_balance_summary() {
        let labels: Vec<LabeledInstance> = (0..81)
            .map(|k| LabeledInstance::new(format!("i{k}"), (k < 36) as i64).unwrap())
            .collect();
        let b = ClassBalance::of(&labels);
        assert_eq!(b.summary, "44.4%/55.6%");
        assert_eq!((b.n_positive, b.n_negative), (36, 45));
    }

    #[test]
    fn warnings_are_recorded_once() {
        let mut m = Manifest::new("test");
        m.warn("x");
        m.warn("y");
        m.warn("x");
        assert_eq!(m.warnings, vec!["x", "y"]);
    }

    #[test]
    fn input_hash_ignores_location() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        std::fs::write(&a, "instance_id,label\nx,1\n").unwrap();
        std::fs::write(&b, "instance_id,label\nx,1\n").unwrap();
        let mut m1 = Manifest::new("t");
        let mut m2 = Manifest::new("t");
        m1.add_input("labels", &a).unwrap();
        m2.add_input("labels", &b).unwrap();
        assert_eq!(m1.input_hash, m2.input_hash);
        assert_ne!(m1.input_hash, Manifest::new("t").input_hash);
    }
}
