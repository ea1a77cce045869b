//! CSV and JSON file formats.
//!
//! Floats are written in their shortest round-trip form, so every value
//! reloads bit-for-bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{
    AbilityEstimate, ItemParameters, LabeledInstance, ModelPredictions, ResponseMatrix,
};
use crate::error::{Error, Result};
use crate::evaluation::{Metric, MetricTable};
use crate::stats::ScoreTable;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Header line plus records, each tagged with its 1-based line number.
struct Table {
    header: Vec<String>,
    records: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut header = None;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        match header {
            None => header = Some(fields),
            Some(ref h) => {
                if fields.len() != h.len() {
                    return Err(parse_error(
                        path,
                        line,
                        format!("expected {} fields, found {}", h.len(), fields.len()),
                    ));
                }
                records.push((line, fields));
            }
        }
    }
    let header = header.ok_or_else(|| parse_error(path, 1, "file is empty"))?;
    Ok(Table { header, records })
}

fn expect_header(path: &Path, table: &Table, expected: &[&str]) -> Result<()> {
    if table.header != expected {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                table.header.join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("{what} `{field}` is not a number")))
}

fn parse_bool(path: &Path, line: u64, field: &str) -> Result<bool> {
    match field {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(parse_error(
            path,
            line,
            format!("`{field}` is not a boolean"),
        )),
    }
}

fn check_unique_ids(path: &Path, ids: impl Iterator<Item = (u64, String)>) -> Result<()> {
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    for (line, id) in ids {
        if id.is_empty() {
            return Err(parse_error(path, line, "empty id"));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate instance id `{id}` on lines {first} and {line}"),
            ));
        }
    }
    Ok(())
}

/// Maps label symbols in CSV files onto the binary classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelCodec {
    /// Symbols `0` and `1`.
    Binary,
    /// The named symbol is positive; `negative` is the other symbol seen
    /// in the labels file, if any.
    Named {
        positive: String,
        negative: Option<String>,
    },
}

impl LabelCodec {
    pub fn decode(&self, symbol: &str) -> Option<u8> {
        match self {
            LabelCodec::Binary => match symbol {
                "0" => Some(0),
                "1" => Some(1),
                _ => None,
            },
            LabelCodec::Named { positive, negative } => {
                if symbol == positive {
                    Some(1)
                } else if negative.as_deref() == Some(symbol) {
                    Some(0)
                } else {
                    None
                }
            }
        }
    }

    fn known(&self) -> Vec<String> {
        match self {
            LabelCodec::Binary => vec!["0".into(), "1".into()],
            LabelCodec::Named { positive, negative } => {
                let mut v = vec![positive.clone()];
                v.extend(negative.clone());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub instances: Vec<LabeledInstance>,
    pub codec: LabelCodec,
}

/// Reads `instance_id,label`. With `positive` set, that symbol is class 1
/// and the single other symbol class 0.
pub fn read_labels(path: &Path, positive: Option<&str>) -> Result<LabelSet> {
    let table = read_table(path)?;
    expect_header(path, &table, &["instance_id", "label"])?;
    check_unique_ids(path, table.records.iter().map(|(l, r)| (*l, r[0].clone())))?;
    if table.records.is_empty() {
        return Err(parse_error(path, 1, "no labelled instances"));
    }
    let observed: BTreeSet<&str> = table.records.iter().map(|(_, r)| r[1].as_str()).collect();
    let listing = || observed.iter().copied().collect::<Vec<_>>().join(", ");
    let codec = match positive {
        None => LabelCodec::Binary,
        Some(pos) => {
            let others: Vec<&str> = observed.iter().copied().filter(|s| *s != pos).collect();
            if others.len() > 1 {
                return Err(parse_error(
                    path,
                    1,
                    format!(
                        "more than two label symbols with positive `{pos}`; observed: {}",
                        listing()
                    ),
                ));
            }
            LabelCodec::Named {
                positive: pos.to_string(),
                negative: others.first().map(|s| s.to_string()),
            }
        }
    };
    let instances = table
        .records
        .iter()
        .map(|(line, r)| {
            let label = codec.decode(&r[1]).ok_or_else(|| {
                parse_error(
                    path,
                    *line,
                    format!("unknown label `{}`; observed symbols: {}", r[1], listing()),
                )
            })?;
            Ok(LabeledInstance {
                instance_id: r[0].clone(),
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSet { instances, codec })
}

/// Model id from a prediction file name: the stem of `preds/gb.csv` is `gb`.
pub fn model_id_from_path(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("cannot derive a model id from {}", path.display())))
}

/// Reads `instance_id,prediction`.
pub fn read_predictions(
    path: &Path,
    model_id: Option<&str>,
    codec: &LabelCodec,
) -> Result<ModelPredictions> {
    let table = read_table(path)?;
    expect_header(path, &table, &["instance_id", "prediction"])?;
    check_unique_ids(path, table.records.iter().map(|(l, r)| (*l, r[0].clone())))?;
    let model_id = match model_id {
        Some(id) => id.to_string(),
        None => model_id_from_path(path)?,
    };
    let predictions = table
        .records
        .iter()
        .map(|(line, r)| {
            let label = codec.decode(&r[1]).ok_or_else(|| {
                parse_error(
                    path,
                    *line,
                    format!(
                        "unknown prediction `{}`; known symbols: {}",
                        r[1],
                        codec.known().join(", ")
                    ),
                )
            })?;
            Ok(LabeledInstance {
                instance_id: r[0].clone(),
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelPredictions::new(model_id, predictions))
}

/// Expands directories into their `*.csv` files, sorted by name.
pub fn expand_prediction_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(path.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no prediction files found"));
    }
    Ok(out)
}

/// Loads prediction files, sorted by model id; model ids must be unique.
pub fn read_prediction_set(paths: &[PathBuf], codec: &LabelCodec) -> Result<Vec<ModelPredictions>> {
    let mut models = paths
        .iter()
        .map(|p| read_predictions(p, None, codec))
        .collect::<Result<Vec<_>>>()?;
    models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    if let Some(w) = models.windows(2).find(|w| w[0].model_id == w[1].model_id) {
        return Err(Error::invalid(format!(
            "duplicate model id `{}`",
            w[0].model_id
        )));
    }
    Ok(models)
}

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.writer.write_record(fields)?)
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_labels(path: &Path, labels: &[LabeledInstance]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["instance_id", "label"])?;
    for l in labels {
        out.row([l.instance_id.as_str(), &l.label.to_string()])?;
    }
    out.finish()
}

pub fn write_predictions(path: &Path, model: &ModelPredictions) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["instance_id", "prediction"])?;
    for p in &model.predictions {
        out.row([p.instance_id.as_str(), &p.label.to_string()])?;
    }
    out.finish()
}

/// `respondent_id,<item ids...>` with 0/1 cells.
pub fn write_response_matrix(path: &Path, matrix: &ResponseMatrix) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(std::iter::once("respondent_id").chain(matrix.item_ids().iter().map(String::as_str)))?;
    for (id, row) in matrix.respondent_ids().iter().zip(matrix.rows()) {
        out.row(std::iter::once(id.clone()).chain(row.iter().map(|u| u.to_string())))?;
    }
    out.finish()
}

pub fn read_response_matrix(path: &Path) -> Result<ResponseMatrix> {
    let table = read_table(path)?;
    if table.header.first().map(String::as_str) != Some("respondent_id") {
        return Err(parse_error(path, 1, "first column must be `respondent_id`"));
    }
    let item_ids = table.header[1..].to_vec();
    let mut ids = Vec::with_capacity(table.records.len());
    let mut rows = Vec::with_capacity(table.records.len());
    for (line, r) in &table.records {
        ids.push(r[0].clone());
        let row = r[1..]
            .iter()
            .map(|f| match f.as_str() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(parse_error(
                    path,
                    *line,
                    format!("response `{other}` is not 0 or 1"),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    ResponseMatrix::new(ids, item_ids, rows)
}

pub fn write_items(path: &Path, items: &[ItemParameters<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["item_id", "a", "b", "c", "converged"])?;
    for it in items {
        out.row([
            it.item_id.clone(),
            fmt_float(it.a),
            fmt_float(it.b),
            fmt_float(it.c),
            it.converged.to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_items(path: &Path) -> Result<Vec<ItemParameters<f64>>> {
    let table = read_table(path)?;
    expect_header(path, &table, &["item_id", "a", "b", "c", "converged"])?;
    check_unique_ids(path, table.records.iter().map(|(l, r)| (*l, r[0].clone())))?;
    table
        .records
        .iter()
        .map(|(line, r)| {
            let a = parse_f64(path, *line, &r[1], "a")?;
            let b = parse_f64(path, *line, &r[2], "b")?;
            let c = parse_f64(path, *line, &r[3], "c")?;
            let converged = parse_bool(path, *line, &r[4])?;
            ItemParameters::new(r[0].clone(), a, b, c)
                .map(|it| it.with_converged(converged))
                .map_err(|e| parse_error(path, *line, e.to_string()))
        })
        .collect()
}

pub fn write_abilities(path: &Path, abilities: &[AbilityEstimate<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(["model_id", "theta", "at_bound"])?;
    for a in abilities {
        out.row([
            a.respondent_id.clone(),
            fmt_float(a.theta),
            a.at_bound.to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_abilities(path: &Path) -> Result<Vec<AbilityEstimate<f64>>> {
    let table = read_table(path)?;
    expect_header(path, &table, &["model_id", "theta", "at_bound"])?;
    table
        .records
        .iter()
        .map(|(line, r)| {
            Ok(AbilityEstimate {
                respondent_id: r[0].clone(),
                theta: parse_f64(path, *line, &r[1], "theta")?,
                at_bound: parse_bool(path, *line, &r[2])?,
            })
        })
        .collect()
}

/// One row of the scores table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub model_id: String,
    pub true_score: f64,
    pub total_score: f64,
    pub true_rank: usize,
    pub total_rank: usize,
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row([
        "model_id",
        "true_score",
        "total_score",
        "true_rank",
        "total_rank",
    ])?;
    for r in rows {
        out.row([
            r.model_id.clone(),
            fmt_float(r.true_score),
            fmt_float(r.total_score),
            r.true_rank.to_string(),
            r.total_rank.to_string(),
        ])?;
    }
    out.finish()
}

/// Counts, every metric available for all models with its competition
/// rank, and the degenerate-metric flags.
pub fn write_metric_table(path: &Path, table: &MetricTable<f64>) -> Result<()> {
    let metrics = table.available_metrics();
    let ranks = metrics
        .iter()
        .map(|&m| table.ranks(m))
        .collect::<Result<Vec<_>>>()?;
    let mut out = CsvOut::create(path)?;
    let mut header: Vec<String> = ["model_id", "tp", "fp", "fn", "tn"]
        .map(String::from)
        .to_vec();
    for m in &metrics {
        header.push(m.name().to_string());
        header.push(format!("{}_rank", m.name()));
    }
    header.push("degenerate".into());
    out.row(&header)?;
    for (k, row) in table.rows.iter().enumerate() {
        let c = row.counts;
        let mut fields = vec![
            row.model_id.clone(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ];
        for (m, r) in metrics.iter().zip(&ranks) {
            fields.push(fmt_float(row.value(*m).expect("available metric")));
            fields.push(r[k].to_string());
        }
        let flags: Vec<&str> = row.metrics.degenerate.iter().map(|m| m.name()).collect();
        fields.push(flags.join(";"));
        out.row(&fields)?;
    }
    out.finish()
}

/// Reads a score table whose first column names the blocks. Uses the
/// listed columns, or else every column named after a metric.
pub fn read_score_table(path: &Path, columns: Option<&[String]>) -> Result<ScoreTable> {
    let table = read_table(path)?;
    let names: Vec<String> = match columns {
        Some(cols) => cols.to_vec(),
        None => table.header[1..]
            .iter()
            .filter(|h| Metric::ALL.iter().any(|m| m.name() == h.as_str()))
            .cloned()
            .collect(),
    };
    if names.is_empty() {
        return Err(parse_error(path, 1, "no score columns found"));
    }
    let positions = names
        .iter()
        .map(|n| {
            table.header[1..]
                .iter()
                .position(|h| h == n)
                .map(|p| p + 1)
                .ok_or_else(|| parse_error(path, 1, format!("column `{n}` not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::new();
    let mut scores = Vec::new();
    for (line, r) in &table.records {
        blocks.push(r[0].clone());
        scores.push(
            positions
                .iter()
                .map(|&p| parse_f64(path, *line, &r[p], &table.header[p]))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    ScoreTable::new(blocks, names, scores)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.to_string()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0, -2.5, 1e-300, 0.1 + 0.2, f64::MAX, 123456789.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(0.25), "0.25");
    }

    #[test]
    fn labels_with_symbols() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "labels.csv",
            "instance_id,label\na,present\nb,absent\n",
        );
        let set = read_labels(&p, Some("present")).unwrap();
        assert_eq!(set.instances[0].label, 1);
        assert_eq!(set.instances[1].label, 0);
        let err = read_labels(&p, None).unwrap_err().to_string();
        assert!(err.contains("absent, present"), "{err}");
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "labels.csv",
            "instance_id,label\nx,1\ny,0\nx,0\n",
        );
        let err = read_labels(&p, None).unwrap_err().to_string();
        assert!(
            err.contains("`x`") && err.contains("lines 2 and 4"),
            "{err}"
        );
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "labels.csv", "instance_id,label\nx,1\ny\n");
        match read_labels(&p, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let p = write(dir.path(), "bad.csv", "id,label\nx,1\n");
        assert!(read_labels(&p, None).is_err());
    }

    #[test]
    fn predictions_take_model_id_from_file_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gb.csv", "instance_id,prediction\nx,1\ny,0\n");
        let m = read_predictions(&p, None, &LabelCodec::Binary).unwrap();
        assert_eq!(m.model_id, "gb");
        let m = read_predictions(&p, Some("other"), &LabelCodec::Binary).unwrap();
        assert_eq!(m.model_id, "other");
        let bad = write(dir.path(), "bad.csv", "instance_id,prediction\nx,2\n");
        assert!(read_predictions(&bad, None, &LabelCodec::Binary).is_err());
    }

    #[test]
    fn directories_expand_sorted() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.csv", "instance_id,prediction\nx,1\n");
        write(dir.path(), "a.csv", "instance_id,prediction\nx,0\n");
        write(dir.path(), "notes.txt", "ignored");
        let files = expand_prediction_paths(&[dir.path().to_path_buf()]).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap())
            .collect();
        assert_eq!(names, vec!["a.csv", "b.csv"]);
        let set = read_prediction_set(&files, &LabelCodec::Binary).unwrap();
        assert_eq!(set[0].model_id, "a");
    }

    #[test]
    fn response_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ResponseMatrix::new(
            vec!["r1".into(), "r2".into()],
            vec!["i1".into(), "i2".into(), "i3".into()],
            vec![vec![1, 0, 1], vec![0, 0, 1]],
        )
        .unwrap();
        let p = dir.path().join("responses.csv");
        write_response_matrix(&p, &m).unwrap();
        assert_eq!(read_response_matrix(&p).unwrap(), m);
    }

    #[test]
    fn score_table_from_metric_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "model_id,accuracy,accuracy_rank,f1,recall\na,0.8,1,0.7,0.6\nb,0.7,2,0.75,0.65\n",
        );
        let t = read_score_table(&p, None).unwrap();
        assert_eq!(t.treatments, vec!["accuracy", "f1", "recall"]);
        assert_eq!(t.scores[1], vec![0.7, 0.75, 0.65]);
        let cols = vec!["f1".to_string(), "missing".to_string()];
        assert!(read_score_table(&p, Some(&cols)).is_err());
    }
}
