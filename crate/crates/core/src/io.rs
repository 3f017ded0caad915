//! File formats: the delimited dataset file, the JSON params document, and
//! the report, per-point and sweep tables.
//!
//! Dataset file: a header row, then one row per point. Columns are `id`,
//! `f_<name>` (real feature), optional `truth` (0/1) and `a_<name>`
//! (0/1, empty cell = missing label), in any order.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelMatrix, Standardization};
use crate::error::{Error, Result};
use crate::evaluation::AnnotatorReport;
use crate::model::{AnnotatorParams, GroundTruthParams, ModelParams};
use crate::sweep::SweepResult;
use crate::training::{FitConfig, FitTrace};

pub const PARAMS_VERSION: u32 = 1;

pub const REPORT_HEADER: [&str; 6] = ["annotator", "n_labels", "score", "mean_score", "rank", "is_adversary"];
pub const POINTS_HEADER: [&str; 3] = ["id", "annotator", "conditional_prob"];
pub const SWEEP_HEADER: [&str; 9] = [
    "p_a",
    "n_adversaries",
    "replicate",
    "annotator",
    "is_adversary",
    "score",
    "train_auc",
    "test_auc",
    "status",
];

enum ColumnKind {
    Id,
    Feature(String),
    Truth,
    Annotator(String),
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

/// Parses and validates a dataset file, then z-scores its features.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_error(&e, "header"))?,
        None => return Err(Error::Schema("missing header row".into())),
    };
    let kinds = header
        .iter()
        .map(|name| {
            let name = name.trim();
            if name == "id" {
                Ok(ColumnKind::Id)
            } else if name == "truth" {
                Ok(ColumnKind::Truth)
            } else if let Some(f) = name.strip_prefix("f_").filter(|s| !s.is_empty()) {
                Ok(ColumnKind::Feature(f.to_string()))
            } else if let Some(a) = name.strip_prefix("a_").filter(|s| !s.is_empty()) {
                Ok(ColumnKind::Annotator(a.to_string()))
            } else {
                Err(Error::Schema(format!("unrecognized column '{name}'")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |pred: fn(&ColumnKind) -> bool| kinds.iter().filter(|k| pred(k)).count();
    if count(|k| matches!(k, ColumnKind::Id)) != 1 {
        return Err(Error::Schema("header must contain exactly one 'id' column".into()));
    }
    if count(|k| matches!(k, ColumnKind::Truth)) > 1 {
        return Err(Error::Schema("duplicate 'truth' column".into()));
    }
    let feature_names: Vec<String> = kinds
        .iter()
        .filter_map(|k| if let ColumnKind::Feature(f) = k { Some(f.clone()) } else { None })
        .collect();
    let annotator_names: Vec<String> = kinds
        .iter()
        .filter_map(|k| if let ColumnKind::Annotator(a) = k { Some(a.clone()) } else { None })
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Schema("need at least one f_ feature column".into()));
    }
    if annotator_names.len() < 2 {
        return Err(Error::Schema("need at least two a_ annotator columns".into()));
    }
    for names in [&feature_names, &annotator_names] {
        let mut sorted = names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate column name '{}'", w[0])));
        }
    }
    let has_truth = count(|k| matches!(k, ColumnKind::Truth)) == 1;

    let mut ids = Vec::new();
    let mut raw = Vec::new();
    let mut cells = Vec::new();
    let mut truth = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(&e, "record"))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let mut feats = Vec::with_capacity(feature_names.len());
        let mut labs = Vec::with_capacity(annotator_names.len());
        for (cell, (kind, name)) in rec.iter().zip(kinds.iter().zip(header.iter())) {
            let cell = cell.trim();
            let bad = |message: String| Error::Parse {
                row,
                column: name.trim().to_string(),
                message,
            };
            match kind {
                ColumnKind::Id => ids.push(cell.to_string()),
                ColumnKind::Feature(_) => {
                    let v: f64 = cell.parse().map_err(|_| bad(format!("'{cell}' is not a number")))?;
                    if !v.is_finite() {
                        return Err(bad(format!("'{cell}' is not finite")));
                    }
                    feats.push(v);
                }
                ColumnKind::Truth => truth.push(parse_binary(cell).ok_or_else(|| bad(format!("truth must be 0 or 1, got '{cell}'")))?),
                ColumnKind::Annotator(_) => labs.push(if cell.is_empty() {
                    None
                } else {
                    Some(parse_binary(cell).ok_or_else(|| bad(format!("label must be 0, 1 or empty, got '{cell}'")))?)
                }),
            }
        }
        raw.extend(feats);
        cells.extend(labs);
    }
    let n = ids.len();
    {
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate id '{}'", w[0])));
        }
    }
    let labels = LabelMatrix::new(n, annotator_names.len(), cells)?;
    Dataset::from_raw(ids, feature_names, raw, labels, annotator_names, has_truth.then_some(truth))
}

fn parse_binary(cell: &str) -> Option<bool> {
    match cell {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn csv_error(e: &csv::Error, what: &str) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        row,
        column: what.to_string(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes the raw (unstandardized) features so that loading the file
/// reproduces the dataset.
pub fn write_dataset(dataset: &Dataset<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = csv_io(path);
    let mut header = vec!["id".to_string()];
    header.extend(dataset.feature_names().iter().map(|f| format!("f_{f}")));
    if dataset.truth().is_some() {
        header.push("truth".into());
    }
    header.extend(dataset.annotator_names().iter().map(|a| format!("a_{a}")));
    w.write_record(&header).map_err(&err)?;
    for i in 0..dataset.n_points() {
        let mut rec = vec![dataset.ids()[i].clone()];
        rec.extend(dataset.raw_x(i).iter().map(|v| v.to_string()));
        if let Some(t) = dataset.truth() {
            rec.push(bit(t[i]).into());
        }
        rec.extend(dataset.labels().row(i).iter().map(|y| y.map_or("", bit).to_string()));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Everything stored next to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsMeta {
    pub annotator_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub standardization: Standardization<f64>,
    pub fit_config: FitConfig,
    pub trace: Option<FitTrace>,
}

impl ParamsMeta {
    pub fn for_dataset(dataset: &Dataset<f64>, fit_config: FitConfig, trace: Option<FitTrace>) -> Self {
        ParamsMeta {
            annotator_names: dataset.annotator_names().to_vec(),
            feature_names: dataset.feature_names().to_vec(),
            standardization: dataset.standardization().clone(),
            fit_config,
            trace,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthDoc {
    alpha: Vec<f64>,
    alpha_bias: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotatorDoc {
    name: String,
    w: Vec<f64>,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StandardizationDoc {
    features: Vec<String>,
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsDocument {
    version: u32,
    ground_truth: GroundTruthDoc,
    annotators: Vec<AnnotatorDoc>,
    standardization: StandardizationDoc,
    fit_config: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<FitTrace>,
}

/// Serializes params and metadata as a versioned JSON document. Reals are
/// written in shortest round-trip form, so a reload is bit-exact.
pub fn params_to_string(params: &ModelParams<f64>, meta: &ParamsMeta) -> Result<String> {
    if meta.annotator_names.len() != params.n_annotators() || meta.feature_names.len() != params.n_features() {
        return Err(Error::invalid("metadata does not match the parameter dimensions"));
    }
    if !params.is_finite() {
        return Err(Error::invalid("cannot save non-finite parameters"));
    }
    let doc = ParamsDocument {
        version: PARAMS_VERSION,
        ground_truth: GroundTruthDoc {
            alpha: params.ground_truth.alpha.clone(),
            alpha_bias: params.ground_truth.alpha_bias,
        },
        annotators: params
            .annotators
            .iter()
            .zip(&meta.annotator_names)
            .map(|(a, name)| AnnotatorDoc {
                name: name.clone(),
                w: a.w.clone(),
                b: a.b,
            })
            .collect(),
        standardization: StandardizationDoc {
            features: meta.feature_names.clone(),
            mean: meta.standardization.mean.clone(),
            stddev: meta.standardization.stddev.clone(),
        },
        fit_config: meta.fit_config.clone(),
        trace: meta.trace.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn params_from_str(text: &str) -> Result<(ModelParams<f64>, ParamsMeta)> {
    let json_err = |e: serde_json::Error| Error::Parse {
        row: e.line(),
        column: e.column().to_string(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    match value.get("version") {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(PARAMS_VERSION as u64) => {}
        Some(other) => {
            return Err(Error::Incompatible {
                found: other.to_string(),
                expected: PARAMS_VERSION,
            })
        }
        None => return Err(Error::Schema("params document has no version field".into())),
    }
    let doc: ParamsDocument = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let d = doc.ground_truth.alpha.len();
    let dims_ok = doc.annotators.iter().all(|a| a.w.len() == d)
        && doc.standardization.features.len() == d
        && doc.standardization.mean.len() == d
        && doc.standardization.stddev.len() == d;
    if !dims_ok {
        return Err(Error::Schema("inconsistent feature dimensions in params document".into()));
    }
    let params = ModelParams {
        ground_truth: GroundTruthParams {
            alpha: doc.ground_truth.alpha,
            alpha_bias: doc.ground_truth.alpha_bias,
        },
        annotators: doc
            .annotators
            .iter()
            .map(|a| AnnotatorParams { w: a.w.clone(), b: a.b })
            .collect(),
    };
    let meta = ParamsMeta {
        annotator_names: doc.annotators.into_iter().map(|a| a.name).collect(),
        feature_names: doc.standardization.features,
        standardization: Standardization {
            mean: doc.standardization.mean,
            stddev: doc.standardization.stddev,
        },
        fit_config: doc.fit_config,
        trace: doc.trace,
    };
    Ok((params, meta))
}

pub fn save_params(params: &ModelParams<f64>, meta: &ParamsMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = params_to_string(params, meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(ModelParams<f64>, ParamsMeta)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_str(&text)
}

/// One row per annotator: `annotator,n_labels,score,mean_score,rank,is_adversary`.
/// `is_adversary` is left empty when unknown.
pub fn write_report(reports: &[AnnotatorReport<f64>], is_adversary: Option<&[bool]>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = csv_io(path);
    w.write_record(REPORT_HEADER).map_err(&err)?;
    for r in reports {
        let adv = is_adversary.map_or("", |a| bit(a[r.annotator]));
        w.write_record([
            r.name.clone(),
            r.n_labels.to_string(),
            r.score.to_string(),
            r.mean_score.to_string(),
            r.rank.to_string(),
            adv.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per observed label: `id,annotator,conditional_prob`.
pub fn write_point_conditionals(dataset: &Dataset<f64>, reports: &[AnnotatorReport<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = csv_io(path);
    w.write_record(POINTS_HEADER).map_err(&err)?;
    for r in reports {
        for &(i, lp) in &r.conditional_log_probs {
            w.write_record([dataset.ids()[i].as_str(), r.name.as_str(), &lp.exp().to_string()])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long format, one row per annotator per cell. Failed cells get a single
/// row with empty measurements and the error in `status`.
pub fn write_sweep<W: Write>(sweep: &SweepResult, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for cell in &sweep.cells {
        let coords = [cell.p_a.to_string(), cell.n_adversaries.to_string(), cell.replicate.to_string()];
        match &cell.outcome {
            Ok(o) => {
                for a in &o.annotators {
                    let mut rec = coords.to_vec();
                    rec.extend([
                        a.name.clone(),
                        bit(a.is_adversary).to_string(),
                        a.score.to_string(),
                        opt(o.train_auc),
                        opt(o.test_auc),
                        "ok".to_string(),
                    ]);
                    w.write_record(&rec)?;
                }
            }
            Err(msg) => {
                let mut rec = coords.to_vec();
                rec.extend([String::new(), String::new(), String::new(), String::new(), String::new(), format!("error: {msg}")]);
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_file(sweep: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep(sweep, std::io::BufWriter::new(file)).map_err(csv_io(path))
}
