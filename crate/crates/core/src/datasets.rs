//! Labelled data: ingestion, splitting, scaling, synthetic generators, and
//! evaluation of a trained population.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::agents::AgentParams;
use crate::error::{Error, Result};
use crate::lmsr::AssetSide;
use crate::market::{classify, final_price_estimate, run_event_driven, MarketConfig};
use crate::rng::{self, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    /// Row-major feature matrix.
    pub features: Vec<Vec<S>>,
    pub labels: Vec<AssetSide>,
    pub feature_names: Vec<String>,
    /// Scaling applied to `features`, if any.
    pub normalization: Option<MinMax<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Vec<Vec<S>>, labels: Vec<AssetSide>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dataset(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!(
                    "row {i} contains a non-finite value"
                )));
            }
        }
        let feature_names = (0..dim).map(|j| format!("x{j}")).collect();
        Ok(Self {
            features,
            labels,
            feature_names,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features
            .first()
            .map_or(self.feature_names.len(), Vec::len)
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self
            .labels
            .iter()
            .filter(|l| **l == AssetSide::Asset1)
            .count();
        [self.len() - ones, ones]
    }

    /// Most frequent label; ties go to `Asset0`.
    pub fn majority(&self) -> AssetSide {
        let [zeros, ones] = self.class_counts();
        if ones > zeros {
            AssetSide::Asset1
        } else {
            AssetSide::Asset0
        }
    }

    fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }
}

/// How raw label cells map to classes. Cells in `positive` become class 1.
/// With `negative` given, cells in neither set are rejected; otherwise every
/// other value is class 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub positive: Vec<String>,
    pub negative: Option<Vec<String>>,
}

impl LabelMap {
    pub fn positive<I: IntoIterator<Item = T>, T: Into<String>>(values: I) -> Self {
        Self {
            positive: values.into_iter().map(Into::into).collect(),
            negative: None,
        }
    }

    fn matches(set: &[String], cell: &str) -> bool {
        set.iter().any(|v| {
            v == cell || matches!((v.parse::<f64>(), cell.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
        })
    }

    fn map(&self, cell: &str) -> Option<AssetSide> {
        if Self::matches(&self.positive, cell) {
            Some(AssetSide::Asset1)
        } else {
            match &self.negative {
                Some(neg) if !Self::matches(neg, cell) => None,
                _ => Some(AssetSide::Asset0),
            }
        }
    }
}

const MISSING: [&str; 4] = ["", "?", "NA", "NaN"];

/// Loads a headed CSV. Every column other than `label_column` must be
/// numeric; rows with missing cells are rejected.
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    label_column: &str,
    labels: &LabelMap,
) -> Result<Dataset<S>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Dataset(format!(
                "{}: no column named `{label_column}` (columns: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut classes = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let parse_err = |column: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        if record.len() != headers.len() {
            return Err(parse_err(
                "*",
                format!("expected {} cells, found {}", headers.len(), record.len()),
            ));
        }
        let mut x = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            let name = &headers[j];
            if MISSING.contains(&cell) {
                return Err(parse_err(name, "missing value".into()));
            }
            if j == label_idx {
                let side = labels
                    .map(cell)
                    .ok_or_else(|| parse_err(name, format!("unknown label value `{cell}`")))?;
                classes.push(side);
            } else {
                let v = cell
                    .parse::<f64>()
                    .map_err(|_| parse_err(name, format!("`{cell}` is not numeric")))?;
                if !v.is_finite() {
                    return Err(parse_err(name, format!("`{cell}` is not finite")));
                }
                x.push(S::lit(v));
            }
        }
        features.push(x);
    }

    let mut data = Dataset::new(features, classes)?;
    data.feature_names = feature_names;
    let [zeros, ones] = data.class_counts();
    if ones == 0 {
        return Err(Error::Dataset(format!(
            "{}: no row of `{label_column}` matches the positive values {:?}",
            path.display(),
            labels.positive
        )));
    }
    if zeros == 0 {
        return Err(Error::Dataset(format!(
            "{}: every row is positive",
            path.display()
        )));
    }
    Ok(data)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
        other => Error::Dataset(format!("{}: {other:?}", path.display())),
    }
}

/// Number of test rows for `m` rows: `ceil(m * test_fraction)`.
pub fn test_size(m: usize, test_fraction: f64) -> usize {
    // the epsilon absorbs representation error such as 0.2 * 300 = 60.000000000000007
    ((m as f64 * test_fraction) - 1e-9).ceil().max(0.0) as usize
}

/// Random train/test split without replacement. Both partitions must contain
/// both classes.
pub fn split<S: Scalar, R: Rng + ?Sized>(
    data: &Dataset<S>,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let m = data.len();
    let n_test = test_size(m, test_fraction);
    if n_test == 0 || n_test >= m {
        return Err(Error::Dataset(format!(
            "a test fraction of {test_fraction} leaves an empty partition of {m} rows"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let (test_idx, train_idx) = idx.split_at_mut(n_test);
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let train = data.subset(train_idx);
    let test = data.subset(test_idx);
    for (name, part) in [("training", &train), ("test", &test)] {
        if part.class_counts().contains(&0) {
            return Err(Error::Dataset(format!(
                "the {name} partition lacks a class; try a different seed"
            )));
        }
    }
    Ok((train, test))
}

/// Per-feature min-max scaling fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMax<S> {
    pub min: Vec<S>,
    pub max: Vec<S>,
    /// Columns with `max == min`; these map to zero.
    pub constant: Vec<bool>,
}

impl<S: Scalar> MinMax<S> {
    pub fn fit(features: &[Vec<S>]) -> Self {
        let dim = features.first().map_or(0, Vec::len);
        let mut min = vec![S::infinity(); dim];
        let mut max = vec![S::neg_infinity(); dim];
        for row in features {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let constant = min.iter().zip(&max).map(|(a, b)| !(b > a)).collect();
        Self { min, max, constant }
    }

    pub fn apply_row(&self, row: &[S]) -> Vec<S> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    S::zero()
                } else {
                    (v - self.min[j]) / (self.max[j] - self.min[j])
                }
            })
            .collect()
    }
}

/// Scales `train` into `[0, 1]` per feature and returns the fitted transform.
pub fn normalize<S: Scalar>(train: &Dataset<S>) -> (Dataset<S>, MinMax<S>) {
    let transform = MinMax::fit(&train.features);
    (apply_transform(train, &transform), transform)
}

/// Applies a transform fitted elsewhere. Values outside the fitted range map
/// outside `[0, 1]`.
pub fn apply_transform<S: Scalar>(data: &Dataset<S>, transform: &MinMax<S>) -> Dataset<S> {
    Dataset {
        features: data
            .features
            .iter()
            .map(|r| transform.apply_row(r))
            .collect(),
        labels: data.labels.clone(),
        feature_names: data.feature_names.clone(),
        normalization: Some(transform.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec<S> {
    pub center: Vec<S>,
    pub radius: S,
    pub count: usize,
    pub label: AssetSide,
}

/// Uniform samples from a union of labelled balls.
pub fn synth_clusters<S: Scalar, R: Rng + ?Sized>(
    specs: &[ClusterSpec<S>],
    rng: &mut R,
) -> Result<Dataset<S>> {
    let dim = specs.first().map_or(0, |s| s.center.len());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for spec in specs {
        if spec.center.len() != dim {
            return Err(Error::InvalidInput("clusters differ in dimension".into()));
        }
        if !(spec.radius > S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "cluster radius must be positive, got {}",
                spec.radius
            )));
        }
        for _ in 0..spec.count {
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let r = spec.radius.as_f64() * rng.random::<f64>().powf(1.0 / dim as f64);
            let x = spec
                .center
                .iter()
                .zip(&dir)
                .map(|(c, d)| *c + S::lit(r * d / norm))
                .collect();
            features.push(x);
            labels.push(spec.label);
        }
    }
    Dataset::new(features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when the precision denominator was zero and 0 was reported.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub evaluated: usize,
    pub accuracy: f64,
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    /// `confusion[actual][predicted]`.
    pub confusion: [[usize; 2]; 2],
    pub nonparticipating_markets: usize,
}

impl Metrics {
    pub fn from_predictions(
        predicted: &[AssetSide],
        actual: &[AssetSide],
        nonparticipating_markets: usize,
    ) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::InvalidInput(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        if predicted.is_empty() {
            return Err(Error::InvalidInput("no predictions to score".into()));
        }
        let mut confusion = [[0usize; 2]; 2];
        for (p, a) in predicted.iter().zip(actual) {
            confusion[a.label() as usize][p.label() as usize] += 1;
        }
        let class = |c: usize| {
            let tp = confusion[c][c];
            let predicted_c = confusion[0][c] + confusion[1][c];
            let actual_c = confusion[c][0] + confusion[c][1];
            let ratio = |num: usize, den: usize| {
                if den == 0 {
                    (0.0, true)
                } else {
                    (num as f64 / den as f64, false)
                }
            };
            let (precision, precision_undefined) = ratio(tp, predicted_c);
            let (recall, recall_undefined) = ratio(tp, actual_c);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: actual_c,
                precision_undefined,
                recall_undefined,
            }
        };
        Ok(Self {
            evaluated: predicted.len(),
            accuracy: (confusion[0][0] + confusion[1][1]) as f64 / predicted.len() as f64,
            class0: class(0),
            class1: class(1),
            confusion,
            nonparticipating_markets,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    pub index: usize,
    pub p_final: S,
    pub predicted: AssetSide,
    pub actual: AssetSide,
    pub participated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig<S> {
    /// Template for every market; its seed is replaced per input.
    pub market: MarketConfig<S>,
    pub price_window: usize,
    pub threshold: S,
    /// Prediction for inputs no agent trades on.
    pub fallback: AssetSide,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction<S>>,
}

/// Runs one event-driven market per row of `data` and scores the readouts.
pub fn evaluate<S: Scalar>(
    agents: &[AgentParams<S>],
    data: &Dataset<S>,
    config: &EvalConfig<S>,
) -> Result<Evaluation<S>> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    if let Some(a) = agents.first() {
        if a.dim() != data.dim() {
            return Err(Error::InvalidInput(format!(
                "population has dimension {} but the data has dimension {}",
                a.dim(),
                data.dim()
            )));
        }
    }
    let predictions = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let market = MarketConfig {
                rng_seed: rng::child_seed(config.seed, &[stream::EVAL_MARKET, i as u64]),
                ..config.market.clone()
            };
            let out = run_event_driven(agents, &data.features[i], &market)?;
            let p_final = final_price_estimate(&out, config.price_window)?;
            let predicted = if out.any_participation {
                classify(p_final, config.threshold)
            } else {
                config.fallback
            };
            Ok(Prediction {
                index: i,
                p_final,
                predicted,
                actual: data.labels[i],
                participated: out.any_participation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<AssetSide> = predictions.iter().map(|p| p.predicted).collect();
    let silent = predictions.iter().filter(|p| !p.participated).count();
    let metrics = Metrics::from_predictions(&predicted, &data.labels, silent)?;
    Ok(Evaluation {
        metrics,
        predictions,
    })
}

/// CSV with columns `index,p_final,predicted,actual,participated`.
pub fn write_predictions_csv<S: Scalar, W: Write>(
    mut out: W,
    predictions: &[Prediction<S>],
) -> Result<()> {
    let io = |e| Error::io("writing predictions", e);
    writeln!(out, "index,p_final,predicted,actual,participated").map_err(io)?;
    for p in predictions {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.index,
            p.p_final,
            p.predicted.label(),
            p.actual.label(),
            u8::from(p.participated)
        )
        .map_err(io)?;
    }
    Ok(())
}
