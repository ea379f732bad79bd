//! Synthetic sampling regimes, CSV ingestion and train/validation/test splits.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::PointSet;
use crate::linalg::Matrix;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `x, y ~ N(0, σ²I)`
    Normal,
    /// `x, y` uniform on the sphere of radius `σ`
    Sphere,
    /// `x ~ N(0, σ²I)`, `y ~ N(σ1, σ²I)`
    Heterogen,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Regime::Normal),
            "sphere" => Ok(Regime::Sphere),
            "heterogen" => Ok(Regime::Heterogen),
            _ => Err(Error::InvalidArgument(format!(
                "unknown regime {s:?} (expected normal, sphere or heterogen)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub sigma: f64,
    pub l: usize,
    pub d: usize,
}

impl RegimeSpec {
    pub fn new(regime: Regime, sigma: f64, l: usize, d: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || l == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "regime needs σ > 0, l ≥ 1, d ≥ 1 (got σ={sigma}, l={l}, d={d})"
            )));
        }
        Ok(Self { regime, sigma, l, d })
    }
}

fn gaussian(l: usize, d: usize, sigma: f64, shift: f64, rng: &mut Stream) -> Matrix {
    Matrix::from_fn(l, d, |_, _| shift + sigma * rng.sample::<f64, _>(StandardNormal))
}

fn sphere(l: usize, d: usize, sigma: f64, rng: &mut Stream) -> Matrix {
    let mut m = gaussian(l, d, 1.0, 0.0, rng);
    for mut r in m.row_iter_mut() {
        // a zero Gaussian draw has probability zero; redraw defensively
        while r.norm() == 0.0 {
            r.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        }
        let n = r.norm();
        r *= sigma / n;
    }
    m
}

pub fn synth_regime(spec: &RegimeSpec, rng: &mut Stream) -> Result<(PointSet, PointSet)> {
    let RegimeSpec { regime, sigma, l, d } = *spec;
    let (x, y) = match regime {
        Regime::Normal => (gaussian(l, d, sigma, 0.0, rng), gaussian(l, d, sigma, 0.0, rng)),
        Regime::Sphere => (sphere(l, d, sigma, rng), sphere(l, d, sigma, rng)),
        Regime::Heterogen => (gaussian(l, d, sigma, 0.0, rng), gaussian(l, d, sigma, sigma, rng)),
    };
    Ok((PointSet::new(x)?, PointSet::new(y)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: PointSet,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Original label strings, indexed by class.
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(points: PointSet, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        if class_count < 2 || labels.iter().any(|&c| c >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "labels must lie in [0, {class_count}) with at least two classes"
            )));
        }
        Ok(Self {
            points,
            labels,
            class_count,
            class_names: (0..class_count).map(|c| c.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            points: self.points.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            class_names: self.class_names.clone(),
        }
    }
}

/// Two unit-variance Gaussian classes whose centers `±(sep/2) e₁` are
/// `sep` apart; labels alternate.
pub fn synth_blobs(l: usize, d: usize, sep: f64, rng: &mut Stream) -> Result<LabeledDataset> {
    if l < 2 || d == 0 {
        return Err(Error::InvalidArgument(format!("blobs need l ≥ 2 and d ≥ 1 (got {l}, {d})")));
    }
    let labels: Vec<usize> = (0..l).map(|i| i % 2).collect();
    let mut m = gaussian(l, d, 1.0, 0.0, rng);
    for (i, c) in labels.iter().enumerate() {
        m[(i, 0)] += if *c == 0 { -sep / 2.0 } else { sep / 2.0 };
    }
    LabeledDataset::new(PointSet::new(m)?, labels, 2)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CsvData {
    Points(PointSet),
    Labeled(LabeledDataset),
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Reads a header row plus numeric feature columns. With `label_column`,
/// that column is factorized to class indices in order of first appearance.
/// Row numbers in errors are file lines, the header being line 1.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_err)?;
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| Some(*c) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidArgument("no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut classes: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: headers[c].clone(),
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: headers[c].clone(),
                    message: format!("{cell:?} is not finite"),
                });
            }
            values.push(v);
        }
        if let Some(li) = label_idx {
            let key = rec[li].to_string();
            let next = classes.len();
            let id = *classes.entry(key.clone()).or_insert_with(|| {
                names.push(key);
                next
            });
            labels.push(id);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidArgument("CSV has no data rows".into()));
    }
    let points = PointSet::new(Matrix::from_row_slice(rows, feature_cols.len(), &values))?;
    Ok(match label_idx {
        None => CsvData::Points(points),
        Some(_) => {
            let n = names.len();
            let mut ds = LabeledDataset::new(points, labels, n)?;
            ds.class_names = names;
            CsvData::Labeled(ds)
        }
    })
}

pub fn load_points(path: impl AsRef<Path>) -> Result<PointSet> {
    match load_csv(path, None)? {
        CsvData::Points(p) => Ok(p),
        CsvData::Labeled(ds) => Ok(ds.points),
    }
}

pub fn load_labeled(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    match load_csv(path, Some(label_column))? {
        CsvData::Labeled(ds) => Ok(ds),
        CsvData::Points(_) => Err(Error::MissingLabelColumn(label_column.to_string())),
    }
}

/// Shuffled split of sizes `⌊0.9L⌋`, `⌊0.05L⌋` and the remainder.
pub fn split_905_5(
    ds: &LabeledDataset,
    rng: &mut Stream,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let l = ds.len();
    if l < 20 {
        return Err(Error::TooSmall(l, 20));
    }
    let mut idx: Vec<usize> = (0..l).collect();
    idx.shuffle(rng);
    let n_train = l * 90 / 100;
    let n_val = l * 5 / 100;
    Ok((
        ds.select(&idx[..n_train]),
        ds.select(&idx[n_train..n_train + n_val]),
        ds.select(&idx[n_train + n_val..]),
    ))
}
