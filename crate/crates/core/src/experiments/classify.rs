use rayon::prelude::*;

use super::{resolve_scheme, ExperimentConfig, ExperimentResult, MechanismKind, Record};
use crate::dataio::{load_labeled, split_905_5, synth_blobs, LabeledDataset};
use crate::error::{Error, Result};
use crate::features::{feature_matrix_alpha, log_feature_matrix, Family, Mechanism, Which};
use crate::kernel::{log_kernel_matrix, moment_stats, KernelSpec, PointSet};
use crate::linalg::{FeatureDraws, Matrix};
use crate::rng::Stream;

/// Class separation, in units of the blob standard deviation, of the
/// synthetic dataset used when no CSV is given.
pub const BLOB_SEPARATION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// Queries whose class scores all vanished; these get the majority class.
    pub degenerate: usize,
}

impl Predictions {
    pub fn accuracy(&self, truth: &[usize]) -> f64 {
        let hits = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / truth.len().max(1) as f64
    }
}

fn one_hot(ds: &LabeledDataset) -> Matrix {
    let mut r = Matrix::zeros(ds.len(), ds.class_count);
    for (i, &c) in ds.labels.iter().enumerate() {
        r[(i, c)] = 1.0;
    }
    r
}

fn majority(ds: &LabeledDataset) -> usize {
    let mut counts = vec![0usize; ds.class_count];
    for &c in &ds.labels {
        counts[c] += 1;
    }
    // first class among those with the highest count
    let best = *counts.iter().max().unwrap_or(&0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

fn argmax_rows(scores: &Matrix, fallback: usize) -> Predictions {
    let mut degenerate = 0;
    let labels = scores
        .row_iter()
        .map(|r| {
            let mut best = (0, f64::NEG_INFINITY);
            for (c, v) in r.iter().enumerate() {
                if *v > best.1 {
                    best = (c, *v);
                }
            }
            if !(best.1 > 0.0) || !best.1.is_finite() {
                degenerate += 1;
                fallback
            } else {
                best.0
            }
        })
        .collect();
    Predictions { labels, degenerate }
}

/// Nadaraya–Watson class scores `Σᵢ K^(-1/2)(σu, σuᵢ) rᵢ` with exact kernels,
/// each query row shifted by its largest exponent.
pub fn nadaraya_watson_exact(train: &LabeledDataset, queries: &PointSet, sigma: f64) -> Result<Predictions> {
    let mut logk = log_kernel_matrix(&queries.scaled(sigma), &train.points.scaled(sigma), KernelSpec::GAUSSIAN)?;
    for mut r in logk.row_iter_mut() {
        let mx = r.max();
        r.apply(|v| *v = (*v - mx).exp());
    }
    Ok(argmax_rows(&(logk * one_hot(train)), majority(train)))
}

/// Random-feature scores `P (Sᵀ R)` for the Gaussian kernel, with features
/// rescaled by `exp(-½‖·‖²)`. Positive families are shifted in log space:
/// per query row and globally over training rows.
pub fn nadaraya_watson_rf(
    train: &LabeledDataset,
    queries: &PointSet,
    sigma: f64,
    mech: &Mechanism,
    draws: &FeatureDraws,
) -> Result<Predictions> {
    let xs = queries.scaled(sigma);
    let ys = train.points.scaled(sigma);
    let alpha = KernelSpec::GAUSSIAN.alpha;
    let (p, s) = match mech.family {
        Family::Trig => (
            feature_matrix_alpha(mech, draws, &xs, Which::First, alpha)?,
            feature_matrix_alpha(mech, draws, &ys, Which::Second, alpha)?,
        ),
        _ => {
            let mut lp = log_feature_matrix(&mech.family, draws, &xs, Which::First)?;
            let mut ls = log_feature_matrix(&mech.family, draws, &ys, Which::Second)?;
            for (i, n) in xs.sq_norms().iter().enumerate() {
                let mut r = lp.row_mut(i);
                r.add_scalar_mut(alpha * n);
                let mx = r.max();
                r.apply(|v| *v = (*v - mx).exp());
            }
            for (j, n) in ys.sq_norms().iter().enumerate() {
                ls.row_mut(j).add_scalar_mut(alpha * n);
            }
            let gmax = ls.max();
            (lp, ls.map(|v| (v - gmax).exp()))
        }
    };
    let scores = p * (s.transpose() * one_hot(train));
    Ok(argmax_rows(&scores, majority(train)))
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    match (&cfg.csv, &cfg.label_col) {
        (Some(path), Some(col)) => load_labeled(path, col),
        (Some(_), None) => Err(Error::InvalidArgument(
            "kernel-classify needs --label-col with --csv".into(),
        )),
        (None, _) => synth_blobs(cfg.first_l(), cfg.d, BLOB_SEPARATION, &mut Stream::new(cfg.seed).split(u64::MAX)),
    }
}

/// Index of the first σ with the best validation accuracy.
fn best_index(acc: &[f64]) -> usize {
    let mut best = 0;
    for (i, a) in acc.iter().enumerate() {
        if *a > acc[best] {
            best = i;
        }
    }
    best
}

struct CellOutcome {
    sigma: f64,
    test_accuracy: f64,
    degenerate: usize,
}

fn rf_cell(
    kind: MechanismKind,
    cfg: &ExperimentConfig,
    m: usize,
    split: &(LabeledDataset, LabeledDataset, LabeledDataset),
    stream: &Stream,
) -> Result<CellOutcome> {
    let (train, val, test) = split;
    let d = train.points.dim();
    let scheme = resolve_scheme(cfg.scheme, cfg.qmc_psi, d, m)?;
    let mut val_acc = Vec::with_capacity(cfg.sigmas.len());
    let mut cached = Vec::with_capacity(cfg.sigmas.len());
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let mut rng = stream.split(si as u64);
        let stats = moment_stats(&val.points.scaled(sigma), &train.points.scaled(sigma))?;
        let (mech, _) = kind.fit(&stats, scheme.clone(), cfg.ridge)?;
        let draws = mech.sample_draws(m, d, &mut rng)?;
        let pred = nadaraya_watson_rf(train, &val.points, sigma, &mech, &draws)?;
        val_acc.push(pred.accuracy(&val.labels));
        cached.push(draws);
    }
    let best = best_index(&val_acc);
    let sigma = cfg.sigmas[best];
    let stats = moment_stats(&test.points.scaled(sigma), &train.points.scaled(sigma))?;
    let (mech, _) = kind.fit(&stats, scheme, cfg.ridge)?;
    let pred = nadaraya_watson_rf(train, &test.points, sigma, &mech, &cached[best])?;
    Ok(CellOutcome {
        sigma,
        test_accuracy: pred.accuracy(&test.labels),
        degenerate: pred.degenerate,
    })
}

fn exact_cell(cfg: &ExperimentConfig, split: &(LabeledDataset, LabeledDataset, LabeledDataset)) -> Result<CellOutcome> {
    let (train, val, test) = split;
    let val_acc: Vec<f64> = cfg
        .sigmas
        .iter()
        .map(|&s| nadaraya_watson_exact(train, &val.points, s).map(|p| p.accuracy(&val.labels)))
        .collect::<Result<_>>()?;
    let sigma = cfg.sigmas[best_index(&val_acc)];
    let pred = nadaraya_watson_exact(train, &test.points, sigma)?;
    Ok(CellOutcome {
        sigma,
        test_accuracy: pred.accuracy(&test.labels),
        degenerate: pred.degenerate,
    })
}

/// Nadaraya–Watson classification with the Gaussian kernel, exact and with
/// every mechanism and feature count. σ is tuned on the validation split
/// per seed and per (mechanism, M); the split depends only on the seed.
pub fn cmd_kernel_classify(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let root = Stream::new(cfg.seed);
    let splits: Vec<_> = (0..cfg.seeds)
        .map(|s| split_905_5(&ds, &mut root.split(s as u64).split(0)))
        .collect::<Result<_>>()?;
    let exact: Vec<CellOutcome> = splits
        .par_iter()
        .map(|sp| exact_cell(cfg, sp))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..cfg.seeds)
        .flat_map(|s| {
            (0..cfg.mechs.len()).flat_map(move |k| (0..cfg.m.len()).map(move |j| (s, k, j)))
        })
        .collect();
    let rf: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(s, k, j)| {
            let stream = root.split(s as u64).split(1 + k as u64).split(j as u64);
            let kind = cfg.mechs[k];
            rf_cell(kind, cfg, cfg.m[j], &splits[s], &stream)
                .map_err(|e| e.context(format!("{kind} with M={}", cfg.m[j])))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (s, e) in exact.iter().enumerate() {
        let seed = cfg.seed + s as u64;
        records.push(Record::new("exact", 0, e.sigma, "test_accuracy", e.test_accuracy, seed));
    }
    for (&(s, k, j), c) in cells.iter().zip(&rf) {
        let seed = cfg.seed + s as u64;
        let name = cfg.mechs[k].name();
        records.push(Record::new(name, cfg.m[j], c.sigma, "test_accuracy", c.test_accuracy, seed));
        records.push(Record::new(name, cfg.m[j], c.sigma, "degenerate_predictions", c.degenerate as f64, seed));
    }
    Ok(ExperimentResult::new("kernel-classify", cfg, records))
}
