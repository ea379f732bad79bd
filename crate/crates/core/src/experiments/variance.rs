use rand::seq::index::sample;
use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentResult, MechanismKind, Record};
use crate::analytics::log_relative_variance;
use crate::dataio::{load_points, synth_regime, RegimeSpec};
use crate::error::{Error, Result};
use crate::features::{feature_matrix, Family, Mechanism, Scheme, Which};
use crate::kernel::{log_kernel_matrix, moment_stats, KernelSpec, PointSet};
use crate::rng::Stream;

/// Mean log relative variance and objective for one mechanism in one cell.
type CellValues = (f64, Option<f64>);

/// Draws used to estimate trigonometric variances, which have no closed form.
pub const TRIG_DRAWS: usize = 4096;
const TRIG_CHUNK: usize = 512;

fn sample_rows(pool: &PointSet, l: usize, rng: &mut Stream) -> PointSet {
    let n = pool.len();
    let idx: Vec<usize> = if l <= n {
        sample(rng, n, l).into_vec()
    } else {
        (0..l).map(|_| rand::Rng::random_range(rng, 0..n)).collect()
    };
    pool.select(&idx)
}

fn make_sets(
    cfg: &ExperimentConfig,
    pool: Option<&PointSet>,
    sigma: f64,
    rng: &mut Stream,
) -> Result<(PointSet, PointSet)> {
    let l = cfg.first_l();
    match pool {
        Some(p) => {
            let x = sample_rows(p, l, rng).scaled(sigma);
            let y = sample_rows(p, l, rng).scaled(sigma);
            Ok((x, y))
        }
        None => {
            let regime = cfg.regime.ok_or_else(|| Error::InvalidArgument("no regime".into()))?;
            synth_regime(&RegimeSpec::new(regime, sigma, l, cfg.d)?, rng)
        }
    }
}

/// Mean over pairs of `log(Var Z / K²)` for trigonometric features,
/// estimated from [`TRIG_DRAWS`] draws shared by all pairs.
fn trig_log_rel_var(xs: &PointSet, ys: &PointSet, rng: &mut Stream) -> Result<f64> {
    let mech = Mechanism::iid(Family::Trig);
    let (lx, ly) = (xs.len(), ys.len());
    let mut s1 = crate::linalg::Matrix::zeros(lx, ly);
    let mut s2 = crate::linalg::Matrix::zeros(lx, ly);
    let mut done = 0;
    while done < TRIG_DRAWS {
        let m = TRIG_CHUNK.min(TRIG_DRAWS - done);
        let draws = mech.sample_draws(m, xs.dim(), rng)?;
        let scale = (m as f64).sqrt();
        let p = feature_matrix(&mech, &draws, xs, Which::First)? * scale;
        let s = feature_matrix(&mech, &draws, ys, Which::Second)? * scale;
        s1 += &p * s.transpose();
        s2 += p.component_mul(&p) * s.component_mul(&s).transpose();
        done += m;
    }
    let n = TRIG_DRAWS as f64;
    let log_k = log_kernel_matrix(xs, ys, KernelSpec::SOFTMAX)?;
    let mut total = 0.0;
    for j in 0..ly {
        for i in 0..lx {
            let mean = s1[(i, j)] / n;
            let var = (s2[(i, j)] / n - mean * mean) * n / (n - 1.0);
            total += var.ln() - 2.0 * log_k[(i, j)];
        }
    }
    Ok(total / (lx * ly) as f64)
}

/// `(mean log relative variance, closed-form objective)` for one mechanism
/// on one pair of sets, at `M = 1`.
fn evaluate(
    kind: MechanismKind,
    cfg: &ExperimentConfig,
    xs: &PointSet,
    ys: &PointSet,
    rng: &mut Stream,
) -> Result<(f64, Option<f64>)> {
    if kind == MechanismKind::Trig {
        return match trig_log_rel_var(xs, ys, rng) {
            Err(e) if matches!(e.root(), Error::Overflow(_)) => Ok((f64::INFINITY, None)),
            r => r.map(|v| (v, None)),
        };
    }
    let stats = moment_stats(xs, ys)?;
    // a single draw: the scheme plays no role
    let (mech, report) = kind.fit(&stats, Scheme::Iid, cfg.ridge)?;
    let mut total = 0.0;
    for i in 0..xs.len() {
        let x = xs.row(i);
        for j in 0..ys.len() {
            total += log_relative_variance(&mech.family, x.as_slice(), ys.row(j).as_slice())?;
        }
    }
    Ok((total / (xs.len() * ys.len()) as f64, report.map(|r| r.objective_value)))
}

/// Relative variance `log(Var/K²)` of a single-draw estimate, averaged
/// over all pairs of each sampled set pair and over `seeds` set pairs,
/// for every mechanism and σ.
pub fn cmd_variance_compare(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = match &cfg.csv {
        Some(path) => Some(load_points(path)?),
        None => None,
    };
    let root = Stream::new(cfg.seed);
    let cells: Vec<(usize, usize)> = (0..cfg.sigmas.len())
        .flat_map(|s| (0..cfg.seeds).map(move |k| (s, k)))
        .collect();
    let results: Vec<Result<Vec<CellValues>>> = cells
        .par_iter()
        .map(|&(si, k)| {
            let sigma = cfg.sigmas[si];
            let cell = root.split(si as u64).split(k as u64);
            let (xs, ys) = make_sets(cfg, pool.as_ref(), sigma, &mut cell.split(0))?;
            cfg.mechs
                .iter()
                .enumerate()
                .map(|(mi, kind)| {
                    evaluate(*kind, cfg, &xs, &ys, &mut cell.split(1 + mi as u64))
                        .map_err(|e| e.context(format!("{kind} at sigma={sigma}")))
                })
                .collect()
        })
        .collect();
    let results: Vec<Vec<CellValues>> = results.into_iter().collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (mi, kind) in cfg.mechs.iter().enumerate() {
        for (si, &sigma) in cfg.sigmas.iter().enumerate() {
            let vals: Vec<CellValues> = (0..cfg.seeds)
                .map(|k| results[si * cfg.seeds + k][mi])
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().map(|v| v.0).sum::<f64>() / n;
            records.push(Record::new(kind.name(), 1, sigma, "mean_log_rel_var", mean, cfg.seed));
            if vals.iter().all(|v| v.1.is_some()) {
                let obj = vals.iter().map(|v| v.1.unwrap_or(0.0)).sum::<f64>() / n;
                records.push(Record::new(kind.name(), 1, sigma, "objective", obj, cfg.seed));
            }
        }
    }
    Ok(ExperimentResult::new("variance-compare", cfg, records))
}
