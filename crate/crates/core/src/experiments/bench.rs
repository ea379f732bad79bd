use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{resolve_scheme, ExperimentConfig, ExperimentResult, Record};
use crate::attention::{attention_error, exact_attention, rf_attention, AttentionBatch};
use crate::error::{Error, Result};
use crate::kernel::moment_stats;
use crate::linalg::Matrix;
use crate::rng::Stream;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("slope needs ≥ 2 positive pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

fn random_batch(l: usize, d: usize, sigma: f64, rng: &mut Stream) -> Result<AttentionBatch> {
    let mut g = || Matrix::from_fn(l, d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let (q, k, v) = (g(), g(), g());
    AttentionBatch::new(q, k, v)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Exact versus random-feature attention on Gaussian `q, k, v` with entries
/// of scale σ. Errors are always reported; wall-clock times and their
/// log-log slopes only when `timing` is set, since they vary between runs.
pub fn cmd_attention_bench(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let sigma = cfg.sigmas[0];
    let d = cfg.d;
    let root = Stream::new(cfg.seed);
    let cells: Vec<(usize, usize)> = (0..cfg.l.len())
        .flat_map(|li| (0..cfg.seeds).map(move |s| (li, s)))
        .collect();
    let errs: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(li, s)| {
            let l = cfg.l[li];
            let cell = root.split(li as u64).split(s as u64);
            let b = random_batch(l, d, sigma, &mut cell.split(0))?;
            let exact = exact_attention(&b)?;
            let (xs, ys) = b.scaled_sets()?;
            let stats = moment_stats(&xs, &ys)?;
            let mut out = Vec::new();
            for (k, kind) in cfg.mechs.iter().enumerate() {
                for (j, &m) in cfg.m.iter().enumerate() {
                    let scheme = resolve_scheme(cfg.scheme, cfg.qmc_psi, d, m)?;
                    let (mech, _) = kind.fit(&stats, scheme, cfg.ridge)?;
                    let mut rng = cell.split(1 + k as u64).split(j as u64);
                    let (y, _) = rf_attention(&b, &mech, m, &mut rng)
                        .map_err(|e| e.context(format!("{kind} with M={m}, L={l}")))?;
                    out.push(attention_error(&exact, &y)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (&(li, s), e) in cells.iter().zip(&errs) {
        let mut idx = 0;
        for kind in &cfg.mechs {
            for &m in &cfg.m {
                records.push(
                    Record::new(kind.name(), m, sigma, "attention_error", e[idx], cfg.seed + s as u64)
                        .with_l(cfg.l[li]),
                );
                idx += 1;
            }
        }
    }
    if cfg.timing {
        records.extend(timings(cfg, &root)?);
    }
    Ok(ExperimentResult::new("attention-bench", cfg, records))
}

fn timings(cfg: &ExperimentConfig, root: &Stream) -> Result<Vec<Record>> {
    let sigma = cfg.sigmas[0];
    let mut records = Vec::new();
    let mut exact_t = Vec::new();
    let mut rf_t = vec![Vec::new(); cfg.mechs.len() * cfg.m.len()];
    for (li, &l) in cfg.l.iter().enumerate() {
        let mut rng = root.split(li as u64).split(u64::MAX);
        let b = random_batch(l, cfg.d, sigma, &mut rng)?;
        let (xs, ys) = b.scaled_sets()?;
        let stats = moment_stats(&xs, &ys)?;
        let mut ts = Vec::new();
        for _ in 0..cfg.seeds {
            let t = Instant::now();
            exact_attention(&b)?;
            ts.push(t.elapsed().as_secs_f64());
        }
        let te = median(ts);
        records.push(Record::new("exact", 0, sigma, "time_s", te, cfg.seed).with_l(l));
        exact_t.push(te);
        let mut idx = 0;
        for kind in &cfg.mechs {
            for &m in &cfg.m {
                let scheme = resolve_scheme(cfg.scheme, cfg.qmc_psi, cfg.d, m)?;
                let (mech, _) = kind.fit(&stats, scheme, cfg.ridge)?;
                let mut ts = Vec::new();
                for _ in 0..cfg.seeds {
                    let t = Instant::now();
                    rf_attention(&b, &mech, m, &mut rng)?;
                    ts.push(t.elapsed().as_secs_f64());
                }
                let tr = median(ts);
                records.push(Record::new(kind.name(), m, sigma, "time_s", tr, cfg.seed).with_l(l));
                rf_t[idx].push(tr);
                idx += 1;
            }
        }
    }
    if cfg.l.len() >= 2 {
        let ls: Vec<f64> = cfg.l.iter().map(|&l| l as f64).collect();
        records.push(Record::new("exact", 0, sigma, "time_slope", loglog_slope(&ls, &exact_t)?, cfg.seed));
        let mut idx = 0;
        for kind in &cfg.mechs {
            for &m in &cfg.m {
                records.push(Record::new(kind.name(), m, sigma, "time_slope", loglog_slope(&ls, &rf_t[idx])?, cfg.seed));
                idx += 1;
            }
        }
    }
    Ok(records)
}
