// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Runs without the libtest harness so the lines always print.

mod common;

use std::process::Command;
use std::time::Instant;

use common::*;
use derf::analytics::{de_variance, ge_variance, sample_products, sample_summary, shifted_logvar_objective};
use derf::attention::{attention_error, exact_attention, implied_attention, rf_attention, AttentionBatch};
use derf::dataio::{synth_regime, Regime, RegimeSpec};
use derf::experiments::{cmd_kernel_classify, log_grid, ExperimentConfig, MechanismKind, SchemeKind};
use derf::features::{DEParams, Family, GEParams, Mechanism, Scheme};
use derf::kernel::{moment_stats, MomentStats, PointSet};
use derf::linalg::{sample_gaussian, Matrix};
use derf::qmc::{log_qmc_cross_moment, qmc_cross_moment, sample_qmc, validate_qmc, QmcCorrelation};
use derf::rng::Stream;
use derf::solvers::{
    fit_aderf, fit_gerf, fit_saderf, fit_sderf, optimal_psi, psiopt_value, scalar_objective, solve_scalar_a,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Every fitted family on one pair of point sets, as (name, family).
fn fitted_families(stats: &MomentStats) -> derf::Result<Vec<(&'static str, Family)>> {
    let d = stats.dim();
    Ok(vec![
        ("pos", Family::Pos),
        ("ge", Family::Ge(fit_gerf(stats, d)?.0)),
        ("sade", Family::Sade(fit_saderf(stats)?.0)),
        ("ade", Family::De(fit_aderf(stats, false)?.0)),
        ("sde", Family::De(fit_sderf(stats)?.0)),
    ])
}

fn ball_stats(d: usize, seed: u64) -> derf::Result<(Matrix, Matrix, MomentStats)> {
    let mut rng = Stream::new(seed);
    let x = ball_set(32, d, 1.0, &mut rng);
    let y = ball_set(32, d, 1.0, &mut rng);
    let stats = moment_stats(&PointSet::new(x.clone())?, &PointSet::new(y.clone())?)?;
    Ok((x, y, stats))
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut failures = Vec::new();
    for d in [2usize, 4, 8] {
        let (x, y, stats) = ball_stats(d, 100 + d as u64).map_err(|e| e.to_string())?;
        let (xr, yr) = (rows(&x), rows(&y));
        for (name, family) in fitted_families(&stats).map_err(|e| e.to_string())? {
            let mech = Mechanism::iid(family);
            for i in 0..20 {
                let stream = Stream::new(1_000 + d as u64).split(i as u64);
                let z = sample_products(&mech, &xr[i], &yr[i], 100_000, &stream).map_err(|e| e.to_string())?;
                let (mean, se, _, _) = sample_summary(&z);
                let k = softmax_kernel(&xr[i], &yr[i]);
                let score = (mean - k).abs() / se;
                worst = worst.max(score);
                checks += 1;
                if score > 5.0 {
                    failures.push(format!("{name} d={d} pair {i}: {score:.2} s.e."));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{checks} (family, d, pair) checks, worst deviation {worst:.2} s.e."))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_se: f64 = 0.0;
    let mut worst_gh: f64 = 0.0;
    let mut checks = 0;
    for d in [2usize, 4] {
        let (x, y, stats) = ball_stats(d, 200 + d as u64).map_err(|e| e.to_string())?;
        let (xr, yr) = (rows(&x), rows(&y));
        let ge = fit_gerf(&stats, d).map_err(|e| e.to_string())?.0;
        let ade = fit_aderf(&stats, false).map_err(|e| e.to_string())?.0;
        let sde = fit_sderf(&stats).map_err(|e| e.to_string())?.0;
        for i in 0..10 {
            let (xi, yi) = (&xr[i], &yr[i]);
            let cases: Vec<(&str, Family, f64)> = vec![
                ("ge", Family::Ge(ge), ge_variance(ge.a, xi, yi).map_err(|e| e.to_string())?),
                ("ade", Family::De(ade.clone()), de_variance(&ade, xi, yi).map_err(|e| e.to_string())?),
                ("sde", Family::De(sde.clone()), de_variance(&sde, xi, yi).map_err(|e| e.to_string())?),
            ];
            for (name, family, analytic) in cases {
                let stream = Stream::new(2_000 + d as u64).split(i as u64);
                let z = sample_products(&Mechanism::iid(family), xi, yi, 100_000, &stream).map_err(|e| e.to_string())?;
                let (_, _, var, se_var) = sample_summary(&z);
                let score = (var - analytic).abs() / se_var;
                worst_se = worst_se.max(score);
                checks += 1;
                if score > 5.0 {
                    failures.push(format!("{name} d={d} pair {i}: {score:.2} s.e."));
                }
            }
        }
    }

    // quadrature oracle in d = 2
    let (x, y, stats) = ball_stats(2, 210).map_err(|e| e.to_string())?;
    let (xr, yr) = (rows(&x), rows(&y));
    let mut de_cases: Vec<(String, DEParams)> = Vec::new();
    for (name, family) in fitted_families(&stats).map_err(|e| e.to_string())? {
        de_cases.push((name.to_string(), family.as_de(2).map_err(|e| e.to_string())?));
    }
    for i in 0..10 {
        let (xi, yi) = (&xr[i], &yr[i]);
        let k2 = softmax_kernel(xi, yi).powi(2);
        for (name, p) in &de_cases {
            let gh = gh_expect_2d(64, |w| de_product(p, w, xi, yi).powi(2)) - k2;
            let lib = de_variance(p, xi, yi).map_err(|e| e.to_string())?;
            let rel = (gh - lib).abs() / lib.abs();
            worst_gh = worst_gh.max(rel);
            checks += 1;
            if rel > 1e-6 {
                failures.push(format!("de_variance {name} pair {i}: rel {rel:.2e}"));
            }
        }
        for a in [-0.4, -0.2, -0.05, 0.0, 0.05] {
            let gh = gh_expect_2d(64, |w| ge_product(a, w, xi, yi).powi(2)) - k2;
            let lib = ge_variance(a, xi, yi).map_err(|e| e.to_string())?;
            let rel = (gh - lib).abs() / lib.abs();
            worst_gh = worst_gh.max(rel);
            checks += 1;
            if rel > 1e-6 {
                failures.push(format!("ge_variance A={a} pair {i}: rel {rel:.2e}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "{checks} checks, worst MC deviation {worst_se:.2} s.e., worst quadrature rel error {worst_gh:.1e}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn random_dataset(i: u64, l: usize, d: usize) -> derf::Result<(PointSet, PointSet)> {
    let mut rng = Stream::new(300 + i);
    let regime = [Regime::Normal, Regime::Sphere, Regime::Heterogen][i as usize % 3];
    let sigma = 0.2 + 0.8 * rng.random::<f64>();
    let (xs, ys) = synth_regime(&RegimeSpec::new(regime, sigma, l, d)?, &mut rng)?;
    // anisotropic columns so the dense fits differ from the scalar one
    let scale: Vec<f64> = (0..d).map(|_| 0.3 + 1.4 * rng.random::<f64>()).collect();
    Ok((xs.scale_columns(&scale), ys))
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = Stream::new(31);
    let n_grid = 100_000;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..100 {
        let phi = 10.0 * rng.random::<f64>();
        // f over γ = 1/(1-8A) ∈ (0, 2]: log((1+γ)/(2γ)) + ½ log γ + φγ
        let f = |g: f64| ((1.0 + g) / (2.0 * g)).ln() + 0.5 * g.ln() + phi * g;
        let grid_min = (1..=n_grid).map(|k| f(2.0 * k as f64 / n_grid as f64)).fold(f64::INFINITY, f64::min);
        let a = solve_scalar_a(phi);
        let at_a = f(1.0 / (1.0 - 8.0 * a));
        let lib = scalar_objective(a, phi);
        worst_gap = worst_gap.max(at_a - grid_min);
        if at_a > grid_min + 1e-9 || (lib - at_a).abs() > 1e-12 * (1.0 + at_a.abs()) {
            failures.push(format!("φ={phi:.4}: f(A*)={at_a} grid min {grid_min}"));
        }
    }

    let mut worst_rel: f64 = 0.0;
    let mut worst_margin = f64::NEG_INFINITY;
    for i in 0..20 {
        let (xs, ys) = random_dataset(i, 32, 4).map_err(|e| e.to_string())?;
        let stats = moment_stats(&xs, &ys).map_err(|e| e.to_string())?;
        let (ge, ge_rep) = fit_gerf(&stats, 4).map_err(|e| e.to_string())?;
        let ge_generic = pairwise_objective(&DEParams::from_ge(&ge), xs.matrix(), ys.matrix());
        let ade = fit_aderf(&stats, false).map_err(|e| e.to_string())?;
        let sde = fit_sderf(&stats).map_err(|e| e.to_string())?;
        for (name, (p, rep)) in [("aderf", ade), ("sderf", sde)] {
            let generic = pairwise_objective(&p, xs.matrix(), ys.matrix());
            let lib_generic = shifted_logvar_objective(&Mechanism::iid(Family::De(p.clone())), &xs, &ys)
                .map_err(|e| e.to_string())?;
            let rel = ((rep.objective_value - generic) / generic).abs().max(((lib_generic - generic) / generic).abs());
            worst_rel = worst_rel.max(rel);
            if rel > 1e-8 {
                failures.push(format!("{name} dataset {i}: objective rel error {rel:.2e}"));
            }
            let margin = generic - ge_generic;
            worst_margin = worst_margin.max(margin);
            if generic > ge_generic + 1e-9 || rep.objective_value > ge_rep.objective_value + 1e-9 {
                failures.push(format!("{name} dataset {i}: {generic} exceeds GERF {ge_generic}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "scalar A* minus grid min ≤ {worst_gap:.1e}; dense objectives match pairwise within {worst_rel:.1e}; \
             dense minus GERF ≤ {worst_margin:.3}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

/// Mean over pairs of `‖Ψx + Ψ⁻¹y‖²`, pair by pair.
fn psiopt_oracle(xs: &PointSet, ys: &PointSet, psi: &[f64]) -> f64 {
    let (xr, yr) = (rows(xs.matrix()), rows(ys.matrix()));
    let mut total = 0.0;
    for x in &xr {
        for y in &yr {
            total += (0..psi.len()).map(|l| (psi[l] * x[l] + y[l] / psi[l]).powi(2)).sum::<f64>();
        }
    }
    total / (xr.len() * yr.len()) as f64
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = Stream::new(41);
    let mut worst_rel: f64 = 0.0;
    for i in 0..20 {
        let (xs, ys) = random_dataset(100 + i, 32, 4).map_err(|e| e.to_string())?;
        let stats = moment_stats(&xs, &ys).map_err(|e| e.to_string())?;
        let star = optimal_psi(&stats);
        let best = psiopt_oracle(&xs, &ys, &star);
        let lib = psiopt_value(&stats, &star);
        worst_rel = worst_rel.max(((lib - best) / best).abs());
        if (lib - best).abs() > 1e-10 * best.abs() {
            failures.push(format!("dataset {i}: psiopt {lib} vs pairwise {best}"));
        }
        for k in 0..100 {
            // half broad scalings, half small perturbations of Ψ*
            let psi: Vec<f64> = star
                .iter()
                .map(|s| {
                    let g: f64 = rng.sample(rand_distr::StandardNormal);
                    if k % 2 == 0 { (0.7 * g).exp() } else { s * (0.05 * g).exp() }
                })
                .collect();
            let v = psiopt_oracle(&xs, &ys, &psi);
            if best > v + 1e-9 {
                failures.push(format!("dataset {i}: scaling {k} beats Ψ* ({v} < {best})"));
            }
        }
    }
    let mut worst_one: f64 = 0.0;
    for i in 0..20 {
        let (xs, _) = random_dataset(200 + i, 32, 4).map_err(|e| e.to_string())?;
        let stats = moment_stats(&xs, &xs).map_err(|e| e.to_string())?;
        for p in optimal_psi(&stats) {
            worst_one = worst_one.max((p - 1.0).abs());
        }
    }
    if worst_one > 1e-12 {
        failures.push(format!("symmetric data gives Ψ off 1 by {worst_one:.2e}"));
    }
    if failures.is_empty() {
        Ok(format!(
            "Ψ* beats 2000 scalings; psiopt matches pairwise within {worst_rel:.1e}; symmetric |Ψ-1| ≤ {worst_one:.1e}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for d in [2usize, 4, 8] {
        for i in 0..20 {
            let (xs, ys) = random_dataset(400 + 20 * d as u64 + i, 32, d).map_err(|e| e.to_string())?;
            let stats = moment_stats(&xs, &ys).map_err(|e| e.to_string())?;
            let params = [
                ("gerf", DEParams::from_ge(&fit_gerf(&stats, d).map_err(|e| e.to_string())?.0)),
                ("saderf", DEParams::from_sade(&fit_saderf(&stats).map_err(|e| e.to_string())?.0)),
                ("aderf", fit_aderf(&stats, false).map_err(|e| e.to_string())?.0),
                ("aderf+ridge", fit_aderf(&stats, true).map_err(|e| e.to_string())?.0),
                ("sderf", fit_sderf(&stats).map_err(|e| e.to_string())?.0),
            ];
            for (name, p) in params {
                let v = de_constraint_violation(&p);
                worst = worst.max(v);
                checks += 1;
                if v.is_nan() || v > 1e-8 {
                    failures.push(format!("{name} d={d} dataset {i}: violation {v:.2e}"));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{checks} fitted parameter sets, worst violation {worst:.1e}"))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    if !validate_qmc(&[-0.25], 5).valid {
        failures.push("Ψ=-0.25 rejected at M=5".to_string());
    }
    if validate_qmc(&[-0.3], 5).valid {
        failures.push("Ψ=-0.3 accepted at M=5".to_string());
    }

    // pairwise correlation of the draws
    let (m, d, psi, reps) = (5usize, 3usize, -0.25, 40_000usize);
    let corr = QmcCorrelation::new(vec![psi; d], m).map_err(|e| e.to_string())?;
    let mut rng = Stream::new(61);
    let mut prods = vec![Vec::with_capacity(reps); m * (m - 1) / 2 * d];
    for _ in 0..reps {
        let w = sample_qmc(&corr, d, &mut rng).map_err(|e| e.to_string())?.omegas;
        let mut k = 0;
        for a in 0..m {
            for b in a + 1..m {
                for l in 0..d {
                    prods[k].push(w[(a, l)] * w[(b, l)]);
                    k += 1;
                }
            }
        }
    }
    let mut worst_corr: f64 = 0.0;
    for v in &prods {
        let (mean, se) = mean_se(v);
        let score = (mean - psi).abs() / se;
        worst_corr = worst_corr.max(score);
        if score > 5.0 {
            failures.push(format!("draw correlation {mean:.4} vs {psi} ({score:.2} s.e.)"));
        }
    }

    // cross moment against Monte Carlo, and its two limits
    let (x, y, stats) = ball_stats(2, 620).map_err(|e| e.to_string())?;
    let (xr, yr) = (rows(&x), rows(&y));
    let mut worst_mc: f64 = 0.0;
    let mut worst_lim: f64 = 0.0;
    for (name, family) in fitted_families(&stats).map_err(|e| e.to_string())? {
        let p = family.as_de(2).map_err(|e| e.to_string())?;
        for i in 0..3 {
            let (xi, yi) = (&xr[i], &yr[i]);
            for psi in [-1.0, -0.5, 0.5] {
                let corr = QmcCorrelation::new(vec![psi; 2], 2).map_err(|e| e.to_string())?;
                let closed = qmc_cross_moment(&p, &corr, xi, yi).map_err(|e| e.to_string())?;
                let mut stream = Stream::new(630).split(i as u64);
                let z: Vec<f64> = (0..100_000)
                    .map(|_| {
                        let w = sample_qmc(&corr, 2, &mut stream).expect("valid correlation").omegas;
                        let w1 = [w[(0, 0)], w[(0, 1)]];
                        let w2 = [w[(1, 0)], w[(1, 1)]];
                        de_product(&p, &w1, xi, yi) * de_product(&p, &w2, xi, yi)
                    })
                    .collect();
                let (mean, se) = mean_se(&z);
                // at Ψ=-1 the product can be constant in ω, leaving only rounding noise
                let score = (mean - closed).abs() / se.max(1e-12 * closed.abs());
                worst_mc = worst_mc.max(score);
                if score > 5.0 {
                    failures.push(format!("{name} pair {i} Ψ={psi}: MC {mean} vs {closed} ({score:.2} s.e.)"));
                }
            }
            let k2 = 2.0 * common::dot(xi, yi);
            let at0 = log_qmc_cross_moment(&p, &[0.0, 0.0], xi, yi).map_err(|e| e.to_string())?;
            let at1 = log_qmc_cross_moment(&p, &[1.0, 1.0], xi, yi).map_err(|e| e.to_string())?;
            let second = de_log_second_moment(&p, xi, yi);
            let e0 = (at0 - k2).exp_m1().abs();
            let e1 = (at1 - second).exp_m1().abs();
            worst_lim = worst_lim.max(e0).max(e1);
            if e0 > 1e-10 || e1 > 1e-10 {
                failures.push(format!("{name} pair {i}: Ψ=0 rel {e0:.1e}, Ψ=1 rel {e1:.1e}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "M=5 bounds ok; correlation within {worst_corr:.2} s.e.; cross moment within {worst_mc:.2} s.e.; \
             limits within {worst_lim:.1e}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn random_batch(l: usize, d: usize, rng: &mut Stream) -> derf::Result<AttentionBatch> {
    let q = sample_gaussian(l, d, rng)?.omegas;
    let k = sample_gaussian(l, d, rng)?.omegas;
    let v = sample_gaussian(l, d, rng)?.omegas;
    AttentionBatch::new(q, k, v)
}

fn slope(ls: &[usize], ts: &[f64]) -> f64 {
    let lx: Vec<f64> = ls.iter().map(|l| (*l as f64).ln()).collect();
    let ly: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let kinds = [
        MechanismKind::Pos,
        MechanismKind::Gerf,
        MechanismKind::Saderf,
        MechanismKind::Aderf,
        MechanismKind::Sderf,
    ];
    let mut summary = Vec::new();
    for kind in kinds {
        let mut e8 = Vec::new();
        let mut e128 = Vec::new();
        for s in 0..10 {
            let mut rng = Stream::new(700 + s);
            let b = random_batch(128, 8, &mut rng).map_err(|e| e.to_string())?;
            let exact = exact_attention(&b).map_err(|e| e.to_string())?;
            let (xs, ys) = b.scaled_sets().map_err(|e| e.to_string())?;
            let stats = moment_stats(&xs, &ys).map_err(|e| e.to_string())?;
            let (mech, _) = kind.fit(&stats, Scheme::Iid, false).map_err(|e| e.to_string())?;
            for (m, out) in [(8, &mut e8), (128, &mut e128)] {
                let (y, _) = rf_attention(&b, &mech, m, &mut rng).map_err(|e| e.to_string())?;
                out.push(attention_error(&exact, &y).map_err(|e| e.to_string())?);
            }
        }
        let (m8, m128) = (median(e8), median(e128));
        summary.push(format!("{kind} {m8:.3}→{m128:.3}"));
        if m128 >= m8 || m128.is_nan() {
            failures.push(format!("{kind}: median error {m128} at M=128 not below {m8} at M=8"));
        }
    }

    let mut rng = Stream::new(750);
    let b = random_batch(64, 8, &mut rng).map_err(|e| e.to_string())?;
    let mut worst_row: f64 = 0.0;
    for family in [Family::Pos, Family::Ge(GEParams::new(-0.2, 8).map_err(|e| e.to_string())?)] {
        let mech = Mechanism::iid(family);
        let draws = mech.sample_draws(32, 8, &mut rng).map_err(|e| e.to_string())?;
        let a = implied_attention(&b, &mech, &draws).map_err(|e| e.to_string())?;
        for r in a.row_iter() {
            worst_row = worst_row.max((r.sum() - 1.0).abs());
            if r.iter().any(|v| *v < 0.0) {
                failures.push("negative implied attention weight".into());
            }
        }
    }
    if worst_row > 1e-9 {
        failures.push(format!("implied rows sum off 1 by {worst_row:.2e}"));
    }

    // timing in a single-thread pool, best of several repeats
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let ls = [256usize, 512, 1024, 2048, 4096];
    let (te, tr) = pool.install(|| -> derf::Result<(Vec<f64>, Vec<f64>)> {
        let mut te = Vec::new();
        let mut tr = Vec::new();
        for &l in &ls {
            let mut rng = Stream::new(760 + l as u64);
            let b = random_batch(l, 16, &mut rng)?;
            let (xs, ys) = b.scaled_sets()?;
            let (mech, _) = MechanismKind::Sderf.fit(&moment_stats(&xs, &ys)?, Scheme::Iid, false)?;
            let reps = if l <= 1024 { 7 } else { 3 };
            let mut best_e = f64::INFINITY;
            let mut best_r = f64::INFINITY;
            for _ in 0..reps {
                let t = Instant::now();
                std::hint::black_box(exact_attention(&b)?);
                best_e = best_e.min(t.elapsed().as_secs_f64());
                let t = Instant::now();
                std::hint::black_box(rf_attention(&b, &mech, 32, &mut rng)?);
                best_r = best_r.min(t.elapsed().as_secs_f64());
            }
            te.push(best_e);
            tr.push(best_r);
        }
        Ok((te, tr))
    })
    .map_err(|e| e.to_string())?;
    let (se, sr) = (slope(&ls, &te), slope(&ls, &tr));
    if !(0.8..=1.3).contains(&sr) {
        failures.push(format!("rf slope {sr:.3} outside [0.8, 1.3]"));
    }
    if !(1.7..=2.3).contains(&se) {
        failures.push(format!("exact slope {se:.3} outside [1.7, 2.3]"));
    }
    if failures.is_empty() {
        Ok(format!(
            "median error {}; rows sum within {worst_row:.1e}; slopes rf {sr:.2}, exact {se:.2}",
            summary.join(", ")
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig {
        regime: Some(Regime::Normal),
        sigmas: log_grid(1e-2, 1e2, 10).map_err(|e| e.to_string())?,
        d: 2,
        l: vec![2000],
        m: vec![128],
        mechs: MechanismKind::ALL.to_vec(),
        scheme: SchemeKind::Iid,
        seeds: 20,
        seed: 8,
        ..ExperimentConfig::default()
    };
    let res = cmd_kernel_classify(&cfg).map_err(|e| e.to_string())?;
    if !res.errors.is_empty() {
        return Err(format!("{} mechanism errors: {:?}", res.errors.len(), res.errors));
    }
    let mean_acc = |mech: &str| {
        let v: Vec<f64> = res.values(mech, "test_accuracy").iter().filter_map(|r| r.value.as_f64()).collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len())
    };
    let (exact, n) = mean_acc("exact");
    let mut failures = Vec::new();
    if n != 20 || exact < 0.95 {
        failures.push(format!("exact accuracy {exact:.4} over {n} seeds"));
    }
    let mut parts = vec![format!("exact {exact:.4}")];
    for kind in MechanismKind::ALL {
        let (acc, n) = mean_acc(kind.name());
        parts.push(format!("{kind} {acc:.4}"));
        if n != 20 || acc < exact - 0.02 {
            failures.push(format!("{kind} accuracy {acc:.4} more than 2pp below exact {exact:.4}"));
        }
    }
    if failures.is_empty() {
        Ok(format!("mean test accuracy over 20 seeds at M=128: {}", parts.join(", ")))
    } else {
        Err(failures.join("; "))
    }
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_derf")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn criterion_9() -> Outcome {
    let commands: [&[&str]; 5] = [
        &["variance-compare", "--regime", "heterogen", "--d", "4", "--L", "16", "--seeds", "2", "--seed", "9"],
        &["variance-compare", "--regime", "normal", "--d", "4", "--L", "16", "--seeds", "2", "--M", "4", "--scheme", "qmc", "--mechs", "pos,gerf,sderf"],
        &["kernel-classify", "--L", "200", "--M-grid", "16,32", "--seeds", "2", "--sigma-grid", "0.1:10:4", "--seed", "9"],
        &["attention-bench", "--L", "64,128", "--M", "16", "--seeds", "2", "--seed", "9"],
        &["fit-dump", "--regime", "sphere", "--d", "3", "--L", "20", "--seed", "9"],
    ];
    let mut failures = Vec::new();
    for args in commands {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        let mut one_thread = vec![args[0], "--threads", "1"];
        one_thread.extend_from_slice(&args[1..]);
        let c = run_cli(&one_thread)?;
        if a != b {
            failures.push(format!("{} differs between identical runs", args[0]));
        }
        if a != c {
            failures.push(format!("{} differs with --threads 1", args[0]));
        }
    }
    if failures.is_empty() {
        Ok(format!("{} command lines byte-identical across reruns and thread counts", commands.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("unbiasedness", criterion_1),
        ("variance formulas", criterion_2),
        ("closed-form optimality", criterion_3),
        ("SADERF scaling", criterion_4),
        ("DERF validity", criterion_5),
        ("QMC", criterion_6),
        ("attention", criterion_7),
        ("kernel classification", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}, {secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}, {secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
