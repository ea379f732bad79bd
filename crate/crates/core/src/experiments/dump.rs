use serde::{Deserialize, Serialize};

use super::{ErrorRecord, ExperimentConfig, ExperimentResult, Record};
use crate::dataio::{load_points, synth_regime, RegimeSpec};
use crate::error::{Error, Result};
use crate::features::{DEParams, Family, Scheme};
use crate::kernel::moment_stats;
use crate::linalg::{Matrix, Vector};
use crate::rng::Stream;
use crate::solvers::FitReport;

/// Dense parameters with matrices as row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeParamsJson {
    pub a_diag: Vec<f64>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub c1: Vec<Vec<f64>>,
    pub c2: Vec<Vec<f64>>,
    pub log_det_d: f64,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], d: usize) -> Result<Matrix> {
    if r.len() != d || r.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionMismatch(format!("expected a {d}x{d} matrix")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| r[i][j]))
}

impl From<&DEParams> for DeParamsJson {
    fn from(p: &DEParams) -> Self {
        Self {
            a_diag: p.a_diag.iter().copied().collect(),
            b1: rows(&p.b1),
            b2: rows(&p.b2),
            c1: rows(&p.c1),
            c2: rows(&p.c2),
            log_det_d: p.log_det_d,
        }
    }
}

impl DeParamsJson {
    /// Rebuilds the parameters and checks the validity constraints.
    pub fn to_params(&self) -> Result<DEParams> {
        let d = self.a_diag.len();
        let p = DEParams {
            a_diag: Vector::from_vec(self.a_diag.clone()),
            b1: from_rows(&self.b1, d)?,
            b2: from_rows(&self.b2, d)?,
            c1: from_rows(&self.c1, d)?,
            c2: from_rows(&self.c2, d)?,
            log_det_d: self.log_det_d,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDump {
    pub mechanism: String,
    pub family: String,
    pub params: serde_json::Value,
    pub report: Option<FitReport>,
}

fn params_json(family: &Family) -> serde_json::Value {
    match family {
        Family::Trig | Family::Pos => serde_json::Value::Null,
        Family::Ge(p) => serde_json::to_value(p).expect("GE params serialize"),
        Family::Sade(p) => serde_json::json!({
            "psi": p.psi.iter().copied().collect::<Vec<f64>>(),
            "ge": p.ge,
        }),
        Family::De(p) => serde_json::to_value(DeParamsJson::from(p)).expect("DE params serialize"),
    }
}

/// Fits every requested mechanism on one pair of sets (σ-scaled regime
/// sample, or the σ-scaled CSV rows used as both sets) and emits the
/// parameters at full precision. Solver failures become error records.
pub fn cmd_fit_dump(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let sigma = cfg.sigmas[0];
    let (xs, ys) = match &cfg.csv {
        Some(path) => {
            let p = load_points(path)?.scaled(sigma);
            (p.clone(), p)
        }
        None => {
            let regime = cfg.regime.ok_or_else(|| Error::InvalidArgument("no regime".into()))?;
            let spec = RegimeSpec::new(regime, sigma, cfg.first_l(), cfg.d)?;
            synth_regime(&spec, &mut Stream::new(cfg.seed))?
        }
    };
    let stats = moment_stats(&xs, &ys)?;
    let mut records = Vec::new();
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for kind in &cfg.mechs {
        match kind.fit(&stats, Scheme::Iid, cfg.ridge) {
            Ok((mech, report)) => {
                if let Some(r) = &report {
                    records.push(Record::new(kind.name(), 0, sigma, "objective", r.objective_value, cfg.seed));
                    records.push(Record::new(kind.name(), 0, sigma, "phi", r.phi, cfg.seed));
                }
                fits.push(FitDump {
                    mechanism: kind.name().to_string(),
                    family: mech.family.name().to_string(),
                    params: params_json(&mech.family),
                    report,
                });
            }
            Err(e) => errors.push(ErrorRecord::new(kind.name(), &e)),
        }
    }
    let mut out = ExperimentResult::new("fit-dump", cfg, records);
    out.fits = Some(fits);
    out.errors = errors;
    Ok(out)
}
