//! Seeded experiment drivers behind the `derf` binary. Every command
//! returns an [`ExperimentResult`] whose JSON form depends only on the
//! configuration, never on thread count or timing (unless timing is
//! requested explicitly).

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::dataio::Regime;
use crate::error::{Error, Result};
use crate::features::{Family, Mechanism, Scheme};
use crate::kernel::MomentStats;
use crate::qmc::QmcCorrelation;
use crate::solvers::{fit_aderf, fit_gerf, fit_saderf, fit_sderf, FitReport};

mod bench;
mod classify;
mod dump;
mod variance;

pub use bench::{cmd_attention_bench, loglog_slope};
pub use classify::{cmd_kernel_classify, nadaraya_watson_exact, nadaraya_watson_rf, Predictions};
pub use dump::{cmd_fit_dump, DeParamsJson, FitDump};
pub use variance::cmd_variance_compare;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Trig,
    Pos,
    Gerf,
    Saderf,
    Aderf,
    Sderf,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::Trig,
        MechanismKind::Pos,
        MechanismKind::Gerf,
        MechanismKind::Saderf,
        MechanismKind::Aderf,
        MechanismKind::Sderf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Trig => "trig",
            MechanismKind::Pos => "pos",
            MechanismKind::Gerf => "gerf",
            MechanismKind::Saderf => "saderf",
            MechanismKind::Aderf => "aderf",
            MechanismKind::Sderf => "sderf",
        }
    }

    /// Builds the mechanism, fitting parameters on `stats` where the
    /// family has any.
    pub fn fit(
        self,
        stats: &MomentStats,
        scheme: Scheme,
        ridge: bool,
    ) -> Result<(Mechanism, Option<FitReport>)> {
        let d = stats.dim();
        let (family, report) = match self {
            MechanismKind::Trig => (Family::Trig, None),
            MechanismKind::Pos => (Family::Pos, None),
            MechanismKind::Gerf => {
                let (p, r) = fit_gerf(stats, d)?;
                (Family::Ge(p), Some(r))
            }
            MechanismKind::Saderf => {
                let (p, r) = fit_saderf(stats)?;
                (Family::Sade(p), Some(r))
            }
            MechanismKind::Aderf => {
                let (p, r) = fit_aderf(stats, ridge)?;
                (Family::De(p), Some(r))
            }
            MechanismKind::Sderf => {
                let (p, r) = fit_sderf(stats)?;
                (Family::De(p), Some(r))
            }
        };
        let fitted = Mechanism::new(family, scheme).map_err(|e| e.context(self.name()))?;
        Ok((fitted, report))
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mechanism {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Iid,
    Orthogonal,
    Qmc,
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(SchemeKind::Iid),
            "orthogonal" => Ok(SchemeKind::Orthogonal),
            "qmc" => Ok(SchemeKind::Qmc),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Draw scheme for `m` features in dimension `d`. QMC without an explicit
/// correlation uses the most negative admissible value `-1/(m-1)`.
pub fn resolve_scheme(kind: SchemeKind, qmc_psi: Option<f64>, d: usize, m: usize) -> Result<Scheme> {
    Ok(match kind {
        SchemeKind::Iid => Scheme::Iid,
        SchemeKind::Orthogonal => Scheme::Orthogonal,
        SchemeKind::Qmc => Scheme::Qmc(match qmc_psi {
            Some(p) => QmcCorrelation::new(vec![p; d], m)?,
            None => QmcCorrelation::antithetic(d, m)?,
        }),
    })
}

/// Record value: a finite number, or `"overflow"` for anything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Overflow,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Value::Number(v)
        } else {
            Value::Overflow
        }
    }
}

impl Value {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(v),
            Value::Overflow => None,
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Number(v) => s.serialize_f64(*v),
            Value::Overflow => s.serialize_str("overflow"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub mechanism: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma: f64,
    pub metric: String,
    pub value: Value,
    pub seed: u64,
    /// Sequence length, attention benchmark only.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
}

impl Record {
    pub fn new(mechanism: &str, m: usize, sigma: f64, metric: &str, value: f64, seed: u64) -> Self {
        Self {
            mechanism: mechanism.to_string(),
            m,
            sigma,
            metric: metric.to_string(),
            value: value.into(),
            seed,
            l: None,
        }
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = Some(l);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub mechanism: String,
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(mechanism: &str, e: &Error) -> Self {
        Self {
            mechanism: mechanism.to_string(),
            kind: if e.is_numeric() { "numeric" } else { "configuration" }.to_string(),
            message: e.to_string(),
        }
    }
}

/// Configuration echoed into every result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub regime: Option<Regime>,
    pub csv: Option<String>,
    pub label_col: Option<String>,
    pub sigmas: Vec<f64>,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: Vec<usize>,
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    pub mechs: Vec<MechanismKind>,
    pub scheme: SchemeKind,
    pub qmc_psi: Option<f64>,
    pub ridge: bool,
    pub seed: u64,
    pub seeds: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: Some(Regime::Normal),
            csv: None,
            label_col: None,
            sigmas: vec![1.0],
            d: 8,
            l: vec![32],
            m: vec![1],
            mechs: vec![MechanismKind::Gerf, MechanismKind::Sderf],
            scheme: SchemeKind::Iid,
            qmc_psi: None,
            ridge: false,
            seed: 0,
            seeds: 5,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("sigma values must be positive and finite");
        }
        if self.d == 0 || self.l.is_empty() || self.l.contains(&0) {
            return bad("d and L must be positive");
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("M must be positive");
        }
        if self.mechs.is_empty() {
            return bad("at least one mechanism is required");
        }
        if self.seeds == 0 {
            return bad("seeds must be positive");
        }
        if self.scheme == SchemeKind::Qmc && self.mechs.contains(&MechanismKind::Trig) {
            return bad("the qmc scheme cannot be combined with trig features");
        }
        if self.regime.is_none() && self.csv.is_none() {
            return bad("either a regime or a CSV file is required");
        }
        Ok(())
    }

    pub fn first_l(&self) -> usize {
        self.l[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fits: Option<Vec<FitDump>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ErrorRecord>,
}

impl ExperimentResult {
    pub fn new(command: &str, config: &ExperimentConfig, records: Vec<Record>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: config.clone(),
            records,
            fits: None,
            errors: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Records matching a mechanism and metric.
    pub fn values(&self, mechanism: &str, metric: &str) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.mechanism == mechanism && r.metric == metric)
            .collect()
    }
}

/// `n` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        return Err(Error::InvalidArgument(format!("bad grid {lo}:{hi}:{n}")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Parses `lo:hi:n`.
pub fn parse_sigma_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let err = || Error::InvalidArgument(format!("sigma grid {s:?} is not lo:hi:n"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo: f64 = parts[0].parse().map_err(|_| err())?;
    let hi: f64 = parts[1].parse().map_err(|_| err())?;
    let n: usize = parts[2].parse().map_err(|_| err())?;
    log_grid(lo, hi, n)
}
