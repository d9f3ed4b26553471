//! Per-sweep chain records and move counters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementSpec, ModelParams, ModelSpec};

/// Every move the sampler can attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Initial,
    Transition,
    Psi,
    Zeta,
    Omega,
    Xi,
    Beta,
    Gamma,
    Birth,
    Death,
    Split,
    Combine,
}

impl MoveKind {
    pub const ALL: [MoveKind; 12] = [
        MoveKind::Initial,
        MoveKind::Transition,
        MoveKind::Psi,
        MoveKind::Zeta,
        MoveKind::Omega,
        MoveKind::Xi,
        MoveKind::Beta,
        MoveKind::Gamma,
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Split,
        MoveKind::Combine,
    ];

    /// Row label in the acceptance table.
    pub fn label(self) -> &'static str {
        match self {
            MoveKind::Initial => "Initial probabilities",
            MoveKind::Transition => "Transition probabilities",
            MoveKind::Psi => "Conditional probabilities",
            MoveKind::Zeta => "zeta_u",
            MoveKind::Omega => "omega_y",
            MoveKind::Xi => "xi_u",
            MoveKind::Beta => "beta",
            MoveKind::Gamma => "gamma",
            MoveKind::Birth => "Birth",
            MoveKind::Death => "Death",
            MoveKind::Split => "Split",
            MoveKind::Combine => "Combine",
        }
    }

    /// Token used in trace files.
    pub fn code(self) -> &'static str {
        match self {
            MoveKind::Initial => "initial",
            MoveKind::Transition => "transition",
            MoveKind::Psi => "psi",
            MoveKind::Zeta => "zeta",
            MoveKind::Omega => "omega",
            MoveKind::Xi => "xi",
            MoveKind::Beta => "beta",
            MoveKind::Gamma => "gamma",
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Split => "split",
            MoveKind::Combine => "combine",
        }
    }

    pub fn from_code(code: &str) -> Option<MoveKind> {
        MoveKind::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn is_mh(self) -> bool {
        !matches!(self, MoveKind::Birth | MoveKind::Death | MoveKind::Split | MoveKind::Combine)
    }

    /// Blocks updated, in order, by one MH sweep.
    pub fn mh_blocks(spec: &ModelSpec) -> Vec<MoveKind> {
        let mut out = vec![MoveKind::Initial, MoveKind::Transition];
        match spec.measurement {
            MeasurementSpec::Basic { .. } => out.push(MoveKind::Psi),
            MeasurementSpec::Cutpoint => out.extend([MoveKind::Zeta, MoveKind::Omega]),
            MeasurementSpec::Covariate { .. } => {
                out.extend([MoveKind::Xi, MoveKind::Beta, MoveKind::Gamma])
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub performed: u64,
    pub accepted: u64,
}

impl MoveCounter {
    pub fn rate(&self) -> f64 {
        if self.performed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.performed as f64
        }
    }
}

/// Acceptance counters for a whole run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub sweeps: u64,
    pub counts: BTreeMap<MoveKind, MoveCounter>,
}

impl MoveCounts {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let c = self.counts.entry(kind).or_default();
        c.performed += 1;
        c.accepted += accepted as u64;
    }

    pub fn get(&self, kind: MoveKind) -> MoveCounter {
        self.counts.get(&kind).copied().unwrap_or_default()
    }

    pub fn merge(&mut self, other: &MoveCounts) {
        self.sweeps += other.sweeps;
        for (kind, c) in &other.counts {
            let e = self.counts.entry(*kind).or_default();
            e.performed += c.performed;
            e.accepted += c.accepted;
        }
    }
}

/// Outcome of the sweep's dimension-changing attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
}

/// What the sampler hands to a [`TraceSink`] after each sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepView<'a> {
    /// 1-based sweep index.
    pub sweep: u64,
    pub params: &'a ModelParams,
    pub loglik: f64,
    pub logprior: f64,
    /// Acceptance of each MH block, in [`MoveKind::mh_blocks`] order.
    pub mh: &'a [bool],
    pub dim: Option<DimOutcome>,
}

/// Receives one record per sweep.
pub trait TraceSink {
    fn record(&mut self, sweep: &SweepView<'_>) -> Result<()>;
}

/// Stored form of one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep: u64,
    pub k: usize,
    pub loglik: f64,
    pub logprior: f64,
    pub mh: Vec<bool>,
    pub dim: Option<DimOutcome>,
    /// [`ModelParams::flatten`] of the state after the sweep.
    pub theta: Vec<f64>,
}

impl TraceRecord {
    pub fn from_view(view: &SweepView<'_>) -> Self {
        TraceRecord {
            sweep: view.sweep,
            k: view.params.k(),
            loglik: view.loglik,
            logprior: view.logprior,
            mh: view.mh.to_vec(),
            dim: view.dim,
            theta: view.params.flatten(),
        }
    }

    pub fn params(&self, spec: &ModelSpec) -> Result<ModelParams> {
        ModelParams::unflatten(spec, self.k, &self.theta)
    }

    pub fn log_posterior(&self) -> f64 {
        self.loglik + self.logprior
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, sweep: &SweepView<'_>) -> Result<()> {
        self.push(TraceRecord::from_view(sweep));
        Ok(())
    }
}

/// A complete chain held in memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub spec: ModelSpec,
    pub k_max: usize,
    pub records: Vec<TraceRecord>,
    pub counts: MoveCounts,
}

impl ChainTrace {
    pub fn new(spec: ModelSpec, k_max: usize, records: Vec<TraceRecord>, counts: MoveCounts) -> Result<Self> {
        for pair in records.windows(2) {
            if pair[1].sweep <= pair[0].sweep {
                return Err(Error::Trace(format!(
                    "sweep indices must increase, found {} after {}",
                    pair[1].sweep, pair[0].sweep
                )));
            }
        }
        for r in &records {
            if r.k < 1 || r.k > k_max {
                return Err(Error::Trace(format!("sweep {} has k = {} outside 1..={k_max}", r.sweep, r.k)));
            }
            if r.theta.len() != ModelParams::flat_len(&spec, r.k) {
                return Err(Error::Trace(format!("sweep {} has a malformed parameter vector", r.sweep)));
            }
        }
        Ok(ChainTrace { spec, k_max, records, counts })
    }

    /// Records with sweep index above `burn_in`.
    pub fn after_burn_in(&self, burn_in: u64) -> &[TraceRecord] {
        let start = self.records.partition_point(|r| r.sweep <= burn_in);
        &self.records[start..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for m in MoveKind::ALL {
            assert_eq!(MoveKind::from_code(m.code()), Some(m));
        }
    }

    #[test]
    fn counters_merge() {
        let mut a = MoveCounts::default();
        a.record(MoveKind::Split, true);
        a.record(MoveKind::Split, false);
        let mut b = a.clone();
        b.merge(&a);
        assert_eq!(b.get(MoveKind::Split), MoveCounter { performed: 4, accepted: 2 });
        assert_eq!(b.get(MoveKind::Death).rate(), 0.0);
    }

    #[test]
    fn non_monotone_sweeps_are_rejected() {
        let spec = ModelSpec::basic(vec![2], 1, true);
        let rec = |sweep| TraceRecord {
            sweep,
            k: 1,
            loglik: 0.0,
            logprior: 0.0,
            mh: vec![],
            dim: None,
            theta: vec![1.0, 1.0, 1.0, 1.0],
        };
        assert!(ChainTrace::new(spec.clone(), 3, vec![rec(1), rec(2)], MoveCounts::default()).is_ok());
        assert!(ChainTrace::new(spec, 3, vec![rec(2), rec(2)], MoveCounts::default()).is_err());
    }
}
