//! Model-based energy accounting: joules = power rating x measured duration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{GlobalPreferences, ProcessEnergyTerms};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid power profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid phase duration {0} s")]
    InvalidDuration(f64),
}

/// Device power ratings in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub p_active: f64,
    pub p_idle: f64,
    pub p_tx: f64,
    pub p_rx: f64,
}

impl PowerProfile {
    pub fn new(p_active: f64, p_idle: f64, p_tx: f64, p_rx: f64) -> Result<Self, EnergyError> {
        let p = Self {
            p_active,
            p_idle,
            p_tx,
            p_rx,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.p_active) || !pos(self.p_tx) || !pos(self.p_rx) {
            return Err(EnergyError::InvalidProfile("active, tx and rx power must be > 0"));
        }
        if !(self.p_idle.is_finite() && self.p_idle >= 0.0) {
            return Err(EnergyError::InvalidProfile("idle power must be >= 0"));
        }
        if self.p_active < self.p_idle {
            return Err(EnergyError::InvalidProfile("active power below idle power"));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            p_active: self.p_active * k,
            p_idle: self.p_idle * k,
            p_tx: self.p_tx * k,
            p_rx: self.p_rx * k,
        }
    }

    fn power_for(&self, kind: PhaseKind) -> f64 {
        match kind {
            PhaseKind::Compute | PhaseKind::Checkpoint | PhaseKind::Restart => self.p_active,
            PhaseKind::IdleWait => self.p_idle,
            PhaseKind::Tx => self.p_tx,
            PhaseKind::Rx => self.p_rx,
        }
    }
}

impl From<&GlobalPreferences> for PowerProfile {
    fn from(g: &GlobalPreferences) -> Self {
        Self {
            p_active: g.e_c,
            p_idle: g.e_i,
            p_tx: g.e_t,
            p_rx: g.e_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    Compute,
    IdleWait,
    Checkpoint,
    Restart,
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub seconds: f64,
}

/// Ordered, non-overlapping phases of one run on the device.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimeline {
    phases: Vec<Phase>,
}

impl PhaseTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: PhaseKind, seconds: f64) -> Result<(), EnergyError> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(EnergyError::InvalidDuration(seconds));
        }
        self.phases.push(Phase { kind, seconds });
        Ok(())
    }

    pub fn with(mut self, kind: PhaseKind, seconds: f64) -> Result<Self, EnergyError> {
        self.push(kind, seconds)?;
        Ok(self)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn concat(&self, other: &PhaseTimeline) -> PhaseTimeline {
        let mut phases = self.phases.clone();
        phases.extend_from_slice(&other.phases);
        PhaseTimeline { phases }
    }

    pub fn seconds(&self, kind: PhaseKind) -> f64 {
        self.phases
            .iter()
            .filter(|p| p.kind == kind)
            .map(|p| p.seconds)
            .sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.phases.iter().map(|p| p.seconds).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Joules per phase, in timeline order.
    pub per_phase: Vec<f64>,
    pub total: f64,
    /// Compute, checkpoint, restart, tx and rx energies as process terms.
    pub terms: ProcessEnergyTerms,
}

impl EnergyReport {
    pub fn idle(&self, timeline: &PhaseTimeline) -> f64 {
        timeline
            .phases()
            .iter()
            .zip(&self.per_phase)
            .filter(|(p, _)| p.kind == PhaseKind::IdleWait)
            .map(|(_, j)| j)
            .sum()
    }
}

pub fn energy_of(timeline: &PhaseTimeline, profile: &PowerProfile) -> EnergyReport {
    let per_phase: Vec<f64> = timeline
        .phases
        .iter()
        .map(|p| profile.power_for(p.kind) * p.seconds)
        .collect();
    let sum_of = |kind: PhaseKind| -> f64 {
        timeline
            .phases
            .iter()
            .zip(&per_phase)
            .filter(|(p, _)| p.kind == kind)
            .map(|(_, j)| j)
            .sum()
    };
    let terms = ProcessEnergyTerms {
        e_m_p: sum_of(PhaseKind::Compute),
        e_m_prime_p: sum_of(PhaseKind::Checkpoint),
        e_m_dprime_p: sum_of(PhaseKind::Restart),
        e_t_p: sum_of(PhaseKind::Tx),
        e_r_p: sum_of(PhaseKind::Rx),
    };
    let total = per_phase.iter().sum();
    EnergyReport {
        per_phase,
        total,
        terms,
    }
}

/// Process-level terms of an offloaded run: local execution energy from the
/// local timeline, overheads from the offloaded one.
pub fn offload_terms(
    local: &PhaseTimeline,
    offloaded: &PhaseTimeline,
    profile: &PowerProfile,
) -> ProcessEnergyTerms {
    let l = energy_of(local, profile).terms;
    let o = energy_of(offloaded, profile).terms;
    ProcessEnergyTerms {
        e_m_p: l.e_m_p,
        ..o
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeComparison {
    pub local_j: f64,
    pub pmco_j: f64,
    pub savings_j: f64,
    /// `local / pmco`; `None` when the offloaded run used no energy.
    pub ratio: Option<f64>,
}

pub fn compare_totals(local_j: f64, pmco_j: f64) -> ModeComparison {
    ModeComparison {
        local_j,
        pmco_j,
        savings_j: local_j - pmco_j,
        ratio: (pmco_j > 0.0).then(|| local_j / pmco_j),
    }
}

pub fn compare_modes(
    local: &PhaseTimeline,
    pmco: &PhaseTimeline,
    profile: &PowerProfile,
) -> ModeComparison {
    compare_totals(energy_of(local, profile).total, energy_of(pmco, profile).total)
}
