//! Offloading decision functions.
//!
//! Units are fixed throughout the crate: workload size in millions of
//! instructions (MI), compute rates in MIPS, data in bytes, bandwidth in
//! bytes/s, power in watts and energy in joules. `MI / MIPS` and
//! `bytes / (bytes/s)` are both seconds, so every term of the application
//! level benefit is `watts * seconds`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("invalid parameter `{name}` = {value}: {rule}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
}

fn positive(name: &'static str, value: f64) -> Result<(), DecisionError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(DecisionError::InvalidParameter {
            name,
            value,
            rule: "must be > 0",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), DecisionError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(DecisionError::InvalidParameter {
            name,
            value,
            rule: "must be >= 0",
        })
    }
}

/// How the user constrains server selection. Only a cost bound for now.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerCriteria {
    /// Highest acceptable advertised cost per service; `None` accepts any.
    pub max_cost: Option<f64>,
}

/// Device-wide parameters of the application-level benefit function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPreferences {
    /// Active CPU power (W).
    pub e_c: f64,
    /// Idle CPU power (W).
    pub e_i: f64,
    /// Radio transmit power (W).
    pub e_t: f64,
    /// Radio receive power (W).
    pub e_r: f64,
    /// Device compute rate (MIPS).
    pub s_m: f64,
    /// Edge compute rate (MIPS).
    pub s_c: f64,
    /// Uplink bandwidth (bytes/s).
    pub beta_u: f64,
    /// Downlink bandwidth (bytes/s).
    pub beta_d: f64,
    /// Benefit threshold (J).
    pub b_t: f64,
    pub server_criteria: ServerCriteria,
}

impl GlobalPreferences {
    pub fn validate(&self) -> Result<(), DecisionError> {
        positive("e_c", self.e_c)?;
        non_negative("e_i", self.e_i)?;
        positive("e_t", self.e_t)?;
        positive("e_r", self.e_r)?;
        positive("s_m", self.s_m)?;
        positive("s_c", self.s_c)?;
        positive("beta_u", self.beta_u)?;
        positive("beta_d", self.beta_d)?;
        non_negative("b_t", self.b_t)?;
        if let Some(cost) = self.server_criteria.max_cost {
            non_negative("max_cost", cost)?;
        }
        Ok(())
    }
}

/// `P_f`: widened to three states so that "never migrate this app" is
/// distinct from "always migrate it".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffloadFlag {
    #[default]
    Normal,
    Forced,
    Disabled,
}

/// `P_t`: whether the application carries migration markers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MigrationType {
    #[default]
    Aware,
    NonAware,
}

impl fmt::Display for OffloadFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OffloadFlag::Normal => "normal",
            OffloadFlag::Forced => "forced",
            OffloadFlag::Disabled => "disabled",
        })
    }
}

impl FromStr for OffloadFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Self::Normal),
            "forced" | "forced-offload" => Ok(Self::Forced),
            "disabled" | "migration-disabled" => Ok(Self::Disabled),
            other => Err(format!("unknown offload flag `{other}` (normal|forced|disabled)")),
        }
    }
}

impl fmt::Display for MigrationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MigrationType::Aware => "aware",
            MigrationType::NonAware => "non-aware",
        })
    }
}

impl FromStr for MigrationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aware" | "migration-aware" => Ok(Self::Aware),
            "non-aware" | "nonaware" => Ok(Self::NonAware),
            other => Err(format!("unknown migration type `{other}` (aware|non-aware)")),
        }
    }
}

/// Per-application entry: `<I, alpha, gamma, P_f>` plus `P_t`, the
/// checkpoint interval for non-aware apps, and the catalog task to launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppPreferences {
    pub app_id: String,
    pub task: TaskSpec,
    /// Workload size (MI).
    pub i: f64,
    /// Bytes uploaded per offloading transaction.
    pub alpha: f64,
    /// Bytes downloaded per offloading transaction.
    pub gamma: f64,
    pub p_f: OffloadFlag,
    pub p_t: MigrationType,
    pub interval_s: f64,
}

impl AppPreferences {
    pub fn validate(&self) -> Result<(), DecisionError> {
        non_negative("i", self.i)?;
        non_negative("alpha", self.alpha)?;
        non_negative("gamma", self.gamma)?;
        positive("interval_s", self.interval_s)?;
        Ok(())
    }
}

/// The five per-process energy terms of the process-level benefit (J).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessEnergyTerms {
    /// Full local execution of the process.
    pub e_m_p: f64,
    /// Checkpointing the process on the device.
    pub e_m_prime_p: f64,
    /// Restarting the process from a received checkpoint on the device.
    pub e_m_dprime_p: f64,
    /// Transmitting the checkpoint.
    pub e_t_p: f64,
    /// Receiving the updated checkpoint.
    pub e_r_p: f64,
}

impl ProcessEnergyTerms {
    pub fn validate(&self) -> Result<(), DecisionError> {
        non_negative("e_m_p", self.e_m_p)?;
        non_negative("e_m_prime_p", self.e_m_prime_p)?;
        non_negative("e_m_dprime_p", self.e_m_dprime_p)?;
        non_negative("e_t_p", self.e_t_p)?;
        non_negative("e_r_p", self.e_r_p)?;
        Ok(())
    }
}

/// Application-level energy saving of offloading `app` (J, signed):
///
/// `E_c*(I/S_m) - E_i*(I/S_c) - E_t*(alpha/beta_u) - E_r*(gamma/beta_d)`
pub fn benefit_eq1(g: &GlobalPreferences, app: &AppPreferences) -> Result<f64, DecisionError> {
    g.validate()?;
    app.validate()?;
    let local = g.e_c * (app.i / g.s_m);
    let idle = g.e_i * (app.i / g.s_c);
    let tx = g.e_t * (app.alpha / g.beta_u);
    let rx = g.e_r * (app.gamma / g.beta_d);
    Ok(local - idle - tx - rx)
}

/// Process-level energy saving (J, signed): local execution minus the
/// checkpoint, restart, transmit and receive overheads.
pub fn benefit_eq2(t: &ProcessEnergyTerms) -> Result<f64, DecisionError> {
    t.validate()?;
    Ok(t.e_m_p - t.e_m_prime_p - t.e_m_dprime_p - t.e_t_p - t.e_r_p)
}

/// Threshold gate. Ties stay local; a forced flag wins over any benefit and
/// a disabled flag wins over everything.
pub fn should_offload(benefit: f64, b_t: f64, p_f: OffloadFlag) -> bool {
    match p_f {
        OffloadFlag::Disabled => false,
        OffloadFlag::Forced => true,
        OffloadFlag::Normal => benefit > b_t,
    }
}
