//! Device parameter model for one building block and chained blocks,
//! plus validation of the dispersive approximation regimes.
//!
//! Unit convention: every frequency-like quantity is an angular frequency
//! in rad/s, taken with the same numeric mantissa as the published values
//! (10 GHz -> 1e10 rad/s). The gate-time calibrations are only
//! self-consistent under this reading (e.g. g_mr^2/Delta_r * 1.7 us = pi).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// All circuit frequencies, couplings and drive amplitudes of one
/// building block, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockParams {
    /// Mode (DC-SQUID) frequency.
    pub omega_m: f64,
    /// Fluxonium qubit frequency.
    pub omega_f: f64,
    /// Rotation qubit frequency.
    pub omega_r: f64,
    /// Beam-splitter coupler frequency.
    pub omega_b: f64,
    /// Mode-rotation qubit capacitive coupling.
    pub g_mr: f64,
    /// Mode-coupler capacitive coupling (symmetric across modes).
    pub g_mb: f64,
    /// Static quadratic mode-fluxonium coupling.
    pub g_mf: f64,
    /// Flux-modulation amplitude of the quadratic coupling.
    pub g0: f64,
    /// Direct mode-mode exchange strength (magnitude).
    pub lambda: f64,
    /// Squeezing drive frequency.
    #[serde(rename = "omega_S_drive")]
    pub omega_s_drive: f64,
    /// Displacement drive frequency.
    #[serde(rename = "omega_D_drive")]
    pub omega_d_drive: f64,
    /// Squeezing drive amplitude.
    #[serde(rename = "Omega_S")]
    pub drive_s: f64,
    /// Displacement drive amplitude.
    #[serde(rename = "Omega_D")]
    pub drive_d: f64,
    /// Flux-modulation half-frequency (modulation runs at 2*omega_1).
    pub omega_1: f64,
}

impl BlockParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_m", self.omega_m),
            ("omega_f", self.omega_f),
            ("omega_r", self.omega_r),
            ("omega_b", self.omega_b),
            ("g_mr", self.g_mr),
            ("g_mb", self.g_mb),
            ("g_mf", self.g_mf),
            ("g0", self.g0),
            ("lambda", self.lambda),
            ("omega_S_drive", self.omega_s_drive),
            ("omega_D_drive", self.omega_d_drive),
            ("Omega_S", self.drive_s),
            ("Omega_D", self.drive_d),
            ("omega_1", self.omega_1),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} is not finite")));
            }
        }
        if self.omega_m <= 0.0 {
            return Err(Error::InvalidArgument("omega_m must be positive".into()));
        }
        for (name, v) in [
            ("g_mr", self.g_mr),
            ("g_mb", self.g_mb),
            ("g_mf", self.g_mf),
            ("g0", self.g0),
            ("lambda", self.lambda),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Mode-rotation qubit detuning Delta_r = omega_m - omega_r.
    pub fn delta_r(&self) -> f64 {
        self.omega_m - self.omega_r
    }

    /// Coupler detuning Delta_b = omega_b - omega_m.
    pub fn delta_b(&self) -> f64 {
        self.omega_b - self.omega_m
    }

    /// Two-photon detuning Delta_k = 2 omega_m - omega_f.
    pub fn delta_k(&self) -> f64 {
        2.0 * self.omega_m - self.omega_f
    }

    /// Two-photon counter-rotating detuning Delta'_k = 2 omega_m + omega_f.
    pub fn delta_k_prime(&self) -> f64 {
        2.0 * self.omega_m + self.omega_f
    }

    /// Displacement drive detuning Delta_D = omega_m - omega_D.
    pub fn delta_d(&self) -> f64 {
        self.omega_m - self.omega_d_drive
    }
}

/// The operating point used throughout the simulations.
pub fn default_block_params() -> BlockParams {
    let omega_m = 1.0e10;
    let omega_f = 4.0e8;
    BlockParams {
        omega_m,
        omega_f,
        omega_r: 4.0e9,
        omega_b: 5.0e9,
        g_mr: 1.05e8,
        g_mb: 1.04e8,
        g_mf: omega_f / 483.0,
        g0: 8.3e6,
        lambda: 7.0e6,
        omega_s_drive: omega_f,
        omega_d_drive: omega_m,
        drive_s: 1.5e8,
        drive_d: 6.0e7,
        omega_1: omega_m + omega_f / 2.0,
    }
}

/// Parameters for a chain of building blocks. Block k couples to block
/// k+1 through coupler B_k; mode frequencies are recorded so the
/// symmetric-coupler assumption can be checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub blocks: Vec<BlockParams>,
    /// Direct exchange strengths between adjacent modes; length = blocks - 1.
    pub inter_block_lambda: Vec<f64>,
}

impl ChainParams {
    pub fn new(blocks: Vec<BlockParams>, inter_block_lambda: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("chain needs at least one block".into()));
        }
        if inter_block_lambda.len() + 1 != blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "{} blocks need {} inter-block couplings, got {}",
                blocks.len(),
                blocks.len() - 1,
                inter_block_lambda.len()
            )));
        }
        for b in &blocks {
            b.validate()?;
        }
        Ok(ChainParams { blocks, inter_block_lambda })
    }

    pub fn uniform(block: BlockParams, n_modes: usize) -> Result<Self> {
        ChainParams::new(vec![block; n_modes], vec![block.lambda; n_modes.saturating_sub(1)])
    }

    pub fn n_modes(&self) -> usize {
        self.blocks.len()
    }
}

/// Operation families of the gate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Rotation,
    Displacement,
    Squeezing,
    Kerr,
    Beamsplitter,
}

impl OpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::Rotation => "rotation",
            OpKind::Displacement => "displacement",
            OpKind::Squeezing => "squeezing",
            OpKind::Kerr => "kerr",
            OpKind::Beamsplitter => "beamsplitter",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rotation" => Ok(OpKind::Rotation),
            "displacement" | "displace" => Ok(OpKind::Displacement),
            "squeezing" | "squeeze" => Ok(OpKind::Squeezing),
            "kerr" => Ok(OpKind::Kerr),
            "beamsplitter" | "bs" => Ok(OpKind::Beamsplitter),
            other => Err(Error::InvalidArgument(format!("unknown op kind `{other}`"))),
        }
    }
}

/// One checked approximation condition: `ratio >= threshold` passes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeCondition {
    pub name: String,
    pub ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Report of every approximation condition an operation relies on.
/// Informational only; it never blocks a simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeReport {
    pub op_kind: OpKind,
    pub conditions: Vec<RegimeCondition>,
    pub pass: bool,
}

impl RegimeReport {
    fn from_conditions(op_kind: OpKind, raw: Vec<(String, f64)>, threshold: f64) -> Self {
        let conditions: Vec<RegimeCondition> = raw
            .into_iter()
            .map(|(name, ratio)| RegimeCondition { name, ratio, threshold, pass: ratio >= threshold })
            .collect();
        let pass = conditions.iter().all(|x| x.pass);
        RegimeReport { op_kind, conditions, pass }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("regime report [{}]: {}\n", self.op_kind.as_str(), if self.pass { "PASS" } else { "FAIL" });
        for x in &self.conditions {
            s.push_str(&format!(
                "  {:<28} ratio {:>12.4}  threshold {:>6.1}  {}\n",
                x.name,
                x.ratio,
                x.threshold,
                if x.pass { "pass" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Default "much greater than" threshold for regime checks.
pub const DEFAULT_REGIME_THRESHOLD: f64 = 10.0;

/// Evaluate every dispersive/RWA inequality the given operation relies on
/// as a ratio against `threshold`.
pub fn validate_regime(
    op_kind: OpKind,
    params: &BlockParams,
    mean_photons: f64,
    threshold: f64,
) -> Result<RegimeReport> {
    if mean_photons < 0.0 {
        return Err(Error::InvalidArgument("mean photon number must be >= 0".into()));
    }
    params.validate()?;
    let tiny = 1e-300;
    let raw: Vec<(String, f64)> = match op_kind {
        OpKind::Rotation => vec![(
            "|Delta_r| >> g_mr".into(),
            params.delta_r().abs() / params.g_mr.max(tiny),
        )],
        OpKind::Displacement => vec![(
            // resonant pulses are exact; flag strong detuning
            "omega_m >> |Delta_D|".into(),
            params.omega_m / params.delta_d().abs().max(tiny),
        )],
        OpKind::Squeezing => vec![
            ("omega_m >> g0".into(), params.omega_m / params.g0.max(tiny)),
            ("omega_1 >> g0".into(), params.omega_1.abs() / params.g0.max(tiny)),
            ("omega_f >> g0".into(), params.omega_f.abs() / params.g0.max(tiny)),
            ("Omega_S >> g0".into(), params.drive_s.abs() / params.g0.max(tiny)),
        ],
        OpKind::Kerr => {
            let scale = (mean_photons * params.g_mf).max(tiny);
            vec![
                ("omega_f >> nbar g_mf".into(), params.omega_f.abs() / scale),
                ("|Delta_k| >> nbar g_mf".into(), params.delta_k().abs() / scale),
                ("|Delta'_k| >> nbar g_mf".into(), params.delta_k_prime().abs() / scale),
            ]
        }
        OpKind::Beamsplitter => vec![(
            "|Delta_b| >> g_mb".into(),
            params.delta_b().abs() / params.g_mb.max(tiny),
        )],
    };
    Ok(RegimeReport::from_conditions(op_kind, raw, threshold))
}

/// Coupler detuning at which the effective mode-mode exchange vanishes:
/// Delta_block = -g_mb^2 / lambda. The blocking coupler frequency is
/// omega_m + Delta_block.
pub fn blocking_detuning(g_mb: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(Error::Singular("lambda = 0: no blocking point exists".into()));
    }
    Ok(-g_mb * g_mb / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_point_reproduces_quoted_ratios() {
        let p = default_block_params();
        p.validate().unwrap();
        assert_relative_eq!(p.omega_m / p.omega_r, 2.5, max_relative = 1e-12);
        // quoted ratios, all within 0.5%
        assert_relative_eq!(p.delta_r().abs() / p.g_mr, 57.14, max_relative = 5e-3);
        assert_relative_eq!(p.drive_s / p.g0, 18.0, max_relative = 5e-3);
        assert_relative_eq!(p.omega_f / p.g_mf, 483.0, max_relative = 5e-3);
        assert_relative_eq!(p.delta_b().abs() / p.g_mb, 48.0, max_relative = 5e-3);
    }

    #[test]
    fn regime_kerr_and_rotation_defaults() {
        let p = default_block_params();
        let r = validate_regime(OpKind::Kerr, &p, 4.0, DEFAULT_REGIME_THRESHOLD).unwrap();
        assert!(r.pass);
        let wf_cond = &r.conditions[0];
        assert_relative_eq!(wf_cond.ratio, 483.0 / 4.0, max_relative = 1e-9);

        let r = validate_regime(OpKind::Rotation, &p, 4.0, DEFAULT_REGIME_THRESHOLD).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.conditions[0].ratio, 57.142857, max_relative = 1e-6);

        let mut near = p;
        near.omega_r = 9.9e9;
        let r = validate_regime(OpKind::Rotation, &near, 4.0, DEFAULT_REGIME_THRESHOLD).unwrap();
        assert!(!r.pass);
        assert!(r.conditions[0].ratio < 1.0);
    }

    #[test]
    fn regime_is_monotone_in_detuning() {
        let p = default_block_params();
        let base = validate_regime(OpKind::Beamsplitter, &p, 4.0, 10.0).unwrap();
        assert!(base.pass);
        let mut further = p;
        further.omega_b = 3.0e9; // larger |Delta_b|
        let more = validate_regime(OpKind::Beamsplitter, &further, 4.0, 10.0).unwrap();
        assert!(more.conditions[0].ratio > base.conditions[0].ratio);
        assert!(more.pass);
    }

    #[test]
    fn blocking_detuning_formula() {
        let d = blocking_detuning(1.04e8, 7e6).unwrap();
        assert_relative_eq!(d, -1.5451e9, max_relative = 1e-4);
        // limit lambda -> large: detuning -> 0-
        let d = blocking_detuning(1.04e8, 1e12).unwrap();
        assert!(d < 0.0 && d.abs() < 1.1e4);
        assert_eq!(blocking_detuning(0.0, 7e6).unwrap(), 0.0);
        assert!(blocking_detuning(1.0e8, 0.0).is_err());
        // substituted into g_eff = lambda + g^2/Delta gives exactly 0
        let (g, l) = (1.04e8, 7e6);
        let db = blocking_detuning(g, l).unwrap();
        let geff = l + g * g / db;
        assert!(geff.abs() < 1e-9 * l);
    }

    #[test]
    fn chain_construction() {
        let p = default_block_params();
        let c = ChainParams::uniform(p, 3).unwrap();
        assert_eq!(c.n_modes(), 3);
        assert_eq!(c.inter_block_lambda.len(), 2);
        assert!(ChainParams::new(vec![p, p], vec![]).is_err());
        assert!(ChainParams::new(vec![], vec![]).is_err());
    }

    #[test]
    fn params_serde_roundtrip_uses_exact_keys() {
        let p = default_block_params();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"Omega_S\""));
        assert!(s.contains("\"omega_D_drive\""));
        let back: BlockParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
