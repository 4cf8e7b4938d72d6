//! Electrical parameters of the HV supply and the impedance arithmetic shared
//! by the closed-form fault model and the calibration engine.
//!
//! All quantities are SI. Reactances are stored at grid frequency rather than
//! as inductances.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Ratio of average to peak value of a 12-pulse rectified waveform.
pub const K12: f64 = 0.9886;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerParams {
    /// Primary (delta) winding resistance, Ω.
    pub r_p_delta: f64,
    /// Primary leakage reactance, Ω.
    pub x_lp_delta: f64,
    /// Secondary winding resistance referred to the primary, Ω.
    pub r_sp: f64,
    /// Secondary leakage reactance referred to the primary, Ω.
    pub x_l_sp: f64,
    /// Nominal primary line-line rms voltage, V.
    pub v_prim_ll: f64,
    /// Nominal secondary line-line rms voltage (each secondary), V.
    pub v_sec_ll: f64,
    /// Nameplate rating, VA. Informational only.
    #[serde(default)]
    pub rating: f64,
}

impl TransformerParams {
    /// The 50 kVA Δ/Y/Δ test transformer.
    pub fn test_setup() -> Self {
        Self {
            r_p_delta: 0.059,
            x_lp_delta: 0.121,
            r_sp: 0.134,
            x_l_sp: 0.209,
            v_prim_ll: 415.0,
            v_sec_ll: 1100.0,
            rating: 50e3,
        }
    }

    /// Primary-to-delta-secondary turns ratio N1/N2.
    pub fn turns_ratio(&self) -> f64 {
        self.v_prim_ll / self.v_sec_ll
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transformer.r_p_delta", self.r_p_delta),
            ("transformer.x_lp_delta", self.x_lp_delta),
            ("transformer.r_sp", self.r_sp),
            ("transformer.x_l_sp", self.x_l_sp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and ≥ 0, got {v}")));
            }
        }
        for (name, v) in [
            ("transformer.v_prim_ll", self.v_prim_ll),
            ("transformer.v_sec_ll", self.v_sec_ll),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Operating line-line rms voltage at the primary terminals, V.
    pub e_ll: f64,
    /// Grid angular frequency, rad/s.
    pub omega: f64,
    /// Per-phase source reactance, Ω.
    pub x_s: f64,
}

impl SourceParams {
    pub fn test_setup() -> Self {
        Self {
            e_ll: 465.0,
            omega: 2.0 * PI * 50.0,
            x_s: 0.166,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_ll > 0.0 && self.e_ll.is_finite()) {
            return Err(invalid("source.e_ll", format!("must be > 0, got {}", self.e_ll)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(invalid("source.omega", format!("must be > 0, got {}", self.omega)));
        }
        if !(self.x_s >= 0.0 && self.x_s.is_finite()) {
            return Err(invalid("source.x_s", format!("must be ≥ 0, got {}", self.x_s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcLinkParams {
    /// Fault-path resistance on the supply side of the tube, Ω.
    pub r1: f64,
    /// Fault-path resistance in series with the tube, Ω.
    pub r2: f64,
    /// Follow-on limiting resistor between the bridges and the dc capacitor, Ω.
    pub r3: f64,
    /// DC-link capacitance, F.
    pub c_dc: f64,
    /// Capacitor precharge voltage, V.
    pub v_c: f64,
}

impl DcLinkParams {
    pub fn test_setup(topology: Topology) -> Self {
        Self {
            r1: 3.0,
            r2: 8.0,
            r3: 38.0,
            c_dc: 92e-6,
            v_c: match topology {
                Topology::Parallel => 1700.0,
                Topology::Series => 3400.0,
            },
        }
    }

    /// Resistance seen by the capacitor discharge: R1 + R2.
    pub fn fault_resistance(&self) -> f64 {
        self.r1 + self.r2
    }

    /// Resistance in the follow-on current path: R1 + R2 + R3.
    pub fn follow_on_resistance(&self) -> f64 {
        self.r1 + self.r2 + self.r3
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dc_link.r1", self.r1),
            ("dc_link.r2", self.r2),
            ("dc_link.r3", self.r3),
            ("dc_link.v_c", self.v_c),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and ≥ 0, got {v}")));
            }
        }
        if self.r1 + self.r2 <= 0.0 {
            return Err(invalid("dc_link.r1+r2", "fault impedance must be > 0"));
        }
        if !(self.c_dc > 0.0 && self.c_dc.is_finite()) {
            return Err(invalid("dc_link.c_dc", format!("must be > 0, got {}", self.c_dc)));
        }
        Ok(())
    }
}

/// DC-side interconnection of the two 6-pulse bridges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[default]
    Parallel,
    Series,
}

impl Topology {
    pub const ALL: [Topology; 2] = [Topology::Parallel, Topology::Series];

    /// Factor applied to the turns factor squared when referring a dc-side
    /// resistance to the primary.
    pub fn referral_factor(self) -> f64 {
        match self {
            Topology::Parallel => 2.0 / 3.0,
            Topology::Series => 1.0 / 6.0,
        }
    }

    /// Scale of the base current relative to the parallel connection.
    pub fn base_current_scale(self) -> f64 {
        match self {
            Topology::Parallel => 1.0,
            Topology::Series => 0.5,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Parallel => "parallel",
            Topology::Series => "series",
        })
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(Topology::Parallel),
            "series" => Ok(Topology::Series),
            other => Err(invalid("topology", format!("expected parallel|series, got `{other}`"))),
        }
    }
}

/// Transformer and source impedance referred to the primary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentImpedance {
    /// R'_p, Ω.
    pub r_p_eq: f64,
    /// X'_lp, Ω.
    pub x_lp_eq: f64,
    /// √3·(N1/N2)·k12.
    pub turns_factor: f64,
    /// X'_lp / R'_p.
    pub x_r_trx: f64,
    /// The 12-pulse average-to-peak constant used in `turns_factor`.
    pub k12: f64,
}

/// Refers the winding and source impedances to the primary of the
/// secondary-paralleled transformer.
pub fn referred_equivalents(
    trx: &TransformerParams,
    src: &SourceParams,
) -> Result<EquivalentImpedance> {
    trx.validate()?;
    src.validate()?;
    let r_p_eq = trx.r_p_delta + trx.r_sp / 2.0;
    let x_lp_eq = trx.x_lp_delta + trx.x_l_sp / 2.0 + 3.0 * src.x_s;
    if r_p_eq <= 0.0 {
        return Err(Error::DegenerateImpedance(
            "referred resistance R'_p is zero; X/R undefined",
        ));
    }
    Ok(EquivalentImpedance {
        r_p_eq,
        x_lp_eq,
        turns_factor: SQRT_3 * trx.turns_ratio() * K12,
        x_r_trx: x_lp_eq / r_p_eq,
        k12: K12,
    })
}

/// DC-side resistance referred to the primary by active-power equality.
pub fn r_lp(topology: Topology, r_load: f64, eq: &EquivalentImpedance) -> f64 {
    topology.referral_factor() * eq.turns_factor * eq.turns_factor * r_load
}

/// X'_lp / (R'_p + R_Lp). The correction factor is not applied here.
pub fn x_r_system(eq: &EquivalentImpedance, r_lp_val: f64) -> Result<f64> {
    let r = eq.r_p_eq + r_lp_val;
    if r <= 0.0 {
        return Err(Error::DegenerateImpedance("R'_p + R_Lp must be > 0"));
    }
    Ok(eq.x_lp_eq / r)
}

/// Steady-state dc fault current used as the model's base value.
///
/// `r_lp_corrected` is k_c·R_Lp as computed by the caller.
pub fn i_f_base(
    topology: Topology,
    src: &SourceParams,
    eq: &EquivalentImpedance,
    r_lp_corrected: f64,
) -> Result<f64> {
    let z = (eq.r_p_eq + r_lp_corrected).hypot(eq.x_lp_eq);
    if !(z > 0.0) {
        return Err(Error::DegenerateImpedance("impedance magnitude must be > 0"));
    }
    Ok(topology.base_current_scale() * SQRT_2 * src.e_ll / z * eq.turns_factor)
}

/// Decay rate δ = ω·(R'_p + k_c·R_Lp)/X'_lp, s⁻¹.
pub fn delta_coeff(src: &SourceParams, eq: &EquivalentImpedance, r_lp_corrected: f64) -> Result<f64> {
    if !(eq.x_lp_eq > 0.0) {
        return Err(Error::DegenerateImpedance("X'_lp must be > 0"));
    }
    Ok(src.omega * (eq.r_p_eq + r_lp_corrected) / eq.x_lp_eq)
}

/// Complete description of a supply under fault, as read from a JSON config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub transformer: TransformerParams,
    pub source: SourceParams,
    pub dc_link: DcLinkParams,
    #[serde(default)]
    pub topology: Topology,
}

impl SystemConfig {
    /// The experimental test setup for the given dc interconnection
    /// (1700 V precharge parallel, 3400 V series).
    pub fn test_setup(topology: Topology) -> Self {
        Self {
            transformer: TransformerParams::test_setup(),
            source: SourceParams::test_setup(),
            dc_link: DcLinkParams::test_setup(topology),
            topology,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.transformer.validate()?;
        self.source.validate()?;
        self.dc_link.validate()
    }

    pub fn equivalent(&self) -> Result<EquivalentImpedance> {
        referred_equivalents(&self.transformer, &self.source)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: SystemConfig = serde_json::from_str(&text).map_err(|source| Error::Config {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
