//! Closed-form dc fault current: capacitor discharge superimposed on a
//! second-order follow-on current whose base value and damping carry the
//! correction factor k_c.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::system::{self, EquivalentImpedance, SourceParams, SystemConfig, Topology};

/// Time to first peak of the follow-on current on a 50 Hz grid.
pub const TIME_TO_PEAK_50HZ: f64 = 9.4e-3;

/// Integration step for Joules Integral evaluation.
pub const JI_STEP: f64 = 10e-6;

/// Horizon of the peak search.
pub const PEAK_SEARCH_HORIZON: f64 = 120e-3;

/// Range of X/R_system over which the correction polynomial was fitted.
pub const KC_DOMAIN: (f64, f64) = (0.01, 3.6);

/// Time to first peak for a given grid angular frequency. Scales the 50 Hz
/// value with the grid period.
pub fn default_time_to_peak(omega: f64) -> f64 {
    TIME_TO_PEAK_50HZ * (2.0 * PI * 50.0) / omega
}

/// Fourth-order correction polynomial in X/R_system, coefficients in
/// descending order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcPolynomial {
    pub coeffs: [f64; 5],
}

impl KcPolynomial {
    /// Published correction polynomial.
    pub const PUBLISHED: KcPolynomial = KcPolynomial {
        coeffs: [-0.011, 0.112, -0.348, 0.564, 0.884],
    };

    pub fn new(coeffs: [f64; 5]) -> Self {
        Self { coeffs }
    }

    /// Evaluates without any domain check.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc * x + c)
    }

    /// Evaluates and logs a warning when `x` lies outside [`KC_DOMAIN`].
    pub fn eval_checked(&self, x: f64) -> f64 {
        if !in_kc_domain(x) {
            log::warn!(
                "X/R_system = {x:.4} outside fitted domain [{}, {}]; extrapolating k_c",
                KC_DOMAIN.0,
                KC_DOMAIN.1
            );
        }
        self.eval(x)
    }
}

impl Default for KcPolynomial {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

pub fn in_kc_domain(x: f64) -> bool {
    (KC_DOMAIN.0..=KC_DOMAIN.1).contains(&x)
}

/// Correction factor from the published polynomial.
pub fn kc_polynomial(x_r_system: f64) -> f64 {
    KcPolynomial::PUBLISHED.eval_checked(x_r_system)
}

/// Shape parameters of the normalized second-order follow-on response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub t_p: f64,
    pub omega_d: f64,
    pub delta: f64,
    pub m_p: f64,
}

impl ModelShape {
    pub fn new(t_p: f64, delta: f64) -> Result<Self> {
        if !(t_p > 0.0 && t_p.is_finite()) {
            return Err(invalid("t_p", format!("must be > 0, got {t_p}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be > 0, got {delta}")));
        }
        let omega_d = PI / t_p;
        Ok(Self {
            t_p,
            omega_d,
            delta,
            m_p: (-PI * delta / omega_d).exp(),
        })
    }

    /// Damping ratio term δ/ω_d multiplying the sine.
    pub fn damping_ratio(&self) -> f64 {
        self.delta / self.omega_d
    }
}

/// Normalized follow-on current, a unit-step response of a second-order system.
pub fn normalized_follow_on(shape: &ModelShape, t: f64) -> f64 {
    let wt = shape.omega_d * t;
    1.0 - (-shape.delta * t).exp() * (wt.cos() + shape.damping_ratio() * wt.sin())
}

/// Time derivative of [`normalized_follow_on`].
pub fn normalized_follow_on_rate(shape: &ModelShape, t: f64) -> f64 {
    let ModelShape { omega_d, delta, .. } = *shape;
    (-delta * t).exp() * (omega_d * t).sin() * (delta * delta + omega_d * omega_d) / omega_d
}

/// Composed dc fault-current model. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub i_f_base: f64,
    pub shape: ModelShape,
    /// V_c / (R1 + R2), A.
    pub cap_peak: f64,
    /// (R1 + R2)·C_dc, s.
    pub cap_tau: f64,
    pub k_c: f64,
    pub x_r_system: f64,
}

/// JSON summary of a built model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub i_f_base: f64,
    pub delta: f64,
    pub omega_d: f64,
    pub k_c: f64,
    pub x_r_system: f64,
    pub cap_peak: f64,
    pub cap_tau: f64,
}

/// How the correction factor is chosen when building a follow-on model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    /// Evaluate a polynomial at the system X/R.
    Polynomial(KcPolynomial),
    /// Use a fixed k_c.
    Fixed(f64),
}

impl Default for Correction {
    fn default() -> Self {
        Correction::Polynomial(KcPolynomial::PUBLISHED)
    }
}

impl Correction {
    fn resolve(&self, x_r_system: f64) -> f64 {
        match self {
            Correction::Polynomial(p) => p.eval_checked(x_r_system),
            Correction::Fixed(k) => *k,
        }
    }
}

/// Follow-on only model for a transformer/source pair feeding a dc-side
/// resistance `r_load`. The capacitor branch is absent.
pub fn follow_on_model(
    topology: Topology,
    src: &SourceParams,
    eq: &EquivalentImpedance,
    r_load: f64,
    correction: Correction,
    t_p: f64,
) -> Result<FaultModel> {
    if !(r_load >= 0.0 && r_load.is_finite()) {
        return Err(invalid("r_load", format!("must be ≥ 0, got {r_load}")));
    }
    let r_lp = system::r_lp(topology, r_load, eq);
    let x_r_system = system::x_r_system(eq, r_lp)?;
    let k_c = correction.resolve(x_r_system);
    if !(k_c > 0.0 && k_c.is_finite()) {
        return Err(invalid("k_c", format!("must be > 0, got {k_c}")));
    }
    let r_corr = k_c * r_lp;
    let i_f_base = system::i_f_base(topology, src, eq, r_corr)?;
    let delta = system::delta_coeff(src, eq, r_corr)?;
    Ok(FaultModel {
        i_f_base,
        shape: ModelShape::new(t_p, delta)?,
        cap_peak: 0.0,
        cap_tau: f64::INFINITY,
        k_c,
        x_r_system,
    })
}

/// Builds the full model for a supply config with the published polynomial.
pub fn build_model(cfg: &SystemConfig) -> Result<FaultModel> {
    build_model_with(cfg, Correction::default())
}

/// Builds the full model for a supply config. The follow-on path sees
/// R1 + R2 + R3; the capacitor discharges through R1 + R2.
pub fn build_model_with(cfg: &SystemConfig, correction: Correction) -> Result<FaultModel> {
    cfg.validate()?;
    let eq = cfg.equivalent()?;
    let t_p = default_time_to_peak(cfg.source.omega);
    let mut model = follow_on_model(
        cfg.topology,
        &cfg.source,
        &eq,
        cfg.dc_link.follow_on_resistance(),
        correction,
        t_p,
    )?;
    let r_fault = cfg.dc_link.fault_resistance();
    model.cap_peak = cfg.dc_link.v_c / r_fault;
    model.cap_tau = r_fault * cfg.dc_link.c_dc;
    Ok(model)
}

impl FaultModel {
    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            i_f_base: self.i_f_base,
            delta: self.shape.delta,
            omega_d: self.shape.omega_d,
            k_c: self.k_c,
            x_r_system: self.x_r_system,
            cap_peak: self.cap_peak,
            cap_tau: self.cap_tau,
        }
    }

    /// Returns a copy with the source voltage and precharge scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            i_f_base: self.i_f_base * lambda,
            cap_peak: self.cap_peak * lambda,
            ..*self
        }
    }

    pub fn capacitor_discharge(&self, t: f64) -> f64 {
        if self.cap_peak == 0.0 {
            return 0.0;
        }
        self.cap_peak * (-t / self.cap_tau).exp()
    }

    pub fn follow_on(&self, t: f64) -> f64 {
        self.i_f_base * normalized_follow_on(&self.shape, t)
    }

    /// Total dc fault current at `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.follow_on(t) + self.capacitor_discharge(t)
    }

    /// ∫₀ᵗ i_dc² dt by composite Simpson on a grid no coarser than [`JI_STEP`].
    pub fn joules_integral(&self, t: f64) -> f64 {
        self.joules_integral_between(0.0, t)
    }

    pub fn joules_integral_between(&self, t0: f64, t1: f64) -> f64 {
        simpson(|t| self.evaluate(t).powi(2), t0, t1, JI_STEP)
    }

    /// ∫₀ᵗ of the follow-on current squared only.
    pub fn follow_on_joules_integral(&self, t: f64) -> f64 {
        simpson(|t| self.follow_on(t).powi(2), 0.0, t, JI_STEP)
    }

    /// Closed form of the capacitor-only Joules Integral.
    pub fn capacitor_joules_integral_exact(&self, t: f64) -> f64 {
        if self.cap_peak == 0.0 {
            return 0.0;
        }
        0.5 * self.cap_peak * self.cap_peak * self.cap_tau * (1.0 - (-2.0 * t / self.cap_tau).exp())
    }

    /// Global maximum of the dc current on `[0, 120 ms]`.
    pub fn peak_current(&self) -> (f64, f64) {
        peak_search(|t| self.evaluate(t), PEAK_SEARCH_HORIZON)
    }

    /// Current at t = 0⁺, where the follow-on term is still zero.
    pub fn initial_peak(&self) -> f64 {
        self.evaluate(0.0)
    }

    /// Samples `(t, i, J_I)` every `period` seconds up to and including
    /// `until`. J_I is accumulated piecewise so the whole trace costs one pass.
    pub fn sample(&self, until: f64, period: f64) -> Vec<(f64, f64, f64)> {
        if !(until > 0.0) || !(period > 0.0) {
            return Vec::new();
        }
        let n = (until / period).round() as usize;
        let mut out = Vec::with_capacity(n + 1);
        let mut ji = 0.0;
        let mut prev = 0.0;
        for k in 0..=n {
            let t = (k as f64 * period).min(until);
            ji += self.joules_integral_between(prev, t);
            out.push((t, self.evaluate(t), ji));
            prev = t;
        }
        out
    }
}

/// Composite Simpson rule with an even number of panels no wider than `max_h`.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, max_h: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut n = ((b - a) / max_h).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Dense 10 µs scan followed by a 1 µs refinement around the best sample.
/// Ties go to the earlier time.
pub(crate) fn peak_search(f: impl Fn(f64) -> f64, horizon: f64) -> (f64, f64) {
    let coarse = 10e-6;
    let fine = 1e-6;
    let n = (horizon / coarse).round() as usize;
    let (mut best_t, mut best) = (0.0, f(0.0));
    for k in 1..=n {
        let t = k as f64 * coarse;
        let v = f(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let lo = (best_t - coarse).max(0.0);
    let hi = (best_t + coarse).min(horizon);
    let m = ((hi - lo) / fine).round() as usize;
    for k in 0..=m {
        let t = lo + k as f64 * fine;
        let v = f(t);
        if v > best || (v == best && t < best_t) {
            best = v;
            best_t = t;
        }
    }
    (best, best_t)
}
