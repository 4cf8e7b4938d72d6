//! Adiabatic pre-arc model of a fuse wire standing in for the tube during a
//! wire survivability test. Heat loss is neglected, so temperature and
//! resistance are functions of the accumulated Joules Integral alone.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fuse length per kV of crowbar voltage needed to avoid flashover, m/kV.
pub const LENGTH_PER_KV: f64 = 10e-3;

/// Default fuse integration step, s.
pub const FUSE_DT: f64 = 10e-6;

/// `temperature_at` and `resistance_at` refuse J_I beyond this multiple of
/// the melting value.
pub const DEFAULT_OVERFLOW_MULTIPLE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuseWireMaterial {
    /// Conductivity at `t_o`, S/m.
    pub sigma_o: f64,
    /// Temperature coefficient of resistance at `t_o`, 1/°C.
    pub alpha_o: f64,
    /// Mass density, kg/m³.
    pub rho: f64,
    /// Specific heat, J/(kg·°C).
    pub c_p: f64,
    /// Ambient temperature, °C.
    pub t_o: f64,
    /// Melting temperature, °C.
    pub t_m: f64,
}

impl FuseWireMaterial {
    pub fn copper() -> Self {
        Self {
            sigma_o: 5.13e7,
            alpha_o: 3.8e-3,
            rho: 8950.0,
            c_p: 395.0,
            t_o: 30.0,
            t_m: 1083.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_o", self.sigma_o),
            ("alpha_o", self.alpha_o),
            ("rho", self.rho),
            ("c_p", self.c_p),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.t_m > self.t_o) || !self.t_o.is_finite() || !self.t_m.is_finite() {
            return Err(invalid("t_m", "melting temperature must exceed t_o"));
        }
        Ok(())
    }

    /// Volumetric heat capacity ρ·C_p, J/(m³·°C).
    fn heat_capacity(&self) -> f64 {
        self.rho * self.c_p
    }
}

impl Default for FuseWireMaterial {
    fn default() -> Self {
        Self::copper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuseWireGeometry {
    /// Cross-section, m².
    pub area: f64,
    /// Length, m.
    pub length: f64,
}

impl FuseWireGeometry {
    pub fn from_diameter(diameter: f64, length: f64) -> Self {
        Self {
            area: PI * diameter * diameter / 4.0,
            length,
        }
    }

    pub fn diameter(&self) -> f64 {
        (4.0 * self.area / PI).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(invalid("area", format!("must be > 0, got {}", self.area)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid("length", format!("must be > 0, got {}", self.length)));
        }
        Ok(())
    }

    /// Resistance at ambient temperature.
    pub fn cold_resistance(&self, mat: &FuseWireMaterial) -> f64 {
        self.length / (mat.sigma_o * self.area)
    }
}

/// K_JI = α/(ρ·C_p·σ·ln(1 + α(T_m − T_o))), m⁴/(A²·s).
pub fn k_ji(mat: &FuseWireMaterial) -> f64 {
    mat.alpha_o / (mat.heat_capacity() * mat.sigma_o * (mat.alpha_o * (mat.t_m - mat.t_o)).ln_1p())
}

/// Joules Integral that takes a wire of cross-section `area` from ambient
/// to melting, A²s. Independent of length.
pub fn melting_joules_integral(area: f64, mat: &FuseWireMaterial) -> Result<f64> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(invalid("area", format!("must be > 0, got {area}")));
    }
    Ok(area * area / k_ji(mat))
}

/// Cross-section that melts at `j_im`, m².
pub fn area_for_joules_integral(j_im: f64, mat: &FuseWireMaterial) -> Result<f64> {
    if !(j_im > 0.0 && j_im.is_finite()) {
        return Err(invalid("j_im", format!("must be > 0, got {j_im}")));
    }
    Ok((k_ji(mat) * j_im).sqrt())
}

/// α·J_I/(A²·ρ·C_p·σ), the exponent shared by temperature and resistance.
fn exponent(j_i: f64, area: f64, mat: &FuseWireMaterial) -> f64 {
    mat.alpha_o * j_i / (area * area * mat.heat_capacity() * mat.sigma_o)
}

fn check_ji(j_i: f64, area: f64, mat: &FuseWireMaterial, limit_multiple: f64) -> Result<()> {
    if !(j_i >= 0.0 && j_i.is_finite()) {
        return Err(invalid("j_i", format!("must be ≥ 0, got {j_i}")));
    }
    let limit = limit_multiple * melting_joules_integral(area, mat)?;
    if j_i > limit {
        return Err(Error::FuseOverflow { j_i, limit });
    }
    Ok(())
}

/// Wire temperature after absorbing `j_i`, °C.
pub fn temperature_at(j_i: f64, area: f64, mat: &FuseWireMaterial) -> Result<f64> {
    temperature_at_guarded(j_i, area, mat, DEFAULT_OVERFLOW_MULTIPLE)
}

pub fn temperature_at_guarded(j_i: f64, area: f64, mat: &FuseWireMaterial, limit_multiple: f64) -> Result<f64> {
    check_ji(j_i, area, mat, limit_multiple)?;
    Ok(exponent(j_i, area, mat).exp_m1() / mat.alpha_o + mat.t_o)
}

/// Wire resistance after absorbing `j_i`, Ω.
pub fn resistance_at(j_i: f64, geom: &FuseWireGeometry, mat: &FuseWireMaterial) -> Result<f64> {
    geom.validate()?;
    check_ji(j_i, geom.area, mat, DEFAULT_OVERFLOW_MULTIPLE)?;
    Ok(geom.cold_resistance(mat) * exponent(j_i, geom.area, mat).exp())
}

/// Linear resistance-temperature law, Ω.
pub fn resistance_at_temperature(temp: f64, geom: &FuseWireGeometry, mat: &FuseWireMaterial) -> f64 {
    geom.cold_resistance(mat) * (1.0 + mat.alpha_o * (temp - mat.t_o))
}

/// Heat needed to bring the wire to melting: A·l·ρ·C_p·(T_m − T_o), J.
pub fn melting_energy(geom: &FuseWireGeometry, mat: &FuseWireMaterial) -> f64 {
    geom.area * geom.length * mat.heat_capacity() * (mat.t_m - mat.t_o)
}

/// Melting energy from the integral of i²R up to J_Im. Equal to
/// [`melting_energy`] up to rounding.
pub fn melting_energy_from_resistance(geom: &FuseWireGeometry, mat: &FuseWireMaterial) -> Result<f64> {
    let j_im = melting_joules_integral(geom.area, mat)?;
    let x = exponent(j_im, geom.area, mat);
    Ok(geom.area * geom.length * mat.heat_capacity() / mat.alpha_o * x.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuseSample {
    pub t: f64,
    /// °C
    pub temperature: f64,
    /// Ω
    pub resistance: f64,
    /// A²s
    pub joules_integral: f64,
    /// J
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseTrace {
    pub samples: Vec<FuseSample>,
    pub melted_at: Option<f64>,
}

impl FuseTrace {
    pub fn last(&self) -> &FuseSample {
        self.samples.last().expect("trace holds the initial sample")
    }

    /// Sample at which melting was detected.
    pub fn melt_sample(&self) -> Option<&FuseSample> {
        self.melted_at.map(|_| self.last())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "temp_C", "res_ohm", "ji_A2s", "energy_J"])?;
        for s in &self.samples {
            out.write_record([
                s.t.to_string(),
                s.temperature.to_string(),
                s.resistance.to_string(),
                s.joules_integral.to_string(),
                s.energy.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Piecewise-linear current profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    t: Vec<f64>,
    i: Vec<f64>,
}

impl CurrentProfile {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("profile", "needs at least one sample"));
        }
        for (k, &(t, i)) in points.iter().enumerate() {
            if !t.is_finite() || !i.is_finite() {
                return Err(Error::NonFinite { index: k });
            }
            if k > 0 && t <= points[k - 1].0 {
                return Err(invalid("profile", format!("time not increasing at sample {k}")));
            }
        }
        Ok(Self {
            t: points.iter().map(|p| p.0).collect(),
            i: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn constant(current: f64, duration: f64) -> Result<Self> {
        Self::new(&[(0.0, current), (duration, current)])
    }

    /// Reads `t,i` pairs from a CSV with a header row. Only the first two
    /// columns are used.
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| invalid("profile", format!("bad number in row {}", pts.len() + 1)))
            };
            pts.push((field(0)?, field(1)?));
        }
        Self::new(&pts)
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Linear interpolation, clamped to the end values.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&x| x <= t);
        if k == 0 {
            return self.i[0];
        }
        if k == self.t.len() {
            return self.i[k - 1];
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = (t - t0) / (t1 - t0);
        self.i[k - 1] + w * (self.i[k] - self.i[k - 1])
    }
}

/// Steps the heat balance i²·R(T)·dt = A·l·ρ·C_p·dT over the profile from its
/// first to last time stamp. Each step uses the trapezoidal i²·dt and a
/// Heun predictor-corrector on temperature; the dissipated energy uses the
/// same averaged resistance, so E = A·l·ρ·C_p·(T − T_o) holds per step.
/// Stepping stops at the first sample with T ≥ T_m.
pub fn simulate_fuse(
    profile: &CurrentProfile,
    geom: &FuseWireGeometry,
    mat: &FuseWireMaterial,
    dt: f64,
) -> Result<FuseTrace> {
    geom.validate()?;
    mat.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let t0 = profile.start();
    let steps = ((profile.end() - t0) / dt).round() as usize;
    let r_of = |temp: f64| resistance_at_temperature(temp, geom, mat);
    let heat = geom.area * geom.length * mat.heat_capacity();

    let mut s = FuseSample {
        t: t0,
        temperature: mat.t_o,
        resistance: geom.cold_resistance(mat),
        joules_integral: 0.0,
        energy: 0.0,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(s);
    let mut i_prev = profile.at(t0);
    for n in 1..=steps {
        let t = t0 + n as f64 * dt;
        let i_now = profile.at(t);
        let q = 0.5 * (i_prev * i_prev + i_now * i_now) * dt;
        let r0 = r_of(s.temperature);
        let r_pred = r_of(s.temperature + q * r0 / heat);
        let de = 0.5 * q * (r0 + r_pred);
        s.t = t;
        s.joules_integral += q;
        s.energy += de;
        s.temperature += de / heat;
        s.resistance = r_of(s.temperature);
        if !s.temperature.is_finite() {
            return Err(Error::NonFinite { index: n });
        }
        samples.push(s);
        i_prev = i_now;
        if s.temperature >= mat.t_m {
            return Ok(FuseTrace { samples, melted_at: Some(t) });
        }
    }
    Ok(FuseTrace { samples, melted_at: None })
}

/// Standard wire gauge diameters, m, indexed from gauge 20.
const SWG_DIAMETERS_IN: [f64; 31] = [
    0.036, 0.032, 0.028, 0.024, 0.022, 0.020, 0.018, 0.0164, 0.0148, 0.0136, // 20–29
    0.0124, 0.0116, 0.0108, 0.0100, 0.0092, 0.0084, 0.0076, 0.0068, 0.0060, 0.0052, // 30–39
    0.0048, 0.0044, 0.0040, 0.0036, 0.0032, 0.0028, 0.0024, 0.0020, 0.0016, 0.0012, // 40–49
    0.0010, // 50
];

/// Diameter of an SWG gauge between 20 and 50, m.
pub fn swg_diameter(gauge: u32) -> Option<f64> {
    let k = gauge.checked_sub(20)? as usize;
    SWG_DIAMETERS_IN.get(k).map(|d| d * 25.4e-3)
}

/// SWG gauge whose diameter is closest to `diameter` (m).
pub fn nearest_swg(diameter: f64) -> u32 {
    let (k, _) = SWG_DIAMETERS_IN
        .iter()
        .enumerate()
        .map(|(k, d)| (k, (d * 25.4e-3 - diameter).abs()))
        .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    20 + k as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuseDesign {
    pub geometry: FuseWireGeometry,
    pub diameter: f64,
    /// Volume A·l that stores the energy target at melting, m³.
    pub volume: f64,
    pub j_im: f64,
    pub e_fm: f64,
    pub nearest_swg: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuseRequirements {
    /// Energy the wire must absorb before melting, J.
    pub energy_target: f64,
    /// Upper bound on the melting Joules Integral, A²s.
    pub ji_limit: f64,
    /// Crowbar operating voltage, kV.
    pub operating_kv: f64,
    /// Use exactly this length, m, instead of the shortest admissible one.
    pub length: Option<f64>,
}

/// Sizes a wire that melts at `energy_target` with J_Im ≤ `ji_limit` and at
/// least 10 mm/kV of length.
pub fn design_fuse(req: &FuseRequirements, mat: &FuseWireMaterial) -> Result<FuseDesign> {
    mat.validate()?;
    if !(req.energy_target > 0.0 && req.energy_target.is_finite()) {
        return Err(Error::Infeasible(format!(
            "energy target must be > 0 J, got {}",
            req.energy_target
        )));
    }
    if !(req.ji_limit > 0.0 && req.ji_limit.is_finite()) {
        return Err(Error::Infeasible(format!("J_I limit must be > 0 A²s, got {}", req.ji_limit)));
    }
    if !(req.operating_kv >= 0.0 && req.operating_kv.is_finite()) {
        return Err(invalid("operating_kv", format!("must be ≥ 0, got {}", req.operating_kv)));
    }
    let volume = req.energy_target / (mat.heat_capacity() * (mat.t_m - mat.t_o));
    let l_clearance = LENGTH_PER_KV * req.operating_kv;
    let l_ji = volume / area_for_joules_integral(req.ji_limit, mat)?;
    let length = match req.length {
        Some(l) if !(l > 0.0 && l.is_finite()) => return Err(invalid("length", format!("must be > 0, got {l}"))),
        Some(l) if l < l_clearance => {
            return Err(Error::Infeasible(format!(
                "length {:.1} mm is below the {:.1} mm flashover clearance",
                l * 1e3,
                l_clearance * 1e3
            )))
        }
        Some(l) => l,
        None => l_ji.max(l_clearance),
    };
    let geometry = FuseWireGeometry { area: volume / length, length };
    let j_im = melting_joules_integral(geometry.area, mat)?;
    if j_im > req.ji_limit * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "J_Im {j_im:.2} A²s exceeds the {:.2} A²s limit at {:.1} mm",
            req.ji_limit,
            length * 1e3
        )));
    }
    let diameter = geometry.diameter();
    Ok(FuseDesign {
        geometry,
        diameter,
        volume,
        j_im,
        e_fm: melting_energy(&geometry, mat),
        nearest_swg: nearest_swg(diameter),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cu() -> FuseWireMaterial {
        FuseWireMaterial::copper()
    }

    fn test_wire() -> FuseWireGeometry {
        FuseWireGeometry::from_diameter(0.136e-3, 0.165)
    }

    // Plain forward Euler on dT = i²·R(T)·dt/(A·l·ρ·C_p), written out
    // independently of the library stepping.
    fn euler_temperature(i: f64, t_end: f64, steps: usize, g: &FuseWireGeometry, m: &FuseWireMaterial) -> f64 {
        let h = t_end / steps as f64;
        let r0 = g.length / (m.sigma_o * g.area);
        let mut temp = m.t_o;
        for _ in 0..steps {
            let r = r0 * (1.0 + m.alpha_o * (temp - m.t_o));
            temp += i * i * r * h / (g.area * g.length * m.rho * m.c_p);
        }
        temp
    }

    #[test]
    fn k_ji_copper() {
        let k = k_ji(&cu());
        assert_relative_eq!(k, 1.30e-17, max_relative = 5e-3);
    }

    #[test]
    fn k_ji_small_alpha_limit() {
        let mut m = cu();
        m.alpha_o = 1e-12;
        let lim = 1.0 / (m.rho * m.c_p * m.sigma_o * (m.t_m - m.t_o));
        assert_relative_eq!(k_ji(&m), lim, max_relative = 1e-9);
    }

    #[test]
    fn k_ji_inverse_in_sigma() {
        let mut m = cu();
        let k = k_ji(&m);
        m.sigma_o *= 2.0;
        assert_relative_eq!(k_ji(&m), k / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn melting_ji_test_wire() {
        let j = melting_joules_integral(test_wire().area, &cu()).unwrap();
        assert_relative_eq!(j, 16.19, max_relative = 0.02);
        let a17 = FuseWireGeometry::from_diameter(0.17e-3, 1.0).area;
        assert_relative_eq!(melting_joules_integral(a17, &cu()).unwrap(), 40.0, max_relative = 0.02);
    }

    #[test]
    fn melting_ji_quadratic_in_area() {
        let a = test_wire().area;
        let j = melting_joules_integral(a, &cu()).unwrap();
        let j2 = melting_joules_integral(a * 2f64.sqrt(), &cu()).unwrap();
        assert_relative_eq!(j2, 2.0 * j, max_relative = 1e-14);
    }

    #[test]
    fn area_from_ji() {
        let d = |j| FuseWireGeometry { area: area_for_joules_integral(j, &cu()).unwrap(), length: 1.0 }.diameter();
        assert_relative_eq!(d(16.19), 0.136e-3, max_relative = 0.01);
        assert_relative_eq!(d(40.0), 0.17e-3, max_relative = 0.01);
        let k = k_ji(&cu());
        assert_relative_eq!(area_for_joules_integral(1.0 / k, &cu()).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn temperature_endpoints() {
        let a = test_wire().area;
        assert_eq!(temperature_at(0.0, a, &cu()).unwrap(), 30.0);
        let j_im = melting_joules_integral(a, &cu()).unwrap();
        assert_relative_eq!(temperature_at(j_im, a, &cu()).unwrap(), 1083.0, max_relative = 1e-12);
    }

    #[test]
    fn temperature_matches_euler_at_half_melt() {
        let g = test_wire();
        let i = 13.7;
        let t_end = 8.1 / (i * i);
        let closed = temperature_at(8.1, g.area, &cu()).unwrap();
        let euler = euler_temperature(i, t_end, 200_000, &g, &cu());
        assert_relative_eq!(closed, euler, max_relative = 1e-5);
    }

    #[test]
    fn overflow_guard() {
        let a = test_wire().area;
        let j_im = melting_joules_integral(a, &cu()).unwrap();
        assert!(matches!(
            temperature_at(100.0 * j_im, a, &cu()),
            Err(Error::FuseOverflow { .. })
        ));
        assert!(temperature_at_guarded(100.0 * j_im, a, &cu(), 200.0).is_ok());
        assert!(temperature_at(-1.0, a, &cu()).is_err());
    }

    #[test]
    fn resistance_values() {
        let g = test_wire();
        let r0 = resistance_at(0.0, &g, &cu()).unwrap();
        assert_relative_eq!(r0, 0.221, max_relative = 0.01);
        let j_im = melting_joules_integral(g.area, &cu()).unwrap();
        assert_relative_eq!(
            resistance_at(j_im, &g, &cu()).unwrap(),
            r0 * (1.0 + 3.8e-3 * 1053.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn melting_energy_values() {
        let m = cu();
        let g = FuseWireGeometry { area: 2.6e-9, length: 1.0 };
        assert_relative_eq!(melting_energy(&g, &m), 10.0, max_relative = 0.04);
        assert_eq!(melting_energy(&FuseWireGeometry { area: 1e-8, length: 0.0 }, &m), 0.0);
        let e = melting_energy(&test_wire(), &m);
        // A·l·ρ·C_p·ΔT by hand: 1.4527e-8 · 0.165 · 8950 · 395 · 1053
        assert_relative_eq!(e, 8.9217, max_relative = 1e-3);
        assert!((e - 9.51).abs() / 9.51 < 0.10);
    }

    #[test]
    fn constant_current_melts_at_closed_form() {
        let g = test_wire();
        let j_im = melting_joules_integral(g.area, &cu()).unwrap();
        for i in [8.0, 13.7, 40.0] {
            let p = CurrentProfile::constant(i, 2.0 * j_im / (i * i)).unwrap();
            let tr = simulate_fuse(&p, &g, &cu(), FUSE_DT).unwrap();
            let s = tr.melt_sample().unwrap();
            let step = i * i * FUSE_DT;
            assert!((s.joules_integral - j_im).abs() <= step, "I = {i}: {} vs {j_im}", s.joules_integral);
            let hot = resistance_at_temperature(cu().t_m, &g, &cu());
            assert!((s.energy - melting_energy(&g, &cu())).abs() <= step * hot);
        }
    }

    #[test]
    fn zero_current_stays_cold() {
        let p = CurrentProfile::constant(0.0, 0.2).unwrap();
        let tr = simulate_fuse(&p, &test_wire(), &cu(), FUSE_DT).unwrap();
        assert!(tr.melted_at.is_none());
        assert!(tr.samples.iter().all(|s| s.temperature == 30.0));
    }

    #[test]
    fn step_convergence_order() {
        let g = test_wire();
        let i = 13.7;
        let t_end = 0.064;
        let p = CurrentProfile::constant(i, t_end).unwrap();
        let exact = temperature_at(i * i * t_end, g.area, &cu()).unwrap();
        let err = |dt: f64| (simulate_fuse(&p, &g, &cu(), dt).unwrap().last().temperature - exact).abs();
        let (e1, e2) = (err(2e-3), err(1e-3));
        assert!(e2 < e1);
        assert!((e1 / e2).log2() >= 1.0, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            CurrentProfile::new(&[(0.0, 1.0), (1.0, f64::NAN)]),
            Err(Error::NonFinite { index: 1 })
        ));
        let p = CurrentProfile::constant(1.0, 1.0).unwrap();
        assert!(simulate_fuse(&p, &test_wire(), &cu(), 0.0).is_err());
    }

    #[test]
    fn profile_interpolation() {
        let p = CurrentProfile::new(&[(0.0, 0.0), (1.0, 10.0), (2.0, 10.0)]).unwrap();
        assert_eq!(p.at(-1.0), 0.0);
        assert_eq!(p.at(0.5), 5.0);
        assert_eq!(p.at(3.0), 10.0);
        let csv = "t_s,i_A\n0,1\n0.5,2\n";
        let q = CurrentProfile::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(q.at(0.25), 1.5);
    }

    #[test]
    fn swg_table() {
        assert_eq!(nearest_swg(0.17e-3), 37);
        assert_eq!(nearest_swg(0.136e-3), 39);
        assert_relative_eq!(swg_diameter(39).unwrap(), 0.13208e-3, max_relative = 1e-9);
        assert!(swg_diameter(19).is_none());
        assert!(swg_diameter(51).is_none());
    }

    fn req(length: Option<f64>, kv: f64) -> FuseRequirements {
        FuseRequirements { energy_target: 10.0, ji_limit: 40.0, operating_kv: kv, length }
    }

    #[test]
    fn design_with_forced_length() {
        let d = design_fuse(&req(Some(0.165), 12.0), &cu()).unwrap();
        // A·l = 10 / (8950·395·1053) with l = 165 mm
        let area = 10.0 / (8950.0 * 395.0 * 1053.0) / 0.165;
        assert_relative_eq!(d.geometry.area, area, max_relative = 1e-12);
        assert_relative_eq!(d.e_fm, 10.0, max_relative = 1e-12);
        assert!(d.j_im < 40.0);
        assert_relative_eq!(d.diameter, 0.136e-3, max_relative = 0.06);
    }

    #[test]
    fn design_minimal_length() {
        let d = design_fuse(&req(None, 0.0), &cu()).unwrap();
        assert_relative_eq!(d.j_im, 40.0, max_relative = 1e-9);
        assert_relative_eq!(d.diameter, 0.17e-3, max_relative = 0.01);
        assert_relative_eq!(d.geometry.length, 0.110, max_relative = 0.07);
        let clear = design_fuse(&req(None, 12.0), &cu()).unwrap();
        assert_relative_eq!(clear.geometry.length, 0.120, max_relative = 1e-12);
    }

    #[test]
    fn design_infeasible() {
        let mut r = req(None, 12.0);
        r.energy_target = 0.0;
        assert!(matches!(design_fuse(&r, &cu()), Err(Error::Infeasible(_))));
        assert!(matches!(design_fuse(&req(Some(0.05), 12.0), &cu()), Err(Error::Infeasible(_))));
        assert!(matches!(design_fuse(&req(Some(0.09), 0.0), &cu()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn csv_header() {
        let p = CurrentProfile::constant(1.0, 1e-4).unwrap();
        let tr = simulate_fuse(&p, &test_wire(), &cu(), FUSE_DT).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,temp_C,res_ohm,ji_A2s,energy_J\n"));
        assert_eq!(text.lines().count(), tr.samples.len() + 1);
    }

    fn material() -> impl Strategy<Value = FuseWireMaterial> {
        (1e6f64..1e8, 1e-4f64..1e-2, 1e3f64..2e4, 100.0f64..1000.0, -20.0f64..60.0, 200.0f64..3000.0).prop_map(
            |(sigma_o, alpha_o, rho, c_p, t_o, t_m)| FuseWireMaterial { sigma_o, alpha_o, rho, c_p, t_o, t_m },
        )
    }

    proptest! {
        #[test]
        fn energy_forms_agree(m in material(), d in 1e-5f64..1e-3, l in 1e-3f64..1.0) {
            let g = FuseWireGeometry::from_diameter(d, l);
            let a = melting_energy(&g, &m);
            let b = melting_energy_from_resistance(&g, &m).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }

        #[test]
        fn melting_ji_ignores_length(d in 1e-5f64..1e-3, l1 in 1e-3f64..1.0, l2 in 1e-3f64..1.0) {
            let m = cu();
            let g1 = FuseWireGeometry::from_diameter(d, l1);
            let g2 = FuseWireGeometry::from_diameter(d, l2);
            prop_assert_eq!(
                melting_joules_integral(g1.area, &m).unwrap(),
                melting_joules_integral(g2.area, &m).unwrap()
            );
        }

        #[test]
        fn area_round_trip(d in 1e-5f64..1e-3, m in material()) {
            let a = FuseWireGeometry::from_diameter(d, 1.0).area;
            let back = area_for_joules_integral(melting_joules_integral(a, &m).unwrap(), &m).unwrap();
            prop_assert!((back - a).abs() <= 1e-12 * a);
        }

        #[test]
        fn temperature_increasing_and_convex(f1 in 0.0f64..2.0, f2 in 0.0f64..2.0) {
            let m = cu();
            let a = test_wire().area;
            let j_im = melting_joules_integral(a, &m).unwrap();
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            prop_assume!(hi - lo > 1e-6);
            let t = |f: f64| temperature_at(f * j_im, a, &m).unwrap();
            prop_assert!(t(hi) > t(lo));
            prop_assert!(t(0.5 * (lo + hi)) <= 0.5 * (t(lo) + t(hi)));
        }

        #[test]
        fn melt_tracks_joules_integral(
            knots in proptest::collection::vec(0.0f64..60.0, 3..8),
        ) {
            let g = test_wire();
            let m = cu();
            let j_im = melting_joules_integral(g.area, &m).unwrap();
            let n = knots.len();
            let pts: Vec<(f64, f64)> = knots.iter().enumerate()
                .map(|(k, &i)| (0.5 * k as f64 / (n - 1) as f64, i)).collect();
            let p = CurrentProfile::new(&pts).unwrap();
            let tr = simulate_fuse(&p, &g, &m, FUSE_DT).unwrap();
            let peak = knots.iter().cloned().fold(0.0, f64::max);
            let step = peak * peak * FUSE_DT;
            match tr.melted_at {
                Some(_) => {
                    let s = tr.last();
                    prop_assert!((s.joules_integral - j_im).abs() <= step);
                }
                None => prop_assert!(tr.last().joules_integral < j_im + step),
            }
            for w in tr.samples.windows(2) {
                prop_assert!(w[1].joules_integral >= w[0].joules_integral);
                prop_assert!(w[1].energy >= w[0].energy);
                prop_assert!(w[1].temperature >= w[0].temperature);
            }
        }
    }
}
