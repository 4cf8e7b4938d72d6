//! Re-derivation of the correction factor k_c: per-point root finding of the
//! 100 ms Joules Integral error against the switched-circuit simulator, a
//! least-squares polynomial fit, and the sweep tables behind it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fault_model::{default_time_to_peak, follow_on_model, Correction, KcPolynomial, KC_DOMAIN};
use crate::rectifier_sim::{self, SimConfig, TransformerModel};
use crate::system::{self, SourceParams, Topology, TransformerParams};

/// Bisection bracket for k_c.
pub const KC_BRACKET: (f64, f64) = (0.3, 3.6);

/// Default |ΔJ_I| target of the k_c solver, percent.
pub const DEFAULT_KC_TOL: f64 = 0.25;

/// Missing fields in a JSON grid take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub x_r_trx: Vec<f64>,
    /// DC-side resistance in the follow-on path, Ω.
    pub r_load: Vec<f64>,
    /// Time at which the Joules Integral error is evaluated, s.
    pub t_eval: f64,
    /// Time-to-peak values for the uncorrected t_p sweep, s.
    pub t_p: Vec<f64>,
    /// Supply whose reactances are rescaled to reach each X/R_trx.
    pub transformer: TransformerParams,
    pub source: SourceParams,
    pub topologies: Vec<Topology>,
    /// Simulator step, s.
    pub dt: f64,
    /// Fault angles probed for the worst case at each point.
    pub angle_resolution: usize,
    pub transformer_model: TransformerModel,
    pub scaling: SupplyScaling,
}

/// How the base supply is altered to reach a requested X/R_trx.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyScaling {
    /// Scale every reactance, keep the resistances.
    Reactance,
    /// Hold X'_lp at the value that makes the largest X/R_system on the grid
    /// equal to the given value, and scale the resistances.
    SpanXrSystem(f64),
    /// Hold X'_lp at this value, Ω, and scale the resistances.
    FixedReactance(f64),
}

impl Default for SupplyScaling {
    fn default() -> Self {
        SupplyScaling::SpanXrSystem(KC_DOMAIN.1)
    }
}

/// `n` points spaced logarithmically over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            x_r_trx: vec![2.5, 5.0, 7.5, 10.0, 12.5, 15.0],
            r_load: log_space(5.0, 300.0, 8),
            t_eval: 0.1,
            t_p: vec![1.5e-3, 2.5e-3, 3.5e-3, 4.5e-3, 5.5e-3, 6.5e-3, 7.5e-3, 8.5e-3, 9.4e-3, 10e-3],
            transformer: TransformerParams::test_setup(),
            source: SourceParams::test_setup(),
            topologies: Topology::ALL.to_vec(),
            dt: 1e-5,
            angle_resolution: 24,
            transformer_model: TransformerModel::default(),
            scaling: SupplyScaling::SpanXrSystem(KC_DOMAIN.1),
        }
    }
}

impl SweepGrid {
    /// 4 X/R_trx values × 6 loads, both topologies.
    pub fn coarse() -> Self {
        Self {
            x_r_trx: vec![2.5, 5.0, 10.0, 15.0],
            r_load: log_space(5.0, 300.0, 6),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_r_trx.is_empty() || self.x_r_trx.iter().any(|&x| !(x > 0.0)) {
            return Err(invalid("x_r_trx", "need at least one positive value"));
        }
        if self.r_load.is_empty() || self.r_load.iter().any(|&r| !(r > 0.0)) {
            return Err(invalid("r_load", "need at least one positive value"));
        }
        if self.t_p.iter().any(|&t| !(t > 0.0)) {
            return Err(invalid("t_p", "values must be positive"));
        }
        if !(self.t_eval >= 0.05) {
            return Err(invalid("t_eval", format!("must be ≥ 0.05 s, got {}", self.t_eval)));
        }
        if self.topologies.is_empty() {
            return Err(invalid("topologies", "need at least one topology"));
        }
        Ok(())
    }

    /// Every (topology, X/R_trx, R_L) combination in grid order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &topology in &self.topologies {
            for &x_r_trx in &self.x_r_trx {
                for &r_load in &self.r_load {
                    out.push(GridPoint { topology, x_r_trx, r_load });
                }
            }
        }
        out
    }

    /// Transformer and source with reactances scaled so that X'_lp/R'_p
    /// equals `x_r_trx`. Resistances are untouched.
    pub fn supply_for(&self, x_r_trx: f64) -> Result<(TransformerParams, SourceParams)> {
        let eq = system::referred_equivalents(&self.transformer, &self.source)?;
        let (sx, sr) = match self.scaling {
            SupplyScaling::Reactance => (x_r_trx / eq.x_r_trx, 1.0),
            SupplyScaling::FixedReactance(x) => (x / eq.x_lp_eq, x / (x_r_trx * eq.r_p_eq)),
            SupplyScaling::SpanXrSystem(_) => {
                let x = self.spanning_reactance()?;
                (x / eq.x_lp_eq, x / (x_r_trx * eq.r_p_eq))
            }
        };
        let mut trx = self.transformer;
        let mut src = self.source;
        trx.x_lp_delta *= sx;
        trx.x_l_sp *= sx;
        src.x_s *= sx;
        trx.r_p_delta *= sr;
        trx.r_sp *= sr;
        Ok((trx, src))
    }

    /// X'_lp for [`SupplyScaling::SpanXrSystem`]: the largest X/R_system,
    /// reached at the highest X/R_trx and smallest referred load, equals the
    /// target. Other scalings return the base supply's X'_lp.
    pub fn spanning_reactance(&self) -> Result<f64> {
        let eq = system::referred_equivalents(&self.transformer, &self.source)?;
        let SupplyScaling::SpanXrSystem(target) = self.scaling else {
            return Ok(eq.x_lp_eq);
        };
        let xr_max = self.x_r_trx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r_min = self.r_load.iter().cloned().fold(f64::INFINITY, f64::min);
        let r_lp = self
            .topologies
            .iter()
            .map(|&t| system::r_lp(t, r_min, &eq))
            .fold(f64::INFINITY, f64::min);
        if !(target > 0.0 && target < xr_max) {
            return Err(invalid(
                "scaling",
                format!("X/R_system target {target} must lie in (0, {xr_max})"),
            ));
        }
        // X/(X/xr_max + r_lp) = target
        Ok(target * r_lp / (1.0 - target / xr_max))
    }

    fn sim_config(&self, point: &GridPoint) -> Result<SimConfig> {
        let (trx, src) = self.supply_for(point.x_r_trx)?;
        let mut cfg = SimConfig::follow_on(trx, src, point.topology, point.r_load);
        cfg.duration = self.t_eval;
        cfg.dt = self.dt;
        cfg.angle_resolution = self.angle_resolution;
        cfg.transformer_model = self.transformer_model;
        Ok(cfg)
    }

    /// Follow-on model J_I at `t_eval` for a point and a correction.
    fn model_ji(&self, point: &GridPoint, correction: Correction, t_p: f64) -> Result<(f64, f64, f64)> {
        let (trx, src) = self.supply_for(point.x_r_trx)?;
        let eq = system::referred_equivalents(&trx, &src)?;
        let m = follow_on_model(point.topology, &src, &eq, point.r_load, correction, t_p)?;
        Ok((m.follow_on_joules_integral(self.t_eval), m.x_r_system, m.k_c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub topology: Topology,
    pub x_r_trx: f64,
    pub r_load: f64,
}

/// Simulated follow-on Joules Integral at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub point: GridPoint,
    pub ji_sim: f64,
    pub fault_angle: f64,
}

/// Runs the simulator (worst-case fault angle, no dc capacitor) at every
/// point, in parallel. Results are in grid order.
pub fn simulate_grid(grid: &SweepGrid, points: &[GridPoint]) -> Vec<Result<OraclePoint>> {
    points
        .par_iter()
        .map(|p| {
            let cfg = grid.sim_config(p)?;
            let trace = rectifier_sim::run(&cfg)?;
            Ok(OraclePoint {
                point: *p,
                ji_sim: rectifier_sim::joules_integral_sim(&trace, grid.t_eval)?,
                fault_angle: trace.fault_angle,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcSample {
    pub topology: Topology,
    pub x_r_trx: f64,
    pub r_load: f64,
    pub x_r_system: f64,
    pub k_c_solved: f64,
    pub residual_delta_ji_percent: f64,
}

fn delta_ji(ji_sim: f64, ji_model: f64) -> Result<f64> {
    if ji_sim == 0.0 {
        return Err(Error::ZeroJoulesIntegral);
    }
    Ok((ji_sim - ji_model) / ji_sim * 100.0)
}

/// Solves ΔJ_I(k_c) = 0 by bisection over [`KC_BRACKET`] until |ΔJ_I| < `tol`
/// percent. ΔJ_I increases with k_c because a larger referred resistance
/// lowers the base current and speeds the decay.
pub fn solve_kc(grid: &SweepGrid, oracle: &OraclePoint, tol: f64) -> Result<KcSample> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be > 0"));
    }
    let p = &oracle.point;
    let t_p = default_time_to_peak(grid.source.omega);
    let f = |k: f64| -> Result<(f64, f64)> {
        let (ji, xrs, _) = grid.model_ji(p, Correction::Fixed(k), t_p)?;
        Ok((delta_ji(oracle.ji_sim, ji)?, xrs))
    };
    let (mut lo, mut hi) = KC_BRACKET;
    let (mut f_lo, x_r_system) = f(lo)?;
    let (f_hi, _) = f(hi)?;
    let sample = |k, r| KcSample {
        topology: p.topology,
        x_r_trx: p.x_r_trx,
        r_load: p.r_load,
        x_r_system,
        k_c_solved: k,
        residual_delta_ji_percent: r,
    };
    if f_lo.abs() < tol {
        return Ok(sample(lo, f_lo));
    }
    if f_hi.abs() < tol {
        return Ok(sample(hi, f_hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi, f_lo, f_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (f_mid, _) = f(mid)?;
        if f_mid.abs() < tol {
            return Ok(sample(mid, f_mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok(sample(mid, f(mid)?.0))
}

/// Simulates every grid point and solves k_c at each. A failing point is
/// reported in place without aborting the sweep.
pub fn sweep_kc(grid: &SweepGrid, tol: f64) -> Result<Vec<Result<KcSample>>> {
    grid.validate()?;
    let oracles = simulate_grid(grid, &grid.points());
    Ok(kc_from_oracles(grid, &oracles, tol))
}

pub fn kc_from_oracles(grid: &SweepGrid, oracles: &[Result<OraclePoint>], tol: f64) -> Vec<Result<KcSample>> {
    oracles
        .par_iter()
        .map(|o| match o {
            Ok(o) => solve_kc(grid, o, tol),
            Err(e) => Err(invalid("oracle", e.to_string())),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// Descending powers.
    pub coeffs: Vec<f64>,
    pub r_squared: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The fit as a correction polynomial. Only defined for degree 4.
    pub fn as_kc_polynomial(&self) -> Option<KcPolynomial> {
        let c: [f64; 5] = self.coeffs.as_slice().try_into().ok()?;
        Some(KcPolynomial::new(c))
    }
}

/// Ordinary least squares of `y` on powers of `x` up to `degree`, with
/// R² = 1 − SS_res/SS_tot.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(invalid("y", "length differs from x"));
    }
    let n = x.len();
    let cols = degree + 1;
    if n < degree + 2 {
        return Err(Error::NotEnoughSamples { needed: degree + 2, got: n });
    }
    let a = DMatrix::from_fn(n, cols, |i, j| x[i].powi((degree - j) as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > s_max * 1e-12 * n.max(cols) as f64)
        .count();
    if rank < cols {
        return Err(Error::RankDeficient);
    }
    let coeffs = svd.solve(&b, 0.0).map_err(|_| Error::RankDeficient)?;
    let fitted = &a * &coeffs;
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(v, f)| (v - f).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PolyFit {
        coeffs: coeffs.iter().copied().collect(),
        r_squared,
    })
}

/// Fits k_c against X/R_system over a sample set.
pub fn fit_kc(samples: &[KcSample], degree: usize) -> Result<PolyFit> {
    let x: Vec<f64> = samples.iter().map(|s| s.x_r_system).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.k_c_solved).collect();
    fit_polynomial(&x, &y, degree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpRow {
    pub x_r_trx: f64,
    pub t_p: f64,
    pub delta_ji_percent: f64,
}

/// ΔJ_I at `t_eval` of the uncorrected model (R_L = 0, δ = ω/X_R_trx) for
/// every (X/R_trx, t_p), parallel topology.
pub fn sweep_tp(grid: &SweepGrid) -> Result<Vec<TpRow>> {
    grid.validate()?;
    let points: Vec<GridPoint> = grid
        .x_r_trx
        .iter()
        .map(|&x_r_trx| GridPoint {
            topology: Topology::Parallel,
            x_r_trx,
            r_load: 0.0,
        })
        .collect();
    let oracles = simulate_grid(grid, &points);
    let mut rows = Vec::new();
    for o in oracles {
        let o = o?;
        for &t_p in &grid.t_p {
            let (ji, _, _) = grid.model_ji(&o.point, Correction::Fixed(1.0), t_p)?;
            rows.push(TpRow {
                x_r_trx: o.point.x_r_trx,
                t_p,
                delta_ji_percent: delta_ji(o.ji_sim, ji)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub topology: Topology,
    pub x_r_trx: f64,
    pub r_load: f64,
    pub x_r_system: f64,
    pub k_c: f64,
    pub delta_ji_percent: f64,
}

/// ΔJ_I at `t_eval` for every oracle point with k_c from `correction`.
pub fn validate_oracles(
    grid: &SweepGrid,
    oracles: &[OraclePoint],
    correction: Correction,
) -> Result<Vec<ValidationRow>> {
    let t_p = default_time_to_peak(grid.source.omega);
    oracles
        .iter()
        .map(|o| {
            let (ji, x_r_system, k_c) = grid.model_ji(&o.point, correction, t_p)?;
            Ok(ValidationRow {
                topology: o.point.topology,
                x_r_trx: o.point.x_r_trx,
                r_load: o.point.r_load,
                x_r_system,
                k_c,
                delta_ji_percent: delta_ji(o.ji_sim, ji)?,
            })
        })
        .collect()
}

/// Simulates the grid and evaluates ΔJ_I with the given correction for every
/// topology in the grid.
pub fn validate_sweep(grid: &SweepGrid, correction: Correction) -> Result<Vec<ValidationRow>> {
    grid.validate()?;
    let oracles = simulate_grid(grid, &grid.points())
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    validate_oracles(grid, &oracles, correction)
}

/// Largest positive and most negative ΔJ_I in a table.
pub fn delta_extremes(rows: &[ValidationRow]) -> (f64, f64) {
    rows.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), r| {
        (hi.max(r.delta_ji_percent), lo.min(r.delta_ji_percent))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn log_space_endpoints() {
        let v = log_space(5.0, 300.0, 8);
        assert_eq!(v.len(), 8);
        assert_relative_eq!(v[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(v[7], 300.0, max_relative = 1e-12);
        assert_eq!(log_space(5.0, 300.0, 1), vec![5.0]);
    }

    #[test]
    fn supply_reaches_requested_ratio() {
        let mut grid = SweepGrid::default();
        for x in [2.5, 10.0, 15.0] {
            let (trx, src) = grid.supply_for(x).unwrap();
            let eq = system::referred_equivalents(&trx, &src).unwrap();
            assert_relative_eq!(eq.x_r_trx, x, max_relative = 1e-12);
            assert_relative_eq!(eq.x_lp_eq, grid.spanning_reactance().unwrap(), max_relative = 1e-12);
        }
        grid.scaling = SupplyScaling::Reactance;
        let (trx, src) = grid.supply_for(10.0).unwrap();
        let eq = system::referred_equivalents(&trx, &src).unwrap();
        assert_relative_eq!(eq.x_r_trx, 10.0, max_relative = 1e-12);
        assert_relative_eq!(eq.r_p_eq, 0.126, max_relative = 1e-3);
    }

    #[test]
    fn grid_spans_requested_x_r_system() {
        let grid = SweepGrid::default();
        let max = grid
            .points()
            .iter()
            .map(|p| grid.model_ji(p, Correction::Fixed(1.0), 9.4e-3).unwrap().1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(max, 3.6, max_relative = 1e-12);
    }

    #[test]
    fn self_fit_recovers_published_coefficients() {
        let p = KcPolynomial::PUBLISHED;
        let x: Vec<f64> = (0..40).map(|i| 0.01 + 3.59 * i as f64 / 39.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| p.eval(v)).collect();
        let fit = fit_polynomial(&x, &y, 4).unwrap();
        for (a, b) in fit.coeffs.iter().zip(p.coeffs) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_rejects_too_few_samples() {
        assert!(matches!(
            fit_polynomial(&[0.1, 0.2], &[1.0, 1.1], 4),
            Err(Error::NotEnoughSamples { needed: 6, got: 2 })
        ));
    }

    #[test]
    fn fit_rejects_repeated_abscissae() {
        let x = [0.5; 8];
        let y = [1.0, 1.1, 0.9, 1.0, 1.2, 0.8, 1.0, 1.0];
        assert!(matches!(fit_polynomial(&x, &y, 4), Err(Error::RankDeficient)));
    }

    #[test]
    fn solver_returns_unity_for_model_generated_oracle() {
        let grid = SweepGrid::default();
        for (topology, x_r_trx, r_load) in [
            (Topology::Parallel, 5.0, 20.0),
            (Topology::Series, 12.5, 100.0),
        ] {
            let point = GridPoint { topology, x_r_trx, r_load };
            let (ji, _, _) = grid.model_ji(&point, Correction::Fixed(1.0), 9.4e-3).unwrap();
            let oracle = OraclePoint { point, ji_sim: ji, fault_angle: 0.0 };
            let s = solve_kc(&grid, &oracle, DEFAULT_KC_TOL).unwrap();
            assert!((s.k_c_solved - 1.0).abs() < 0.01, "{s:?}");
            assert!(s.residual_delta_ji_percent.abs() < DEFAULT_KC_TOL);
        }
    }

    #[test]
    fn solver_reports_missing_bracket() {
        let grid = SweepGrid::default();
        let point = GridPoint { topology: Topology::Parallel, x_r_trx: 5.0, r_load: 20.0 };
        let oracle = OraclePoint { point, ji_sim: 1e9, fault_angle: 0.0 };
        assert!(matches!(solve_kc(&grid, &oracle, 0.25), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn grid_validation() {
        let mut g = SweepGrid::default();
        g.t_eval = 0.01;
        assert!(g.validate().is_err());
        let mut g = SweepGrid::default();
        g.r_load.clear();
        assert!(g.validate().is_err());
    }

    proptest! {
        #[test]
        fn fit_of_fit_is_idempotent(seed in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let x: Vec<f64> = (0..12).map(|i| 0.05 + 0.3 * i as f64).collect();
            let y: Vec<f64> = x.iter().zip(&seed).map(|(v, n)| 0.9 + 0.1 * v + 0.05 * n).collect();
            let first = fit_polynomial(&x, &y, 4).unwrap();
            let y2: Vec<f64> = x.iter().map(|&v| first.eval(v)).collect();
            let second = fit_polynomial(&x, &y2, 4).unwrap();
            for (a, b) in first.coeffs.iter().zip(&second.coeffs) {
                prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
            }
            prop_assert!(second.r_squared > 1.0 - 1e-12);
        }
    }
}
