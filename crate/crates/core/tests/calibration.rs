use std::sync::OnceLock;

use crowbar_core::calibration::*;
use crowbar_core::fault_model::{Correction, KcPolynomial};
use crowbar_core::system::Topology;

struct Sweep {
    grid: SweepGrid,
    oracles: Vec<OraclePoint>,
    samples: Vec<KcSample>,
    fit: PolyFit,
}

fn run_sweep(grid: SweepGrid) -> Sweep {
    let oracles: Vec<OraclePoint> = simulate_grid(&grid, &grid.points())
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap();
    let wrapped: Vec<_> = oracles.iter().map(|o| Ok(*o)).collect();
    let samples: Vec<KcSample> = kc_from_oracles(&grid, &wrapped, DEFAULT_KC_TOL)
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap();
    let fit = fit_kc(&samples, 4).unwrap();
    Sweep { grid, oracles, samples, fit }
}

fn default_sweep() -> &'static Sweep {
    static S: OnceLock<Sweep> = OnceLock::new();
    S.get_or_init(|| run_sweep(SweepGrid::default()))
}

fn coarse_sweep() -> &'static Sweep {
    static S: OnceLock<Sweep> = OnceLock::new();
    S.get_or_init(|| run_sweep(SweepGrid::coarse()))
}

/// k_c on one X/R_trx curve at `x`, linear in log X/R_system. `None` outside
/// the curve's span.
fn interpolate(curve: &[KcSample], x: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|s| (s.x_r_system.ln(), s.k_c_solved)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lx = x.ln();
    pts.windows(2).find(|w| w[0].0 <= lx && lx <= w[1].0).map(|w| {
        let f = (lx - w[0].0) / (w[1].0 - w[0].0);
        w[0].1 + f * (w[1].1 - w[0].1)
    })
}

fn curves(sweep: &Sweep, topology: Topology) -> Vec<Vec<KcSample>> {
    sweep
        .grid
        .x_r_trx
        .iter()
        .map(|&xr| {
            sweep
                .samples
                .iter()
                .filter(|s| s.topology == topology && s.x_r_trx == xr)
                .copied()
                .collect()
        })
        .collect()
}

fn kc_near(sweep: &Sweep, topology: Topology, x: f64) -> Vec<f64> {
    curves(sweep, topology).iter().filter_map(|c| interpolate(c, x)).collect()
}

#[test]
fn solved_samples_meet_tolerance() {
    let s = default_sweep();
    assert_eq!(s.samples.len(), 96);
    assert!(s.samples.iter().all(|k| k.residual_delta_ji_percent.abs() < DEFAULT_KC_TOL));
}

#[test]
fn kc_independent_of_transformer_ratio() {
    let s = default_sweep();
    for topology in Topology::ALL {
        for x in [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
            let ks = kc_near(s, topology, x);
            if ks.len() < 2 {
                continue;
            }
            let spread = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ks.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 0.05 + 0.01, "{topology} at {x}: {ks:?}");
        }
    }
}

#[test]
fn kc_floor_near_polynomial_constant() {
    let s = default_sweep();
    let min = s.samples.iter().map(|k| k.k_c_solved).fold(f64::INFINITY, f64::min);
    assert!((min - KcPolynomial::PUBLISHED.eval(0.0)).abs() < 0.02, "{min}");
}

#[test]
fn kc_at_test_circuit_ratio() {
    let ks = kc_near(default_sweep(), Topology::Parallel, 0.052);
    assert!(!ks.is_empty());
    for k in ks {
        assert!((k - 0.912).abs() <= 0.02, "{k}");
    }
}

#[test]
fn kc_crosses_unity_near_point_three() {
    let ks = kc_near(default_sweep(), Topology::Parallel, 0.3);
    assert!(!ks.is_empty());
    for k in ks {
        assert!((k - 1.0).abs() <= 0.02, "{k}");
    }
}

#[test]
fn simulator_fit_quality() {
    let s = default_sweep();
    assert!(s.fit.r_squared >= 0.99, "R² = {}", s.fit.r_squared);
}

fn self_fit_rows(s: &Sweep) -> Vec<ValidationRow> {
    let poly = s.fit.as_kc_polynomial().unwrap();
    validate_oracles(&s.grid, &s.oracles, Correction::Polynomial(poly)).unwrap()
}

fn max_abs(rows: &[ValidationRow]) -> f64 {
    rows.iter().map(|r| r.delta_ji_percent.abs()).fold(0.0, f64::max)
}

#[test]
fn self_fit_band_parallel() {
    let rows: Vec<_> = self_fit_rows(default_sweep())
        .into_iter()
        .filter(|r| r.topology == Topology::Parallel)
        .collect();
    assert!(max_abs(&rows) <= 5.0, "{:?}", delta_extremes(&rows));
}

#[test]
fn self_fit_band_series() {
    let rows: Vec<_> = self_fit_rows(default_sweep())
        .into_iter()
        .filter(|r| r.topology == Topology::Series)
        .collect();
    assert!(max_abs(&rows) <= 5.0, "{:?}", delta_extremes(&rows));
}

#[test]
fn uncorrected_errors_match_reported_extremes() {
    let s = default_sweep();
    let rows: Vec<_> = validate_oracles(&s.grid, &s.oracles, Correction::Fixed(1.0))
        .unwrap()
        .into_iter()
        .filter(|r| r.topology == Topology::Parallel)
        .collect();
    let (hi, lo) = delta_extremes(&rows);
    assert!((hi - 8.0).abs() <= 5.0 && (lo + 22.0).abs() <= 5.0, "{hi} / {lo}");
}

#[test]
fn refinement_does_not_widen_band() {
    let coarse = max_abs(&self_fit_rows(coarse_sweep()));
    let fine = max_abs(&self_fit_rows(default_sweep()));
    assert!(fine <= coarse + DEFAULT_KC_TOL, "{fine} vs {coarse}");
}

#[test]
fn single_point_grid() {
    let grid = SweepGrid {
        x_r_trx: vec![5.0],
        r_load: vec![20.0],
        topologies: vec![Topology::Parallel],
        ..SweepGrid::default()
    };
    let samples = sweep_kc(&grid, DEFAULT_KC_TOL).unwrap();
    assert_eq!(samples.len(), 1);
    assert!(samples[0].is_ok());
}

fn tp_rows() -> &'static Vec<TpRow> {
    static S: OnceLock<Vec<TpRow>> = OnceLock::new();
    S.get_or_init(|| sweep_tp(&SweepGrid::default()).unwrap())
}

#[test]
fn tp_sensitivity_is_small() {
    let grid = SweepGrid::default();
    for &xr in &grid.x_r_trx {
        let d: Vec<f64> = tp_rows().iter().filter(|r| r.x_r_trx == xr).map(|r| r.delta_ji_percent).collect();
        let spread = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - d.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 3.2, "X/R {xr}: {d:?}");
    }
}

#[test]
fn tp_error_at_high_ratio() {
    let row = tp_rows()
        .iter()
        .find(|r| r.x_r_trx == 15.0 && (r.t_p - 9.4e-3).abs() < 1e-9)
        .unwrap();
    assert!((row.delta_ji_percent - 10.0).abs() <= 3.0, "{}", row.delta_ji_percent);
}

#[test]
fn tp_error_smallest_at_low_ratio() {
    let at = |xr: f64| {
        tp_rows()
            .iter()
            .find(|r| r.x_r_trx == xr && (r.t_p - 9.4e-3).abs() < 1e-9)
            .unwrap()
            .delta_ji_percent
            .abs()
    };
    let grid = SweepGrid::default();
    for &xr in &grid.x_r_trx[1..] {
        assert!(at(2.5) <= at(xr), "{} vs {} at {xr}", at(2.5), at(xr));
    }
}
