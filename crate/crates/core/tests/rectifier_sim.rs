use std::f64::consts::{PI, SQRT_2};

use crowbar_core::calibration::SweepGrid;
use crowbar_core::rectifier_sim::*;
use crowbar_core::system::*;

fn table_follow_on(topology: Topology, r_load: f64) -> SimConfig {
    SimConfig::follow_on(TransformerParams::test_setup(), SourceParams::test_setup(), topology, r_load)
}

fn base_current(topology: Topology) -> f64 {
    let src = SourceParams::test_setup();
    let eq = referred_equivalents(&TransformerParams::test_setup(), &src).unwrap();
    i_f_base(topology, &src, &eq, 0.0).unwrap()
}

#[test]
fn series_short_circuit_matches_closed_form() {
    let trace = run(&table_follow_on(Topology::Series, 0.0)).unwrap();
    let mean = trace.mean_current(0.06, 0.1);
    let base = base_current(Topology::Series);
    assert!((mean / base - 1.0).abs() < 0.03, "{mean} vs {base}");
}

#[test]
fn parallel_short_circuit_tracks_six_pulse_average() {
    // With the dc side shorted the paralleled bridges commutate like one
    // 6-pulse bridge, whose mean-to-crest ratio is 3/π instead of the 12-pulse
    // (12/π)·sin(π/12) built into the closed form.
    let trace = run(&table_follow_on(Topology::Parallel, 0.0)).unwrap();
    let mean = trace.mean_current(0.06, 0.1);
    let six_pulse = base_current(Topology::Parallel) * (3.0 / PI) / K12;
    assert!((mean / six_pulse - 1.0).abs() < 0.01, "{mean} vs {six_pulse}");
}

#[test]
fn short_circuit_ji_near_steady_state_asymptote() {
    for topology in Topology::ALL {
        let trace = run(&table_follow_on(topology, 0.0)).unwrap();
        let base = base_current(topology);
        let ji = joules_integral_sim(&trace, 0.1).unwrap();
        let asymptote = base * base * 0.1;
        assert!((ji / asymptote - 1.0).abs() < 0.10, "{topology}: {ji} vs {asymptote}");
    }
}

#[test]
fn full_circuit_energy_balance() {
    for topology in Topology::ALL {
        let trace = run(&SimConfig::new(SystemConfig::test_setup(topology))).unwrap();
        assert!(trace.energy_residual < 1.0, "{topology}: {}", trace.energy_residual);
    }
}

#[test]
fn halving_step_barely_moves_joules_integral() {
    for topology in Topology::ALL {
        let cfg = SimConfig::new(SystemConfig::test_setup(topology)).with_fault_angle(0.25);
        let mut fine = cfg;
        fine.dt = cfg.dt / 2.0;
        let a = joules_integral_sim(&run(&cfg).unwrap(), 0.1).unwrap();
        let b = joules_integral_sim(&run(&fine).unwrap(), 0.1).unwrap();
        assert!(((a - b) / b).abs() < 0.005, "{topology}: {a} vs {b}");
    }
}

#[test]
fn series_input_current_is_half_of_parallel() {
    let mean = |t| run(&table_follow_on(t, 0.0)).unwrap().mean_current(0.06, 0.1);
    let ratio = mean(Topology::Series) / mean(Topology::Parallel);
    // within the 6-pulse/12-pulse averaging difference of the parallel case
    assert!((ratio - 0.5).abs() < 0.5 * 0.05, "{ratio}");
}

#[test]
fn series_bridges_share_current() {
    let trace = run(&table_follow_on(Topology::Series, 10.0)).unwrap();
    for s in trace.samples.iter().filter(|s| s.t > 0.02) {
        assert!((s.i_bridge[0] - s.i_bridge[1]).abs() < 1e-3 * s.i_dc.abs().max(1.0));
    }
}

fn harmonic_amplitude(samples: &[SimSample], f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for s in samples {
        re += s.v_dc * (2.0 * PI * f * s.t).cos();
        im += s.v_dc * (2.0 * PI * f * s.t).sin();
    }
    2.0 * (re * re + im * im).sqrt() / samples.len() as f64
}

#[test]
fn dc_ripple_is_twelve_pulse() {
    for topology in Topology::ALL {
        let trace = run(&table_follow_on(topology, 20.0).with_fault_angle(0.0)).unwrap();
        let window: Vec<SimSample> = trace
            .samples
            .iter()
            .filter(|s| s.t >= 0.06 && s.t < 0.1 - 1e-9)
            .copied()
            .collect();
        let amps: Vec<f64> = (1..=30).map(|k| harmonic_amplitude(&window, 50.0 * k as f64)).collect();
        let dominant = 1 + amps
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (k, &a)| if a > b.1 { (k, a) } else { b })
            .0;
        assert_eq!(dominant, 12, "{topology}: {amps:?}");
    }
}

#[test]
fn angle_sweep_spread_is_bounded() {
    for topology in Topology::ALL {
        for r_load in [0.0, 20.0] {
            let sweep = angle_sweep(&table_follow_on(topology, r_load)).unwrap();
            assert_eq!(sweep.len(), 24);
            let hi = sweep.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let lo = sweep.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            assert!((hi - lo) / hi < 0.15, "{topology} {r_load}: {lo}..{hi}");
        }
    }
}

#[test]
fn short_circuit_overshoots_final_value() {
    let grid = SweepGrid::default();
    let (trx, src) = grid.supply_for(10.0).unwrap();
    let cfg = SimConfig::follow_on(trx, src, Topology::Parallel, 0.0);
    let trace = run(&cfg).unwrap();
    let final_value = trace.mean_current(0.06, 0.1);
    assert!(trace.peak_follow_on() > 1.1 * final_value);
}

#[test]
fn full_circuit_starts_at_capacitor_peak() {
    // The capacitor drives V_c/(R1+R2) through the fault at t = 0.
    for topology in Topology::ALL {
        let sys = SystemConfig::test_setup(topology);
        let trace = run(&SimConfig::new(sys)).unwrap();
        let (peak, t) = trace.peak();
        let expected = sys.dc_link.v_c / sys.dc_link.fault_resistance();
        assert!((peak / expected - 1.0).abs() < 1e-3, "{topology}: {peak}");
        assert!(t < 1e-4);
    }
}

#[test]
fn full_circuit_close_to_measured_joules_integral() {
    // Measured: 135.7 A²s at 104 ms (parallel), 404.6 A²s at 102 ms (series).
    for (topology, t, measured) in [(Topology::Parallel, 0.104, 135.7), (Topology::Series, 0.102, 404.6)] {
        let mut cfg = SimConfig::new(SystemConfig::test_setup(topology));
        cfg.duration = t;
        let ji = joules_integral_sim(&run(&cfg).unwrap(), t).unwrap();
        assert!((ji / measured - 1.0).abs() <= 0.05, "{topology}: {ji:.2} vs {measured}");
    }
}

#[test]
fn open_circuit_voltage_is_twelve_pulse_crest() {
    let trx = TransformerParams::test_setup();
    let src = SourceParams::test_setup();
    let mut cfg = SimConfig::follow_on(trx, src, Topology::Parallel, 1e5).with_fault_angle(0.0);
    cfg.duration = 0.06;
    let trace = run(&cfg).unwrap();
    let v_sec = SQRT_2 * src.e_ll * trx.v_sec_ll / trx.v_prim_ll;
    let v_mean = trace.samples.iter().filter(|s| s.t > 0.04).map(|s| s.v_dc).sum::<f64>()
        / trace.samples.iter().filter(|s| s.t > 0.04).count() as f64;
    assert!((v_mean / (v_sec * K12) - 1.0).abs() < 0.01, "{v_mean}");
}

#[test]
fn series_open_circuit_voltage_is_two_six_pulse_averages() {
    let trx = TransformerParams::test_setup();
    let src = SourceParams::test_setup();
    let mut cfg = SimConfig::follow_on(trx, src, Topology::Series, 1e5).with_fault_angle(0.0);
    cfg.duration = 0.06;
    let trace = run(&cfg).unwrap();
    let v_sec = SQRT_2 * src.e_ll * trx.v_sec_ll / trx.v_prim_ll;
    let tail: Vec<f64> = trace.samples.iter().filter(|s| s.t > 0.04).map(|s| s.v_dc).collect();
    let v_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((v_mean / (2.0 * v_sec * 3.0 / PI) - 1.0).abs() < 0.01, "{v_mean}");
}
