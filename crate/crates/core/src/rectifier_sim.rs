//! Fixed-step switched-circuit simulator of the dual-secondary 12-pulse diode
//! rectifier under a dc-side fault.
//!
//! The grid drives the Δ primary through the source reactance. Each primary
//! winding is coupled to one Δ and one Y secondary winding by an ideal
//! three-winding leg, so both 6-pulse bridges share the source and primary
//! leakage impedance the way the real transformer does. The older
//! representation with two independent Thevenin sources is kept as
//! [`TransformerModel::SplitThevenin`].
//!
//! Inductors and the dc capacitor use trapezoidal companion models (backward
//! Euler on the first step), diodes are two-state resistors settled by a
//! fixpoint at every step, and the network is solved by nodal analysis with
//! LU factors cached per diode-state pattern.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_6, PI, SQRT_2};

use nalgebra::{DMatrix, DVector, LU, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fault_model::FaultModel;
use crate::system::{DcLinkParams, SourceParams, SystemConfig, Topology, TransformerParams};

/// Residual (percent of dissipated energy) above which a run is rejected.
pub const ENERGY_RESIDUAL_LIMIT: f64 = 2.0;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    /// Source phase angle at the fault instant, rad. `None` selects the
    /// worst case over one 12-pulse symmetry period.
    pub fault_angle: Option<f64>,
    /// Probes used by the worst-case angle search.
    pub angle_resolution: usize,
    pub duration: f64,
    pub dt: f64,
    /// With the capacitor, the bridges feed C_dc ∥ (R1+R2) through R3 and the
    /// capacitor starts at V_c. Without it, the bridges feed R1+R2+R3 directly.
    pub include_dc_cap: bool,
    pub diode_r_on: f64,
    pub diode_r_off: f64,
    pub max_diode_iterations: usize,
    #[serde(default)]
    pub transformer_model: TransformerModel,
}

/// How the dual-secondary transformer is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformerModel {
    /// Source reactance and Δ primary windings shared by both secondaries
    /// through ideal three-winding legs.
    #[default]
    Coupled,
    /// Two independent three-phase Thevenin sources, each carrying twice the
    /// referred equivalent impedance.
    SplitThevenin,
}

impl SimConfig {
    pub fn new(system: SystemConfig) -> Self {
        Self {
            system,
            fault_angle: None,
            angle_resolution: 24,
            duration: 0.1,
            dt: 1e-5,
            include_dc_cap: true,
            diode_r_on: 1e-3,
            diode_r_off: 1e6,
            max_diode_iterations: 20,
            transformer_model: TransformerModel::default(),
        }
    }

    /// Follow-on-only circuit: the bridges drive a plain resistance `r_load`
    /// and there is no dc capacitor.
    pub fn follow_on(
        transformer: TransformerParams,
        source: SourceParams,
        topology: Topology,
        r_load: f64,
    ) -> Self {
        let system = SystemConfig {
            transformer,
            source,
            dc_link: DcLinkParams {
                r1: r_load,
                r2: 0.0,
                r3: 0.0,
                c_dc: 1e-6,
                v_c: 0.0,
            },
            topology,
        };
        Self {
            include_dc_cap: false,
            ..Self::new(system)
        }
    }

    pub fn with_fault_angle(mut self, angle: f64) -> Self {
        self.fault_angle = Some(angle);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.transformer.validate()?;
        self.system.source.validate()?;
        let dc = &self.system.dc_link;
        for (name, v) in [("dc_link.r1", dc.r1), ("dc_link.r2", dc.r2), ("dc_link.r3", dc.r3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and ≥ 0, got {v}")));
            }
        }
        if self.include_dc_cap {
            dc.validate()?;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= 100.0 * self.dt) {
            return Err(invalid(
                "duration",
                format!("must cover at least 100 steps ({} s), got {}", 100.0 * self.dt, self.duration),
            ));
        }
        if !(self.diode_r_on > 0.0) || !(self.diode_r_off / self.diode_r_on >= 1e6) {
            return Err(invalid("diode_r_off", "r_off/r_on must be ≥ 1e6"));
        }
        if self.angle_resolution == 0 {
            return Err(invalid("angle_resolution", "must be ≥ 1"));
        }
        if self.max_diode_iterations == 0 {
            return Err(invalid("max_diode_iterations", "must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t: f64,
    /// Current in the fault path, A.
    pub i_dc: f64,
    /// DC output current of the Δ-fed and Y-fed bridges.
    pub i_bridge: [f64; 2],
    /// Bridge output voltage, V.
    pub v_dc: f64,
    /// Running Joules Integral of `i_dc`, A²s.
    pub ji: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub samples: Vec<SimSample>,
    pub fault_angle: f64,
    /// |E_source + ΔE_initial − E_dissipated − ΔE_stored| as a percentage of
    /// the dissipated energy.
    pub energy_residual: f64,
    pub dt: f64,
}

/// JSON run report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub fault_angle: f64,
    pub peak_a: f64,
    pub ji_at_end: f64,
    pub energy_residual: f64,
}

impl SimTrace {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Largest fault-path current and when it occurs.
    pub fn peak(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::NEG_INFINITY, 0.0), |(best, bt), s| {
                if s.i_dc > best {
                    (s.i_dc, s.t)
                } else {
                    (best, bt)
                }
            })
    }

    /// Largest total bridge output current (the follow-on current).
    pub fn peak_follow_on(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.i_bridge[0] + s.i_bridge[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean fault-path current over `[t0, t1]`.
    pub fn mean_current(&self, t0: f64, t1: f64) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for s in self.samples.iter().filter(|s| s.t >= t0 && s.t <= t1) {
            sum += s.i_dc;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn report(&self) -> RunReport {
        RunReport {
            fault_angle: self.fault_angle,
            peak_a: self.peak().0,
            ji_at_end: self.samples.last().map_or(0.0, |s| s.ji),
            energy_residual: self.energy_residual,
        }
    }

    /// Builds a trace from a sampled current, integrating J_I by trapezoid.
    /// Used for synthetic oracles and for measured waveforms.
    pub fn from_current(times: &[f64], currents: &[f64]) -> Result<Self> {
        if times.len() != currents.len() {
            return Err(invalid("currents", "length differs from times"));
        }
        let mut samples = Vec::with_capacity(times.len());
        let mut ji = 0.0;
        for (k, (&t, &i)) in times.iter().zip(currents).enumerate() {
            if !t.is_finite() || !i.is_finite() {
                return Err(Error::NonFinite { index: k });
            }
            if k > 0 {
                let (tp, ip) = (times[k - 1], currents[k - 1]);
                ji += 0.5 * (t - tp) * (ip * ip + i * i);
            }
            samples.push(SimSample {
                t,
                i_dc: i,
                i_bridge: [i, 0.0],
                v_dc: 0.0,
                ji,
            });
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Ok(Self {
            samples,
            fault_angle: 0.0,
            energy_residual: 0.0,
            dt,
        })
    }
}

/// ∫₀ᵗ i_dc² dt over the recorded trace, trapezoidal, with linear
/// interpolation of the current inside the last partial step.
pub fn joules_integral_sim(trace: &SimTrace, t: f64) -> Result<f64> {
    let duration = trace.duration();
    if t > duration * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::OutOfRange { t, duration });
    }
    if t <= 0.0 || trace.samples.is_empty() {
        return Ok(0.0);
    }
    let s = &trace.samples;
    let k = s.partition_point(|x| x.t <= t);
    let last = &s[k - 1];
    if k == s.len() || last.t >= t {
        return Ok(last.ji);
    }
    let next = &s[k];
    let frac = (t - last.t) / (next.t - last.t);
    let i_t = last.i_dc + frac * (next.i_dc - last.i_dc);
    Ok(last.ji + 0.5 * (t - last.t) * (last.i_dc.powi(2) + i_t * i_t))
}

/// Percentage Joules Integral error of the model relative to the simulation.
pub fn delta_ji_percent(sim: &SimTrace, model: &FaultModel, t: f64) -> Result<f64> {
    let j_sim = joules_integral_sim(sim, t)?;
    if j_sim == 0.0 {
        return Err(Error::ZeroJoulesIntegral);
    }
    Ok((j_sim - model.joules_integral(t)) / j_sim * 100.0)
}

/// Follow-on current peak at each of `angle_resolution` fault angles spread
/// evenly over `[0, π/6)`, in angle order.
pub fn angle_sweep(config: &SimConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let n = config.angle_resolution;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let angle = FRAC_PI_6 * k as f64 / n as f64;
            let trace = simulate(config, angle)?;
            Ok((angle, trace.peak_follow_on()))
        })
        .collect()
}

/// The fault angle giving the largest follow-on current peak, with that
/// peak. Ties go to the smaller angle.
pub fn worst_case_fault_angle(config: &SimConfig) -> Result<(f64, f64)> {
    let sweep = angle_sweep(config)?;
    let mut best = sweep[0];
    for &(angle, peak) in &sweep[1..] {
        if peak > best.1 {
            best = (angle, peak);
        }
    }
    Ok(best)
}

/// Runs the transient. Uses the worst-case fault angle when none is given.
pub fn run(config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    let angle = match config.fault_angle {
        Some(a) => a,
        None => worst_case_fault_angle(config)?.0,
    };
    let trace = simulate(config, angle)?;
    if trace.energy_residual > ENERGY_RESIDUAL_LIMIT {
        return Err(Error::EnergyBalance {
            residual: trace.energy_residual,
            limit: ENERGY_RESIDUAL_LIMIT,
        });
    }
    Ok(trace)
}

type Node = Option<usize>;

/// Series R-L branch, optionally with an ideal sinusoidal source, carrying
/// current from `from` to `to`.
#[derive(Debug, Clone, Copy)]
struct RlBranch {
    from: Node,
    to: Node,
    r: f64,
    l: f64,
    source: Option<(f64, f64)>,
}

impl RlBranch {
    fn emf(&self, omega: f64, t: f64, fault_angle: f64) -> f64 {
        self.source
            .map_or(0.0, |(peak, phase)| peak * (omega * t + fault_angle + phase).sin())
    }
}

#[derive(Debug, Clone, Copy)]
struct Diode {
    anode: Node,
    cathode: Node,
    bridge: usize,
    /// Cathode on the bridge's positive rail.
    upper: bool,
}

#[derive(Debug, Clone, Copy)]
struct Resistor {
    a: Node,
    b: Node,
    g: f64,
}

/// One leg of an ideal three-winding transformer: a primary winding and two
/// secondaries with fixed voltage ratios. Each secondary current is an extra
/// unknown of the nodal system.
#[derive(Debug, Clone, Copy)]
struct IdealLeg {
    primary: (Node, Node),
    secondaries: [((Node, Node), f64); 2],
    /// Index of the first auxiliary current unknown.
    aux: usize,
}

struct Circuit {
    n_nodes: usize,
    n_aux: usize,
    branches: Vec<RlBranch>,
    diodes: Vec<Diode>,
    resistors: Vec<Resistor>,
    legs: Vec<IdealLeg>,
    /// Capacitor from this node to ground.
    cap: Option<(usize, f64)>,
    dc_pos: usize,
    fault_resistor: usize,
}

fn v(x: &DVector<f64>, n: Node) -> f64 {
    n.map_or(0.0, |i| x[i])
}

fn stamp(m: &mut DMatrix<f64>, a: Node, b: Node, g: f64) {
    if let Some(i) = a {
        m[(i, i)] += g;
    }
    if let Some(j) = b {
        m[(j, j)] += g;
    }
    if let (Some(i), Some(j)) = (a, b) {
        m[(i, j)] -= g;
        m[(j, i)] -= g;
    }
}

fn inject(rhs: &mut DVector<f64>, n: Node, i: f64) {
    if let Some(k) = n {
        rhs[k] += i;
    }
}

struct Builder {
    next: usize,
}

impl Builder {
    fn node(&mut self) -> Node {
        self.next += 1;
        Some(self.next - 1)
    }

    fn nodes3(&mut self) -> [Node; 3] {
        [self.node(), self.node(), self.node()]
    }
}

/// Phase offset of line `k` in a positive-sequence set.
fn line_phase(k: usize) -> f64 {
    -2.0 * PI * k as f64 / 3.0
}

impl Circuit {
    fn build(cfg: &SimConfig) -> Result<Self> {
        let sys = &cfg.system;
        let eq = sys.equivalent()?;
        let trx = &sys.transformer;
        let omega = sys.source.omega;
        let min_r = cfg.diode_r_on;
        let mut b = Builder { next: 0 };
        let mut branches = Vec::new();
        let mut resistors = Vec::new();
        let mut legs = Vec::new();
        let r_bleed = cfg.diode_r_off;

        let p = b.node();
        let mid = match sys.topology {
            Topology::Parallel => None,
            Topology::Series => b.node(),
        };

        // AC terminals of the Δ-fed and Y-fed bridges.
        let ac: [[Node; 3]; 2] = match cfg.transformer_model {
            TransformerModel::Coupled => {
                let a_d = trx.v_sec_ll / trx.v_prim_ll;
                let a_y = a_d / SQRT_3;
                let v_phase_peak = SQRT_2 * sys.source.e_ll / SQRT_3;
                let prim = b.nodes3();
                for (k, &n) in prim.iter().enumerate() {
                    branches.push(RlBranch {
                        from: None,
                        to: n,
                        r: if sys.source.x_s > 0.0 { 0.0 } else { min_r },
                        l: sys.source.x_s / omega,
                        source: Some((v_phase_peak, line_phase(k))),
                    });
                }
                let delta = b.nodes3();
                let star = b.nodes3();
                let star_n = b.node();
                resistors.push(Resistor { a: star_n, b: None, g: 1.0 / r_bleed });
                let mut aux = 0;
                for k in 0..3 {
                    let k1 = (k + 1) % 3;
                    let wp = b.node();
                    branches.push(RlBranch {
                        from: prim[k],
                        to: wp,
                        r: trx.r_p_delta,
                        l: trx.x_lp_delta / omega,
                        source: None,
                    });
                    let wd = b.node();
                    branches.push(RlBranch {
                        from: wd,
                        to: delta[k],
                        r: trx.r_sp * a_d * a_d,
                        l: trx.x_l_sp * a_d * a_d / omega,
                        source: None,
                    });
                    let wy = b.node();
                    branches.push(RlBranch {
                        from: wy,
                        to: star[k],
                        r: trx.r_sp * a_y * a_y,
                        l: trx.x_l_sp * a_y * a_y / omega,
                        source: None,
                    });
                    legs.push(IdealLeg {
                        primary: (wp, prim[k1]),
                        secondaries: [((wd, delta[k1]), a_d), ((wy, star_n), a_y)],
                        aux,
                    });
                    aux += 2;
                }
                [delta, star]
            }
            TransformerModel::SplitThevenin => {
                // Per-secondary share of the referred impedance (two in
                // parallel give R'_p, X'_lp) as a per-phase Y equivalent on the
                // secondary voltage base.
                let scale = (trx.v_sec_ll / (SQRT_3 * trx.v_prim_ll)).powi(2);
                let r_phase = 2.0 * eq.r_p_eq * scale;
                let l_phase = 2.0 * eq.x_lp_eq * scale / omega;
                let v_sec = trx.v_sec_ll * sys.source.e_ll / trx.v_prim_ll;
                let v_peak = SQRT_2 * v_sec / SQRT_3;
                let mut out = [[None; 3]; 2];
                for (bridge, terms) in out.iter_mut().enumerate() {
                    let neutral = b.node();
                    resistors.push(Resistor { a: neutral, b: None, g: 1.0 / r_bleed });
                    let shift = if bridge == 1 { FRAC_PI_6 } else { 0.0 };
                    *terms = b.nodes3();
                    for (k, &n) in terms.iter().enumerate() {
                        branches.push(RlBranch {
                            from: neutral,
                            to: n,
                            r: r_phase,
                            l: l_phase,
                            source: Some((v_peak, shift + line_phase(k))),
                        });
                    }
                }
                out
            }
        };

        let mut diodes = Vec::new();
        for (bridge, terms) in ac.iter().enumerate() {
            let (rail_p, rail_n) = match (sys.topology, bridge) {
                (Topology::Parallel, _) => (p, None),
                (Topology::Series, 0) => (mid, None),
                (Topology::Series, _) => (p, mid),
            };
            for &a in terms {
                diodes.push(Diode { anode: a, cathode: rail_p, bridge, upper: true });
                diodes.push(Diode { anode: rail_n, cathode: a, bridge, upper: false });
            }
        }

        let dc = &sys.dc_link;
        let cap = if cfg.include_dc_cap {
            let d = b.node();
            resistors.push(Resistor { a: p, b: d, g: 1.0 / dc.r3.max(min_r) });
            resistors.push(Resistor { a: d, b: None, g: 1.0 / dc.fault_resistance().max(min_r) });
            Some((d.expect("allocated"), dc.c_dc))
        } else {
            resistors.push(Resistor {
                a: p,
                b: None,
                g: 1.0 / dc.follow_on_resistance().max(min_r),
            });
            None
        };
        for br in &mut branches {
            if br.l == 0.0 && br.r == 0.0 {
                br.r = min_r;
            }
        }
        Ok(Self {
            n_nodes: b.next,
            n_aux: legs.len() * 2,
            branches,
            diodes,
            fault_resistor: resistors.len() - 1,
            resistors,
            legs,
            cap,
            dc_pos: p.expect("allocated"),
        })
    }

    fn dim(&self) -> usize {
        self.n_nodes + self.n_aux
    }

    /// Resistors, ideal transformer constraints and the given companion
    /// conductances of the branches and the capacitor.
    fn base_matrix(&self, branch_g: &[f64], cap_g: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for r in &self.resistors {
            stamp(&mut m, r.a, r.b, r.g);
        }
        for (br, &g) in self.branches.iter().zip(branch_g) {
            stamp(&mut m, br.from, br.to, g);
        }
        if let Some((d, _)) = self.cap {
            m[(d, d)] += cap_g;
        }
        for leg in &self.legs {
            let (pp, pn) = leg.primary;
            for (s, &((sp, sn), ratio)) in leg.secondaries.iter().enumerate() {
                let col = self.n_nodes + leg.aux + s;
                // KCL: the secondary sources its current into `sp`, the
                // primary draws `ratio` times it.
                if let Some(i) = sp {
                    m[(i, col)] -= 1.0;
                    m[(col, i)] += 1.0;
                }
                if let Some(i) = sn {
                    m[(i, col)] += 1.0;
                    m[(col, i)] -= 1.0;
                }
                if let Some(i) = pp {
                    m[(i, col)] += ratio;
                    m[(col, i)] -= ratio;
                }
                if let Some(i) = pn {
                    m[(i, col)] -= ratio;
                    m[(col, i)] += ratio;
                }
            }
        }
        m
    }
}

struct DiodeSolver<'a> {
    circuit: &'a Circuit,
    base: DMatrix<f64>,
    g_on: f64,
    g_off: f64,
    cache: HashMap<u32, LU<f64, Dyn, Dyn>>,
}

impl<'a> DiodeSolver<'a> {
    fn new(circuit: &'a Circuit, base: DMatrix<f64>, cfg: &SimConfig) -> Self {
        Self {
            circuit,
            base,
            g_on: 1.0 / cfg.diode_r_on,
            g_off: 1.0 / cfg.diode_r_off,
            cache: HashMap::new(),
        }
    }

    fn g(&self, states: u32, k: usize) -> f64 {
        if states >> k & 1 == 1 {
            self.g_on
        } else {
            self.g_off
        }
    }

    fn solve_with(&mut self, states: u32, rhs: &DVector<f64>, step: usize) -> Result<DVector<f64>> {
        if !self.cache.contains_key(&states) {
            let mut m = self.base.clone();
            for (k, d) in self.circuit.diodes.iter().enumerate() {
                stamp(&mut m, d.anode, d.cathode, self.g(states, k));
            }
            self.cache.insert(states, m.lu());
        }
        self.cache[&states]
            .solve(rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularMatrix { step })
    }

    /// Finds diode states consistent with the solution: conducting exactly
    /// where the anode-cathode voltage is positive. Flips every violating
    /// diode for the first half of the budget, then only the worst offender
    /// so that cycles cannot persist.
    fn settle(
        &mut self,
        states: &mut u32,
        rhs: &DVector<f64>,
        step: usize,
        max_iter: usize,
    ) -> Result<DVector<f64>> {
        let bulk = max_iter / 2;
        for it in 0..max_iter {
            let x = self.solve_with(*states, rhs, step)?;
            let mut wanted = 0u32;
            let mut worst: Option<(usize, f64)> = None;
            for (k, d) in self.circuit.diodes.iter().enumerate() {
                let vak = v(&x, d.anode) - v(&x, d.cathode);
                if vak > 0.0 {
                    wanted |= 1 << k;
                }
                if (vak > 0.0) != (*states >> k & 1 == 1) {
                    let severity = vak.abs() * self.g(*states, k);
                    if worst.map_or(true, |(_, s)| severity > s) {
                        worst = Some((k, severity));
                    }
                }
            }
            match worst {
                None => return Ok(x),
                Some(_) if it < bulk => *states = wanted,
                Some((k, _)) => *states ^= 1 << k,
            }
        }
        Err(Error::DiodeNonConvergence {
            step,
            iterations: max_iter,
        })
    }
}

/// Runs one transient at a given fault angle without the energy gate.
///
/// The first step uses backward Euler so that no consistent t = 0 operating
/// point is needed; every later step is trapezoidal.
pub fn simulate(cfg: &SimConfig, fault_angle: f64) -> Result<SimTrace> {
    cfg.validate()?;
    let circuit = Circuit::build(cfg)?;
    let h = cfg.dt;
    let dim = circuit.dim();
    let steps = (cfg.duration / h).round() as usize;
    let omega = cfg.system.source.omega;
    let nb = circuit.branches.len();
    let r_fault = 1.0 / circuit.resistors[circuit.fault_resistor].g;

    let trap_a: Vec<f64> = circuit.branches.iter().map(|b| b.l / h + b.r / 2.0).collect();
    let euler_b: Vec<f64> = circuit.branches.iter().map(|b| b.l / h + b.r).collect();
    let cap_c = circuit.cap.map_or(0.0, |(_, c)| c);
    let trap_g: Vec<f64> = trap_a.iter().map(|a| 0.5 / a).collect();
    let euler_g: Vec<f64> = euler_b.iter().map(|b| 1.0 / b).collect();
    let mut trap = DiodeSolver::new(&circuit, circuit.base_matrix(&trap_g, 2.0 * cap_c / h), cfg);
    let mut euler = DiodeSolver::new(&circuit, circuit.base_matrix(&euler_g, cap_c / h), cfg);

    let v_c0 = if cfg.include_dc_cap { cfg.system.dc_link.v_c } else { 0.0 };
    let mut i_l = vec![0.0; nb];
    let mut u = vec![0.0; nb];
    let mut v_cap = v_c0;
    // At t = 0 the bridges are idle and the capacitor alone drives R1 + R2.
    let mut i_cap = -v_c0 / r_fault;
    let mut states = 0u32;

    let stored = |i_l: &[f64], v_cap: f64| -> f64 {
        let e_l: f64 = circuit.branches.iter().zip(i_l).map(|(b, i)| 0.5 * b.l * i * i).sum();
        e_l + 0.5 * cap_c * v_cap * v_cap
    };
    let e_stored0 = stored(&i_l, v_cap);

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(SimSample {
        t: 0.0,
        i_dc: v_c0 / r_fault,
        i_bridge: [0.0; 2],
        v_dc: v_c0,
        ji: 0.0,
    });
    let mut p_src_prev = 0.0;
    let mut p_diss_prev = v_c0 * v_c0 / r_fault;
    let (mut e_src, mut e_diss, mut ji) = (0.0, 0.0, 0.0);
    let mut emf_prev: Vec<f64> = circuit.branches.iter().map(|b| b.emf(omega, 0.0, fault_angle)).collect();

    for step in 1..=steps {
        let t = step as f64 * h;
        let first = step == 1;
        let emf: Vec<f64> = circuit.branches.iter().map(|b| b.emf(omega, t, fault_angle)).collect();
        let mut rhs = DVector::<f64>::zeros(dim);
        let mut hist = vec![0.0; nb];
        for (k, b) in circuit.branches.iter().enumerate() {
            hist[k] = if first {
                (b.l / h * i_l[k] + emf[k]) / euler_b[k]
            } else {
                (i_l[k] * (b.l / h - b.r / 2.0) + 0.5 * (emf[k] + emf_prev[k] - u[k])) / trap_a[k]
            };
            inject(&mut rhs, b.to, hist[k]);
            inject(&mut rhs, b.from, -hist[k]);
        }
        if let Some((d, c)) = circuit.cap {
            rhs[d] += if first { c / h * v_cap } else { 2.0 * c / h * v_cap + i_cap };
        }
        let solver = if first { &mut euler } else { &mut trap };
        let x = solver.settle(&mut states, &rhs, step, cfg.max_diode_iterations)?;
        let g_branch = if first { &euler_g } else { &trap_g };

        for (k, b) in circuit.branches.iter().enumerate() {
            u[k] = v(&x, b.to) - v(&x, b.from);
            i_l[k] = hist[k] - g_branch[k] * u[k];
        }
        if let Some((d, c)) = circuit.cap {
            let v_new = x[d];
            i_cap = if first {
                c / h * (v_new - v_cap)
            } else {
                2.0 * c / h * (v_new - v_cap) - i_cap
            };
            v_cap = v_new;
        }

        let mut p_diss: f64 = circuit.branches.iter().zip(&i_l).map(|(b, i)| b.r * i * i).sum();
        for r in &circuit.resistors {
            let dv = v(&x, r.a) - v(&x, r.b);
            p_diss += r.g * dv * dv;
        }
        let mut i_bridge = [0.0; 2];
        for (k, d) in circuit.diodes.iter().enumerate() {
            let dv = v(&x, d.anode) - v(&x, d.cathode);
            let g = solver.g(states, k);
            p_diss += g * dv * dv;
            if d.upper {
                i_bridge[d.bridge] += g * dv;
            }
        }
        let p_src: f64 = emf.iter().zip(&i_l).map(|(e, i)| e * i).sum();
        e_src += 0.5 * h * (p_src + p_src_prev);
        e_diss += 0.5 * h * (p_diss + p_diss_prev);
        p_src_prev = p_src;
        p_diss_prev = p_diss;
        emf_prev = emf;

        let fr = &circuit.resistors[circuit.fault_resistor];
        let i_dc = fr.g * (v(&x, fr.a) - v(&x, fr.b));
        let v_dc = x[circuit.dc_pos];
        if !(i_dc.is_finite() && v_dc.is_finite()) {
            return Err(Error::NonFinite { index: step });
        }
        let i_prev = samples.last().map_or(0.0, |s: &SimSample| s.i_dc);
        ji += 0.5 * h * (i_prev * i_prev + i_dc * i_dc);
        samples.push(SimSample { t, i_dc, i_bridge, v_dc, ji });
    }

    let balance = e_src + e_stored0 - e_diss - stored(&i_l, v_cap);
    let energy_residual = if e_diss > 0.0 {
        balance.abs() / e_diss * 100.0
    } else {
        0.0
    };
    Ok(SimTrace {
        samples,
        fault_angle,
        energy_residual,
        dt: h,
    })
}
