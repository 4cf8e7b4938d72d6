//! C ABI over `crowbar_core`.
//!
//! Fallible calls return a [`CrowbarStatus`] and write results through out
//! pointers. The message of the last failure on the calling thread is kept
//! for [`crowbar_last_error`]. Handles are opaque and each constructor has a
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crowbar_core::fault_model::{build_model, FaultModel, KcPolynomial};
use crowbar_core::fusewire::{self, FuseRequirements, FuseWireGeometry, FuseWireMaterial};
use crowbar_core::rectifier_sim::{self, SimConfig, SimTrace};
use crowbar_core::system::{SystemConfig, Topology};
use crowbar_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowbarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DegenerateImpedance = 3,
    Infeasible = 4,
    NonFinite = 5,
    /// Diode iteration, singular matrix or energy-balance failure.
    Simulation = 6,
    OutOfRange = 7,
    /// Malformed JSON or a bad string argument.
    Parse = 8,
    Io = 9,
    Other = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowbarTopology {
    Parallel = 0,
    Series = 1,
}

impl From<CrowbarTopology> for Topology {
    fn from(t: CrowbarTopology) -> Self {
        match t {
            CrowbarTopology::Parallel => Topology::Parallel,
            CrowbarTopology::Series => Topology::Series,
        }
    }
}

/// Supply under fault.
pub struct CrowbarSystem(SystemConfig);

/// Closed-form fault-current model.
pub struct CrowbarModel(FaultModel);

/// Simulated fault transient.
pub struct CrowbarSimTrace(SimTrace);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CrowbarModelSummary {
    /// A
    pub i_f_base: f64,
    /// 1/s
    pub delta: f64,
    /// rad/s
    pub omega_d: f64,
    pub k_c: f64,
    pub x_r_system: f64,
    /// A
    pub cap_peak: f64,
    /// s
    pub cap_tau: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CrowbarSimSample {
    pub t: f64,
    pub i_dc: f64,
    pub v_dc: f64,
    pub ji: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CrowbarFuseMaterial {
    /// Conductivity at t_o, S/m.
    pub sigma_o: f64,
    /// Temperature coefficient of resistance, 1/°C.
    pub alpha_o: f64,
    /// Density, kg/m³.
    pub rho: f64,
    /// Specific heat, J/(kg·°C).
    pub c_p: f64,
    /// Ambient temperature, °C.
    pub t_o: f64,
    /// Melting temperature, °C.
    pub t_m: f64,
}

impl From<CrowbarFuseMaterial> for FuseWireMaterial {
    fn from(m: CrowbarFuseMaterial) -> Self {
        FuseWireMaterial {
            sigma_o: m.sigma_o,
            alpha_o: m.alpha_o,
            rho: m.rho,
            c_p: m.c_p,
            t_o: m.t_o,
            t_m: m.t_m,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CrowbarFuseDesign {
    /// m
    pub diameter: f64,
    /// m
    pub length: f64,
    /// A²s
    pub j_im: f64,
    /// J
    pub e_fm: f64,
    pub nearest_swg: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(e: &Error) -> CrowbarStatus {
    match e {
        Error::InvalidParameter { .. } | Error::NotEnoughSamples { .. } => CrowbarStatus::InvalidParameter,
        Error::DegenerateImpedance(_) => CrowbarStatus::DegenerateImpedance,
        Error::Infeasible(_) | Error::FuseOverflow { .. } => CrowbarStatus::Infeasible,
        Error::NonFinite { .. } => CrowbarStatus::NonFinite,
        Error::DiodeNonConvergence { .. } | Error::EnergyBalance { .. } | Error::SingularMatrix { .. } => {
            CrowbarStatus::Simulation
        }
        Error::OutOfRange { .. } => CrowbarStatus::OutOfRange,
        Error::Config { .. } | Error::Json(_) | Error::Csv(_) => CrowbarStatus::Parse,
        Error::Io(_) => CrowbarStatus::Io,
        _ => CrowbarStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (CrowbarStatus, String)>) -> CrowbarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrowbarStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside crowbar".to_string());
            CrowbarStatus::Panic
        }
    }
}

fn core<T>(r: crowbar_core::Result<T>) -> Result<T, (CrowbarStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (CrowbarStatus, String) {
    (CrowbarStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (CrowbarStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

fn positive(v: f64, name: &str) -> Result<(), (CrowbarStatus, String)> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((CrowbarStatus::InvalidParameter, format!("`{name}` must be > 0, got {v}")))
    }
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), (CrowbarStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn crowbar_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// The laboratory test setup: 1700 V precharge for parallel, 3400 V for series.
#[no_mangle]
pub extern "C" fn crowbar_system_test_setup(topology: CrowbarTopology) -> *mut CrowbarSystem {
    Box::into_raw(Box::new(CrowbarSystem(SystemConfig::test_setup(topology.into()))))
}

/// Parses a system JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_system_from_json(json: *const c_char, out: *mut *mut CrowbarSystem) -> CrowbarStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (CrowbarStatus::Parse, e.to_string()))?;
        let cfg = core(SystemConfig::from_json_str(text))?;
        write(out, Box::into_raw(Box::new(CrowbarSystem(cfg))), "out")
    })
}

/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowbar_system_set_topology(system: *mut CrowbarSystem, topology: CrowbarTopology) {
    if let Some(s) = system.as_mut() {
        s.0.topology = topology.into();
    }
}

/// # Safety
/// `system` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crowbar_system_free(system: *mut CrowbarSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Builds the closed-form model with the published k_c polynomial.
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_build(system: *const CrowbarSystem, out: *mut *mut CrowbarModel) -> CrowbarStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        let model = core(build_model(&sys.0))?;
        write(out, Box::into_raw(Box::new(CrowbarModel(model))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_free(model: *mut CrowbarModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// DC fault current at `t` seconds, A. NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_evaluate(model: *const CrowbarModel, t: f64) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.evaluate(t))
}

/// ∫₀ᵗ i² dt, A²s.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_joules_integral(model: *const CrowbarModel, t: f64, out: *mut f64) -> CrowbarStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err((CrowbarStatus::InvalidParameter, format!("t must be ≥ 0, got {t}")));
        }
        write(out, m.0.joules_integral(t), "out")
    })
}

/// Peak current and its time on [0, 120 ms].
///
/// # Safety
/// `model` must be a live handle; `peak` and `t_peak` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_peak(model: *const CrowbarModel, peak: *mut f64, t_peak: *mut f64) -> CrowbarStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let (p, t) = m.0.peak_current();
        write(peak, p, "peak")?;
        write(t_peak, t, "t_peak")
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_model_summary(model: *const CrowbarModel, out: *mut CrowbarModelSummary) -> CrowbarStatus {
    guard(|| {
        let s = deref(model, "model")?.0.summary();
        let summary = CrowbarModelSummary {
            i_f_base: s.i_f_base,
            delta: s.delta,
            omega_d: s.omega_d,
            k_c: s.k_c,
            x_r_system: s.x_r_system,
            cap_peak: s.cap_peak,
            cap_tau: s.cap_tau,
        };
        write(out, summary, "out")
    })
}

/// Published correction factor at `x_r_system`. Extrapolates outside
/// [0.01, 3.6].
#[no_mangle]
pub extern "C" fn crowbar_kc_polynomial(x_r_system: f64) -> f64 {
    KcPolynomial::PUBLISHED.eval_checked(x_r_system)
}

/// Simulates the full fault circuit for `duration` seconds at the default
/// 10 µs step. A NaN `fault_angle` selects the worst-case angle.
///
/// # Safety
/// `system` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_run(
    system: *const CrowbarSystem,
    fault_angle: f64,
    duration: f64,
    include_dc_cap: bool,
    out: *mut *mut CrowbarSimTrace,
) -> CrowbarStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        let mut cfg = SimConfig::new(sys.0);
        cfg.duration = duration;
        cfg.include_dc_cap = include_dc_cap;
        cfg.fault_angle = (!fault_angle.is_nan()).then_some(fault_angle);
        let trace = core(rectifier_sim::run(&cfg))?;
        write(out, Box::into_raw(Box::new(CrowbarSimTrace(trace))), "out")
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_free(trace: *mut CrowbarSimTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_len(trace: *const CrowbarSimTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.samples.len())
}

/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_sample(
    trace: *const CrowbarSimTrace,
    index: usize,
    out: *mut CrowbarSimSample,
) -> CrowbarStatus {
    guard(|| {
        let tr = deref(trace, "trace")?;
        let s = tr.0.samples.get(index).ok_or_else(|| {
            (
                CrowbarStatus::OutOfRange,
                format!("index {index} beyond {} samples", tr.0.samples.len()),
            )
        })?;
        write(
            out,
            CrowbarSimSample {
                t: s.t,
                i_dc: s.i_dc,
                v_dc: s.v_dc,
                ji: s.ji,
            },
            "out",
        )
    })
}

/// Fault angle used by the run, rad.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_fault_angle(trace: *const CrowbarSimTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.0.fault_angle)
}

/// Simulated ∫₀ᵗ i² dt, A²s, interpolated between samples.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crowbar_sim_joules_integral(trace: *const CrowbarSimTrace, t: f64, out: *mut f64) -> CrowbarStatus {
    guard(|| {
        let tr = deref(trace, "trace")?;
        write(out, core(rectifier_sim::joules_integral_sim(&tr.0, t))?, "out")
    })
}

/// Annealed copper as used for the test wire.
#[no_mangle]
pub extern "C" fn crowbar_fuse_material_copper() -> CrowbarFuseMaterial {
    let m = FuseWireMaterial::copper();
    CrowbarFuseMaterial {
        sigma_o: m.sigma_o,
        alpha_o: m.alpha_o,
        rho: m.rho,
        c_p: m.c_p,
        t_o: m.t_o,
        t_m: m.t_m,
    }
}

/// Melting Joules Integral of a round wire of `diameter` metres, A²s.
///
/// # Safety
/// `material` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn crowbar_fuse_melting_joules_integral(
    diameter: f64,
    material: *const CrowbarFuseMaterial,
    out: *mut f64,
) -> CrowbarStatus {
    guard(|| {
        let mat: FuseWireMaterial = (*deref(material, "material")?).into();
        core(mat.validate())?;
        positive(diameter, "diameter")?;
        let geom = FuseWireGeometry::from_diameter(diameter, 1.0);
        core(geom.validate())?;
        write(out, core(fusewire::melting_joules_integral(geom.area, &mat))?, "out")
    })
}

/// Energy absorbed up to melting by a round wire, J.
///
/// # Safety
/// `material` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn crowbar_fuse_melting_energy(
    diameter: f64,
    length: f64,
    material: *const CrowbarFuseMaterial,
    out: *mut f64,
) -> CrowbarStatus {
    guard(|| {
        let mat: FuseWireMaterial = (*deref(material, "material")?).into();
        core(mat.validate())?;
        positive(diameter, "diameter")?;
        let geom = FuseWireGeometry::from_diameter(diameter, length);
        core(geom.validate())?;
        write(out, fusewire::melting_energy(&geom, &mat), "out")
    })
}

/// Sizes a wire for an energy target (J), a J_I ceiling (A²s) and an
/// operating voltage (kV). `length` ≤ 0 picks the shortest admissible length;
/// otherwise it is used as given, in metres.
///
/// # Safety
/// `material` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn crowbar_fuse_design(
    energy: f64,
    ji_max: f64,
    kv: f64,
    length: f64,
    material: *const CrowbarFuseMaterial,
    out: *mut CrowbarFuseDesign,
) -> CrowbarStatus {
    guard(|| {
        let mat: FuseWireMaterial = (*deref(material, "material")?).into();
        let req = FuseRequirements {
            energy_target: energy,
            ji_limit: ji_max,
            operating_kv: kv,
            length: (length > 0.0).then_some(length),
        };
        let d = core(fusewire::design_fuse(&req, &mat))?;
        write(
            out,
            CrowbarFuseDesign {
                diameter: d.diameter,
                length: d.geometry.length,
                j_im: d.j_im,
                e_fm: d.e_fm,
                nearest_swg: d.nearest_swg,
            },
            "out",
        )
    })
}
