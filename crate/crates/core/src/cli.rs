//! `crowbar` command-line front end.
//!
//! Every command computes all of its results before touching the output
//! directory, and each file is written to a temporary sibling and renamed into
//! place, so a failed run never leaves a partial file behind.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::calibration::{
    delta_extremes, fit_kc, kc_from_oracles, simulate_grid, sweep_tp, validate_oracles, KcSample,
    OraclePoint, PolyFit, SweepGrid, ValidationRow, DEFAULT_KC_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::fault_model::{build_model, Correction, KcPolynomial};
use crate::fusewire::{
    design_fuse, melting_energy, melting_joules_integral, simulate_fuse, CurrentProfile,
    FuseRequirements, FuseWireGeometry, FuseWireMaterial, FUSE_DT,
};
use crate::rectifier_sim::{joules_integral_sim, run, SimConfig};
use crate::system::{SystemConfig, Topology};

/// Sampling period of the model trace CSV.
pub const MODEL_SAMPLE_PERIOD: f64 = 50e-6;

/// Experimental references a validation report is scored against.
pub mod reference {
    /// J_I at 104 ms, parallel, A²s.
    pub const JI_PARALLEL: f64 = 135.70;
    /// Peak fault current, parallel, A.
    pub const PEAK_PARALLEL: f64 = 158.40;
    /// J_I at 102 ms, series, A²s.
    pub const JI_SERIES: f64 = 404.60;
    pub const PEAK_SERIES: f64 = 315.10;
    /// J_I at which the 0.136 mm × 165 mm copper wire melted, A²s.
    pub const FUSE_JI: f64 = 15.70;
    /// Energy absorbed by that wire at melting, J.
    pub const FUSE_ENERGY: f64 = 9.96;
    /// Melting time of the wire under the constant-current source, s.
    pub const FUSE_MELT_TIME: f64 = 0.084;
    /// Evaluation instants of the J_I rows, s.
    pub const T_PARALLEL: f64 = 0.104;
    pub const T_SERIES: f64 = 0.102;
    /// Test wire.
    pub const WIRE_DIAMETER: f64 = 0.136e-3;
    pub const WIRE_LENGTH: f64 = 0.165;
}

/// Largest |error| in percent for a validation report to pass.
pub const VALIDATION_TOLERANCE: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "crowbar", version, about = "DC fault current, fuse-wire and k_c calibration tools")]
pub struct Cli {
    /// System JSON (transformer, source, dc_link, topology). Defaults to the
    /// 1700 V / 3400 V laboratory test setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// parallel | series. Overrides the topology in the config.
    #[arg(long, global = true)]
    pub topology: Option<Topology>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form fault model. Writes model.csv and model_summary.json.
    Model {
        /// End of the trace, s.
        #[arg(long, default_value_t = 0.1)]
        until: f64,
    },
    /// Run the switched-circuit simulator. Writes sim.csv and sim_report.json.
    Sim(SimArgs),
    /// Score model and simulator against the laboratory measurements.
    /// Writes validation.json; exits nonzero unless every model row is within 5%.
    Validate {
        /// Use the model's own values as references. Every error is then zero.
        #[arg(long)]
        self_check: bool,
    },
    /// Fuse-wire sizing and heating.
    #[command(subcommand)]
    Fuse(FuseCommand),
    /// Fit k_c against the simulator over a sweep grid.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Fault initiation angle, rad.
    #[arg(long, conflicts_with = "worst_case")]
    pub fault_angle: Option<f64>,
    /// Search [0, π/6) for the angle with the largest follow-on peak (default).
    #[arg(long)]
    pub worst_case: bool,
    /// Leave the dc-link capacitor out of the circuit.
    #[arg(long)]
    pub no_cap: bool,
    /// Simulated time, s.
    #[arg(long, default_value_t = 0.1)]
    pub duration: f64,
    /// Time step, s.
    #[arg(long, default_value_t = 1e-5)]
    pub dt: f64,
}

#[derive(Debug, Subcommand)]
pub enum FuseCommand {
    /// Size a wire. Writes fuse_design.json.
    Design {
        /// Energy the wire must absorb before melting, J.
        #[arg(long)]
        energy: f64,
        /// Upper bound on the melting Joules Integral, A²s.
        #[arg(long)]
        ji_max: f64,
        /// Crowbar operating voltage, kV.
        #[arg(long)]
        kv: f64,
        /// Fixed wire length, mm. The shortest admissible length is used otherwise.
        #[arg(long)]
        length_mm: Option<f64>,
        #[command(flatten)]
        material: MaterialArg,
    },
    /// Heat a wire with a current profile. Writes fuse_trace.csv.
    Simulate {
        /// CSV with `t,i` columns and a header row.
        #[arg(long, required_unless_present = "current", conflicts_with = "current")]
        profile: Option<PathBuf>,
        /// Constant current, A, instead of a profile.
        #[arg(long, requires = "duration")]
        current: Option<f64>,
        /// Length of the constant-current pulse, s.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0.136)]
        diameter_mm: f64,
        #[arg(long, default_value_t = 165.0)]
        length_mm: f64,
        #[arg(long, default_value_t = FUSE_DT)]
        dt: f64,
        #[command(flatten)]
        material: MaterialArg,
    },
}

#[derive(Debug, Args)]
pub struct MaterialArg {
    /// Wire material JSON (sigma_o, alpha_o, rho, c_p, t_o, t_m). Copper otherwise.
    #[arg(long)]
    pub material: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Sweep grid JSON. Missing keys take their defaults.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Use the 4 × 6 coarse grid instead of the default one.
    #[arg(long, conflicts_with = "grid")]
    pub coarse: bool,
    /// Bisection tolerance on |ΔJ_I|, %.
    #[arg(long, default_value_t = DEFAULT_KC_TOL)]
    pub tol: f64,
    /// Fitted polynomial degree.
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
    /// Print the published coefficients beside the fitted ones.
    #[arg(long, alias = "check-paper-poly")]
    pub check_published_poly: bool,
    /// Skip the t_p sensitivity sweep.
    #[arg(long)]
    pub no_tp: bool,
}

/// Runs a parsed command line. `Ok(false)` means the computation finished but
/// did not meet its pass condition.
pub fn run_cli(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Model { until } => cmd_model(cli, *until),
        Command::Sim(args) => cmd_sim(cli, args),
        Command::Validate { self_check } => cmd_validate(cli, *self_check).map(|r| r.pass),
        Command::Fuse(cmd) => cmd_fuse(cli, cmd),
        Command::Calibrate(args) => cmd_calibrate(cli, args),
    }
}

fn load_system(cli: &Cli) -> Result<SystemConfig> {
    match &cli.config {
        Some(path) => {
            let mut cfg = SystemConfig::from_path(path)?;
            if let Some(t) = cli.topology {
                cfg.topology = t;
            }
            Ok(cfg)
        }
        None => Ok(SystemConfig::test_setup(cli.topology.unwrap_or_default())),
    }
}

fn load_material(arg: &MaterialArg) -> Result<FuseWireMaterial> {
    let mat = match &arg.material {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|source| Error::Config {
                path: path.clone(),
                source,
            })?
        }
        None => FuseWireMaterial::copper(),
    };
    mat.validate()?;
    Ok(mat)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| invalid("out", "not a file path"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        e.into()
    })
}

/// Writes a set of files only after all of them have been rendered.
fn write_all(out: &Path, files: Vec<(&str, Vec<u8>)>) -> Result<()> {
    for (name, bytes) in files {
        write_atomic(&out.join(name), &bytes)?;
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_table<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelRunSummary {
    pub topology: Topology,
    pub until: f64,
    pub i_f_base: f64,
    pub delta: f64,
    pub omega_d: f64,
    pub delta_over_omega_d: f64,
    pub k_c: f64,
    pub x_r_system: f64,
    pub cap_peak: f64,
    pub cap_tau: f64,
    pub peak_a: f64,
    pub t_peak: f64,
    pub joules_integral: f64,
}

fn cmd_model(cli: &Cli, until: f64) -> Result<bool> {
    if !(until >= 0.0 && until.is_finite()) {
        return Err(invalid("until", format!("must be ≥ 0, got {until}")));
    }
    let sys = load_system(cli)?;
    let model = build_model(&sys)?;
    let trace = model.sample(until, MODEL_SAMPLE_PERIOD);
    let ji = trace.last().map_or(0.0, |s| s.2);
    let (peak_a, t_peak) = model.peak_current();
    let s = model.summary();
    let summary = ModelRunSummary {
        topology: sys.topology,
        until,
        i_f_base: s.i_f_base,
        delta: s.delta,
        omega_d: s.omega_d,
        delta_over_omega_d: s.delta / s.omega_d,
        k_c: s.k_c,
        x_r_system: s.x_r_system,
        cap_peak: s.cap_peak,
        cap_tau: s.cap_tau,
        peak_a,
        t_peak,
        joules_integral: ji,
    };
    let csv = csv_table(
        &["t_s", "i_A", "ji_A2s"],
        trace.iter().map(|&(t, i, j)| [t.to_string(), i.to_string(), j.to_string()]),
    )?;
    write_all(&cli.out, vec![("model.csv", csv), ("model_summary.json", json(&summary)?)])?;

    println!("topology      {}", sys.topology);
    println!("I_f,base      {:.4} A", s.i_f_base);
    println!("delta         {:.2} 1/s", s.delta);
    println!("k_c           {:.4}", s.k_c);
    println!("X/R_system    {:.4}", s.x_r_system);
    println!("peak          {peak_a:.2} A at {:.3} ms", t_peak * 1e3);
    println!("J_I({until} s)  {ji:.3} A²s");
    Ok(true)
}

fn cmd_sim(cli: &Cli, args: &SimArgs) -> Result<bool> {
    let sys = load_system(cli)?;
    let mut cfg = SimConfig::new(sys);
    cfg.duration = args.duration;
    cfg.dt = args.dt;
    cfg.include_dc_cap = !args.no_cap;
    cfg.fault_angle = if args.worst_case { None } else { args.fault_angle };
    cfg.validate()?;
    let trace = run(&cfg)?;
    let report = trace.report();
    let csv = csv_table(
        &["t_s", "i_dc_A", "v_dc_V", "ji_A2s"],
        trace
            .samples
            .iter()
            .map(|s| [s.t.to_string(), s.i_dc.to_string(), s.v_dc.to_string(), s.ji.to_string()]),
    )?;
    write_all(&cli.out, vec![("sim.csv", csv), ("sim_report.json", json(&report)?)])?;

    println!("topology        {}", sys.topology);
    println!("fault angle     {:.4} rad", report.fault_angle);
    println!("peak            {:.2} A", report.peak_a);
    println!("J_I             {:.3} A²s", report.ji_at_end);
    println!("energy residual {:.4} %", report.energy_residual);
    Ok(true)
}

/// One quantity of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationEntry {
    pub name: String,
    pub model_value: Option<f64>,
    pub reference_value: f64,
    /// (reference − model)/reference·100.
    pub error_percent: Option<f64>,
    pub sim_value: Option<f64>,
    pub sim_error_percent: Option<f64>,
    /// Set when a sub-run failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationEntry>,
    pub pass: bool,
}

pub fn error_percent(reference: f64, value: f64) -> f64 {
    (reference - value) / reference * 100.0
}

struct Measured {
    model: Result<f64>,
    sim: Option<Result<f64>>,
}

fn topology_rows(base: Option<SystemConfig>, topology: Topology) -> [(String, Measured, f64); 2] {
    let sys = match base {
        Some(cfg) => SystemConfig { topology, ..cfg },
        None => SystemConfig::test_setup(topology),
    };
    let (t, ji_ref, peak_ref) = match topology {
        Topology::Parallel => (reference::T_PARALLEL, reference::JI_PARALLEL, reference::PEAK_PARALLEL),
        Topology::Series => (reference::T_SERIES, reference::JI_SERIES, reference::PEAK_SERIES),
    };
    let model = build_model(&sys);
    let mut cfg = SimConfig::new(sys);
    cfg.duration = t;
    let trace = run(&cfg);
    let sim_ji = trace.as_ref().map_err(clone_err).and_then(|tr| joules_integral_sim(tr, t));
    let sim_peak = trace.as_ref().map(|tr| tr.peak().0).map_err(clone_err);
    let ms = (t * 1e3).round();
    [
        (
            format!("J_I {topology} {ms} ms (A²s)"),
            Measured {
                model: model.as_ref().map(|m| m.joules_integral(t)).map_err(clone_err),
                sim: Some(sim_ji),
            },
            ji_ref,
        ),
        (
            format!("peak {topology} (A)"),
            Measured {
                model: model.as_ref().map(|m| m.peak_current().0).map_err(clone_err),
                sim: Some(sim_peak),
            },
            peak_ref,
        ),
    ]
}

fn clone_err(e: &Error) -> Error {
    invalid("run", e.to_string())
}

fn fuse_rows() -> [(String, Measured, f64); 2] {
    let mat = FuseWireMaterial::copper();
    let geom = FuseWireGeometry::from_diameter(reference::WIRE_DIAMETER, reference::WIRE_LENGTH);
    let j_im = melting_joules_integral(geom.area, &mat);
    // Constant current that reaches the closed-form J_Im at the measured melt time.
    let trace = j_im.as_ref().map_err(clone_err).and_then(|&j| {
        let amps = (j / reference::FUSE_MELT_TIME).sqrt();
        let profile = CurrentProfile::constant(amps, 0.1)?;
        simulate_fuse(&profile, &geom, &mat, FUSE_DT)
    });
    let melt = |f: fn(&crate::fusewire::FuseSample) -> f64| -> Result<f64> {
        let tr = trace.as_ref().map_err(clone_err)?;
        tr.melt_sample().map(f).ok_or_else(|| invalid("fuse", "wire did not melt"))
    };
    [
        (
            "fuse J_Im (A²s)".to_string(),
            Measured {
                model: j_im.as_ref().copied().map_err(clone_err),
                sim: Some(melt(|s| s.joules_integral)),
            },
            reference::FUSE_JI,
        ),
        (
            "fuse E_fm (J)".to_string(),
            Measured {
                model: Ok(melting_energy(&geom, &mat)),
                sim: Some(melt(|s| s.energy)),
            },
            reference::FUSE_ENERGY,
        ),
    ]
}

/// Builds the six-row report. With `self_check` the model values serve as
/// references.
pub fn validation_report(config: Option<SystemConfig>, self_check: bool) -> ValidationReport {
    let mut measured = Vec::new();
    measured.extend(topology_rows(config, Topology::Parallel));
    measured.extend(topology_rows(config, Topology::Series));
    measured.extend(fuse_rows());

    let rows: Vec<ValidationEntry> = measured
        .into_iter()
        .map(|(name, m, reference)| {
            let model = m.model.as_ref().ok().copied();
            let reference = match (self_check, model) {
                (true, Some(v)) => v,
                _ => reference,
            };
            let sim = m.sim.as_ref().and_then(|s| s.as_ref().ok().copied());
            let failure = match (&m.model, &m.sim) {
                (Err(e), _) => Some(format!("model: {e}")),
                (_, Some(Err(e))) => Some(format!("sim: {e}")),
                _ => None,
            };
            ValidationEntry {
                name,
                model_value: model,
                reference_value: reference,
                error_percent: model.map(|v| error_percent(reference, v)),
                sim_value: sim,
                sim_error_percent: sim.map(|v| error_percent(reference, v)),
                failure,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| {
        r.failure.is_none() && r.error_percent.is_some_and(|e| e.abs() <= VALIDATION_TOLERANCE)
    });
    ValidationReport { rows, pass }
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

fn cmd_validate(cli: &Cli, self_check: bool) -> Result<ValidationReport> {
    let config = match &cli.config {
        Some(_) => Some(load_system(cli)?),
        None => None,
    };
    let report = validation_report(config, self_check);
    write_all(&cli.out, vec![("validation.json", json(&report)?)])?;

    println!(
        "{:<26} {:>10} {:>10} {:>8} {:>10} {:>8}",
        "quantity", "model", "reference", "err %", "sim", "err %"
    );
    for r in &report.rows {
        println!(
            "{:<26} {:>10} {:>10.2} {:>8} {:>10} {:>8}",
            r.name,
            fmt_opt(r.model_value, 2),
            r.reference_value,
            fmt_opt(r.error_percent, 2),
            fmt_opt(r.sim_value, 2),
            fmt_opt(r.sim_error_percent, 2),
        );
        if let Some(f) = &r.failure {
            println!("  failed: {f}");
        }
    }
    println!("pass: {}", report.pass);
    Ok(report)
}

fn cmd_fuse(cli: &Cli, cmd: &FuseCommand) -> Result<bool> {
    match cmd {
        FuseCommand::Design {
            energy,
            ji_max,
            kv,
            length_mm,
            material,
        } => {
            let mat = load_material(material)?;
            let req = FuseRequirements {
                energy_target: *energy,
                ji_limit: *ji_max,
                operating_kv: *kv,
                length: length_mm.map(|l| l * 1e-3),
            };
            let d = design_fuse(&req, &mat)?;
            write_all(&cli.out, vec![("fuse_design.json", json(&d)?)])?;
            println!("diameter  {:.4} mm (nearest SWG {})", d.diameter * 1e3, d.nearest_swg);
            println!("length    {:.1} mm", d.geometry.length * 1e3);
            println!("J_Im      {:.3} A²s", d.j_im);
            println!("E_fm      {:.3} J", d.e_fm);
            Ok(true)
        }
        FuseCommand::Simulate {
            profile,
            current,
            duration,
            diameter_mm,
            length_mm,
            dt,
            material,
        } => {
            let mat = load_material(material)?;
            let profile = match (profile, current, duration) {
                (Some(path), _, _) => CurrentProfile::from_csv(fs::File::open(path)?)?,
                (None, Some(i), Some(d)) => CurrentProfile::constant(*i, *d)?,
                _ => return Err(invalid("profile", "give --profile or --current with --duration")),
            };
            let geom = FuseWireGeometry::from_diameter(diameter_mm * 1e-3, length_mm * 1e-3);
            let trace = simulate_fuse(&profile, &geom, &mat, *dt)?;
            let mut csv = Vec::new();
            trace.write_csv(&mut csv)?;
            write_all(&cli.out, vec![("fuse_trace.csv", csv)])?;
            println!("J_Im (closed form) {:.3} A²s", melting_joules_integral(geom.area, &mat)?);
            match trace.melt_sample() {
                Some(s) => println!(
                    "melted at {:.3} ms, J_I {:.3} A²s, E {:.3} J",
                    s.t * 1e3,
                    s.joules_integral,
                    s.energy
                ),
                None => {
                    let s = trace.last();
                    println!(
                        "intact: {:.1} °C, J_I {:.3} A²s, E {:.3} J",
                        s.temperature, s.joules_integral, s.energy
                    );
                }
            }
            Ok(true)
        }
    }
}

#[derive(Debug, Serialize)]
struct PolyJson<'a> {
    coeffs: &'a [f64],
    r2: f64,
    samples: usize,
}

fn load_grid(cli: &Cli, args: &CalibrateArgs) -> Result<SweepGrid> {
    let mut grid = match &args.grid {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|source| Error::Config {
                path: path.clone(),
                source,
            })?
        }
        None if args.coarse => SweepGrid::coarse(),
        None => SweepGrid::default(),
    };
    if cli.config.is_some() {
        let sys = load_system(cli)?;
        grid.transformer = sys.transformer;
        grid.source = sys.source;
    }
    if let Some(t) = cli.topology {
        grid.topologies = vec![t];
    }
    grid.validate()?;
    Ok(grid)
}

fn validation_csv(rows: &[ValidationRow]) -> Result<Vec<u8>> {
    csv_table(
        &["topology", "x_r_trx", "r_load_ohm", "x_r_system", "k_c", "delta_ji_pct"],
        rows.iter().map(|r| {
            [
                r.topology.to_string(),
                r.x_r_trx.to_string(),
                r.r_load.to_string(),
                r.x_r_system.to_string(),
                r.k_c.to_string(),
                r.delta_ji_percent.to_string(),
            ]
        }),
    )
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<bool> {
    let grid = load_grid(cli, args)?;
    let points = grid.points();
    log::info!("simulating {} grid points", points.len());
    let sims = simulate_grid(&grid, &points);
    let solved = kc_from_oracles(&grid, &sims, args.tol);

    let mut failures = 0;
    let oracles: Vec<OraclePoint> = sims.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    let mut samples: Vec<KcSample> = Vec::new();
    for (p, s) in points.iter().zip(solved) {
        match s {
            Ok(s) => samples.push(s),
            Err(e) => {
                failures += 1;
                log::error!("{} X/R_trx {} R_L {}: {e}", p.topology, p.x_r_trx, p.r_load);
                eprintln!("point {} X/R_trx {} R_L {} failed: {e}", p.topology, p.x_r_trx, p.r_load);
            }
        }
    }

    let mut files = vec![(
        "kc_table.csv",
        csv_table(
            &["topology", "x_r_trx", "r_load_ohm", "x_r_system", "k_c", "residual_delta_ji_pct"],
            samples.iter().map(|s| {
                [
                    s.topology.to_string(),
                    s.x_r_trx.to_string(),
                    s.r_load.to_string(),
                    s.x_r_system.to_string(),
                    s.k_c_solved.to_string(),
                    s.residual_delta_ji_percent.to_string(),
                ]
            }),
        )?,
    )];

    let fit: Option<PolyFit> = match fit_kc(&samples, args.degree) {
        Ok(f) => Some(f),
        Err(e @ (Error::NotEnoughSamples { .. } | Error::RankDeficient)) => {
            println!("no fit: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(f) = &fit {
        files.push((
            "kc_poly.json",
            json(&PolyJson {
                coeffs: &f.coeffs,
                r2: f.r_squared,
                samples: samples.len(),
            })?,
        ));
        if let Some(poly) = f.as_kc_polynomial() {
            let rows = validate_oracles(&grid, &oracles, Correction::Polynomial(poly))?;
            report_extremes("fitted k_c", &rows);
            files.push(("validate_fitted.csv", validation_csv(&rows)?));
        }
    }
    let published = validate_oracles(&grid, &oracles, Correction::Polynomial(KcPolynomial::PUBLISHED))?;
    report_extremes("published k_c", &published);
    files.push(("validate_published.csv", validation_csv(&published)?));
    let uncorrected = validate_oracles(&grid, &oracles, Correction::Fixed(1.0))?;
    report_extremes("k_c = 1", &uncorrected);
    files.push(("validate_uncorrected.csv", validation_csv(&uncorrected)?));

    if !args.no_tp {
        match sweep_tp(&grid) {
            Ok(rows) => files.push((
                "tp_sweep.csv",
                csv_table(
                    &["x_r_trx", "t_p_s", "delta_ji_pct"],
                    rows.iter().map(|r| [r.x_r_trx.to_string(), r.t_p.to_string(), r.delta_ji_percent.to_string()]),
                )?,
            )),
            Err(e) => {
                failures += 1;
                eprintln!("t_p sweep failed: {e}");
            }
        }
    }
    write_all(&cli.out, files)?;

    println!("k_c samples   {} of {}", samples.len(), points.len());
    if let Some(f) = &fit {
        println!("R²            {:.5}", f.r_squared);
        println!("fitted        {}", fmt_coeffs(&f.coeffs));
    }
    if args.check_published_poly {
        println!("published     {}", fmt_coeffs(&KcPolynomial::PUBLISHED.coeffs));
    }
    Ok(failures == 0)
}

fn report_extremes(label: &str, rows: &[ValidationRow]) {
    if rows.is_empty() {
        return;
    }
    let (hi, lo) = delta_extremes(rows);
    println!("{label:<14} ΔJ_I {hi:+.2}% / {lo:+.2}%");
}

fn fmt_coeffs(c: &[f64]) -> String {
    c.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" ")
}
