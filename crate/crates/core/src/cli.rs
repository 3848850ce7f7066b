//! Run orchestration behind the command-line tool: ellipticity sweeps,
//! shape grids, spectra and trajectories, with CSV output.
//!
//! Every CSV starts with a `# levicool <kind> v1` schema line. Cells are
//! evaluated in parallel and written in grid order.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cavity::stationary_field;
use crate::config::{RunConfig, TrajectoryModel};
use crate::dipole_forces::Coord;
use crate::dynamics::{self, FullState, Model, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::linearize::{
    apply_detuning_policy, heating_rates, linearize, normal_modes, radiation_stiffness,
    solve_equilibrium, CoolingStatus, HeatingRates, LinearizedSystem, NormalMode, NormalModeSystem,
};
use crate::optics::Setup;
use crate::particle::{EulerAngles, ParticleSpec, RotorMomenta};
use crate::spectra::{self, langevin_simulate, LangevinConfig, SpectraTable};

/// Exit codes of the command-line tool.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ALL_UNSTABLE: i32 = 4;

/// Everything derived for one parameter point.
#[derive(Debug, Clone)]
pub struct CellAnalysis {
    pub setup: Setup,
    pub detuning_rounds: usize,
    pub lin: LinearizedSystem,
    pub heat: HeatingRates,
    pub modes: NormalModeSystem,
    /// Whether an equilibrium including radiation pressure exists
    /// (`None` when radiation pressure is switched off).
    pub radiation_equilibrium: Option<bool>,
    /// Diagonal stiffness at that equilibrium [rad^2/s^2].
    pub radiation_stiffness: Option<[f64; 6]>,
    /// Shift of `alpha` caused by radiation pressure [rad].
    pub alpha_shift: f64,
}

impl CellAnalysis {
    /// Unstable if confinement fails or radiation pressure removes it.
    pub fn mode_unstable(&self, m: &NormalMode) -> bool {
        if !m.stable {
            return true;
        }
        match (self.radiation_equilibrium, self.radiation_stiffness) {
            (Some(false), _) => true,
            (_, Some(k)) => k[m.label.index()] <= 0.0,
            _ => false,
        }
    }

    pub fn mode_flag(&self, m: &NormalMode) -> &'static str {
        if self.mode_unstable(m) {
            return "unstable";
        }
        match m.cooling.status {
            CoolingStatus::Cooled => "ok",
            CoolingStatus::HeatingDominated => "heating-dominated",
            CoolingStatus::Uncooled => "uncooled",
            CoolingStatus::Unconfined => "unstable",
        }
    }

    pub fn any_unstable(&self) -> bool {
        self.modes.modes.iter().any(|m| self.mode_unstable(m))
    }
}

/// Detuning policy, linearization, heating, normal modes and the radiation
/// pressure check for one particle and ellipticity.
pub fn analyze(cfg: &RunConfig, spec: &ParticleSpec, ellipticity: f64) -> Result<CellAnalysis> {
    let base = cfg.setup_with(spec, ellipticity)?;
    let (setup, rounds) = apply_detuning_policy(&base, cfg.detuning_policy)?;
    let lin = linearize(&setup)?;
    let heat = heating_rates(&setup, &cfg.gas_config(), &lin);
    let modes = normal_modes(&lin, &heat);
    let (radiation_equilibrium, stiffness, alpha_shift) = if setup.options.radiation_pressure {
        match solve_equilibrium(&setup, true) {
            Ok(eq) => (
                Some(true),
                Some(radiation_stiffness(&setup, &eq)),
                eq.q_eq[3] - lin.q_eq[3],
            ),
            Err(Error::NoConvergence { .. }) => (Some(false), None, f64::NAN),
            Err(e) => return Err(e),
        }
    } else {
        (None, None, 0.0)
    };
    Ok(CellAnalysis {
        setup,
        detuning_rounds: rounds,
        lin,
        heat,
        modes,
        radiation_equilibrium,
        radiation_stiffness: stiffness,
        alpha_shift,
    })
}

/// One ellipticity-sweep row; `cell` is `Err` with the message if the
/// point could not be analyzed.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub ellipticity: f64,
    pub cell: std::result::Result<CellAnalysis, String>,
}

impl SweepRow {
    pub fn unstable(&self) -> bool {
        self.cell.as_ref().map_or(true, |c| c.any_unstable())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'"))
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn run_ellipticity_sweep(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    let range = cfg
        .sweep
        .ellipticity
        .ok_or_else(|| Error::InvalidInput("config has no [sweep.ellipticity] section".into()))?;
    let spec = cfg.particle_spec()?;
    let values = range.values();
    in_pool(threads, || {
        values
            .par_iter()
            .map(|&psi| SweepRow {
                ellipticity: psi,
                cell: analyze(cfg, &spec, psi).map_err(|e| e.to_string()),
            })
            .collect()
    })
}

const MODE_FIELDS: [&str; 10] = [
    "bare_omega_sq_rad2_s2",
    "omega_rad_s",
    "omega_shifted_rad_s",
    "g_rad_s",
    "gamma_minus_1_s",
    "gamma_plus_1_s",
    "gamma_1_s",
    "xi_1_s",
    "n",
    "flag",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# levicool sweep-ellipticity v1; bare_omega_sq is per coordinate, the other prefixed columns belong to the normal mode dominated by that coordinate")?;
    let mut header: Vec<String> = [
        "psi_rad",
        "detuning_rad_s",
        "detuning_rounds",
        "radiation_equilibrium",
        "alpha_shift_rad",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for q in Coord::ALL {
        for f in MODE_FIELDS {
            header.push(format!("{}_{}", q.name(), f));
        }
    }
    header.push("unstable".into());
    header.push("error".into());
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut cols = vec![fmt(row.ellipticity)];
        match &row.cell {
            Ok(c) => {
                cols.push(fmt(c.setup.cavity.detuning));
                cols.push(c.detuning_rounds.to_string());
                cols.push(match c.radiation_equilibrium {
                    Some(true) => "1".into(),
                    Some(false) => "0".into(),
                    None => "".into(),
                });
                cols.push(fmt(c.alpha_shift));
                for q in Coord::ALL {
                    let m = c.modes.mode(q);
                    let o = &m.cooling;
                    cols.push(fmt(c.lin.omega_sq[q.index()]));
                    for v in [
                        m.omega,
                        o.omega_shifted,
                        m.g.norm(),
                        o.gamma_minus,
                        o.gamma_plus,
                        o.gamma,
                        m.xi,
                        o.n,
                    ] {
                        cols.push(fmt(v));
                    }
                    cols.push(c.mode_flag(m).into());
                }
                cols.push(if c.any_unstable() { "1" } else { "0" }.into());
                cols.push(String::new());
            }
            Err(e) => {
                cols.extend(std::iter::repeat_n(
                    String::new(),
                    4 + 6 * MODE_FIELDS.len(),
                ));
                cols.push("1".into());
                cols.push(quote(e));
            }
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// One shape-grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCell {
    pub d1: f64,
    pub d2: f64,
    /// Third diameter from the volume constraint [m].
    pub d3: f64,
    pub detuning: f64,
    /// Occupations of `alpha', beta', gamma'` (infinite when not cooled).
    pub n: [f64; 3],
    pub n_max: f64,
    pub flag: ShapeFlag,
    pub volume_error: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFlag {
    Ok,
    Divergent,
    Invalid,
    Error,
}

impl ShapeFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeFlag::Ok => "ok",
            ShapeFlag::Divergent => "divergent",
            ShapeFlag::Invalid => "invalid",
            ShapeFlag::Error => "error",
        }
    }
}

fn shape_cell(cfg: &RunConfig, radius: f64, d1: f64, d2: f64) -> ShapeCell {
    let target = 4.0 * std::f64::consts::PI * radius.powi(3) / 3.0;
    let d3 = 8.0 * radius.powi(3) / (d1 * d2);
    let volume_error = (std::f64::consts::PI * d1 * d2 * d3 / 6.0 - target).abs() / target;
    let mut cell = ShapeCell {
        d1,
        d2,
        d3,
        detuning: f64::NAN,
        n: [f64::NAN; 3],
        n_max: f64::NAN,
        flag: ShapeFlag::Invalid,
        volume_error,
        message: String::new(),
    };
    let spec = match ParticleSpec::new(
        [d1, d2, d3],
        cfg.particle.permittivity,
        cfg.particle.density_kg_m3,
    ) {
        Ok(s) => s,
        Err(e) => {
            cell.message = e.to_string();
            return cell;
        }
    };
    match analyze(cfg, &spec, cfg.tweezer.ellipticity_rad) {
        Ok(c) => {
            cell.detuning = c.setup.cavity.detuning;
            for (k, q) in [Coord::Alpha, Coord::Beta, Coord::Gamma]
                .into_iter()
                .enumerate()
            {
                let m = c.modes.mode(q);
                let cooled = !c.mode_unstable(m) && m.cooling.status == CoolingStatus::Cooled;
                cell.n[k] = if cooled { m.cooling.n } else { f64::INFINITY };
            }
            cell.n_max = cell.n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            cell.flag = if cell.n_max.is_finite() {
                ShapeFlag::Ok
            } else {
                ShapeFlag::Divergent
            };
        }
        Err(e) => {
            cell.flag = if matches!(e, Error::Unstable { .. }) {
                ShapeFlag::Divergent
            } else {
                ShapeFlag::Error
            };
            cell.message = e.to_string();
        }
    }
    cell
}

/// Shape grid in row-major order (`d1` outer, `d2` inner).
pub fn run_shape_grid(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<ShapeCell>> {
    let grid = cfg
        .sweep
        .shape
        .clone()
        .ok_or_else(|| Error::InvalidInput("config has no [sweep.shape] section".into()))?;
    let r = grid.equivalent_radius_nm * 1e-9;
    let pairs: Vec<(f64, f64)> = grid
        .d1_nm
        .values()
        .into_iter()
        .flat_map(|a| {
            grid.d2_nm
                .values()
                .into_iter()
                .map(move |b| (a * 1e-9, b * 1e-9))
        })
        .collect();
    in_pool(threads, || {
        pairs
            .par_iter()
            .map(|&(a, b)| shape_cell(cfg, r, a, b))
            .collect()
    })
}

pub fn write_shape_csv<W: Write>(cells: &[ShapeCell], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "# levicool sweep-shape v1; n_max is the largest librational occupation"
    )?;
    writeln!(
        w,
        "d1_nm,d2_nm,d3_nm,detuning_rad_s,n_alpha,n_beta,n_gamma,n_max,flag,volume_rel_error,message"
    )?;
    for c in cells {
        let mut cols = vec![
            fmt(c.d1 * 1e9),
            fmt(c.d2 * 1e9),
            fmt(c.d3 * 1e9),
            fmt(c.detuning),
        ];
        cols.extend(c.n.iter().map(|v| fmt(*v)));
        cols.push(fmt(c.n_max));
        cols.push(c.flag.as_str().into());
        cols.push(fmt(c.volume_error));
        cols.push(if c.message.is_empty() {
            String::new()
        } else {
            quote(&c.message)
        });
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Output of the spectra run.
#[derive(Debug, Clone)]
pub struct SpectraOutput {
    pub analysis: CellAnalysis,
    pub table: SpectraTable,
    /// Welch estimate from the Langevin simulation: `(omega, S_1, S_2)`.
    pub langevin: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

pub fn run_spectra(cfg: &RunConfig, seed: u64) -> Result<SpectraOutput> {
    let analysis = analyze(cfg, &cfg.particle_spec()?, cfg.tweezer.ellipticity_rad)?;
    let nm = &analysis.modes;
    nm.require_stable()?;
    if let Some(m) = nm.modes.iter().find(|m| analysis.mode_unstable(m)) {
        return Err(Error::Unstable {
            block: format!("mode {}", m.label.name()),
            detail: "no equilibrium with positive stiffness once radiation pressure is included"
                .into(),
        });
    }
    let grid = spectra::default_grid(nm, cfg.spectra.points)
        .iter()
        .map(|w| w * cfg.spectra.span / 1.5)
        .collect();
    let mut table = spectra::spectra_table(nm, &analysis.lin, &analysis.setup.particle, grid)?;
    if !cfg.spectra.corrections {
        table.corrections = None;
    }
    let langevin = match &cfg.spectra.langevin {
        Some(l) => {
            let cubic = if l.cubic {
                spectra::cubic_coefficients(&analysis.lin, &analysis.setup.particle).ok()
            } else {
                None
            };
            let run_cfg = LangevinConfig {
                duration: l.duration_s,
                burn_in: l.burn_in_s,
                dt: l.dt_s,
                seed,
                cavity_noise: l.cavity_noise,
                mechanical_noise: true,
                cubic,
                initial: None,
                record_every: l.record_every,
            };
            let r = langevin_simulate(nm, &run_cfg)?;
            let (om, s1) = spectra::welch_psd(&r.cavity[0], r.sample_dt, l.segment)?;
            let (_, s2) = spectra::welch_psd(&r.cavity[1], r.sample_dt, l.segment)?;
            Some((om, s1, s2))
        }
        None => None,
    };
    Ok(SpectraOutput {
        analysis,
        table,
        langevin,
    })
}

pub fn write_spectra_csv<W: Write>(t: &SpectraTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# levicool spectra v1; PSD columns in s, omega in rad/s")?;
    let with_cor = t.corrections.is_some();
    if with_cor {
        writeln!(
            w,
            "omega_rad_s,S0_mode1,S0_mode2,Scor_alpha,Scor_beta,Scor_gamma"
        )?;
    } else {
        writeln!(w, "omega_rad_s,S0_mode1,S0_mode2")?;
    }
    for i in 0..t.omega.len() {
        let mut line = format!(
            "{},{},{}",
            fmt(t.omega[i]),
            fmt(t.s0[0][i]),
            fmt(t.s0[1][i])
        );
        if let Some(c) = &t.corrections {
            for s in c {
                let _ = write!(line, ",{}", fmt(s[i]));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_langevin_csv<W: Write>(
    om: &[f64],
    s1: &[f64],
    s2: &[f64],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "# levicool spectra-langevin v1; Welch estimate, PSD columns in s"
    )?;
    writeln!(w, "omega_rad_s,S_mode1,S_mode2")?;
    for i in 0..om.len() {
        writeln!(w, "{},{},{}", fmt(om[i]), fmt(s1[i]), fmt(s2[i]))?;
    }
    Ok(())
}

/// Trajectory run summary.
#[derive(Debug, Clone)]
pub struct TrajectoryDiagnostics {
    pub duration: f64,
    pub max_energy_drift: f64,
    pub reanchors: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Mean tangent-flow volume rate [1/s], when integrated.
    pub mean_volume_rate: Option<f64>,
    /// Mean of `-Gamma_c` along the samples [1/s], when integrated.
    pub mean_contraction: Option<f64>,
}

/// Slowest confined frequency of the linearization [rad/s].
fn slowest_frequency(lin: &LinearizedSystem) -> Option<f64> {
    lin.omega
        .iter()
        .cloned()
        .filter(|w| *w > 0.0)
        .fold(None, |a, w| Some(a.map_or(w, |x: f64| x.min(w))))
}

pub fn initial_state(cfg: &RunConfig, setup: &Setup, lin: &LinearizedSystem) -> FullState {
    let s = &cfg.simulate;
    let q = lin.q_tw;
    let r = Vector3::new(
        q[0] + s.displacement_nm[0] * 1e-9,
        q[1] + s.displacement_nm[1] * 1e-9,
        q[2] + s.displacement_nm[2] * 1e-9,
    );
    let angles = EulerAngles::new(
        q[3] + s.angle_offset_rad[0],
        q[4] + s.angle_offset_rad[1],
        q[5] + s.angle_offset_rad[2],
    );
    let b = if s.stationary_field {
        stationary_field(setup, &r, &angles)
    } else {
        [Complex64::new(0.0, 0.0); 2]
    };
    FullState::new(
        r,
        angles,
        Vector3::zeros(),
        RotorMomenta::new(0.0, 0.0, 0.0),
        b,
    )
}

pub fn run_trajectory(cfg: &RunConfig) -> Result<(TrajectoryRecord, TrajectoryDiagnostics)> {
    let (setup, _) = apply_detuning_policy(&cfg.setup()?, cfg.detuning_policy)?;
    let lin = crate::linearize::harmonic_parameters(&setup, None);
    let state0 = initial_state(cfg, &setup, &lin);
    let w = slowest_frequency(&lin).ok_or_else(|| Error::Unstable {
        block: "all coordinates".into(),
        detail: "no confined mode to set the trajectory time scale".into(),
    })?;
    let t_end = cfg.simulate.duration_periods * 2.0 * std::f64::consts::PI / w;
    let tol = cfg.tolerances();
    let rec = match cfg.simulate.model {
        TrajectoryModel::Full => {
            dynamics::integrate_full(&setup, &state0, t_end, cfg.simulate.samples, tol)?
        }
        TrajectoryModel::QuasiStatic => dynamics::integrate_quasistatic(
            &setup,
            &state0,
            t_end,
            cfg.simulate.samples,
            tol,
            cfg.simulate.tangent,
        )?,
    };
    let e0 = rec.energy.first().copied().unwrap_or(0.0);
    let drift = rec
        .energy
        .iter()
        .map(|e| (e - e0).abs() / e0.abs().max(1e-300))
        .fold(0.0, f64::max);
    let (mean_volume_rate, mean_contraction) = if rec.log_det_tangent.is_some() {
        let rates = dynamics::phase_volume_rate(&rec)?;
        let mean = rates.iter().map(|r| r.1).sum::<f64>() / rates.len().max(1) as f64;
        let mut c = 0.0;
        for s in &rec.states {
            c -= dynamics::contraction_rate_at(&setup, s)?;
        }
        (Some(mean), Some(c / rec.states.len() as f64))
    } else {
        (None, None)
    };
    let diag = TrajectoryDiagnostics {
        duration: t_end,
        max_energy_drift: drift,
        reanchors: rec.reanchor_times.len(),
        accepted_steps: rec.stats.accepted,
        rejected_steps: rec.stats.rejected,
        mean_volume_rate,
        mean_contraction,
    };
    Ok((rec, diag))
}

pub fn write_diagnostics_csv<W: Write>(
    d: &TrajectoryDiagnostics,
    model: Model,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# levicool trajectory-diagnostics v1")?;
    writeln!(w, "quantity,value,unit")?;
    writeln!(
        w,
        "model,{},",
        if model == Model::Full {
            "full"
        } else {
            "quasi-static"
        }
    )?;
    writeln!(w, "duration,{},s", fmt(d.duration))?;
    writeln!(w, "max_energy_drift,{},relative", fmt(d.max_energy_drift))?;
    writeln!(w, "reanchors,{},count", d.reanchors)?;
    writeln!(w, "accepted_steps,{},count", d.accepted_steps)?;
    writeln!(w, "rejected_steps,{},count", d.rejected_steps)?;
    if let Some(v) = d.mean_volume_rate {
        writeln!(w, "mean_volume_rate,{},1/s", fmt(v))?;
    }
    if let Some(v) = d.mean_contraction {
        writeln!(w, "mean_minus_contraction_rate,{},1/s", fmt(v))?;
    }
    Ok(())
}

pub fn write_linearization_csv<W: Write>(c: &CellAnalysis, mut w: W) -> std::io::Result<()> {
    let lin = &c.lin;
    writeln!(w, "# levicool linearize v1; detuning Delta_1 = {} rad/s, Delta_2 = {} rad/s, bare detuning = {} rad/s, re b0 = {}, im b0 = {}", fmt(lin.detuning[0]), fmt(lin.detuning[1]), fmt(c.setup.cavity.detuning), fmt(lin.b0.re), fmt(lin.b0.im))?;
    writeln!(
        w,
        "coord,omega_sq_rad2_s2,omega_rad_s,mass_SI,q_zp_SI,stable,q_eq_minus_q_tw_SI,re_g1_rad_s,im_g1_rad_s,re_g2_rad_s,im_g2_rad_s,xi_recoil_1_s,xi_gas_1_s"
    )?;
    for q in Coord::ALL {
        let i = q.index();
        let cols = [
            q.name().to_string(),
            fmt(lin.omega_sq[i]),
            fmt(lin.omega[i]),
            fmt(lin.mass[i]),
            fmt(lin.q_zp[i]),
            (lin.stable[i] as u8).to_string(),
            fmt(lin.q_eq[i] - lin.q_tw[i]),
            fmt(lin.g_opt[0][i].re),
            fmt(lin.g_opt[0][i].im),
            fmt(lin.g_opt[1][i].re),
            fmt(lin.g_opt[1][i].im),
            fmt(c.heat.recoil[i]),
            fmt(c.heat.gas[i]),
        ];
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

pub fn write_couplings_csv<W: Write>(lin: &LinearizedSystem, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "# levicool couplings v1; mechanical couplings g_qq' in rad/s"
    )?;
    writeln!(
        w,
        "coord,{}",
        Coord::ALL.map(|q| format!("{}_rad_s", q.name())).join(",")
    )?;
    for q in Coord::ALL {
        let row: Vec<String> = Coord::ALL
            .iter()
            .map(|p| fmt(lin.g_mech[q.index()][p.index()]))
            .collect();
        writeln!(w, "{},{}", q.name(), row.join(","))?;
    }
    Ok(())
}

pub fn write_normal_modes_csv<W: Write>(c: &CellAnalysis, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "# levicool normal-modes v1; symplectic error {}",
        fmt(c.modes.symplectic_error())
    )?;
    writeln!(
        w,
        "mode,cavity_mode,omega_rad_s,omega_shifted_rad_s,re_g_rad_s,im_g_rad_s,gamma_minus_1_s,gamma_plus_1_s,gamma_1_s,xi_1_s,n,status,strong_coupling,flag"
    )?;
    for m in &c.modes.modes {
        let o = &m.cooling;
        let cols = [
            format!("{}'", m.label.name()),
            (m.cavity_mode + 1).to_string(),
            fmt(m.omega),
            fmt(o.omega_shifted),
            fmt(m.g.re),
            fmt(m.g.im),
            fmt(o.gamma_minus),
            fmt(o.gamma_plus),
            fmt(o.gamma),
            fmt(m.xi),
            fmt(o.n),
            o.status.as_str().to_string(),
            (o.strong_coupling as u8).to_string(),
            c.mode_flag(m).to_string(),
        ];
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Subcommands of the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SweepEllipticity,
    SweepShape,
    Linearize,
    Spectra,
    Simulate,
}

/// Failure of a command together with its exit code.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    fn from_lib(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: format!("writing {}: {e}", path.display()),
        }
    }
}

fn create(
    dir: &Path,
    name: &str,
) -> std::result::Result<(std::path::PathBuf, std::io::BufWriter<std::fs::File>), CommandError> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| CommandError::io(&path, e))?;
    Ok((path, std::io::BufWriter::new(f)))
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> std::result::Result<std::path::PathBuf, CommandError> {
    let (path, mut w) = create(dir, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CommandError::io(&path, e))?;
    Ok(path)
}

/// Runs one command; returns the written files.
pub fn execute(
    cmd: Command,
    cfg: &RunConfig,
    out: &Path,
    seed: u64,
    threads: Option<usize>,
) -> std::result::Result<Vec<std::path::PathBuf>, CommandError> {
    std::fs::create_dir_all(out).map_err(|e| CommandError::io(out, e))?;
    let lib = CommandError::from_lib;
    let mut files = Vec::new();
    match cmd {
        Command::SweepEllipticity => {
            let rows = run_ellipticity_sweep(cfg, threads).map_err(lib)?;
            files.push(write_file(out, "sweep_ellipticity.csv", |w| {
                write_sweep_csv(&rows, w)
            })?);
            if !rows.is_empty() && rows.iter().all(|r| r.unstable()) {
                return Err(CommandError {
                    code: EXIT_ALL_UNSTABLE,
                    message: "every sweep cell is unstable".into(),
                });
            }
        }
        Command::SweepShape => {
            let cells = run_shape_grid(cfg, threads).map_err(lib)?;
            files.push(write_file(out, "sweep_shape.csv", |w| {
                write_shape_csv(&cells, w)
            })?);
            if !cells.is_empty() && cells.iter().all(|c| c.flag != ShapeFlag::Ok) {
                return Err(CommandError {
                    code: EXIT_ALL_UNSTABLE,
                    message: "no grid cell is cooled".into(),
                });
            }
        }
        Command::Linearize => {
            let c = analyze(
                cfg,
                &cfg.particle_spec().map_err(lib)?,
                cfg.tweezer.ellipticity_rad,
            )
            .map_err(lib)?;
            files.push(write_file(out, "linearize.csv", |w| {
                write_linearization_csv(&c, w)
            })?);
            files.push(write_file(out, "couplings.csv", |w| {
                write_couplings_csv(&c.lin, w)
            })?);
            files.push(write_file(out, "normal_modes.csv", |w| {
                write_normal_modes_csv(&c, w)
            })?);
            if c.modes.modes.iter().all(|m| c.mode_unstable(m)) {
                return Err(CommandError {
                    code: EXIT_ALL_UNSTABLE,
                    message: "every mode is unstable".into(),
                });
            }
        }
        Command::Spectra => {
            let s = in_pool(threads, || run_spectra(cfg, seed))
                .map_err(lib)?
                .map_err(lib)?;
            files.push(write_file(out, "spectra.csv", |w| {
                write_spectra_csv(&s.table, w)
            })?);
            if let Some((om, s1, s2)) = &s.langevin {
                files.push(write_file(out, "spectra_langevin.csv", |w| {
                    write_langevin_csv(om, s1, s2, w)
                })?);
            }
        }
        Command::Simulate => {
            if cfg.simulate.duration_periods == 0.0 {
                let empty = TrajectoryRecord {
                    model: match cfg.simulate.model {
                        TrajectoryModel::Full => Model::Full,
                        TrajectoryModel::QuasiStatic => Model::QuasiStatic,
                    },
                    states: vec![],
                    energy: vec![],
                    populations: vec![],
                    angular_momentum: vec![],
                    log_det_tangent: None,
                    reanchor_times: vec![],
                    stats: Default::default(),
                };
                files.push(write_file(out, "trajectory.csv", |w| empty.write_csv(w))?);
                return Ok(files);
            }
            let (rec, diag) = run_trajectory(cfg).map_err(lib)?;
            files.push(write_file(out, "trajectory.csv", |w| rec.write_csv(w))?);
            files.push(write_file(out, "trajectory_diagnostics.csv", |w| {
                write_diagnostics_csv(&diag, rec.model, w)
            })?);
        }
    }
    Ok(files)
}
