//! Two-area load-frequency simulation with rate limit and dead band.
//!
//! Per area `i` (sign `s_1 = +1`, `s_2 = −1`):
//!
//! ```text
//! Δḟ_i    = (ΔP_m,i − ΔP_L,i − D_i Δf_i − s_i ΔP_tie) / M_i
//! ΔṖ_m,i  = clamp((ΔP_g,i − ΔP_m,i) / T_t,i, ±grc)
//! ΔṖ_g,i  = (ΔP_c,i − gdb(Δf_i / R_i) − ΔP_g,i) / T_g,i
//! ΔṖ_tie  = 2π T12 (Δf_1 − Δf_2)
//! ACE_i   = B_i Δf_i + s_i ΔP_tie
//! ```
//!
//! The supplementary control is `ΔP_c,i = −C_i(s) ACE_i`, so positive ACE
//! lowers generation. Plant and controller states are integrated together
//! with classic RK4. The turbine clamp is applied inside every stage, which
//! bounds each step's change in `ΔP_m` by `grc · dt`.
//!
//! CDM controllers carry a fast pole near `−l1/l2`. Each output interval
//! `dt` is split into substeps sized from the spectral radius of the
//! linearized closed loop, and never longer than a fixed bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{realize, CdmController, CdmError, StateSpace};
use crate::export::columns_csv;
use crate::load::{LoadProfile, LoadSignal};
use crate::plant::{frequency_bias, AreaParams, GdbModel, NonlinearityConfig, PlantError, TieLine};
use crate::poly::Polynomial;

pub const DEFAULT_DT: f64 = 0.01;
pub const MAX_DT: f64 = 0.05;
/// Default PID derivative filter time constant, s.
pub const DEFAULT_TF: f64 = 0.01;
/// Any state beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid solver settings: {0}")]
    InvalidSolver(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] CdmError),
    #[error("state {name} became non-finite at t = {t} s")]
    NonFiniteState { t: f64, index: usize, name: String },
    #[error("state {name} exceeded {DIVERGENCE_LIMIT} at t = {t} s")]
    Diverged { t: f64, index: usize, name: String },
    #[error("closed loop needs {required} substeps per sample, cap is {cap}")]
    TooStiff { required: usize, cap: usize },
}

/// Supplementary controller acting on one area's ACE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ControllerSpec {
    /// `Ki / s`
    Integral { ki: f64 },
    /// `Kp + Ki/s + Kd s/(Tf s + 1)`
    Pid {
        kp: f64,
        ki: f64,
        kd: f64,
        #[serde(default = "default_tf")]
        tf: f64,
    },
    /// `B_c(s) / A_c(s)`
    Cdm { ac: Polynomial, bc: Polynomial },
}

fn default_tf() -> f64 {
    DEFAULT_TF
}

impl From<&CdmController> for ControllerSpec {
    fn from(c: &CdmController) -> Self {
        ControllerSpec::Cdm { ac: c.ac.clone(), bc: c.bc.clone() }
    }
}

impl ControllerSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidModel(m));
        match self {
            ControllerSpec::Integral { ki } if !ki.is_finite() => bad(format!("Ki = {ki}")),
            ControllerSpec::Pid { kp, ki, kd, tf } => {
                if ![kp, ki, kd].iter().all(|g| g.is_finite()) {
                    return bad(format!("PID gains {kp}, {ki}, {kd} must be finite"));
                }
                if !(tf.is_finite() && *tf > 0.0) {
                    return bad(format!("Tf = {tf} must be positive"));
                }
                Ok(())
            }
            ControllerSpec::Cdm { ac, bc } => {
                if !ac.coeffs().iter().chain(bc.coeffs()).all(|c| c.is_finite()) {
                    return bad("CDM coefficients must be finite".into());
                }
                if ac.is_zero() {
                    return bad("A_c is zero".into());
                }
                if !bc.is_zero() && bc.degree() > ac.degree() {
                    return Err(CdmError::ImproperController { num: bc.degree(), den: ac.degree() }.into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Numerator and denominator of the controller transfer function.
    pub fn transfer_function(&self) -> (Polynomial, Polynomial) {
        match self {
            ControllerSpec::Integral { ki } => (Polynomial::constant(*ki), Polynomial::monomial(1.0, 1)),
            ControllerSpec::Pid { kp, ki, kd, tf } => (
                Polynomial::new(vec![*ki, kp + ki * tf, kp * tf + kd]),
                Polynomial::new(vec![0.0, 1.0, *tf]),
            ),
            ControllerSpec::Cdm { ac, bc } => (bc.clone(), ac.clone()),
        }
    }

    /// State-space form with input ACE and output `C(s) ACE`.
    pub fn realization(&self) -> Result<StateSpace, SimError> {
        self.validate()?;
        match self {
            // Parallel form: integrator and filtered derivative as separate
            // states, so Kd = 0 reduces exactly to PI.
            ControllerSpec::Pid { kp, ki, kd, tf } => Ok(StateSpace {
                a: vec![0.0, 0.0, 0.0, -1.0 / tf],
                b: vec![1.0, 1.0 / tf],
                c: vec![*ki, -kd / tf],
                d: kp + kd / tf,
            }),
            _ => {
                let (num, den) = self.transfer_function();
                Ok(realize(&num, &den)?)
            }
        }
    }
}

/// Two areas, their tie line and controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    pub areas: [AreaParams; 2],
    pub tie: TieLine,
    pub nonlin: NonlinearityConfig,
    pub controllers: [ControllerSpec; 2],
}

impl SystemModel {
    /// Bundled two-area constants with the given controllers.
    pub fn two_area(controllers: [ControllerSpec; 2]) -> Self {
        Self {
            areas: [AreaParams::AREA1, AreaParams::AREA2],
            tie: TieLine::DEFAULT,
            nonlin: NonlinearityConfig::DEFAULT,
            controllers,
        }
    }

    pub fn with_nonlin(mut self, nonlin: NonlinearityConfig) -> Self {
        self.nonlin = nonlin;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for a in &self.areas {
            a.validate()?;
        }
        self.tie.validate()?;
        self.nonlin.validate()?;
        for c in &self.controllers {
            c.validate()?;
        }
        Ok(())
    }
}

/// How many RK4 substeps to take per output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Substeps {
    /// Enough substeps that `h · ρ ≤ rho_h`, where `ρ` is the spectral
    /// radius of the linearized loop, and `h ≤ h_max`; more than `cap` is
    /// an error.
    ///
    /// The step bound matters because the rate clamp and dead band make the
    /// field non-smooth: a slow loop would otherwise get a step that is
    /// stable but visibly inaccurate around each switching instant.
    Auto {
        rho_h: f64,
        cap: usize,
        #[serde(default = "default_h_max")]
        h_max: f64,
    },
    Fixed { n: usize },
}

pub const DEFAULT_H_MAX: f64 = 1e-3;

fn default_h_max() -> f64 {
    DEFAULT_H_MAX
}

impl Default for Substeps {
    fn default() -> Self {
        Substeps::Auto { rho_h: 0.5, cap: 512, h_max: DEFAULT_H_MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Output sample interval, s.
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub substeps: Substeps,
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self { dt, horizon, substeps: Substeps::default() }
    }

    /// Number of output intervals.
    pub fn samples(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(SimError::InvalidSolver(format!("dt = {} must lie in (0, {MAX_DT}]", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(SimError::InvalidSolver(format!("horizon = {}", self.horizon)));
        }
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(SimError::InvalidSolver(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Sampled simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub df1: Vec<f64>,
    pub df2: Vec<f64>,
    pub dptie: Vec<f64>,
    pub ace1: Vec<f64>,
    pub ace2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub dpl1: Vec<f64>,
    pub dpl2: Vec<f64>,
    pub pm1: Vec<f64>,
    pub pm2: Vec<f64>,
    /// RK4 substeps per sample that produced this run.
    pub substeps: usize,
}

pub const TRAJECTORY_HEADER: [&str; 10] = ["t", "df1", "df2", "dptie", "ace1", "ace2", "u1", "u2", "dpl1", "dpl2"];

impl Trajectory {
    fn with_capacity(n: usize, substeps: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            t: v(),
            df1: v(),
            df2: v(),
            dptie: v(),
            ace1: v(),
            ace2: v(),
            u1: v(),
            u2: v(),
            dpl1: v(),
            dpl2: v(),
            pm1: v(),
            pm2: v(),
            substeps,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Named signal columns, excluding time.
    pub fn channels(&self) -> [(&'static str, &[f64]); 11] {
        [
            ("df1", &self.df1),
            ("df2", &self.df2),
            ("dptie", &self.dptie),
            ("ace1", &self.ace1),
            ("ace2", &self.ace2),
            ("u1", &self.u1),
            ("u2", &self.u2),
            ("dpl1", &self.dpl1),
            ("dpl2", &self.dpl2),
            ("pm1", &self.pm1),
            ("pm2", &self.pm2),
        ]
    }

    pub fn to_csv(&self) -> String {
        columns_csv(
            &TRAJECTORY_HEADER,
            &[
                &self.t, &self.df1, &self.df2, &self.dptie, &self.ace1, &self.ace2, &self.u1, &self.u2, &self.dpl1,
                &self.dpl2,
            ],
        )
    }
}

const PLANT_STATES: usize = 7;
const STATE_NAMES: [&str; PLANT_STATES] = ["df1", "pm1", "pg1", "df2", "pm2", "pg2", "dptie"];

fn state_name(index: usize, offsets: &[usize; 2]) -> String {
    if index < PLANT_STATES {
        STATE_NAMES[index].to_string()
    } else if index < offsets[1] {
        format!("controller1[{}]", index - offsets[0])
    } else {
        format!("controller2[{}]", index - offsets[1])
    }
}

#[derive(Debug, Clone, Copy)]
enum Gdb {
    Off,
    Zone { half: f64 },
    Describing { n1: f64, k: f64 },
}

/// Model compiled for fast derivative evaluation.
#[derive(Debug, Clone)]
struct Engine {
    areas: [AreaParams; 2],
    bias: [f64; 2],
    stiffness: f64,
    grc: f64,
    gdb: Gdb,
    ctrl: [StateSpace; 2],
    offsets: [usize; 2],
    n: usize,
}

const SIGN: [f64; 2] = [1.0, -1.0];

impl Engine {
    fn new(model: &SystemModel) -> Result<Self, SimError> {
        model.validate()?;
        let ctrl = [model.controllers[0].realization()?, model.controllers[1].realization()?];
        let offsets = [PLANT_STATES, PLANT_STATES + ctrl[0].order()];
        let n = offsets[1] + ctrl[1].order();
        let nl = &model.nonlin;
        let gdb = if nl.gdb_width == 0.0 {
            Gdb::Off
        } else {
            match nl.gdb_model {
                GdbModel::Static => Gdb::Zone { half: nl.gdb_width / 2.0 },
                GdbModel::DescribingFunction { n1, n2, omega0 } => Gdb::Describing { n1, k: n2 / omega0 },
            }
        };
        Ok(Self {
            areas: model.areas,
            bias: [frequency_bias(&model.areas[0]), frequency_bias(&model.areas[1])],
            stiffness: model.tie.stiffness(),
            grc: nl.grc_rate.unwrap_or(f64::INFINITY),
            gdb,
            ctrl,
            offsets,
            n,
        })
    }

    /// Same loop without rate limit and with any static dead band removed.
    fn linearized(&self) -> Self {
        let mut e = self.clone();
        e.grc = f64::INFINITY;
        if let Gdb::Zone { .. } = e.gdb {
            e.gdb = Gdb::Off;
        }
        e
    }

    #[inline]
    fn ace(&self, x: &[f64], i: usize) -> f64 {
        self.bias[i] * x[3 * i] + SIGN[i] * x[6]
    }

    /// Control signal `ΔP_c,i`.
    #[inline]
    fn control(&self, x: &[f64], i: usize) -> f64 {
        let y = self.ace(x, i);
        let xc = &x[self.offsets[i]..self.offsets[i] + self.ctrl[i].order()];
        -self.ctrl[i].output(xc, y)
    }

    fn derivatives(&self, x: &[f64], loads: [f64; 2], dx: &mut [f64]) {
        let ptie = x[6];
        for i in 0..2 {
            let a = &self.areas[i];
            let (df, pm, pg) = (x[3 * i], x[3 * i + 1], x[3 * i + 2]);
            let y = self.bias[i] * df + SIGN[i] * ptie;
            let off = self.offsets[i];
            let order = self.ctrl[i].order();
            let u = -self.ctrl[i].output(&x[off..off + order], y);
            let dfdot = (pm - loads[i] - a.d * df - SIGN[i] * ptie) / a.m;
            let droop = df / a.r;
            let governor_in = match self.gdb {
                Gdb::Off => droop,
                Gdb::Zone { half } => {
                    if droop > half {
                        droop - half
                    } else if droop < -half {
                        droop + half
                    } else {
                        0.0
                    }
                }
                Gdb::Describing { n1, k } => n1 * droop + k * dfdot / a.r,
            };
            dx[3 * i] = dfdot;
            dx[3 * i + 1] = ((pg - pm) / a.tt).clamp(-self.grc, self.grc);
            dx[3 * i + 2] = (u - governor_in - pg) / a.tg;
            self.ctrl[i].derivative(&x[off..off + order], y, &mut dx[off..off + order]);
        }
        dx[6] = self.stiffness * (x[0] - x[3]);
    }

    /// Jacobian of the linearized loop at the origin, row-major.
    fn jacobian(&self) -> DMatrix<f64> {
        let lin = self.linearized();
        let n = self.n;
        let mut jac = DMatrix::zeros(n, n);
        let mut x = vec![0.0; n];
        let mut dx = vec![0.0; n];
        for j in 0..n {
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
            lin.derivatives(&x, [0.0, 0.0], &mut dx);
            for i in 0..n {
                jac[(i, j)] = dx[i];
            }
        }
        jac
    }

    fn spectral_radius(&self) -> f64 {
        self.jacobian().complex_eigenvalues().iter().fold(0.0_f64, |r, z| r.max(z.norm()))
    }
}

/// Spectral radius of the linearized closed loop (rate limit and static dead band removed).
pub fn closed_loop_spectral_radius(model: &SystemModel) -> Result<f64, SimError> {
    Ok(Engine::new(model)?.spectral_radius())
}

/// Eigenvalues of the linearized closed loop as `(re, im)` pairs.
pub fn closed_loop_eigenvalues(model: &SystemModel) -> Result<Vec<(f64, f64)>, SimError> {
    let jac = Engine::new(model)?.jacobian();
    Ok(jac.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// Evaluates the state derivative for a plant-plus-controller state vector.
///
/// The layout is `[Δf1, ΔPm1, ΔPg1, Δf2, ΔPm2, ΔPg2, ΔPtie, controller 1…, controller 2…]`.
pub fn derivatives(model: &SystemModel, x: &[f64], loads: [f64; 2]) -> Result<Vec<f64>, SimError> {
    let engine = Engine::new(model)?;
    if x.len() != engine.n {
        return Err(SimError::InvalidModel(format!("state has {} entries, model needs {}", x.len(), engine.n)));
    }
    let mut dx = vec![0.0; engine.n];
    engine.derivatives(x, loads, &mut dx);
    Ok(dx)
}

/// Number of states for this model.
pub fn state_len(model: &SystemModel) -> Result<usize, SimError> {
    Ok(Engine::new(model)?.n)
}

/// Runs the model from rest under the given area loads.
pub fn simulate(model: &SystemModel, loads: &[LoadProfile; 2], solver: &SolverConfig) -> Result<Trajectory, SimError> {
    for l in loads {
        l.validate().map_err(SimError::InvalidModel)?;
    }
    let samples = solver.samples()?;
    let engine = Engine::new(model)?;
    let substeps = match solver.substeps {
        Substeps::Fixed { n } if n >= 1 => n,
        Substeps::Fixed { n } => return Err(SimError::InvalidSolver(format!("substeps = {n}"))),
        Substeps::Auto { rho_h, cap, h_max } => {
            if !(rho_h > 0.0) {
                return Err(SimError::InvalidSolver(format!("rho_h = {rho_h}")));
            }
            if !(h_max > 0.0) {
                return Err(SimError::InvalidSolver(format!("h_max = {h_max}")));
            }
            let stiff = (solver.dt * engine.spectral_radius() / rho_h).ceil() as usize;
            let required = stiff.max((solver.dt / h_max - 1e-9).ceil() as usize).max(1);
            if required > cap {
                return Err(SimError::TooStiff { required, cap });
            }
            required
        }
    };
    let signals: [LoadSignal; 2] = [loads[0].compile(solver.horizon), loads[1].compile(solver.horizon)];
    integrate(&engine, &signals, solver.dt, samples, substeps)
}

fn integrate(
    engine: &Engine,
    loads: &[LoadSignal; 2],
    dt: f64,
    samples: usize,
    substeps: usize,
) -> Result<Trajectory, SimError> {
    let n = engine.n;
    let h = dt / substeps as f64;
    let mut x = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut traj = Trajectory::with_capacity(samples + 1, substeps);
    let at = |t: f64| [loads[0].value(t), loads[1].value(t)];
    let before = |t: f64| [loads[0].value_left(t), loads[1].value_left(t)];

    record(engine, &x, 0.0, at(0.0), &mut traj);
    for k in 0..samples {
        let t_k = k as f64 * dt;
        for j in 0..substeps {
            let t0 = t_k + j as f64 * h;
            let t1 = if j + 1 == substeps { (k + 1) as f64 * dt } else { t0 + h };
            let mid = at(t0 + 0.5 * h);
            engine.derivatives(&x, at(t0), &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            engine.derivatives(&tmp, mid, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            engine.derivatives(&tmp, mid, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            engine.derivatives(&tmp, before(t1), &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let t = (k + 1) as f64 * dt;
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(SimError::NonFiniteState { t, index: i, name: state_name(i, &engine.offsets) });
            }
            if v.abs() > DIVERGENCE_LIMIT {
                return Err(SimError::Diverged { t, index: i, name: state_name(i, &engine.offsets) });
            }
        }
        record(engine, &x, t, at(t), &mut traj);
    }
    Ok(traj)
}

fn record(engine: &Engine, x: &[f64], t: f64, loads: [f64; 2], traj: &mut Trajectory) {
    traj.t.push(t);
    traj.df1.push(x[0]);
    traj.df2.push(x[3]);
    traj.dptie.push(x[6]);
    traj.ace1.push(engine.ace(x, 0));
    traj.ace2.push(engine.ace(x, 1));
    traj.u1.push(engine.control(x, 0));
    traj.u2.push(engine.control(x, 1));
    traj.dpl1.push(loads[0]);
    traj.dpl2.push(loads[1]);
    traj.pm1.push(x[1]);
    traj.pm2.push(x[4]);
}

/// Sampled-data form of a controller: `u_k = step(y_k)`.
///
/// Uses the trapezoidal (Tustin) rule on the continuous realization; the
/// first call only records `y_0`.
#[derive(Debug, Clone)]
pub struct ControllerStepper {
    ad: DMatrix<f64>,
    bd: DMatrix<f64>,
    c: Vec<f64>,
    d: f64,
    x: Vec<f64>,
    y_prev: Option<f64>,
}

impl ControllerStepper {
    /// Returns the control signal `−C(s) y` for the current sample.
    pub fn step(&mut self, y: f64) -> f64 {
        if let Some(yp) = self.y_prev {
            let m = self.x.len();
            let xv = DMatrix::from_column_slice(m, 1, &self.x);
            let next = &self.ad * xv + &self.bd * (yp + y);
            self.x.copy_from_slice(next.as_slice());
        }
        self.y_prev = Some(y);
        -(self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum::<f64>() + self.d * y)
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }
}

pub fn discretize_controller(spec: &ControllerSpec, dt: f64) -> Result<ControllerStepper, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidSolver(format!("dt = {dt}")));
    }
    let ss = spec.realization()?;
    let m = ss.order();
    let a = DMatrix::from_row_slice(m, m, &ss.a);
    let eye = DMatrix::<f64>::identity(m, m);
    let inv = (&eye - &a * (dt / 2.0))
        .try_inverse()
        .ok_or_else(|| SimError::InvalidSolver(format!("controller has a pole at 2/dt = {}", 2.0 / dt)))?;
    let ad = &inv * (&eye + &a * (dt / 2.0));
    let bd = &inv * DMatrix::from_column_slice(m, 1, &ss.b) * (dt / 2.0);
    Ok(ControllerStepper { ad, bd, c: ss.c, d: ss.d, x: vec![0.0; m], y_prev: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integral_model(nonlin: NonlinearityConfig) -> SystemModel {
        SystemModel::two_area([ControllerSpec::Integral { ki: 0.3 }, ControllerSpec::Integral { ki: 0.2 }])
            .with_nonlin(nonlin)
    }

    #[test]
    fn equilibrium_derivatives_vanish() {
        let m = integral_model(NonlinearityConfig::DEFAULT);
        let dx = derivatives(&m, &vec![0.0; 9], [0.0, 0.0]).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn turbine_rate_is_clamped() {
        let m = integral_model(NonlinearityConfig::DEFAULT);
        let mut x = vec![0.0; 9];
        x[2] = 1.0;
        let dx = derivatives(&m, &x, [0.0, 0.0]).unwrap();
        assert!((dx[1] - 0.1 / 60.0).abs() < 1e-15);
        let lin = derivatives(&integral_model(NonlinearityConfig::LINEAR), &x, [0.0, 0.0]).unwrap();
        assert!((lin[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn dead_band_swallows_small_droop() {
        let m = integral_model(NonlinearityConfig::DEFAULT);
        let mut x = vec![0.0; 9];
        x[0] = 0.01;
        x[6] = -0.3483333 * 0.01;
        let dx = derivatives(&m, &x, [0.0, 0.0]).unwrap();
        assert_eq!(dx[2], 0.0);
    }

    #[test]
    fn horizon_grid() {
        let m = integral_model(NonlinearityConfig::DEFAULT);
        let loads = [LoadProfile::step(0.01, 1.0), LoadProfile::Zero];
        let traj = simulate(&m, &loads, &SolverConfig::new(0.01, 2.0)).unwrap();
        assert_eq!(traj.len(), 201);
        assert_eq!(traj.to_csv().lines().count(), 202);
        assert!(simulate(&m, &loads, &SolverConfig::new(0.06, 6.0)).is_err());
        assert!(simulate(&m, &loads, &SolverConfig::new(0.01, 1.005)).is_err());
    }

    #[test]
    fn integral_stepper_ramps() {
        let mut s = discretize_controller(&ControllerSpec::Integral { ki: 1.0 }, 0.1).unwrap();
        let mut u = 0.0;
        for _ in 0..=10 {
            u = s.step(1.0);
        }
        assert!((u + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pid_without_derivative_is_pi() {
        let pid = ControllerSpec::Pid { kp: 2.0, ki: 3.0, kd: 0.0, tf: 0.37 };
        let mut a = discretize_controller(&pid, 0.01).unwrap();
        let mut b = discretize_controller(&ControllerSpec::Pid { kp: 2.0, ki: 3.0, kd: 0.0, tf: 0.01 }, 0.01).unwrap();
        for k in 0..50 {
            let y = (k as f64 * 0.3).sin();
            assert_eq!(a.step(y), b.step(y));
        }
    }

    #[test]
    fn cdm_integrator_equals_integral() {
        let cdm = ControllerSpec::Cdm { ac: Polynomial::monomial(1.0, 1), bc: Polynomial::constant(0.7) };
        let mut a = discretize_controller(&cdm, 0.01).unwrap();
        let mut b = discretize_controller(&ControllerSpec::Integral { ki: 0.7 }, 0.01).unwrap();
        for k in 0..50 {
            let y = (k as f64 * 0.1).cos();
            assert_eq!(a.step(y), b.step(y));
        }
    }

    #[test]
    fn improper_controller_is_rejected() {
        let bad = ControllerSpec::Cdm { ac: Polynomial::monomial(1.0, 1), bc: Polynomial::new(vec![1.0, 1.0, 1.0]) };
        assert!(matches!(bad.realization(), Err(SimError::Controller(CdmError::ImproperController { .. }))));
    }

    #[test]
    fn controller_json_is_tagged() {
        let json = serde_json::to_string(&ControllerSpec::Integral { ki: 0.3 }).unwrap();
        assert_eq!(json, r#"{"kind":"integral","ki":0.3}"#);
        let pid: ControllerSpec = serde_json::from_str(r#"{"kind":"pid","kp":1,"ki":2,"kd":3}"#).unwrap();
        assert_eq!(pid, ControllerSpec::Pid { kp: 1.0, ki: 2.0, kd: 3.0, tf: DEFAULT_TF });
    }
}
