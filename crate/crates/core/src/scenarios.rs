//! Test cases, performance indices, the tuning objective and sensitivity sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{closed_loop, synthesize_with, CdmController, CdmDesign, CdmError, CdmGains, GammaOrder};
use crate::export::sig9;
use crate::load::LoadProfile;
use crate::plant::{derive_design_plant, AreaParams, NonlinearityConfig, TieLine};
use crate::poly::{is_hurwitz, Polynomial};
use crate::sim::{
    closed_loop_eigenvalues, simulate, ControllerSpec, SimError, SolverConfig, Substeps, SystemModel, Trajectory,
};
use crate::wca::{Bounds, Objective};

/// Cost assigned to infeasible tuning candidates, before adding the residual.
pub const PENALTY: f64 = 1e6;
/// Overshoots smaller than this are reported as not observed.
pub const OBSERVABLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("unknown case {0}; cases are numbered 1 to 6")]
    UnknownCase(u8),
    #[error("settling band {0} must be positive")]
    InvalidBand(f64),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("controller {name}: {source}")]
    Simulation { name: String, source: SimError },
    #[error(transparent)]
    Synthesis(#[from] CdmError),
}

/// Integral performance indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Indices {
    pub iae: f64,
    pub ise: f64,
    pub itse: f64,
    pub itae: f64,
}

impl std::ops::Add for Indices {
    type Output = Indices;
    fn add(self, o: Indices) -> Indices {
        Indices { iae: self.iae + o.iae, ise: self.ise + o.ise, itse: self.itse + o.itse, itae: self.itae + o.itae }
    }
}

/// Trapezoidal indices of one signal on its time grid.
pub fn signal_indices(t: &[f64], x: &[f64]) -> Indices {
    assert_eq!(t.len(), x.len());
    let mut out = Indices::default();
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        let (a, b) = (x[k - 1], x[k]);
        let (ta, tb) = (t[k - 1], t[k]);
        out.iae += 0.5 * h * (a.abs() + b.abs());
        out.ise += 0.5 * h * (a * a + b * b);
        out.itse += 0.5 * h * (ta * a * a + tb * b * b);
        out.itae += 0.5 * h * (ta * a.abs() + tb * b.abs());
    }
    out
}

/// Indices of `Δf_1` plus those of `Δf_2`.
pub fn indices(traj: &Trajectory) -> Indices {
    signal_indices(&traj.t, &traj.df1) + signal_indices(&traj.t, &traj.df2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "time")]
pub enum Settling {
    /// Seconds after the disturbance.
    Settled(f64),
    /// Outside the band at the end of the run.
    NotSettled,
}

impl Settling {
    pub fn time(self) -> Option<f64> {
        match self {
            Settling::Settled(t) => Some(t),
            Settling::NotSettled => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transient {
    pub settling: Settling,
    /// Largest positive excursion, `0` if none.
    pub overshoot: f64,
    /// Most negative excursion, `0` if none.
    pub undershoot: f64,
}

impl Transient {
    pub fn overshoot_observed(&self) -> bool {
        self.overshoot >= OBSERVABLE
    }
}

/// Settling time into `±band` and extreme excursions of `signal`.
///
/// The settling time is the last exit from the band, linearly interpolated
/// between samples and measured from `t0`.
pub fn transient_measures(signal: &[f64], t: &[f64], band: f64, t0: f64) -> Result<Transient, ScenarioError> {
    if !(band > 0.0 && band.is_finite()) {
        return Err(ScenarioError::InvalidBand(band));
    }
    let overshoot = signal.iter().fold(0.0_f64, |m, &v| m.max(v));
    let undershoot = signal.iter().fold(0.0_f64, |m, &v| m.min(v));
    let last_out = signal.iter().rposition(|v| v.abs() > band);
    let settling = match last_out {
        None => Settling::Settled(0.0),
        Some(k) if k + 1 == signal.len() => Settling::NotSettled,
        Some(k) => {
            let (a, b) = (signal[k].abs(), signal[k + 1].abs());
            let frac = if a > b { (a - band) / (a - b) } else { 0.0 };
            let crossing = t[k] + frac * (t[k + 1] - t[k]);
            Settling::Settled((crossing - t0).max(0.0))
        }
    };
    Ok(Transient { settling, overshoot, undershoot })
}

/// Settling bands on frequency and tie-line power, pu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bands {
    pub frequency: f64,
    pub tie: f64,
}

impl Default for Bands {
    fn default() -> Self {
        Bands { frequency: 1e-4, tie: 5e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub transient: Transient,
    pub indices: Indices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Summed over both areas' frequency deviations.
    pub total: Indices,
    pub df1: SignalReport,
    pub df2: SignalReport,
    pub dptie: SignalReport,
}

impl Metrics {
    pub fn all_settled(&self) -> bool {
        [self.df1, self.df2, self.dptie].iter().all(|s| s.transient.settling.time().is_some())
    }
}

pub fn metrics(traj: &Trajectory, bands: &Bands, t0: f64) -> Result<Metrics, ScenarioError> {
    let report = |x: &[f64], band: f64| -> Result<SignalReport, ScenarioError> {
        Ok(SignalReport { transient: transient_measures(x, &traj.t, band, t0)?, indices: signal_indices(&traj.t, x) })
    };
    Ok(Metrics {
        total: indices(traj),
        df1: report(&traj.df1, bands.frequency)?,
        df2: report(&traj.df2, bands.frequency)?,
        dptie: report(&traj.dptie, bands.tie)?,
    })
}

/// Loads, parameters and horizon of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub areas: [AreaParams; 2],
    pub tie: TieLine,
    pub loads: [LoadProfile; 2],
    pub horizon: f64,
    /// Reference instant for settling times.
    pub disturbance_time: f64,
}

impl Scenario {
    pub fn model(&self, controllers: [ControllerSpec; 2], nonlin: NonlinearityConfig) -> SystemModel {
        SystemModel { areas: self.areas, tie: self.tie, nonlin, controllers }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

const NOMINAL: [AreaParams; 2] = [AreaParams::AREA1, AreaParams::AREA2];

/// Case 4 random loads, seeded per area.
fn random_loads() -> [LoadProfile; 2] {
    [
        LoadProfile::UniformRandom { amplitude: 0.01, hold: 10.0, seed: 1, start: 0.0 },
        LoadProfile::UniformRandom { amplitude: 0.01, hold: 10.0, seed: 2, start: 0.0 },
    ]
}

/// Built-in case on the bundled two-area constants.
pub fn case(id: u8) -> Result<Scenario, ScenarioError> {
    case_with(id, NOMINAL, TieLine::DEFAULT)
}

/// Built-in case definitions around a nominal model. Case 1 slows every
/// governor and turbine by 50 %; case 5 sets its own time constants. Case 6
/// shares case 2's scenario and is run as a sweep.
pub fn case_with(id: u8, nominal: [AreaParams; 2], tie: TieLine) -> Result<Scenario, ScenarioError> {
    let s = match id {
        1 => {
            let both = LoadProfile::Composite { parts: vec![LoadProfile::step(0.01, 1.0), LoadProfile::step(0.01, 30.0)] };
            Scenario {
                name: "case1".into(),
                areas: nominal.map(|a| AreaParams { tg: a.tg * 1.5, tt: a.tt * 1.5, ..a }),
                tie,
                loads: [both.clone(), both],
                horizon: 60.0,
                disturbance_time: 1.0,
            }
        }
        2 | 6 => Scenario {
            name: format!("case{id}"),
            areas: nominal,
            tie,
            loads: [LoadProfile::step(0.01, 1.0), LoadProfile::Zero],
            horizon: 60.0,
            disturbance_time: 1.0,
        },
        3 => Scenario {
            name: "case3".into(),
            areas: nominal,
            tie,
            loads: [LoadProfile::Sine { amplitude: 0.01, frequency: 0.05, start: 0.0 }, LoadProfile::Zero],
            horizon: 100.0,
            disturbance_time: 0.0,
        },
        4 => Scenario { name: "case4".into(), areas: nominal, tie, loads: random_loads(), horizon: 100.0, disturbance_time: 0.0 },
        5 => {
            let [a1, a2] = nominal;
            Scenario {
                name: "case5".into(),
                areas: [AreaParams { tg: 0.105, tt: 0.785, ..a1 }, AreaParams { tg: 0.105, tt: 0.6, ..a2 }],
                tie,
                loads: random_loads(),
                horizon: 100.0,
                disturbance_time: 0.0,
            }
        }
        _ => return Err(ScenarioError::UnknownCase(id)),
    };
    Ok(s)
}

/// A controller pair with a report label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedController {
    pub name: String,
    pub areas: [ControllerSpec; 2],
}

/// Published controller settings.
pub mod bundled {
    use super::*;

    pub const GAMMA: [f64; 5] = [25.33, 0.01, 17.62, 9.88, 29.98];
    pub const TAU: f64 = 0.8832;
    pub const K_B0: [f64; 2] = [20.5126, 39.9347];

    /// Optimized CDM gains for both areas.
    pub fn cdm_opt_gains() -> [CdmGains; 2] {
        K_B0.map(|k_b0| CdmGains { gamma: GAMMA.to_vec(), tau: TAU, k_b0 })
    }

    /// The optimized gains as a decision vector `[γ_1..γ_5, τ, K_B0,1, K_B0,2]`.
    pub fn cdm_opt_vector() -> Vec<f64> {
        GAMMA.iter().copied().chain([TAU, K_B0[0], K_B0[1]]).collect()
    }

    /// Controllers synthesized from [`cdm_opt_gains`] on the nominal design plants.
    pub fn cdm_opt_controllers(design: &CdmDesign) -> Result<[CdmController; 2], CdmError> {
        let [g1, g2] = cdm_opt_gains();
        let p = |a: &AreaParams| derive_design_plant(a, &TieLine::DEFAULT);
        Ok([synthesize_with(&p(&NOMINAL[0]), &g1, design)?, synthesize_with(&p(&NOMINAL[1]), &g2, design)?])
    }

    pub fn cdm_opt(design: &CdmDesign) -> Result<NamedController, CdmError> {
        let [c1, c2] = cdm_opt_controllers(design)?;
        Ok(NamedController { name: "CDM-OPT".into(), areas: [(&c1).into(), (&c2).into()] })
    }

    /// Hand-designed CDM controllers used as a baseline.
    pub fn cdm_classic() -> NamedController {
        let cdm = |ac: [f64; 3], bc: [f64; 3]| ControllerSpec::Cdm { ac: Polynomial::new(ac), bc: Polynomial::new(bc) };
        NamedController {
            name: "CDM".into(),
            areas: [cdm([0.0, 150.0, 2.0], [40.0, 69.0, 100.0]), cdm([0.0, 60.0, 3.0], [32.0, 54.0, 100.0])],
        }
    }

    pub fn pid() -> NamedController {
        let pid = |kp, ki, kd| ControllerSpec::Pid { kp, ki, kd, tf: crate::sim::DEFAULT_TF };
        NamedController { name: "PID".into(), areas: [pid(3.8830, 8.9908, 2.9089), pid(4.4420, 8.1478, 1.0651)] }
    }

    /// Integral-only control, reported under the label "PI".
    pub fn pi() -> NamedController {
        NamedController {
            name: "PI".into(),
            areas: [ControllerSpec::Integral { ki: 0.3 }, ControllerSpec::Integral { ki: 0.2 }],
        }
    }

    /// CDM-OPT, PID, CDM and PI in that order.
    pub fn all(design: &CdmDesign) -> Result<Vec<NamedController>, CdmError> {
        Ok(vec![cdm_opt(design)?, pid(), cdm_classic(), pi()])
    }
}

/// One controller's results in a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub controller: String,
    pub metrics: Metrics,
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub horizon: f64,
    pub rows: Vec<CaseRow>,
    /// Controller names, best first by `(IAE, ISE)`.
    pub ranking: Vec<String>,
}

/// Simulates one scenario for each controller.
pub fn compare(
    scenario: &Scenario,
    controllers: &[NamedController],
    nonlin: NonlinearityConfig,
    solver: &SolverConfig,
    bands: &Bands,
) -> Result<(CaseReport, Vec<Trajectory>), ScenarioError> {
    let solver = SolverConfig { horizon: scenario.horizon, ..*solver };
    let runs: Vec<Result<(CaseRow, Trajectory), ScenarioError>> = controllers
        .par_iter()
        .map(|c| {
            let model = scenario.model(c.areas.clone(), nonlin);
            let traj = simulate(&model, &scenario.loads, &solver)
                .map_err(|source| ScenarioError::Simulation { name: c.name.clone(), source })?;
            let metrics = metrics(&traj, bands, scenario.disturbance_time)?;
            Ok((CaseRow { controller: c.name.clone(), metrics, substeps: traj.substeps }, traj))
        })
        .collect();
    let mut rows = Vec::with_capacity(runs.len());
    let mut trajectories = Vec::with_capacity(runs.len());
    for r in runs {
        let (row, traj) = r?;
        rows.push(row);
        trajectories.push(traj);
    }
    let mut order: Vec<&CaseRow> = rows.iter().collect();
    order.sort_by(|a, b| {
        let (x, y) = (a.metrics.total, b.metrics.total);
        x.iae.total_cmp(&y.iae).then(x.ise.total_cmp(&y.ise))
    });
    let ranking = order.iter().map(|r| r.controller.clone()).collect();
    Ok((CaseReport { case: scenario.name.clone(), horizon: scenario.horizon, rows, ranking }, trajectories))
}

fn settling_cell(s: Settling, horizon: f64) -> String {
    match s {
        Settling::Settled(t) => sig9(t),
        Settling::NotSettled => format!("{horizon}>"),
    }
}

fn overshoot_cell(tr: &Transient) -> String {
    if tr.overshoot_observed() {
        sig9(tr.overshoot)
    } else {
        "N.O".into()
    }
}

impl CaseReport {
    pub fn row(&self, name: &str) -> Option<&CaseRow> {
        self.rows.iter().find(|r| r.controller == name)
    }

    /// One line per controller: summed indices, then per-signal transients and IAE.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("controller,ise,itse,itae,iae");
        for s in ["df1", "df2", "dptie"] {
            out.push_str(&format!(",{s}_ts,{s}_os,{s}_us,{s}_iae"));
        }
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.controller,
                sig9(m.total.ise),
                sig9(m.total.itse),
                sig9(m.total.itae),
                sig9(m.total.iae)
            ));
            for s in [&m.df1, &m.df2, &m.dptie] {
                out.push_str(&format!(
                    ",{},{},{},{}",
                    settling_cell(s.transient.settling, self.horizon),
                    overshoot_cell(&s.transient),
                    sig9(s.transient.undershoot),
                    sig9(s.indices.iae)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Decision vector `[γ_1..γ_5, τ, K_B0,1, K_B0,2]` mapped to a Case-1 cost.
///
/// Controllers are synthesized on the nominal design plants and simulated
/// on the scenario's (slower) plant, so the cost rewards robustness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningProblem {
    pub design_areas: [AreaParams; 2],
    pub scenario: Scenario,
    pub nonlin: NonlinearityConfig,
    pub design: CdmDesign,
    pub gamma_order: GammaOrder,
    pub solver: SolverConfig,
    pub bounds: Bounds,
}

/// What made a candidate infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Infeasible {
    Synthesis(String),
    UnstableDesign,
    Simulation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    pub infeasible: Option<Infeasible>,
}

/// Dimension of the tuning decision vector.
pub const TUNING_DIM: usize = 8;

/// Coarser substepping for the many runs of an optimization; candidates
/// stiffer than the cap are penalized.
pub fn tuning_solver() -> SolverConfig {
    SolverConfig { dt: crate::sim::DEFAULT_DT, horizon: 60.0, substeps: Substeps::Auto { rho_h: 1.0, cap: 64, h_max: crate::sim::DEFAULT_H_MAX } }
}

impl TuningProblem {
    pub fn new(nonlin: NonlinearityConfig, solver: SolverConfig) -> Self {
        let scenario = case(1).expect("case 1 is built in");
        Self {
            design_areas: NOMINAL,
            solver: SolverConfig { horizon: scenario.horizon, ..solver },
            scenario,
            nonlin,
            design: CdmDesign::default(),
            gamma_order: GammaOrder::default(),
            bounds: Self::default_bounds(),
        }
    }

    /// `γ_i ∈ [0.01, 40]`, `τ ∈ [0.1, 5]`, `K_B0 ∈ [1, 100]`.
    pub fn default_bounds() -> Bounds {
        let mut lower = vec![0.01; 5];
        let mut upper = vec![40.0; 5];
        lower.extend([0.1, 1.0, 1.0]);
        upper.extend([5.0, 100.0, 100.0]);
        Bounds { lower, upper }
    }

    pub fn decode(&self, x: &[f64]) -> [CdmGains; 2] {
        assert_eq!(x.len(), TUNING_DIM, "decision vector has {} entries", x.len());
        let gains = |k_b0| self.gamma_order.apply(&CdmGains { gamma: x[..5].to_vec(), tau: x[5], k_b0 });
        [gains(x[6]), gains(x[7])]
    }

    pub fn controllers(&self, x: &[f64]) -> Result<[CdmController; 2], CdmError> {
        let [g1, g2] = self.decode(x);
        let tie = self.scenario.tie;
        let plant = |i: usize| derive_design_plant(&self.design_areas[i], &tie);
        Ok([synthesize_with(&plant(0), &g1, &self.design)?, synthesize_with(&plant(1), &g2, &self.design)?])
    }

    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        let penalty = |residual: f64, why: Infeasible| Evaluation { cost: PENALTY + residual, infeasible: Some(why) };
        let ctrls = match self.controllers(x) {
            Ok(c) => c,
            Err(e) => return penalty(0.0, Infeasible::Synthesis(e.to_string())),
        };
        let residual: f64 = ctrls.iter().map(|c| c.residual.unwrap_or(0.0)).sum();
        if !ctrls.iter().all(|c| c.is_stable()) {
            return penalty(residual, Infeasible::UnstableDesign);
        }
        let model = self.scenario.model([(&ctrls[0]).into(), (&ctrls[1]).into()], self.nonlin);
        match simulate(&model, &self.scenario.loads, &self.solver) {
            Ok(traj) => {
                let j = indices(&traj).iae;
                if j.is_finite() {
                    Evaluation { cost: j, infeasible: None }
                } else {
                    penalty(residual, Infeasible::Simulation("non-finite cost".into()))
                }
            }
            Err(e) => penalty(residual, Infeasible::Simulation(e.to_string())),
        }
    }
}

impl Objective for TuningProblem {
    fn cost(&self, x: &[f64]) -> f64 {
        self.evaluate(x).cost
    }
}

/// A model parameter addressed by a `area1.Tg`-style path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ParamPath {
    Area { index: usize, field: AreaField },
    T12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AreaField {
    D,
    M,
    R,
    Tg,
    Tt,
}

impl std::str::FromStr for ParamPath {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "tie.T12" {
            return Ok(ParamPath::T12);
        }
        let (area, field) = s.split_once('.').ok_or_else(|| format!("bad parameter path {s:?}"))?;
        let index = match area {
            "area1" => 0,
            "area2" => 1,
            _ => return Err(format!("unknown area in {s:?}")),
        };
        let field = match field {
            "D" => AreaField::D,
            "M" => AreaField::M,
            "R" => AreaField::R,
            "Tg" => AreaField::Tg,
            "Tt" => AreaField::Tt,
            _ => return Err(format!("unknown field in {s:?}")),
        };
        Ok(ParamPath::Area { index, field })
    }
}

impl TryFrom<String> for ParamPath {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ParamPath> for String {
    fn from(p: ParamPath) -> String {
        p.to_string()
    }
}

impl std::fmt::Display for ParamPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamPath::T12 => write!(f, "tie.T12"),
            ParamPath::Area { index, field } => write!(f, "area{}.{:?}", index + 1, field),
        }
    }
}

impl ParamPath {
    fn slot<'a>(&self, areas: &'a mut [AreaParams; 2], tie: &'a mut TieLine) -> &'a mut f64 {
        match *self {
            ParamPath::T12 => &mut tie.t12,
            ParamPath::Area { index, field } => {
                let a = &mut areas[index];
                match field {
                    AreaField::D => &mut a.d,
                    AreaField::M => &mut a.m,
                    AreaField::R => &mut a.r,
                    AreaField::Tg => &mut a.tg,
                    AreaField::Tt => &mut a.tt,
                }
            }
        }
    }
}

/// Parameters to perturb, each by every relative delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameters: Vec<ParamPath>,
    /// Fractions, `0.25` for +25 %.
    pub deltas: Vec<f64>,
    pub base: Scenario,
}

impl SweepSpec {
    /// Governor and turbine time constants of both areas at ±25 % and ±50 % on case 2.
    pub fn table() -> Self {
        let p = |s: &str| s.parse::<ParamPath>().unwrap();
        SweepSpec {
            parameters: vec![p("area1.Tg"), p("area2.Tg"), p("area1.Tt"), p("area2.Tt")],
            deltas: vec![0.25, -0.25, 0.5, -0.5],
            base: case(6).unwrap(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if let Some(d) = self.deltas.iter().find(|d| !(d.is_finite() && **d > -1.0)) {
            return Err(ScenarioError::InvalidSweep(format!("delta {d} must exceed -100 %")));
        }
        if self.parameters.is_empty() {
            return Err(ScenarioError::InvalidSweep("no parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `None` on the nominal row.
    pub parameter: Option<ParamPath>,
    pub delta: f64,
    pub value: Option<f64>,
    pub controller: String,
    pub metrics: Metrics,
    pub settled: bool,
    /// All eigenvalues of the linearized two-area loop in the open left half plane.
    pub linear_stable: bool,
    /// CDM only: the frozen controller still gives a Hurwitz loop on the re-derived design plants.
    pub design_hurwitz: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,delta,value,controller,ise,itse,itae,iae,settled,linear_stable,design_hurwitz\n");
        for r in &self.rows {
            let m = r.metrics.total;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.parameter.map_or("nominal".to_string(), |p| p.to_string()),
                r.delta,
                r.value.map_or(String::new(), sig9),
                r.controller,
                sig9(m.ise),
                sig9(m.itse),
                sig9(m.itae),
                sig9(m.iae),
                r.settled,
                r.linear_stable,
                r.design_hurwitz.map_or(String::new(), |h| h.to_string()),
            ));
        }
        out
    }
}

/// Re-simulates each perturbation with controllers frozen at their nominal design.
pub fn sensitivity_sweep(
    spec: &SweepSpec,
    controllers: &[NamedController],
    nonlin: NonlinearityConfig,
    solver: &SolverConfig,
    bands: &Bands,
) -> Result<SweepTable, ScenarioError> {
    spec.validate()?;
    let mut cells: Vec<(Option<ParamPath>, f64)> = vec![(None, 0.0)];
    for p in &spec.parameters {
        for d in &spec.deltas {
            cells.push((Some(*p), *d));
        }
    }
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|i| (0..controllers.len()).map(move |c| (i, c))).collect();
    let solver = SolverConfig { horizon: spec.base.horizon, ..*solver };
    let rows: Result<Vec<SweepRow>, ScenarioError> = jobs
        .par_iter()
        .map(|&(i, c)| {
            let (param, delta) = cells[i];
            let mut scenario = spec.base.clone();
            let value = param.map(|p| {
                let slot = p.slot(&mut scenario.areas, &mut scenario.tie);
                *slot *= 1.0 + delta;
                *slot
            });
            let ctrl = &controllers[c];
            let model = scenario.model(ctrl.areas.clone(), nonlin);
            let sim_err = |source| ScenarioError::Simulation { name: ctrl.name.clone(), source };
            let traj = simulate(&model, &scenario.loads, &solver).map_err(sim_err)?;
            let metrics = metrics(&traj, bands, scenario.disturbance_time)?;
            let linear_stable = closed_loop_eigenvalues(&model).map_err(sim_err)?.iter().all(|(re, _)| *re < 0.0);
            let design_hurwitz = match &ctrl.areas {
                [ControllerSpec::Cdm { ac: a1, bc: b1 }, ControllerSpec::Cdm { ac: a2, bc: b2 }] => {
                    let ok = |i: usize, ac, bc| {
                        is_hurwitz(&closed_loop(&derive_design_plant(&scenario.areas[i], &scenario.tie), ac, bc))
                    };
                    Some(ok(0, a1, b1) && ok(1, a2, b2))
                }
                _ => None,
            };
            Ok(SweepRow {
                parameter: param,
                delta,
                value,
                controller: ctrl.name.clone(),
                settled: metrics.all_settled(),
                metrics,
                linear_stable,
                design_hurwitz,
            })
        })
        .collect();
    Ok(SweepTable { rows: rows? })
}
