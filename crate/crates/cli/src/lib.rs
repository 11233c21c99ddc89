//! Configuration, command dispatch and output files for the `lfc` binary.
//!
//! Every command is a pure function from a validated [`RunConfig`] to an
//! [`Outcome`] holding file contents; [`write_outcome`] persists them together
//! with a manifest. Exit codes: 2 configuration, 3 synthesis,
//! 4 optimization, 5 simulation, 1 anything else.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use lfc_core::cdm::{synthesize_with, CdmController, CdmDesign, CdmGains, GammaOrder};
use lfc_core::plant::{derive_design_plant, AreaParams, DesignPlant, NonlinearityConfig, TieLine};
use lfc_core::poly::RouthVerdict;
use lfc_core::scenarios::{
    bundled, case_with, compare, sensitivity_sweep, tuning_solver, Bands, CaseReport, NamedController, ParamPath,
    Scenario, ScenarioError, SweepSpec, TuningProblem, PENALTY,
};
use lfc_core::sim::{ControllerSpec, SolverConfig, Substeps, DEFAULT_DT};
use lfc_core::wca::{history_csv, minimize, Bounds, WcaConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Synthesis(_) => 3,
            CliError::Optimization(_) => 4,
            CliError::Simulation(_) => 5,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Synthesis(e) => CliError::Synthesis(e.to_string()),
            ScenarioError::Simulation { .. } => CliError::Simulation(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub areas: [AreaParams; 2],
    pub tie: TieLine,
    pub nonlin: NonlinearityConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { areas: [AreaParams::AREA1, AreaParams::AREA2], tie: TieLine::DEFAULT, nonlin: NonlinearityConfig::DEFAULT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Gains of area 1 and area 2.
    pub gains: [CdmGains; 2],
    #[serde(default)]
    pub synthesis: CdmDesign,
    #[serde(default)]
    pub gamma_order: GammaOrder,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { gains: bundled::cdm_opt_gains(), synthesis: CdmDesign::default(), gamma_order: GammaOrder::default() }
    }
}

/// A controller in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum ControllerEntry {
    /// Synthesized from the `design` block.
    Designed { name: String },
    Explicit { name: String, areas: [ControllerSpec; 2] },
}

impl ControllerEntry {
    pub fn name(&self) -> &str {
        match self {
            ControllerEntry::Designed { name } | ControllerEntry::Explicit { name, .. } => name,
        }
    }
}

fn default_controllers() -> Vec<ControllerEntry> {
    let explicit = |c: NamedController| ControllerEntry::Explicit { name: c.name, areas: c.areas };
    vec![
        ControllerEntry::Designed { name: "CDM-OPT".into() },
        explicit(bundled::pid()),
        explicit(bundled::cdm_classic()),
        explicit(bundled::pi()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ScenarioChoice {
    /// A built-in case on the configured model.
    Case { id: u8 },
    Custom { scenario: Scenario },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub dt: f64,
    /// Overrides the scenario horizon when present.
    pub horizon: Option<f64>,
    pub substeps: Substeps,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, horizon: None, substeps: Substeps::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub n_pop: usize,
    pub max_it: usize,
    pub n_sr: usize,
    pub d_max0: f64,
    pub c: f64,
    pub fitness_inverted: bool,
    pub repeats: usize,
    pub bounds: Bounds,
    pub solver: SolverConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let w = WcaConfig::default();
        Self {
            n_pop: w.n_pop,
            max_it: w.max_it,
            n_sr: w.n_sr,
            d_max0: w.d_max0,
            c: w.c,
            fitness_inverted: w.fitness_inverted,
            repeats: 1,
            bounds: TuningProblem::default_bounds(),
            solver: tuning_solver(),
        }
    }
}

impl OptimizerConfig {
    pub fn wca(&self, seed: u64) -> WcaConfig {
        WcaConfig {
            n_pop: self.n_pop,
            max_it: self.max_it,
            n_sr: self.n_sr,
            d_max0: self.d_max0,
            c: self.c,
            seed,
            fitness_inverted: self.fitness_inverted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub parameters: Vec<ParamPath>,
    pub deltas: Vec<f64>,
    /// Names from `controllers` to sweep.
    pub controllers: Vec<String>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        let t = SweepSpec::table();
        Self { parameters: t.parameters, deltas: t.deltas, controllers: vec!["CDM-OPT".into()] }
    }
}

/// Everything a run needs. Omitted blocks take the bundled defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub design: DesignConfig,
    pub controllers: Vec<ControllerEntry>,
    pub scenario: ScenarioChoice,
    pub solver: SolverBlock,
    pub bands: Bands,
    pub optimizer: OptimizerConfig,
    pub sweep: SweepBlock,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            design: DesignConfig::default(),
            controllers: default_controllers(),
            scenario: ScenarioChoice::Case { id: 2 },
            solver: SolverBlock::default(),
            bands: Bands::default(),
            optimizer: OptimizerConfig::default(),
            sweep: SweepBlock::default(),
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Parses JSON, reporting the path of the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| CliError::Config(m);
        for (i, a) in self.model.areas.iter().enumerate() {
            a.validate().map_err(|e| cfg(format!("model.areas[{i}]: {e}")))?;
        }
        self.model.tie.validate().map_err(|e| cfg(format!("model.tie: {e}")))?;
        self.model.nonlin.validate().map_err(|e| cfg(format!("model.nonlin: {e}")))?;
        for (i, g) in self.design.gains.iter().enumerate() {
            g.validate().map_err(|e| cfg(format!("design.gains[{i}]: {e}")))?;
        }
        let mut names: Vec<&str> = self.controllers.iter().map(|c| c.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(cfg("controllers: names must be unique".into()));
        }
        for c in &self.controllers {
            if let ControllerEntry::Explicit { name, areas } = c {
                for a in areas {
                    a.validate().map_err(|e| cfg(format!("controllers.{name}: {e}")))?;
                }
            }
        }
        for s in &self.sweep.controllers {
            if !self.controllers.iter().any(|c| c.name() == s) {
                return Err(cfg(format!("sweep.controllers: no controller named {s:?}")));
            }
        }
        self.solver_config(60.0).samples().map_err(|e| cfg(format!("solver: {e}")))?;
        if let Some(h) = self.solver.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(cfg(format!("solver.horizon = {h}")));
            }
        }
        self.optimizer.wca(self.seed).validate().map_err(|e| cfg(format!("optimizer: {e}")))?;
        self.optimizer.bounds.validate().map_err(|e| cfg(format!("optimizer.bounds: {e}")))?;
        if self.optimizer.bounds.dim() != lfc_core::scenarios::TUNING_DIM || self.optimizer.repeats == 0 {
            return Err(cfg("optimizer: bounds need 8 components and repeats must be positive".into()));
        }
        self.optimizer.solver.samples().map_err(|e| cfg(format!("optimizer.solver: {e}")))?;
        self.sweep_spec().validate().map_err(|e| cfg(format!("sweep: {e}")))?;
        if let ScenarioChoice::Case { id } = self.scenario {
            if !(1..=6).contains(&id) {
                return Err(cfg(format!("scenario.id = {id}; cases are 1 to 6")));
            }
        }
        Ok(())
    }

    fn solver_config(&self, horizon: f64) -> SolverConfig {
        SolverConfig { dt: self.solver.dt, horizon: self.solver.horizon.unwrap_or(horizon), substeps: self.solver.substeps }
    }

    pub fn case(&self, id: u8) -> Result<Scenario, CliError> {
        let mut s = case_with(id, self.model.areas, self.model.tie)?;
        if let Some(h) = self.solver.horizon {
            s.horizon = h;
        }
        Ok(s)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        match &self.scenario {
            ScenarioChoice::Case { id } => self.case(*id),
            ScenarioChoice::Custom { scenario } => {
                let mut s = scenario.clone();
                if let Some(h) = self.solver.horizon {
                    s.horizon = h;
                }
                Ok(s)
            }
        }
    }

    fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            parameters: self.sweep.parameters.clone(),
            deltas: self.sweep.deltas.clone(),
            base: case_with(6, self.model.areas, self.model.tie).expect("case 6 is built in"),
        }
    }

    fn plants(&self) -> [DesignPlant; 2] {
        self.model.areas.map(|a| derive_design_plant(&a, &self.model.tie))
    }

    /// Synthesizes the `design` block on the configured model.
    pub fn designed_controllers(&self) -> Result<[CdmController; 2], CliError> {
        let plants = self.plants();
        let mut out = Vec::with_capacity(2);
        for (i, plant) in plants.iter().enumerate() {
            let gains = self.design.gamma_order.apply(&self.design.gains[i]);
            out.push(
                synthesize_with(plant, &gains, &self.design.synthesis)
                    .map_err(|e| CliError::Synthesis(format!("area {}: {e}", i + 1)))?,
            );
        }
        Ok([out[0].clone(), out[1].clone()])
    }

    pub fn resolve_controllers(&self) -> Result<Vec<NamedController>, CliError> {
        let mut designed = None;
        self.controllers
            .iter()
            .map(|c| match c {
                ControllerEntry::Explicit { name, areas } => Ok(NamedController { name: name.clone(), areas: areas.clone() }),
                ControllerEntry::Designed { name } => {
                    if designed.is_none() {
                        designed = Some(self.designed_controllers()?);
                    }
                    let [c1, c2] = designed.as_ref().unwrap();
                    Ok(NamedController { name: name.clone(), areas: [c1.into(), c2.into()] })
                }
            })
            .collect()
    }

    pub fn tuning_problem(&self) -> Result<TuningProblem, CliError> {
        Ok(TuningProblem {
            design_areas: self.model.areas,
            scenario: case_with(1, self.model.areas, self.model.tie)?,
            nonlin: self.model.nonlin,
            design: self.design.synthesis.clone(),
            gamma_order: self.design.gamma_order,
            solver: self.optimizer.solver,
            bounds: self.optimizer.bounds.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "lfc", version, about = "CDM load-frequency controller design, tuning and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; bundled defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sample interval, s.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Simulation horizon, s.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Exit 0 even when a synthesized design is unstable.
    #[arg(long, global = true)]
    pub allow_unstable: bool,
    /// Give better rivers more streams.
    #[arg(long, global = true)]
    pub fitness_inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Synthesize both areas' CDM controllers from the design gains.
    Design,
    /// Tune the CDM gains on the case-1 objective.
    Optimize,
    /// Simulate the configured scenario and write trajectories.
    Simulate,
    /// Run a built-in case (1 to 6).
    Case { id: u8 },
    /// Sensitivity sweep with frozen controllers.
    Sweep,
    /// Rank the configured controllers on the configured scenario.
    Compare,
    /// Print the effective configuration.
    Config,
}

impl Command {
    fn label(&self) -> String {
        match self {
            Command::Design => "design".into(),
            Command::Optimize => "optimize".into(),
            Command::Simulate => "simulate".into(),
            Command::Case { id } => format!("case {id}"),
            Command::Sweep => "sweep".into(),
            Command::Compare => "compare".into(),
            Command::Config => "config".into(),
        }
    }
}

impl Cli {
    /// Loads the configuration and applies flag overrides.
    pub fn effective_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(dt) = self.dt {
            cfg.solver.dt = dt;
            cfg.optimizer.solver.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.solver.horizon = Some(h);
        }
        if let Some(r) = self.repeats {
            cfg.optimizer.repeats = r;
        }
        if self.fitness_inverted {
            cfg.optimizer.fitness_inverted = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Files produced by a command, keyed by name, plus terminal text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: BTreeMap<String, String>,
    pub stdout: String,
    /// Reported after the files are written.
    pub deferred: Option<String>,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.insert(name.into(), contents);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.file(name, serde_json::to_string_pretty(value).expect("serializable") + "\n");
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
    }
}

fn slug(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    s.trim_matches('_').to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct ControllerFile<'a> {
    area: usize,
    plant: &'a DesignPlant,
    verdict: &'static str,
    routh: RouthVerdict,
    lipatov: bool,
    realized_gamma: Option<Vec<f64>>,
    realized_tau: Option<f64>,
    controller: &'a CdmController,
}

/// Runs a command without touching the file system.
pub fn run(cfg: &RunConfig, command: &Command, allow_unstable: bool) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match command {
        Command::Config => {
            out.stdout = cfg.to_json();
            return Ok(out);
        }
        Command::Design => design(cfg, allow_unstable, &mut out)?,
        Command::Optimize => optimize(cfg, &mut out)?,
        Command::Simulate => {
            let scenario = cfg.scenario()?;
            comparison(cfg, &scenario, "", true, &mut out)?;
        }
        Command::Compare => {
            let scenario = cfg.scenario()?;
            comparison(cfg, &scenario, "", false, &mut out)?;
        }
        Command::Case { id: 6 } => sweep(cfg, "case6_", &mut out)?,
        Command::Case { id } => {
            let scenario = cfg.case(*id).map_err(|e| CliError::Config(e.to_string()))?;
            comparison(cfg, &scenario, &format!("case{id}_"), true, &mut out)?;
        }
        Command::Sweep => sweep(cfg, "", &mut out)?,
    }
    out.file("config.json", cfg.to_json());
    Ok(out)
}

fn design(cfg: &RunConfig, allow_unstable: bool, out: &mut Outcome) -> Result<(), CliError> {
    let plants = cfg.plants();
    let ctrls = cfg.designed_controllers()?;
    let mut unstable = Vec::new();
    for (i, (ctrl, plant)) in ctrls.iter().zip(&plants).enumerate() {
        let stable = ctrl.is_stable();
        if !stable {
            unstable.push(i + 1);
        }
        let characteristics = ctrl.realized_characteristics();
        let file = ControllerFile {
            area: i + 1,
            plant,
            verdict: if stable { "stable" } else { "unstable" },
            routh: ctrl.verdict,
            lipatov: ctrl.lipatov(),
            realized_gamma: characteristics.as_ref().map(|c| c.0.clone()),
            realized_tau: characteristics.map(|c| c.1),
            controller: ctrl,
        };
        out.json(&format!("controller_area{}.json", i + 1), &file);
        out.say(format!(
            "area {}: Ac = {}  Bc = {}  F = {}  residual = {:.3e}  {}",
            i + 1,
            ctrl.ac,
            ctrl.bc,
            ctrl.f,
            ctrl.residual.unwrap_or(0.0),
            file.verdict
        ));
    }
    if !unstable.is_empty() && !allow_unstable {
        out.deferred = Some(format!("unstable design in area {unstable:?}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub best_cost: f64,
    pub best_position: Vec<f64>,
    pub evaluations: usize,
    pub rerain_events: usize,
}

/// Table-3 style statistics of the repeat best costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub average: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let average = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - average).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Summary {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            average,
            std: var.sqrt(),
        }
    }

    pub fn to_csv(&self) -> String {
        use lfc_core::export::sig9;
        format!(
            "statistic,value\nmin,{}\nmax,{}\naverage,{}\nstd,{}\n",
            sig9(self.min),
            sig9(self.max),
            sig9(self.average),
            sig9(self.std)
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub statistics: Summary,
    /// Cost of the bundled published gains on the same objective.
    pub published_gains_cost: f64,
    pub repeats: Vec<RepeatResult>,
}

#[derive(Debug, Serialize)]
struct BestFile<'a> {
    cost: f64,
    seed: u64,
    decision: &'a [f64],
    gains: [CdmGains; 2],
    controllers: Option<[CdmController; 2]>,
}

fn optimize(cfg: &RunConfig, out: &mut Outcome) -> Result<(), CliError> {
    let problem = cfg.tuning_problem()?;
    let bounds = &cfg.optimizer.bounds;
    let mut repeats = Vec::with_capacity(cfg.optimizer.repeats);
    let mut histories = Vec::with_capacity(cfg.optimizer.repeats);
    for r in 0..cfg.optimizer.repeats {
        let seed = cfg.seed.wrapping_add(r as u64);
        let outcome = minimize(&problem, bounds, &cfg.optimizer.wca(seed))
            .map_err(|e| CliError::Optimization(format!("repeat {}: {e}", r + 1)))?;
        out.say(format!("repeat {} (seed {seed}): J = {:.6e}", r + 1, outcome.best.cost));
        histories.push(outcome.history.clone());
        repeats.push(RepeatResult {
            repeat: r + 1,
            seed,
            best_cost: outcome.best.cost,
            best_position: outcome.best.position,
            evaluations: outcome.evaluations,
            rerain_events: outcome.rerain_events,
        });
    }

    if histories.len() == 1 {
        out.file("convergence.csv", history_csv(&histories[0]));
    } else {
        let header: Vec<String> =
            std::iter::once("iteration".to_string()).chain((1..=histories.len()).map(|r| format!("run_{r}"))).collect();
        let mut csv = header.join(",") + "\n";
        for k in 0..histories[0].len() {
            let row: Vec<String> = std::iter::once((k + 1).to_string())
                .chain(histories.iter().map(|h| lfc_core::export::sig9(h[k])))
                .collect();
            csv.push_str(&(row.join(",") + "\n"));
        }
        out.file("convergence.csv", csv);
    }

    let best = repeats
        .iter()
        .min_by(|a, b| a.best_cost.total_cmp(&b.best_cost))
        .expect("at least one repeat");
    let costs: Vec<f64> = repeats.iter().map(|r| r.best_cost).collect();
    let statistics = Summary::of(&costs);
    let published_gains_cost = problem.evaluate(&bundled::cdm_opt_vector()).cost;
    out.json(
        "best.json",
        &BestFile {
            cost: best.best_cost,
            seed: best.seed,
            decision: &best.best_position,
            gains: problem.decode(&best.best_position),
            controllers: problem.controllers(&best.best_position).ok(),
        },
    );
    out.file("summary.csv", statistics.to_csv());
    out.say(format!(
        "min {:.6e}  max {:.6e}  average {:.6e}  std {:.6e}  (published gains: {:.6e})",
        statistics.min, statistics.max, statistics.average, statistics.std, published_gains_cost
    ));
    out.json("summary.json", &OptimizeSummary { statistics, published_gains_cost, repeats: repeats.clone() });
    if costs.iter().all(|&c| c >= PENALTY) {
        return Err(CliError::Optimization("every repeat ended on a penalized design".into()));
    }
    Ok(())
}

fn report_table(report: &CaseReport) -> String {
    let mut s = format!("{:<10} {:>12} {:>12} {:>12} {:>10}\n", "controller", "IAE", "ISE", "US(df1)", "ts(df1)");
    for r in &report.rows {
        let m = &r.metrics;
        let ts = m.df1.transient.settling.time().map_or(format!("{}>", report.horizon), |t| format!("{t:.2}"));
        s.push_str(&format!(
            "{:<10} {:>12.4e} {:>12.4e} {:>12.4e} {:>10}\n",
            r.controller, m.total.iae, m.total.ise, m.df1.transient.undershoot, ts
        ));
    }
    s.push_str(&format!("ranking: {}", report.ranking.join(" < ")));
    s
}

fn comparison(
    cfg: &RunConfig,
    scenario: &Scenario,
    prefix: &str,
    trajectories: bool,
    out: &mut Outcome,
) -> Result<(), CliError> {
    let controllers = cfg.resolve_controllers()?;
    let solver = cfg.solver_config(scenario.horizon);
    let (report, trajs) = compare(scenario, &controllers, cfg.model.nonlin, &solver, &cfg.bands)?;
    if trajectories {
        for (c, t) in controllers.iter().zip(&trajs) {
            out.file(format!("{prefix}trajectory_{}.csv", slug(&c.name)), t.to_csv());
        }
    }
    out.file(format!("{prefix}report.csv"), report.to_csv());
    out.json(&format!("{prefix}report.json"), &report);
    out.say(report_table(&report));
    Ok(())
}

fn sweep(cfg: &RunConfig, prefix: &str, out: &mut Outcome) -> Result<(), CliError> {
    let all = cfg.resolve_controllers()?;
    let chosen: Vec<NamedController> =
        all.into_iter().filter(|c| cfg.sweep.controllers.iter().any(|n| n == &c.name)).collect();
    let mut spec = cfg.sweep_spec();
    if let Some(h) = cfg.solver.horizon {
        spec.base.horizon = h;
    }
    let solver = cfg.solver_config(spec.base.horizon);
    let table = sensitivity_sweep(&spec, &chosen, cfg.model.nonlin, &solver, &cfg.bands)?;
    out.file(format!("{prefix}sweep.csv"), table.to_csv());
    out.json(&format!("{prefix}sweep.json"), &table);
    let unsettled = table.rows.iter().filter(|r| !r.settled).count();
    out.say(format!("{} rows, {} not settled", table.rows.len(), unsettled));
    Ok(())
}

/// Writes the outcome's files and a manifest into the output directory.
pub fn write_outcome(cfg: &RunConfig, command: &Command, outcome: &Outcome) -> Result<Manifest, CliError> {
    let dir = &cfg.output;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut files = BTreeMap::new();
    for (name, contents) in &outcome.files {
        std::fs::write(dir.join(name), contents).map_err(io)?;
        files.insert(name.clone(), sha256_hex(contents.as_bytes()));
    }
    let manifest = Manifest {
        tool: "lfc".into(),
        version: VERSION.into(),
        command: command.label(),
        seed: cfg.seed,
        config_sha256: sha256_hex(cfg.to_json().as_bytes()),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(dir.join("manifest.json"), text).map_err(io)?;
    Ok(manifest)
}

/// Full command-line behavior; returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    let result = (|| {
        let cfg = cli.effective_config()?;
        let outcome = run(&cfg, &cli.command, cli.allow_unstable)?;
        if cli.command != Command::Config {
            write_outcome(&cfg, &cli.command, &outcome)?;
        }
        print!("{}", outcome.stdout);
        match outcome.deferred {
            Some(msg) => Err(CliError::Synthesis(msg)),
            None => Ok(()),
        }
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lfc: {e}");
            e.exit_code()
        }
    }
}
