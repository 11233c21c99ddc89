//! Water cycle algorithm for box-constrained minimization.
//!
//! The population splits into one sea (the best point), `n_sr − 1` rivers and
//! the remaining streams. Each iteration streams flow toward their river or
//! the sea, rivers flow toward the sea, better points swap roles with their
//! parents, and rivers that reach the sea evaporate: their streams are
//! re-rained uniformly over the box.
//!
//! All random draws come from one seeded generator and happen before the
//! objective is evaluated, so cost evaluation may run in parallel without
//! affecting the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::sig9;

/// Attempts to replace a point whose cost is not finite.
pub const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WcaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("objective returned a non-finite cost {MAX_RESAMPLES} times in a row")]
    ObjectiveFailure,
}

/// Something to minimize. Implemented for every `Fn(&[f64]) -> f64 + Sync`.
pub trait Objective: Sync {
    fn cost(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for F {
    fn cost(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WcaConfig {
    /// Population size.
    pub n_pop: usize,
    pub max_it: usize,
    /// Rivers plus the sea.
    pub n_sr: usize,
    /// Initial evaporation distance.
    pub d_max0: f64,
    /// Flow coefficient.
    pub c: f64,
    pub seed: u64,
    /// Allocate more streams to better rivers instead of worse ones.
    pub fitness_inverted: bool,
}

impl Default for WcaConfig {
    fn default() -> Self {
        Self { n_pop: 50, max_it: 50, n_sr: 4, d_max0: 1e-16, c: 2.0, seed: 0, fitness_inverted: false }
    }
}

impl WcaConfig {
    pub fn n_raindrops(&self) -> usize {
        self.n_pop - self.n_sr
    }

    pub fn validate(&self) -> Result<(), WcaError> {
        let bad = |m: String| Err(WcaError::InvalidConfig(m));
        if self.n_sr < 2 {
            return bad(format!("n_sr = {} must be at least 2", self.n_sr));
        }
        if self.n_pop < 2 * self.n_sr {
            return bad(format!("n_pop = {} leaves fewer streams than rivers (n_sr = {})", self.n_pop, self.n_sr));
        }
        if self.max_it == 0 {
            return bad("max_it must be positive".into());
        }
        if !(self.c > 1.0 && self.c <= 2.0) {
            return bad(format!("c = {} must lie in (1, 2]", self.c));
        }
        if !(self.d_max0.is_finite() && self.d_max0 > 0.0) {
            return bad(format!("d_max0 = {} must be positive", self.d_max0));
        }
        Ok(())
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, WcaError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self, WcaError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn validate(&self) -> Result<(), WcaError> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(WcaError::InvalidBounds(format!(
                "{} lower and {} upper limits",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(WcaError::InvalidBounds(format!("component {i}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// `LB + rand (UB − LB)` per component.
    fn rain(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Vec<f64>,
    pub cost: f64,
}

/// Where a stream flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    Sea,
    River(usize),
}

/// Allocates `n_raindrops` streams in proportion to `weights`.
///
/// Each share is rounded, raised to at least one, and the total is repaired
/// to `n_raindrops`: a deficit goes to the first entry (the sea), an excess
/// is taken one at a time from the last entries that can spare a stream.
/// All-zero weights split evenly.
pub fn allocate_streams(weights: &[f64], n_raindrops: usize) -> Vec<usize> {
    let k = weights.len();
    assert!(k > 0 && n_raindrops >= k, "need at least one stream per river");
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    let shares: Vec<f64> = if total > 0.0 && total.is_finite() {
        weights.iter().map(|w| w.abs() / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let mut counts: Vec<usize> =
        shares.iter().map(|s| ((s * n_raindrops as f64).round() as usize).max(1)).collect();
    let sum: usize = counts.iter().sum();
    if sum < n_raindrops {
        counts[0] += n_raindrops - sum;
    } else {
        let mut excess = sum - n_raindrops;
        let mut i = k;
        while excess > 0 {
            i = if i == 0 { k - 1 } else { i - 1 };
            if counts[i] > 1 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

/// Stream counts from the sea and river costs, `round(|cost_n / Σ cost_i| N)`.
pub fn assign_streams(costs: &[f64], n_raindrops: usize) -> Vec<usize> {
    allocate_streams(costs, n_raindrops)
}

/// Merit-proportional counts: weights are the cost gaps to a reference
/// cost (the best stream), so the sea receives the most streams.
pub fn assign_streams_by_merit(costs: &[f64], reference: f64, n_raindrops: usize) -> Vec<usize> {
    let gaps: Vec<f64> = costs.iter().map(|c| c - reference).collect();
    allocate_streams(&gaps, n_raindrops)
}

/// Full algorithm state between iterations.
#[derive(Debug, Clone)]
pub struct WcaState {
    pub sea: Candidate,
    pub rivers: Vec<Candidate>,
    pub streams: Vec<Candidate>,
    /// Parent of each stream, index-aligned with `streams`.
    pub assignment: Vec<Parent>,
    pub d_max: f64,
    pub iteration: usize,
    /// Sea cost after each completed iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Number of rivers that evaporated.
    pub rerain_events: usize,
    rng: ChaCha8Rng,
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcaOutcome {
    pub best: Candidate,
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub rerain_events: usize,
}

fn evaluate_all<O: Objective + ?Sized>(objective: &O, positions: &[Vec<f64>]) -> Vec<f64> {
    positions.par_iter().map(|x| objective.cost(x)).collect()
}

impl WcaState {
    pub fn initialize<O: Objective + ?Sized>(
        objective: &O,
        bounds: &Bounds,
        config: &WcaConfig,
    ) -> Result<Self, WcaError> {
        config.validate()?;
        bounds.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut positions: Vec<Vec<f64>> = (0..config.n_pop).map(|_| bounds.rain(&mut rng)).collect();
        let mut evaluations = 0;
        let costs = evaluate_finite(objective, bounds, &mut rng, &mut positions, &mut evaluations)?;
        let mut population: Vec<Candidate> =
            positions.into_iter().zip(costs).map(|(position, cost)| Candidate { position, cost }).collect();
        population.sort_by(|a, b| a.cost.total_cmp(&b.cost));

        let streams = population.split_off(config.n_sr);
        let mut elite = population.into_iter();
        let sea = elite.next().unwrap();
        let rivers: Vec<Candidate> = elite.collect();

        let elite_costs: Vec<f64> = std::iter::once(sea.cost).chain(rivers.iter().map(|r| r.cost)).collect();
        let counts = if config.fitness_inverted {
            assign_streams_by_merit(&elite_costs, streams[0].cost, config.n_raindrops())
        } else {
            assign_streams(&elite_costs, config.n_raindrops())
        };
        let assignment = counts
            .iter()
            .enumerate()
            .flat_map(|(n, &count)| {
                let parent = if n == 0 { Parent::Sea } else { Parent::River(n - 1) };
                std::iter::repeat_n(parent, count)
            })
            .collect();

        Ok(Self {
            sea,
            rivers,
            streams,
            assignment,
            d_max: config.d_max0,
            iteration: 0,
            history: Vec::with_capacity(config.max_it),
            evaluations,
            rerain_events: 0,
            rng,
        })
    }

    pub fn parent(&self, p: Parent) -> &Candidate {
        match p {
            Parent::Sea => &self.sea,
            Parent::River(i) => &self.rivers[i],
        }
    }

    /// Number of streams per parent, sea first.
    pub fn stream_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rivers.len() + 1];
        for p in &self.assignment {
            match p {
                Parent::Sea => counts[0] += 1,
                Parent::River(i) => counts[i + 1] += 1,
            }
        }
        counts
    }

    /// Every candidate, sea first.
    pub fn population(&self) -> impl Iterator<Item = &Candidate> {
        std::iter::once(&self.sea).chain(&self.rivers).chain(&self.streams)
    }

    /// One iteration: flow, promotion, evaporation, `d_max` decay.
    pub fn step<O: Objective + ?Sized>(
        &mut self,
        objective: &O,
        bounds: &Bounds,
        config: &WcaConfig,
    ) -> Result<(), WcaError> {
        let c = config.c;
        let rng = &mut self.rng;
        let flow = |x: &[f64], target: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut next: Vec<f64> =
                x.iter().zip(target).map(|(xi, ti)| xi + rng.random::<f64>() * c * (ti - xi)).collect();
            bounds.clamp(&mut next);
            next
        };

        // Moves use the positions at the start of the iteration.
        let mut moved: Vec<Vec<f64>> = Vec::with_capacity(self.streams.len() + self.rivers.len());
        for (stream, parent) in self.streams.iter().zip(&self.assignment) {
            let target = match parent {
                Parent::Sea => &self.sea.position,
                Parent::River(i) => &self.rivers[*i].position,
            };
            moved.push(flow(&stream.position, target, rng));
        }
        for river in &self.rivers {
            moved.push(flow(&river.position, &self.sea.position, rng));
        }
        let costs = evaluate_finite(objective, bounds, &mut self.rng, &mut moved, &mut self.evaluations)?;

        let n_streams = self.streams.len();
        for (k, (position, cost)) in moved.into_iter().zip(costs).enumerate() {
            let slot = if k < n_streams { &mut self.streams[k] } else { &mut self.rivers[k - n_streams] };
            *slot = Candidate { position, cost };
        }
        self.promote();

        // Evaporation of rivers that reached the sea.
        if self.d_max > 0.0 {
            for i in 0..self.rivers.len() {
                let dist = distance(&self.sea.position, &self.rivers[i].position);
                if dist >= self.d_max {
                    continue;
                }
                let members: Vec<usize> =
                    (0..n_streams).filter(|&j| self.assignment[j] == Parent::River(i)).collect();
                let mut fresh: Vec<Vec<f64>> = members.iter().map(|_| bounds.rain(&mut self.rng)).collect();
                let costs = evaluate_finite(objective, bounds, &mut self.rng, &mut fresh, &mut self.evaluations)?;
                for ((j, position), cost) in members.into_iter().zip(fresh).zip(costs) {
                    self.streams[j] = Candidate { position, cost };
                }
                self.rerain_events += 1;
            }
            self.promote();
        }

        self.d_max = (self.d_max - self.d_max / config.max_it as f64).max(0.0);
        self.iteration += 1;
        self.history.push(self.sea.cost);
        Ok(())
    }

    /// Swaps streams that beat their river, then the best of the sea's
    /// streams and all rivers with the sea if it is better.
    fn promote(&mut self) {
        for i in 0..self.rivers.len() {
            let best = (0..self.streams.len())
                .filter(|&j| self.assignment[j] == Parent::River(i))
                .min_by(|&a, &b| self.streams[a].cost.total_cmp(&self.streams[b].cost));
            if let Some(j) = best {
                if self.streams[j].cost < self.rivers[i].cost {
                    std::mem::swap(&mut self.streams[j], &mut self.rivers[i]);
                }
            }
        }

        let best_stream = (0..self.streams.len())
            .filter(|&j| self.assignment[j] == Parent::Sea)
            .min_by(|&a, &b| self.streams[a].cost.total_cmp(&self.streams[b].cost));
        let best_river = (0..self.rivers.len()).min_by(|&a, &b| self.rivers[a].cost.total_cmp(&self.rivers[b].cost));
        let stream_cost = best_stream.map_or(f64::INFINITY, |j| self.streams[j].cost);
        let river_cost = best_river.map_or(f64::INFINITY, |i| self.rivers[i].cost);
        if stream_cost.min(river_cost) < self.sea.cost {
            if stream_cost < river_cost {
                std::mem::swap(&mut self.streams[best_stream.unwrap()], &mut self.sea);
            } else {
                std::mem::swap(&mut self.rivers[best_river.unwrap()], &mut self.sea);
            }
        }
        debug_assert!(self.population().all(|c| self.sea.cost <= c.cost));
    }

    pub fn outcome(&self) -> WcaOutcome {
        WcaOutcome {
            best: self.sea.clone(),
            history: self.history.clone(),
            evaluations: self.evaluations,
            rerain_events: self.rerain_events,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Evaluates every position, re-raining those with non-finite cost.
fn evaluate_finite<O: Objective + ?Sized>(
    objective: &O,
    bounds: &Bounds,
    rng: &mut ChaCha8Rng,
    positions: &mut [Vec<f64>],
    evaluations: &mut usize,
) -> Result<Vec<f64>, WcaError> {
    let mut costs = evaluate_all(objective, positions);
    *evaluations += positions.len();
    for (x, cost) in positions.iter_mut().zip(costs.iter_mut()) {
        let mut tries = 0;
        while !cost.is_finite() {
            if tries == MAX_RESAMPLES {
                return Err(WcaError::ObjectiveFailure);
            }
            *x = bounds.rain(rng);
            *cost = objective.cost(x);
            *evaluations += 1;
            tries += 1;
        }
    }
    Ok(costs)
}

/// Runs `max_it` iterations from a fresh population.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    bounds: &Bounds,
    config: &WcaConfig,
) -> Result<WcaOutcome, WcaError> {
    let mut state = WcaState::initialize(objective, bounds, config)?;
    for _ in 0..config.max_it {
        state.step(objective, bounds, config)?;
    }
    Ok(state.outcome())
}

/// `iteration,best_cost` rows, iterations numbered from 1.
pub fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,best_cost\n");
    for (i, c) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, sig9(*c)));
    }
    out
}

/// Standard test functions.
pub mod functions {
    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    pub fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::functions::*;
    use super::*;

    #[test]
    fn allocation_examples() {
        assert_eq!(assign_streams(&[1.0, 1.0, 1.0, 1.0], 46), vec![12, 12, 11, 11]);
        assert_eq!(assign_streams(&[1.0, 1.0], 2), vec![1, 1]);
        assert_eq!(assign_streams(&[0.0, 0.0, 0.0], 9), vec![3, 3, 3]);
        // Proportional to cost: the worst river gets the most streams.
        assert_eq!(assign_streams(&[1.0, 2.0, 7.0], 10), vec![1, 2, 7]);
        // Deficit after rounding goes to the sea.
        assert_eq!(assign_streams(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        // Floors at one stream each.
        assert_eq!(assign_streams(&[0.0, 0.0, 1.0], 10), vec![1, 1, 8]);
        let merit = assign_streams_by_merit(&[0.0, 1.0, 2.0], 3.0, 12);
        assert_eq!(merit, vec![6, 4, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(WcaConfig::default().validate().is_ok());
        let bad = WcaConfig { c: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = WcaConfig { n_sr: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = WcaConfig { n_pop: 6, n_sr: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(Bounds::new(vec![1.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![], vec![]).is_err());
    }

    #[test]
    fn initialization_layout() {
        let bounds = Bounds::uniform(3, -1.0, 1.0).unwrap();
        let s = WcaState::initialize(&sphere, &bounds, &WcaConfig::default()).unwrap();
        assert_eq!(s.streams.len(), 46);
        assert_eq!(s.rivers.len(), 3);
        assert_eq!(s.stream_counts().iter().sum::<usize>(), 46);
        assert!(s.population().all(|c| bounds.contains(&c.position)));
        assert!(s.population().all(|c| s.sea.cost <= c.cost));
        assert_eq!(s.evaluations, 50);
    }

    #[test]
    fn unit_interval_bounds() {
        let bounds = Bounds::uniform(1, 0.0, 1.0).unwrap();
        for seed in 0..5 {
            let cfg = WcaConfig { seed, max_it: 10, ..Default::default() };
            let mut s = WcaState::initialize(&sphere, &bounds, &cfg).unwrap();
            for _ in 0..cfg.max_it {
                s.step(&sphere, &bounds, &cfg).unwrap();
                assert!(s.population().all(|c| (0.0..=1.0).contains(&c.position[0])));
            }
        }
    }

    #[test]
    fn non_finite_costs_are_resampled() {
        let bounds = Bounds::uniform(1, 0.0, 1.0).unwrap();
        let holes = |x: &[f64]| if x[0] < 0.3 { f64::NAN } else { x[0] };
        let out = minimize(&holes, &bounds, &WcaConfig { max_it: 5, ..Default::default() }).unwrap();
        assert!(out.best.cost.is_finite());
        let never = |_: &[f64]| f64::INFINITY;
        assert_eq!(
            minimize(&never, &bounds, &WcaConfig::default()).unwrap_err(),
            WcaError::ObjectiveFailure
        );
    }

    #[test]
    fn constant_objective_gives_flat_history() {
        let bounds = Bounds::uniform(2, -1.0, 1.0).unwrap();
        let out = minimize(&|_: &[f64]| 3.5, &bounds, &WcaConfig::default()).unwrap();
        assert_eq!(out.best.cost, 3.5);
        assert_eq!(out.history.len(), 50);
        assert!(out.history.iter().all(|&c| c == 3.5));
    }

    #[test]
    fn history_csv_layout() {
        let csv = history_csv(&[1.0, 0.5]);
        assert_eq!(csv, "iteration,best_cost\n1,1.00000000e0\n2,5.00000000e-1\n");
    }

    #[test]
    fn rosenbrock_minimum() {
        assert_eq!(rosenbrock(&[1.0, 1.0]), 0.0);
        assert_eq!(rosenbrock(&[0.0, 0.0]), 1.0);
    }
}
