//! Load disturbance profiles, in pu of area base power.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LoadProfile {
    #[default]
    Zero,
    /// `magnitude` from `time` on.
    Step { magnitude: f64, time: f64 },
    /// `amplitude · sin(2π frequency (t − start))` from `start` on.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        start: f64,
    },
    /// Piecewise-constant levels drawn uniformly from `[−amplitude, amplitude]`,
    /// each held for `hold` seconds from `start` on.
    UniformRandom {
        amplitude: f64,
        hold: f64,
        seed: u64,
        #[serde(default)]
        start: f64,
    },
    /// Sum of the parts.
    Composite { parts: Vec<LoadProfile> },
}

impl LoadProfile {
    pub fn step(magnitude: f64, time: f64) -> Self {
        LoadProfile::Step { magnitude, time }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} = {v} must be finite"))
            }
        };
        match self {
            LoadProfile::Zero => Ok(()),
            LoadProfile::Step { magnitude, time } => {
                finite("magnitude", *magnitude)?;
                finite("time", *time)
            }
            LoadProfile::Sine { amplitude, frequency, start } => {
                finite("amplitude", *amplitude)?;
                finite("frequency", *frequency)?;
                finite("start", *start)
            }
            LoadProfile::UniformRandom { amplitude, hold, start, .. } => {
                finite("amplitude", *amplitude)?;
                finite("start", *start)?;
                if hold.is_finite() && *hold > 0.0 {
                    Ok(())
                } else {
                    Err(format!("hold = {hold} must be positive"))
                }
            }
            LoadProfile::Composite { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    /// Precomputes random levels up to `horizon`.
    pub fn compile(&self, horizon: f64) -> LoadSignal {
        let parts = match self {
            LoadProfile::Composite { parts } => parts.iter().flat_map(|p| p.compile(horizon).parts).collect(),
            LoadProfile::Zero => Vec::new(),
            LoadProfile::Step { magnitude, time } => vec![Part::Step { magnitude: *magnitude, time: *time }],
            LoadProfile::Sine { amplitude, frequency, start } => {
                vec![Part::Sine { amplitude: *amplitude, omega: 2.0 * PI * frequency, start: *start }]
            }
            LoadProfile::UniformRandom { amplitude, hold, seed, start } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = ((horizon - start).max(0.0) / hold).floor() as usize + 1;
                let levels = (0..n).map(|_| amplitude * rng.random_range(-1.0..=1.0)).collect();
                vec![Part::Held { levels, hold: *hold, start: *start }]
            }
        };
        LoadSignal { parts }
    }
}

#[derive(Debug, Clone)]
enum Part {
    Step { magnitude: f64, time: f64 },
    Sine { amplitude: f64, omega: f64, start: f64 },
    Held { levels: Vec<f64>, hold: f64, start: f64 },
}

/// A load profile ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct LoadSignal {
    parts: Vec<Part>,
}

impl LoadSignal {
    /// Right-continuous value at `t`.
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t, false)
    }

    /// Limit from the left at `t`.
    pub fn value_left(&self, t: f64) -> f64 {
        self.eval(t, true)
    }

    fn eval(&self, t: f64, left: bool) -> f64 {
        let mut total = 0.0;
        for part in &self.parts {
            total += match part {
                Part::Step { magnitude, time } => {
                    let on = if left { t > *time } else { t >= *time };
                    if on {
                        *magnitude
                    } else {
                        0.0
                    }
                }
                Part::Sine { amplitude, omega, start } => {
                    if t >= *start {
                        amplitude * (omega * (t - start)).sin()
                    } else {
                        0.0
                    }
                }
                Part::Held { levels, hold, start } => {
                    let u = (t - start) / hold;
                    let k = if left { u.ceil() - 1.0 } else { u.floor() };
                    if k < 0.0 {
                        0.0
                    } else {
                        levels[(k as usize).min(levels.len() - 1)]
                    }
                }
            };
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_limits() {
        let s = LoadProfile::step(0.01, 1.0).compile(10.0);
        assert_eq!(s.value(0.999), 0.0);
        assert_eq!(s.value(1.0), 0.01);
        assert_eq!(s.value_left(1.0), 0.0);
        assert_eq!(s.value_left(1.001), 0.01);
    }

    #[test]
    fn composite_sums() {
        let p = LoadProfile::Composite { parts: vec![LoadProfile::step(0.01, 1.0), LoadProfile::step(0.01, 30.0)] };
        let s = p.compile(60.0);
        assert_eq!(s.value(10.0), 0.01);
        assert_eq!(s.value(40.0), 0.02);
    }

    #[test]
    fn random_levels_are_held_and_bounded() {
        let p = LoadProfile::UniformRandom { amplitude: 0.01, hold: 10.0, seed: 7, start: 0.0 };
        let s = p.compile(100.0);
        assert_eq!(s.value(0.0), s.value(9.99));
        assert_eq!(s.value_left(10.0), s.value(5.0));
        for k in 0..100 {
            assert!(s.value(k as f64).abs() <= 0.01);
        }
        let again = p.compile(100.0);
        assert_eq!(s.value(55.0), again.value(55.0));
        assert!(LoadProfile::UniformRandom { amplitude: 0.01, hold: 0.0, seed: 0, start: 0.0 }.validate().is_err());
    }

    #[test]
    fn sine_period() {
        let s = LoadProfile::Sine { amplitude: 0.01, frequency: 0.05, start: 0.0 }.compile(100.0);
        assert!((s.value(5.0) - 0.01).abs() < 1e-15);
        assert!(s.value(10.0).abs() < 1e-15);
    }
}
