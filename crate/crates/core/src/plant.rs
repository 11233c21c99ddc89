//! Per-area physical constants and the SISO design plant seen by one area's
//! supplementary controller.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("{name} = {value} must be positive and finite")]
    InvalidParameter { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<(), PlantError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PlantError::InvalidParameter { name, value })
    }
}

/// Physical constants of one control area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    /// Load damping, pu/Hz.
    #[serde(rename = "D")]
    pub d: f64,
    /// Inertia `2H`, pu·s.
    #[serde(rename = "M")]
    pub m: f64,
    /// Droop, Hz/pu.
    #[serde(rename = "R")]
    pub r: f64,
    /// Governor time constant, s.
    #[serde(rename = "Tg")]
    pub tg: f64,
    /// Turbine time constant, s.
    #[serde(rename = "Tt")]
    pub tt: f64,
}

impl AreaParams {
    pub const AREA1: AreaParams = AreaParams { d: 0.015, m: 0.1667, r: 3.0, tg: 0.08, tt: 0.4 };
    pub const AREA2: AreaParams = AreaParams { d: 0.016, m: 0.2017, r: 2.73, tg: 0.06, tt: 0.44 };

    pub fn validate(&self) -> Result<(), PlantError> {
        positive("D", self.d)?;
        positive("M", self.m)?;
        positive("R", self.r)?;
        positive("Tg", self.tg)?;
        positive("Tt", self.tt)
    }
}

/// Inter-area coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLine {
    /// Synchronizing coefficient, pu/Hz.
    #[serde(rename = "T12")]
    pub t12: f64,
}

impl TieLine {
    pub const DEFAULT: TieLine = TieLine { t12: 0.2 };

    pub fn validate(&self) -> Result<(), PlantError> {
        positive("T12", self.t12)
    }

    /// Tie-line stiffness `2π T12`.
    pub fn stiffness(&self) -> f64 {
        2.0 * PI * self.t12
    }
}

/// How the governor dead band acts on the primary droop signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GdbModel {
    /// Symmetric static dead zone of total width `gdb_width`.
    #[default]
    Static,
    /// Linearized backlash describing function `n1·x + (n2/omega0)·ẋ`.
    /// Ignores `gdb_width`; active whenever `gdb_width > 0`.
    DescribingFunction { n1: f64, n2: f64, omega0: f64 },
}

impl GdbModel {
    /// Common LFC describing-function coefficients for a 0.05 pu dead band.
    pub fn describing_function() -> Self {
        GdbModel::DescribingFunction { n1: 0.8, n2: -0.2 / PI, omega0: PI }
    }
}

/// Rate limit on turbine output and dead band on the governor input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// Maximum `|dΔP_m/dt|` in pu/s; `None` removes the constraint.
    pub grc_rate: Option<f64>,
    /// Total dead band width in pu; zero disables the dead band.
    pub gdb_width: f64,
    #[serde(default)]
    pub gdb_model: GdbModel,
}

impl NonlinearityConfig {
    /// 10 % per minute rate limit with a 0.05 pu static dead band.
    pub const DEFAULT: NonlinearityConfig = NonlinearityConfig {
        grc_rate: Some(0.1 / 60.0),
        gdb_width: 0.05,
        gdb_model: GdbModel::Static,
    };

    /// No rate limit, no dead band.
    pub const LINEAR: NonlinearityConfig =
        NonlinearityConfig { grc_rate: None, gdb_width: 0.0, gdb_model: GdbModel::Static };

    pub fn validate(&self) -> Result<(), PlantError> {
        if let Some(rate) = self.grc_rate {
            positive("grc_rate", rate)?;
        }
        if !(self.gdb_width.is_finite() && self.gdb_width >= 0.0) {
            return Err(PlantError::InvalidParameter { name: "gdb_width", value: self.gdb_width });
        }
        Ok(())
    }
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Control-signal to area-control-error transfer function `N(s) / D(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlant {
    /// Numerator.
    pub n: Polynomial,
    /// Denominator; has a root at the origin from the tie-line integrator.
    pub dp: Polynomial,
}

/// Frequency bias `B = D + 1/R`.
pub fn frequency_bias(area: &AreaParams) -> f64 {
    area.d + 1.0 / area.r
}

/// Design plant of one area against a frozen neighbor.
///
/// The output is the area control error `B Δf + ΔP_tie`, so
/// `N(s) = B s + 2π T12` and
/// `D(s) = s [ (M s + D)(Tg s + 1)(Tt s + 1) + 1/R ]`.
pub fn derive_design_plant(area: &AreaParams, tie: &TieLine) -> DesignPlant {
    let AreaParams { d, m, r, tg, tt } = *area;
    let n = Polynomial::new(vec![tie.stiffness(), frequency_bias(area)]);
    let dp = Polynomial::new(vec![
        0.0,
        d + 1.0 / r,
        m + d * (tg + tt),
        m * (tg + tt) + d * tg * tt,
        m * tg * tt,
    ]);
    DesignPlant { n, dp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{poly_add, poly_mul};
    use approx::assert_relative_eq;

    #[test]
    fn bias_values() {
        assert_relative_eq!(frequency_bias(&AreaParams::AREA1), 0.348333, max_relative = 1e-5);
        assert!((frequency_bias(&AreaParams::AREA2) - 0.3827).abs() / 0.3827 < 2e-3);
        let unit = AreaParams { d: 0.0, m: 1.0, r: 1.0, tg: 1.0, tt: 1.0 };
        assert_eq!(frequency_bias(&unit), 1.0);
    }

    #[test]
    fn area_one_plant() {
        let plant = derive_design_plant(&AreaParams::AREA1, &TieLine::DEFAULT);
        assert_relative_eq!(plant.n.coeff(0), 2.0 * PI * 0.2, max_relative = 1e-15);
        assert_relative_eq!(plant.n.coeff(1), 0.348333, max_relative = 1e-5);
        assert_eq!(plant.dp.coeff(0), 0.0);
        assert_relative_eq!(plant.dp.coeff(4), 0.1667 * 0.08 * 0.4, max_relative = 1e-15);
        assert_relative_eq!(plant.dp.coeff(3), 0.080496, max_relative = 1e-12);
        assert_relative_eq!(plant.dp.coeff(2), 0.1739, max_relative = 1e-12);
        assert_eq!(plant.dp.degree(), 4);
        assert_eq!(plant.n.degree(), 1);
    }

    #[test]
    fn matches_symbolic_expansion() {
        // s · [(M s + D)(Tg s + 1)(Tt s + 1) + 1/R]
        for area in [AreaParams::AREA1, AreaParams::AREA2] {
            let swing = Polynomial::new(vec![area.d, area.m]);
            let gov = Polynomial::new(vec![1.0, area.tg]);
            let turb = Polynomial::new(vec![1.0, area.tt]);
            let inner = poly_add(
                &poly_mul(&poly_mul(&swing, &gov), &turb),
                &Polynomial::constant(1.0 / area.r),
            );
            let expected = inner.shift(1);
            let plant = derive_design_plant(&area, &TieLine::DEFAULT);
            for i in 0..=4 {
                let e = expected.coeff(i);
                let g = plant.dp.coeff(i);
                assert!((e - g).abs() <= 1e-12 * e.abs().max(1e-300), "coefficient {i}: {e} vs {g}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive() {
        let mut a = AreaParams::AREA1;
        a.tg = 0.0;
        assert_eq!(a.validate(), Err(PlantError::InvalidParameter { name: "Tg", value: 0.0 }));
        assert!(TieLine { t12: -1.0 }.validate().is_err());
        let bad = NonlinearityConfig { grc_rate: Some(0.0), ..NonlinearityConfig::DEFAULT };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn area_json_uses_symbols() {
        let json = serde_json::to_string(&AreaParams::AREA1).unwrap();
        assert_eq!(json, r#"{"D":0.015,"M":0.1667,"R":3.0,"Tg":0.08,"Tt":0.4}"#);
    }
}
