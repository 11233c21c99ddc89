//! Two-parameter coefficient diagram method controllers.
//!
//! The loop is `A_c(s) u = F r − B_c(s) y` around a plant `N(s)/D(s)`, so
//! the closed-loop characteristic polynomial is
//! `P(s) = A_c(s) D(s) + B_c(s) N(s)`. Synthesis picks the free
//! coefficients of `A_c` and `B_c` so that `P` matches a target polynomial
//! built from the stability indices, the equivalent time constant and the
//! zero-order term `K_B0` of `B_c`.
//!
//! `A_c` has no constant term (integral action) and `B_c(0) = K_B0`. With a
//! degree-4 plant and degree-2 controller polynomials the coefficient
//! equations outnumber the unknowns, so the solver either matches a chosen
//! subset of rows exactly ([`SynthesisMethod::RowMatch`]) or fits all rows
//! in the least-squares sense ([`SynthesisMethod::LeastSquares`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::DesignPlant;
use crate::poly::{
    equivalent_tau, lipatov_sufficient, poly_add, poly_mul, routh, stability_indices, target_poly,
    PolyError, Polynomial, RouthVerdict,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdmError {
    #[error("invalid gains: {0}")]
    InvalidGains(#[from] PolyError),
    #[error("K_B0 = {0} must be positive and finite")]
    InvalidKb0(f64),
    #[error("expected {expected} stability indices for this structure, got {got}")]
    GammaCount { expected: usize, got: usize },
    #[error("coefficient-matching system is rank deficient (rank {rank} of {unknowns})")]
    SingularSystem { rank: usize, unknowns: usize },
    #[error("row selection {rows:?} is invalid for {unknowns} unknowns and degree {degree}")]
    InvalidRowSelection { rows: Vec<usize>, unknowns: usize, degree: usize },
    #[error("controller numerator degree {num} exceeds denominator degree {den}")]
    ImproperController { num: usize, den: usize },
    #[error("controller structure needs at least one free coefficient")]
    EmptyStructure,
}

/// Tunable CDM triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdmGains {
    /// `γ_1, γ_2, …`
    pub gamma: Vec<f64>,
    /// Equivalent time constant, s.
    pub tau: f64,
    /// Zero-order coefficient of `B_c`.
    pub k_b0: f64,
}

impl CdmGains {
    pub fn validate(&self) -> Result<(), CdmError> {
        if let Some((i, &g)) = self.gamma.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g > 0.0)) {
            return Err(PolyError::InvalidGamma { index: i + 1, value: g }.into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(PolyError::InvalidTau(self.tau).into());
        }
        if !(self.k_b0.is_finite() && self.k_b0 > 0.0) {
            return Err(CdmError::InvalidKb0(self.k_b0));
        }
        Ok(())
    }

    /// Gains with the stability index list reversed.
    pub fn reversed(&self) -> Self {
        let mut gamma = self.gamma.clone();
        gamma.reverse();
        Self { gamma, ..self.clone() }
    }
}

/// Order in which a configured `gamma` list is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaOrder {
    /// `[γ_1, γ_2, …]`
    #[default]
    Ascending,
    /// `[…, γ_2, γ_1]`
    Descending,
}

impl GammaOrder {
    pub fn apply(self, gains: &CdmGains) -> CdmGains {
        match self {
            GammaOrder::Ascending => gains.clone(),
            GammaOrder::Descending => gains.reversed(),
        }
    }
}

/// Degrees of `A_c` and `B_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerStructure {
    pub ac_degree: usize,
    pub bc_degree: usize,
}

impl Default for ControllerStructure {
    fn default() -> Self {
        Self { ac_degree: 2, bc_degree: 2 }
    }
}

impl ControllerStructure {
    pub fn unknowns(&self) -> usize {
        self.ac_degree + self.bc_degree
    }

    /// Degree of `A_c D + B_c N` for the given plant.
    pub fn closed_loop_degree(&self, plant: &DesignPlant) -> usize {
        (self.ac_degree + plant.dp.degree()).max(self.bc_degree + plant.n.degree())
    }
}

/// How the overdetermined coefficient equations are resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMethod {
    /// Match the listed powers of `s` exactly; one row per unknown.
    RowMatch { rows: Vec<usize> },
    /// Minimize the Euclidean mismatch over all rows `s^1 … s^n`.
    LeastSquares,
}

/// Structure plus solver choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdmDesign {
    #[serde(default)]
    pub structure: ControllerStructure,
    #[serde(default = "CdmDesign::default_method")]
    pub method: SynthesisMethod,
}

impl CdmDesign {
    fn default_method() -> SynthesisMethod {
        SynthesisMethod::RowMatch { rows: vec![1, 3, 5, 6] }
    }

    pub fn least_squares(structure: ControllerStructure) -> Self {
        Self { structure, method: SynthesisMethod::LeastSquares }
    }
}

/// Degree-(2, 2) structure matched on rows `s^1, s^3, s^5, s^6`.
///
/// Each row then pins one unknown in turn (`l_2`, `l_1`, `k_1`, `k_2`); this
/// reproduces the reference optimum controllers to within their rounding,
/// whereas a least-squares fit of the same gains is unstable.
impl Default for CdmDesign {
    fn default() -> Self {
        Self { structure: ControllerStructure::default(), method: Self::default_method() }
    }
}

/// A synthesized or hand-entered CDM controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmController {
    /// Forward denominator `A_c`, zero constant term.
    pub ac: Polynomial,
    /// Feedback numerator `B_c`.
    pub bc: Polynomial,
    /// Reference prefilter `F = P(0)/N(0)`.
    pub f: f64,
    /// `‖target − realized‖₂ / ‖target‖₂`; absent without a target.
    pub residual: Option<f64>,
    pub target: Option<Polynomial>,
    /// `A_c D + B_c N` for the design plant.
    pub realized: Polynomial,
    pub gains: Option<CdmGains>,
    pub verdict: RouthVerdict,
}

impl CdmController {
    /// True when the realized closed loop is Hurwitz. A synthesized
    /// controller with `stable == false` is an unstable design.
    pub fn is_stable(&self) -> bool {
        self.verdict.is_stable()
    }

    /// Wraps fixed polynomials, e.g. a published controller.
    pub fn from_polynomials(plant: &DesignPlant, ac: Polynomial, bc: Polynomial) -> Self {
        let realized = closed_loop(plant, &ac, &bc);
        let n0 = plant.n.coeff(0);
        let f = if n0 != 0.0 { realized.coeff(0) / n0 } else { f64::NAN };
        let verdict = routh(&realized);
        Self { ac, bc, f, residual: None, target: None, realized, gains: None, verdict }
    }

    /// Stability indices and equivalent time constant of the realized loop.
    pub fn realized_characteristics(&self) -> Option<(Vec<f64>, f64)> {
        Some((stability_indices(&self.realized).ok()?, equivalent_tau(&self.realized).ok()?))
    }

    pub fn lipatov(&self) -> bool {
        lipatov_sufficient(&self.realized).unwrap_or(false)
    }
}

/// `A_c D + B_c N`.
pub fn closed_loop(plant: &DesignPlant, ac: &Polynomial, bc: &Polynomial) -> Polynomial {
    poly_add(&poly_mul(ac, &plant.dp), &poly_mul(bc, &plant.n))
}

pub fn synthesize(plant: &DesignPlant, gains: &CdmGains) -> Result<CdmController, CdmError> {
    synthesize_with(plant, gains, &CdmDesign::default())
}

pub fn synthesize_with(
    plant: &DesignPlant,
    gains: &CdmGains,
    design: &CdmDesign,
) -> Result<CdmController, CdmError> {
    gains.validate()?;
    let structure = design.structure;
    let (p, q) = (structure.ac_degree, structure.bc_degree);
    let unknowns = structure.unknowns();
    if unknowns == 0 {
        return Err(CdmError::EmptyStructure);
    }
    let n = structure.closed_loop_degree(plant);
    if gains.gamma.len() + 1 != n {
        return Err(CdmError::GammaCount { expected: n.saturating_sub(1), got: gains.gamma.len() });
    }

    let n0 = plant.n.coeff(0);
    let a0 = gains.k_b0 * n0;
    let target = target_poly(&gains.gamma, gains.tau, a0)?;

    // Column j holds the coefficients contributed by one unit of the j-th
    // unknown: s^j D for l_j, then s^j N for k_j.
    let columns: Vec<Polynomial> = (1..=p)
        .map(|j| plant.dp.shift(j))
        .chain((1..=q).map(|j| plant.n.shift(j)))
        .collect();
    let known = plant.n.scale(gains.k_b0);
    let sylvester = DMatrix::from_fn(n, unknowns, |row, col| columns[col].coeff(row + 1));
    let rhs = DVector::from_fn(n, |row, _| target.coeff(row + 1) - known.coeff(row + 1));

    let solution = match &design.method {
        SynthesisMethod::LeastSquares => solve_least_squares(sylvester, rhs)?,
        SynthesisMethod::RowMatch { rows } => {
            let mut sorted = rows.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if rows.len() != unknowns || sorted.len() != rows.len() || rows.iter().any(|&r| r == 0 || r > n) {
                return Err(CdmError::InvalidRowSelection { rows: rows.clone(), unknowns, degree: n });
            }
            let sub = DMatrix::from_fn(unknowns, unknowns, |i, j| sylvester[(rows[i] - 1, j)]);
            let sub_rhs = DVector::from_fn(unknowns, |i, _| rhs[rows[i] - 1]);
            solve_least_squares(sub, sub_rhs)?
        }
    };

    let mut ac = vec![0.0; p + 1];
    ac[1..].copy_from_slice(&solution.as_slice()[..p]);
    let mut bc = vec![gains.k_b0; q + 1];
    bc[1..].copy_from_slice(&solution.as_slice()[p..]);
    let ac = Polynomial::new(ac);
    let bc = Polynomial::new(bc);
    let realized = closed_loop(plant, &ac, &bc);

    let diff = &target - &realized;
    let norm = |x: &Polynomial| x.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
    let residual = norm(&diff) / norm(&target);

    Ok(CdmController {
        // Equal to a0 / N(0); taken from B_c(0) so no rounding creeps in.
        f: gains.k_b0,
        verdict: routh(&realized),
        ac,
        bc,
        residual: Some(residual),
        target: Some(target),
        realized,
        gains: Some(gains.clone()),
    })
}

fn solve_least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, CdmError> {
    let unknowns = a.ncols();
    let rows = a.nrows();
    // Column equilibration keeps the rank test meaningful when plant
    // coefficients span several decades.
    let scales: Vec<f64> = (0..unknowns)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 { n } else { 1.0 }
        })
        .collect();
    let mut scaled = a;
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-12 * rows.max(unknowns) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < unknowns {
        return Err(CdmError::SingularSystem { rank, unknowns });
    }
    let x = svd.solve(&b, tol).map_err(|_| CdmError::SingularSystem { rank, unknowns })?;
    Ok(DVector::from_iterator(unknowns, x.iter().zip(&scales).map(|(v, s)| v / s)))
}

/// SISO state-space realization `ẋ = A x + B y`, `v = C x + D y`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    /// Row-major `order × order`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// Largest eigenvalue magnitude of `A`.
    pub fn spectral_radius(&self) -> f64 {
        let m = self.order();
        if m == 0 {
            return 0.0;
        }
        let a = DMatrix::from_row_slice(m, m, &self.a);
        a.complex_eigenvalues().iter().fold(0.0_f64, |r, z| r.max(z.norm()))
    }

    /// Writes `A x + B y` into `dx`.
    #[inline]
    pub fn derivative(&self, x: &[f64], y: f64, dx: &mut [f64]) {
        let m = self.order();
        // Every bundled controller has order 2; unrolled, it is the
        // simulator's hot path.
        if let ([a0, a1, a2, a3], [b0, b1], [x0, x1], [d0, d1]) = (&self.a[..], &self.b[..], x, &mut *dx) {
            *d0 = a0 * x0 + a1 * x1 + b0 * y;
            *d1 = a2 * x0 + a3 * x1 + b1 * y;
            return;
        }
        for i in 0..m {
            let row = &self.a[i * m..(i + 1) * m];
            dx[i] = row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b[i] * y;
        }
    }

    #[inline]
    pub fn output(&self, x: &[f64], y: f64) -> f64 {
        if let ([c0, c1], [x0, x1]) = (&self.c[..], x) {
            return c0 * x0 + c1 * x1 + self.d * y;
        }
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * y
    }
}

/// Controllable canonical realization of `num(s)/den(s)`.
pub fn realize(num: &Polynomial, den: &Polynomial) -> Result<StateSpace, CdmError> {
    let m = den.degree();
    if den.is_zero() || (!num.is_zero() && num.degree() > m) {
        return Err(CdmError::ImproperController { num: num.degree(), den: m });
    }
    let lead = den.leading();
    let alpha: Vec<f64> = (0..m).map(|i| den.coeff(i) / lead).collect();
    let beta: Vec<f64> = (0..=m).map(|i| num.coeff(i) / lead).collect();
    let d = beta[m];
    let c: Vec<f64> = (0..m).map(|i| beta[i] - d * alpha[i]).collect();
    let mut a = vec![0.0; m * m];
    for i in 0..m.saturating_sub(1) {
        a[i * m + i + 1] = 1.0;
    }
    if m > 0 {
        for j in 0..m {
            a[(m - 1) * m + j] = -alpha[j];
        }
    }
    let mut b = vec![0.0; m];
    if m > 0 {
        b[m - 1] = 1.0;
    }
    Ok(StateSpace { a, b, c, d })
}

/// Realization of `B_c / A_c`; the control signal is `u = −v`.
pub fn controller_to_statespace(ctrl: &CdmController) -> Result<StateSpace, CdmError> {
    realize(&ctrl.bc, &ctrl.ac)
}
