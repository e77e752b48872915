//! The discrete optimality system.
//!
//! The unknown is `z = [y; p]` (state and adjoint on the interior nodes). The
//! control is eliminated through the pointwise projection
//! `u = Φ(p / α) = max(u_a, min(u_b, p / α))`, which leaves the nonsmooth
//! residual
//!
//! ```text
//! F(y, p) = [ -Δ_h y + S(y) - Φ(p/α) - f  ]
//!           [ -Δ_h p + S'(y) p + y - y_d  ]
//! ```
//!
//! Its slanting function `G(z)` replaces the Jacobian, using the indicator of
//! the inactive set `u_a < p/α < u_b` as the derivative of `Φ`. Both `G` and
//! `Gᵀ` are applied matrix-free through [`Slant`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{dot, norm2, Grid, GridError, GridFunction};
use crate::krylov::LinearOperator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid bounds [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("regularization parameter must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("residual is not finite (first bad entry at index {index})")]
    NonFiniteResidual { index: usize },
}

/// The semilinear term `S` with its first two derivatives.
pub trait Nonlinearity: Send + Sync {
    fn value(&self, y: f64) -> f64;
    fn derivative(&self, y: f64) -> f64;
    fn second_derivative(&self, y: f64) -> f64;
    fn label(&self) -> &str;
}

/// `S(y) = y³`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cubic;

impl Nonlinearity for Cubic {
    fn value(&self, y: f64) -> f64 {
        y * y * y
    }
    fn derivative(&self, y: f64) -> f64 {
        3.0 * y * y
    }
    fn second_derivative(&self, y: f64) -> f64 {
        6.0 * y
    }
    fn label(&self) -> &str {
        "cubic"
    }
}

/// `S(y) = y³ + y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicPlusLinear;

impl Nonlinearity for CubicPlusLinear {
    fn value(&self, y: f64) -> f64 {
        y * y * y + y
    }
    fn derivative(&self, y: f64) -> f64 {
        3.0 * y * y + 1.0
    }
    fn second_derivative(&self, y: f64) -> f64 {
        6.0 * y
    }
    fn label(&self) -> &str {
        "cubic_plus_linear"
    }
}

/// Pointwise control bounds `u_a <= u <= u_b`; either side may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    lower: f64,
    upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ProblemError> {
        let ok = !lower.is_nan()
            && !upper.is_nan()
            && lower <= upper
            && lower < f64::INFINITY
            && upper > f64::NEG_INFINITY;
        if !ok {
            return Err(ProblemError::InvalidBounds { lower, upper });
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded() -> Self {
        Bounds {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `max(lower, min(upper, v))`.
    pub fn clamp(&self, v: f64) -> f64 {
        self.lower.max(self.upper.min(v))
    }

    /// 1 strictly inside the box, 0 on or outside it.
    pub fn inactive_indicator(&self, v: f64) -> f64 {
        if self.lower < v && v < self.upper {
            1.0
        } else {
            0.0
        }
    }
}

/// One discretized optimal control problem.
#[derive(Clone)]
pub struct ProblemInstance {
    grid: Grid,
    nonlinearity: Arc<dyn Nonlinearity>,
    bounds: Bounds,
    alpha: f64,
    f: GridFunction,
    yd: GridFunction,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ProblemInstance")
            .field("n", &self.grid.n())
            .field("nonlinearity", &self.nonlinearity.label())
            .field("bounds", &self.bounds)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl ProblemInstance {
    pub fn new(
        grid: Grid,
        nonlinearity: Arc<dyn Nonlinearity>,
        bounds: Bounds,
        alpha: f64,
        f: GridFunction,
        yd: GridFunction,
    ) -> Result<Self, ProblemError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ProblemError::InvalidAlpha(alpha));
        }
        f.check_grid(grid)?;
        yd.check_grid(grid)?;
        Ok(ProblemInstance {
            grid,
            nonlinearity,
            bounds,
            alpha,
            f,
            yd,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn nonlinearity(&self) -> &dyn Nonlinearity {
        self.nonlinearity.as_ref()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f(&self) -> &GridFunction {
        &self.f
    }

    pub fn yd(&self) -> &GridFunction {
        &self.yd
    }

    /// Number of unknowns, `2 m^2`.
    pub fn dim(&self) -> usize {
        2 * self.grid.len()
    }

    fn check_len(&self, v: &[f64]) -> Result<(), ProblemError> {
        if v.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// The stacked unknown `z = [y; p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    grid: Grid,
    z: Vec<f64>,
}

impl State {
    pub fn zeros(grid: Grid) -> Self {
        State {
            grid,
            z: vec![0.0; 2 * grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        State {
            grid,
            z: vec![c; 2 * grid.len()],
        }
    }

    pub fn from_parts(y: &GridFunction, p: &GridFunction) -> Result<Self, ProblemError> {
        let grid = y.grid();
        p.check_grid(grid)?;
        let mut z = Vec::with_capacity(2 * grid.len());
        z.extend_from_slice(y.values());
        z.extend_from_slice(p.values());
        Ok(State { grid, z })
    }

    pub fn from_vec(grid: Grid, z: Vec<f64>) -> Result<Self, ProblemError> {
        if z.len() != 2 * grid.len() {
            return Err(ProblemError::DimensionMismatch {
                expected: 2 * grid.len(),
                got: z.len(),
            });
        }
        Ok(State { grid, z })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.z[..self.grid.len()]
    }

    pub fn p(&self) -> &[f64] {
        &self.z[self.grid.len()..]
    }

    pub fn y_function(&self) -> GridFunction {
        GridFunction::from_values(self.grid, self.y().to_vec()).expect("state is finite")
    }

    pub fn p_function(&self) -> GridFunction {
        GridFunction::from_values(self.grid, self.p().to_vec()).expect("state is finite")
    }

    /// `self + step * d`.
    pub fn step(&self, step: f64, d: &[f64]) -> State {
        debug_assert_eq!(d.len(), self.z.len());
        State {
            grid: self.grid,
            z: self.z.iter().zip(d).map(|(z, d)| z + step * d).collect(),
        }
    }
}

/// `Φ(p / α)` elementwise.
pub fn project_control(p: &GridFunction, alpha: f64, bounds: Bounds) -> GridFunction {
    let values = p.values().iter().map(|&v| bounds.clamp(v / alpha)).collect();
    GridFunction::from_values(p.grid(), values).expect("projection of finite values is finite")
}

/// The chosen element of `∂Φ(p / α)`: 1 on the inactive set, 0 elsewhere.
pub fn projection_mask(p: &GridFunction, alpha: f64, bounds: Bounds) -> GridFunction {
    let values = p
        .values()
        .iter()
        .map(|&v| bounds.inactive_indicator(v / alpha))
        .collect();
    GridFunction::from_values(p.grid(), values).expect("mask is finite")
}

/// `F(z)` as a flat vector `[r_y; r_p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    values: Vec<f64>,
}

impl Residual {
    #[cfg(test)]
    pub(crate) fn from_values(values: Vec<f64>) -> Self {
        Residual { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn ry(&self) -> &[f64] {
        &self.values[..self.values.len() / 2]
    }

    pub fn rp(&self) -> &[f64] {
        &self.values[self.values.len() / 2..]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn norm_ry(&self) -> f64 {
        norm2(self.ry())
    }

    pub fn norm_rp(&self) -> f64 {
        norm2(self.rp())
    }

    /// `½ ||F||²`.
    pub fn merit(&self) -> f64 {
        0.5 * dot(&self.values, &self.values)
    }
}

/// Evaluates `F(z)`. A non-finite entry (e.g. overflow of `y³`) is reported
/// as [`ProblemError::NonFiniteResidual`].
pub fn residual(inst: &ProblemInstance, z: &State) -> Result<Residual, ProblemError> {
    inst.check_len(z.as_slice())?;
    let grid = inst.grid;
    let len = grid.len();
    let (y, p) = (z.y(), z.p());
    let s = inst.nonlinearity();
    let bounds = inst.bounds;
    let alpha = inst.alpha;

    let mut values = vec![0.0; 2 * len];
    {
        let (ry, rp) = values.split_at_mut(len);
        grid.neg_laplacian_into(y, ry);
        grid.neg_laplacian_into(p, rp);
        let f = inst.f.values();
        let yd = inst.yd.values();
        for k in 0..len {
            ry[k] += s.value(y[k]) - bounds.clamp(p[k] / alpha) - f[k];
            rp[k] += s.derivative(y[k]) * p[k] + y[k] - yd[k];
        }
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(ProblemError::NonFiniteResidual { index });
    }
    Ok(Residual { values })
}

/// `½ ||F(z)||²`.
pub fn merit(inst: &ProblemInstance, z: &State) -> Result<f64, ProblemError> {
    Ok(residual(inst, z)?.merit())
}

/// The slanting function `G(z)` frozen at one point, as a matrix-free operator.
///
/// ```text
/// G(z) = [ -Δ_h + diag(S'(y))      -(1/α) diag(mask)     ]
///        [ I + diag(S''(y) ∘ p)    -Δ_h + diag(S'(y))    ]
/// ```
#[derive(Debug, Clone)]
pub struct Slant {
    grid: Grid,
    /// `S'(y)`
    s1: Vec<f64>,
    /// `S''(y) ∘ p`
    s2p: Vec<f64>,
    /// `mask / α`
    mask_scaled: Vec<f64>,
}

impl Slant {
    pub fn at(inst: &ProblemInstance, z: &State) -> Result<Self, ProblemError> {
        inst.check_len(z.as_slice())?;
        let s = inst.nonlinearity();
        let (y, p) = (z.y(), z.p());
        let inv_alpha = 1.0 / inst.alpha;
        Ok(Slant {
            grid: inst.grid,
            s1: y.iter().map(|&v| s.derivative(v)).collect(),
            s2p: y
                .iter()
                .zip(p)
                .map(|(&yv, &pv)| s.second_derivative(yv) * pv)
                .collect(),
            mask_scaled: p
                .iter()
                .map(|&pv| inst.bounds.inactive_indicator(pv * inv_alpha) * inv_alpha)
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.grid.len()
    }

    /// `out = G d`.
    pub fn apply_into(&self, d: &[f64], out: &mut [f64]) {
        let len = self.grid.len();
        assert_eq!(d.len(), 2 * len);
        assert_eq!(out.len(), 2 * len);
        let (dy, dp) = d.split_at(len);
        let (top, bottom) = out.split_at_mut(len);
        self.grid.neg_laplacian_into(dy, top);
        self.grid.neg_laplacian_into(dp, bottom);
        for k in 0..len {
            top[k] += self.s1[k] * dy[k] - self.mask_scaled[k] * dp[k];
            bottom[k] += dy[k] + self.s2p[k] * dy[k] + self.s1[k] * dp[k];
        }
    }

    /// `out = Gᵀ w`. Uses the symmetry of `-Δ_h`.
    pub fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]) {
        let len = self.grid.len();
        assert_eq!(w.len(), 2 * len);
        assert_eq!(out.len(), 2 * len);
        let (wy, wp) = w.split_at(len);
        let (top, bottom) = out.split_at_mut(len);
        self.grid.neg_laplacian_into(wy, top);
        self.grid.neg_laplacian_into(wp, bottom);
        for k in 0..len {
            top[k] += self.s1[k] * wy[k] + (1.0 + self.s2p[k]) * wp[k];
            bottom[k] += -self.mask_scaled[k] * wy[k] + self.s1[k] * wp[k];
        }
    }

    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.len()];
        self.apply_into(d, &mut out);
        out
    }

    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        self.apply_transpose_into(w, &mut out);
        out
    }
}

impl LinearOperator for Slant {
    fn dim(&self) -> usize {
        Slant::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }
}

/// `G(z) d`.
pub fn apply_slant(inst: &ProblemInstance, z: &State, d: &[f64]) -> Result<Vec<f64>, ProblemError> {
    inst.check_len(d)?;
    Ok(Slant::at(inst, z)?.apply(d))
}

/// `G(z)ᵀ w`.
pub fn apply_slant_transpose(
    inst: &ProblemInstance,
    z: &State,
    w: &[f64],
) -> Result<Vec<f64>, ProblemError> {
    inst.check_len(w)?;
    Ok(Slant::at(inst, z)?.apply_transpose(w))
}

/// `∇Q(z) = G(z)ᵀ F(z)`.
pub fn merit_gradient(inst: &ProblemInstance, z: &State) -> Result<Vec<f64>, ProblemError> {
    let r = residual(inst, z)?;
    Ok(Slant::at(inst, z)?.apply_transpose(r.as_slice()))
}
