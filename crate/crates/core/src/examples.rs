//! The two benchmark problems on the unit square, and control error metrics.
//!
//! Example 1: `S(y) = y³`, no control bounds, `z = sin(πx₁) sin(πx₂)`, exact
//! control `u* = z e^{πx₁}` for `α = 10⁻³`. The tracking target is
//!
//! ```text
//! y_d = z + π² z e^{πx₁}/10³ - 2π² cos(πx₁) sin(πx₂) e^{πx₁}/10³ + 3 z³ e^{πx₁}/10³
//! ```
//!
//! which makes `p* = z e^{πx₁}/10³` and `y* = z`. The state equation then
//! requires `f = 2π² z + z³ - z e^{πx₁}`; [`example1`] uses that forcing.
//! The variant with forcing `2π² z + (π²/10³) z - z e^{πx₁}` is available as
//! [`example1_printed_forcing`]; its discrete solutions do not approach `u*`,
//! so it carries no exact control.
//!
//! Example 2: `S(y) = y³ + y`, no bounds, `f = 0`,
//! `y_d = sin(2πx₁) sin(2πx₂) e^{2x₁} / 6`. No closed-form solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{norm2, norm_inf, Grid, GridError, GridFunction};
use crate::problem::{Bounds, Cubic, CubicPlusLinear, ProblemError, ProblemInstance};

/// `α` for which the Example 1 data are constructed.
pub const EXAMPLE1_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ExampleCase {
    pub name: String,
    pub instance: ProblemInstance,
    /// Known optimal control, when the data admit one.
    pub exact_control: Option<GridFunction>,
}

fn bump(x1: f64, x2: f64) -> f64 {
    (PI * x1).sin() * (PI * x2).sin()
}

/// Exact optimal control of Example 1, `z e^{πx₁}`.
pub fn example1_exact_control(x1: f64, x2: f64) -> f64 {
    bump(x1, x2) * (PI * x1).exp()
}

/// Example 1 forcing `2π² z + z³ - z e^{πx₁}`.
pub fn example1_forcing(x1: f64, x2: f64) -> f64 {
    let z = bump(x1, x2);
    2.0 * PI * PI * z + z * z * z - z * (PI * x1).exp()
}

/// Example 1 forcing with `(π²/10³) z` in place of `z³`.
pub fn example1_printed_forcing_fn(x1: f64, x2: f64) -> f64 {
    let z = bump(x1, x2);
    2.0 * PI * PI * z + PI * PI / 1e3 * z - z * (PI * x1).exp()
}

/// Example 1 tracking target.
pub fn example1_target(x1: f64, x2: f64) -> f64 {
    let z = bump(x1, x2);
    let e = (PI * x1).exp();
    z + PI * PI * z * e / 1e3 - 2.0 * PI * PI * (PI * x1).cos() * (PI * x2).sin() * e / 1e3
        + 3.0 * z * z * z * e / 1e3
}

/// Example 2 tracking target.
pub fn example2_target(x1: f64, x2: f64) -> f64 {
    (2.0 * PI * x1).sin() * (2.0 * PI * x2).sin() * (2.0 * x1).exp() / 6.0
}

fn build_example1(
    n: usize,
    alpha: f64,
    name: &str,
    forcing: fn(f64, f64) -> f64,
    has_exact: bool,
) -> Result<ExampleCase, ProblemError> {
    let grid = Grid::new(n)?;
    let f = GridFunction::sample(grid, forcing)?;
    let yd = GridFunction::sample(grid, example1_target)?;
    let instance = ProblemInstance::new(grid, Arc::new(Cubic), Bounds::unbounded(), alpha, f, yd)?;
    let exact_control = if has_exact && alpha == EXAMPLE1_ALPHA {
        Some(GridFunction::sample(grid, example1_exact_control)?)
    } else {
        None
    };
    Ok(ExampleCase {
        name: name.to_string(),
        instance,
        exact_control,
    })
}

/// Example 1 on an `n × n` grid. The exact control is attached only for
/// `α = 10⁻³`, the value the data are built for.
pub fn example1(n: usize, alpha: f64) -> Result<ExampleCase, ProblemError> {
    build_example1(n, alpha, "example1", example1_forcing, true)
}

/// Example 1 with the `(π²/10³) z` forcing term.
pub fn example1_printed_forcing(n: usize, alpha: f64) -> Result<ExampleCase, ProblemError> {
    build_example1(n, alpha, "example1-printed", example1_printed_forcing_fn, false)
}

/// Example 2 on an `n × n` grid.
pub fn example2(n: usize, alpha: f64) -> Result<ExampleCase, ProblemError> {
    let grid = Grid::new(n)?;
    let yd = GridFunction::sample(grid, example2_target)?;
    let instance = ProblemInstance::new(
        grid,
        Arc::new(CubicPlusLinear),
        Bounds::unbounded(),
        alpha,
        GridFunction::zeros(grid),
        yd,
    )?;
    Ok(ExampleCase {
        name: "example2".to_string(),
        instance,
        exact_control: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlError {
    pub l2: f64,
    pub linf: f64,
    /// `h · l2`
    pub l2_weighted: f64,
}

pub fn control_error(u_num: &GridFunction, u_exact: &GridFunction) -> Result<ControlError, GridError> {
    u_num.check_grid(u_exact.grid())?;
    let diff: Vec<f64> = u_num
        .values()
        .iter()
        .zip(u_exact.values())
        .map(|(a, b)| a - b)
        .collect();
    let l2 = norm2(&diff);
    Ok(ControlError {
        l2,
        linf: norm_inf(&diff),
        l2_weighted: u_num.grid().h() * l2,
    })
}
