//! Uniform Cartesian grid on the unit square and the matrix-free five-point
//! negative Laplacian with homogeneous Dirichlet boundary conditions.
//!
//! Only interior nodes carry unknowns. Node `(i, j)` with `1 <= i, j <= m`
//! sits at `(i h, j h)` and is stored at linear index `(j - 1) m + (i - 1)`,
//! so the `x1` index varies fastest.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 subintervals per dimension, got n = {0}")]
    TooCoarse(usize),
    #[error("grid function has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid mismatch: n = {left} vs n = {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("non-finite value {value} at interior node ({i}, {j})")]
    NonFinite { i: usize, j: usize, value: f64 },
}

/// Uniform grid with `n` subintervals per dimension on `(0, 1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::TooCoarse(n));
        }
        Ok(Grid { n })
    }

    /// Number of subintervals per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width `1 / n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Interior nodes per dimension, `n - 1`.
    pub fn m(&self) -> usize {
        self.n - 1
    }

    /// Number of interior nodes, `m^2`.
    pub fn len(&self) -> usize {
        self.m() * self.m()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear index of interior node `(i, j)`, both 1-based.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.m()).contains(&i) && (1..=self.m()).contains(&j));
        (j - 1) * self.m() + (i - 1)
    }

    /// Inverse of [`Grid::index`].
    pub fn node(&self, idx: usize) -> (usize, usize) {
        let m = self.m();
        (idx % m + 1, idx / m + 1)
    }

    /// Coordinates `(i h, j h)` of interior node `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        (i as f64 * h, j as f64 * h)
    }

    /// Applies `-Δ_h` to `v`, writing into `out`. Both slices have length `m^2`.
    pub fn neg_laplacian_into(&self, v: &[f64], out: &mut [f64]) {
        let m = self.m();
        assert_eq!(v.len(), m * m);
        assert_eq!(out.len(), m * m);
        let inv_h2 = (self.n * self.n) as f64;
        for j in 0..m {
            let row = j * m;
            for i in 0..m {
                let k = row + i;
                let mut acc = 4.0 * v[k];
                if i > 0 {
                    acc -= v[k - 1];
                }
                if i + 1 < m {
                    acc -= v[k + 1];
                }
                if j > 0 {
                    acc -= v[k - m];
                }
                if j + 1 < m {
                    acc -= v[k + m];
                }
                out[k] = acc * inv_h2;
            }
        }
    }
}

/// Values of one scalar field on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = grid.node(k);
            return Err(GridError::NonFinite {
                i,
                j,
                value: values[k],
            });
        }
        Ok(GridFunction { grid, values })
    }

    /// Evaluates `phi` at every interior node.
    pub fn sample<F>(grid: Grid, phi: F) -> Result<Self, GridError>
    where
        F: Fn(f64, f64) -> f64,
    {
        let m = grid.m();
        let mut values = Vec::with_capacity(grid.len());
        for j in 1..=m {
            for i in 1..=m {
                let (x1, x2) = grid.coords(i, j);
                let value = phi(x1, x2);
                if !value.is_finite() {
                    return Err(GridError::NonFinite { i, j, value });
                }
                values.push(value);
            }
        }
        Ok(GridFunction { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at interior node `(i, j)`, 1-based.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn check_grid(&self, grid: Grid) -> Result<(), GridError> {
        if self.grid != grid {
            return Err(GridError::GridMismatch {
                left: self.grid.n(),
                right: grid.n(),
            });
        }
        Ok(())
    }
}

/// `-Δ_h v` with zero Dirichlet data. No matrix is assembled.
pub fn apply_neg_laplacian(grid: Grid, v: &GridFunction) -> Result<GridFunction, GridError> {
    v.check_grid(grid)?;
    let mut out = vec![0.0; grid.len()];
    grid.neg_laplacian_into(&v.values, &mut out);
    Ok(GridFunction { grid, values: out })
}

/// Euclidean inner product. Four interleaved partial sums in a fixed order,
/// so the result is deterministic for a given length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(0.0, |s, (x, y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Max norm.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Discrete L2 norm `h * ||v||_2`, used only for reporting discretization error.
pub fn norm_weighted(grid: Grid, v: &[f64]) -> f64 {
    grid.h() * norm2(v)
}
