use crate::error::{Error, Result};

/// Axis-aligned rectangle `(x0, y0, x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
}

/// Uniform space-time grid on `Ω × [0, T]` with square cells.
///
/// Nodes are indexed `(i, j)` with `x_i = x0 + i·h`, `y_j = y0 + j·h`, stored
/// row-major with `i` fastest. Time levels are `t_k = k·tau`, `k = 0..nt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    nt: usize,
    h: f64,
    tau: f64,
    domain: Rect,
}

impl Grid {
    /// Builds a grid over `domain` with `nx × ny` nodes and `nt` time levels
    /// spanning the horizon `horizon = (nt − 1)·tau`.
    pub fn new(nx: usize, ny: usize, nt: usize, horizon: f64, domain: Rect) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per axis, got {nx}×{ny}"
            )));
        }
        if nt < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 time levels, got {nt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let lx = domain.x1 - domain.x0;
        let ly = domain.y1 - domain.y0;
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!("degenerate domain {domain:?}")));
        }
        let h = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;
        if (h - hy).abs() > 4.0 * f64::EPSILON * h {
            return Err(Error::InvalidGrid(format!(
                "cells are not square: hx = {h}, hy = {hy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            nt,
            h,
            tau: horizon / (nt - 1) as f64,
            domain,
        })
    }

    /// `n × n` nodes on the unit square with `nt` levels up to `horizon`.
    pub fn unit_square(n: usize, nt: usize, horizon: f64) -> Result<Self> {
        Self::new(n, n, nt, horizon, Rect::UNIT)
    }

    /// Unit square with the parabolic time step `tau ≈ h²`.
    pub fn unit_square_parabolic(n: usize, horizon: f64) -> Result<Self> {
        Self::parabolic(n, n, horizon, Rect::UNIT)
    }

    /// Grid whose number of steps is `ceil(horizon / h²)`, so that `tau ≤ h²`
    /// and `T` is hit exactly.
    pub fn parabolic(nx: usize, ny: usize, horizon: f64, domain: Rect) -> Result<Self> {
        if nx < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes per axis, got {nx}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let h = (domain.x1 - domain.x0) / (nx - 1) as f64;
        let steps = (horizon / (h * h) - 1e-9).ceil().max(1.0);
        if !(steps < 1e7) {
            return Err(Error::InvalidGrid(format!("{steps} time steps requested")));
        }
        Self::new(nx, ny, steps as usize + 1, horizon, domain)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn domain(&self) -> Rect {
        self.domain
    }
    pub fn horizon(&self) -> f64 {
        self.tau * (self.nt - 1) as f64
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cells(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }
    pub fn interior_nodes(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    pub fn x(&self, i: usize) -> f64 {
        self.domain.x0 + i as f64 * self.h
    }
    pub fn y(&self, j: usize) -> f64 {
        self.domain.y0 + j as f64 * self.h
    }
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Area weight of node `(i, j)` in the node-centred quadrature: `h²`
    /// inside, halved on edges and quartered at corners.
    #[inline]
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i + 1 == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j + 1 == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.h * self.h
    }

    pub fn is_unit_square(&self) -> bool {
        self.domain == Rect::UNIT
    }

    /// Same spatial layout and time levels.
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nt == other.nt
            && self.h == other.h
            && self.tau == other.tau
            && self.domain == other.domain
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "grids differ: {}×{}×{} vs {}×{}×{}",
                self.nx, self.ny, self.nt, other.nx, other.ny, other.nt
            )))
        }
    }
}
