//! Images on a regular grid and the discrete differential operators.
//!
//! The gradient is the forward difference with zero flux across the last
//! row and column; the divergence is its exact negative adjoint (backward
//! differences). Both stencils are dimensionless per-pixel differences. The
//! grid spacing `h` enters only through the norms: total variation is
//! weighted by `h`, the L¹/L² quantities by the pixel area `h²`. With this
//! convention the discrete quantities converge to their continuum values
//! (perimeter of a disk, area of a set) under refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular pixel grid with physical geometry.
///
/// `origin` is the physical position of the *center* of pixel (0, 0);
/// column index grows along x₁, row index along x₂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn new(width: usize, height: usize, spacing: f64, origin: [f64; 2]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid must be non-empty, got {width}x{height}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(Grid { width, height, spacing, origin })
    }

    /// Unit-spaced grid with the origin at zero.
    pub fn pixels(width: usize, height: usize) -> Result<Self> {
        Grid::new(width, height, 1.0, [0.0, 0.0])
    }

    /// Cell-centered grid covering `[x0, x1] × [y0, y0 + height·h]` with
    /// `h = (x1 - x0) / width`.
    pub fn covering(width: usize, height: usize, domain: [f64; 4]) -> Result<Self> {
        let [x0, y0, x1, y1] = domain;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::invalid(format!("empty domain {domain:?}")));
        }
        let h = (x1 - x0) / width as f64;
        let hy = (y1 - y0) / height as f64;
        if (h - hy).abs() > 1e-9 * h {
            return Err(Error::invalid(format!(
                "domain {domain:?} on {width}x{height} gives non-square pixels ({h} vs {hy})"
            )));
        }
        Grid::new(width, height, h, [x0 + 0.5 * h, y0 + 0.5 * h])
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Physical coordinates of a pixel center.
    #[inline]
    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin[0] + col as f64 * self.spacing,
            self.origin[1] + row as f64 * self.spacing,
        )
    }

    /// Physical extent `[x0, y0, x1, y1]` of the pixel cells.
    pub fn domain(&self) -> [f64; 4] {
        let h = self.spacing;
        [
            self.origin[0] - 0.5 * h,
            self.origin[1] - 0.5 * h,
            self.origin[0] + (self.width as f64 - 0.5) * h,
            self.origin[1] + (self.height as f64 - 0.5) * h,
        ]
    }

    /// The grid grown by a one-pixel ring on every side.
    pub fn padded(&self) -> Grid {
        Grid {
            width: self.width + 2,
            height: self.height + 2,
            spacing: self.spacing,
            origin: [self.origin[0] - self.spacing, self.origin[1] - self.spacing],
        }
    }

    pub fn matches(&self, other: &Grid) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing.max(other.spacing)
            && self
                .origin
                .iter()
                .zip(other.origin.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-9 * self.spacing)
    }

    pub fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch { left: self.describe(), right: other.describe() })
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{}x{} (h={}, origin=({}, {}))",
            self.width, self.height, self.spacing, self.origin[0], self.origin[1]
        )
    }
}

/// Real scalar field on a [`Grid`], stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    grid: Grid,
    data: Vec<f64>,
}

impl Image {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} values for a {}x{} grid",
                data.len(),
                grid.width,
                grid.height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at pixel {i}")));
        }
        Ok(Image { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Image { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Image { grid, data: vec![value; grid.len()] }
    }

    /// Samples `f(x, y)` at every pixel center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                let (x, y) = grid.center(col, row);
                data.push(f(x, y));
            }
        }
        Image { grid, data }
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Image { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.grid.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.grid.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    pub fn zip_with(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.grid.ensure_matches(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Image { grid: self.grid, data })
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.grid.ensure_matches(&other.grid)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn subtract_mean(&self) -> Image {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy with a zero ring of one pixel around it (see [`Grid::padded`]).
    pub fn zero_padded(&self) -> Image {
        let g = self.grid.padded();
        let mut data = vec![0.0; g.len()];
        for row in 0..self.grid.height {
            let dst = (row + 1) * g.width + 1;
            let src = row * self.grid.width;
            data[dst..dst + self.grid.width].copy_from_slice(&self.data[src..src + self.grid.width]);
        }
        Image { grid: g, data }
    }

    /// Inverse of [`Image::zero_padded`]: drops the outer ring.
    pub fn cropped(&self) -> Image {
        let w = self.grid.width - 2;
        let h = self.grid.height - 2;
        let grid = Grid {
            width: w,
            height: h,
            spacing: self.grid.spacing,
            origin: [self.grid.origin[0] + self.grid.spacing, self.grid.origin[1] + self.grid.spacing],
        };
        let mut data = Vec::with_capacity(w * h);
        for row in 0..h {
            let src = (row + 1) * self.grid.width + 1;
            data.extend_from_slice(&self.data[src..src + w]);
        }
        Image { grid, data }
    }
}

/// Vector field `(g₁, g₂)` on a grid; `g₁` is the x₁ (column) component.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField {
    grid: Grid,
    pub(crate) gx: Vec<f64>,
    pub(crate) gy: Vec<f64>,
}

impl DualField {
    pub fn zeros(grid: Grid) -> Self {
        DualField { grid, gx: vec![0.0; grid.len()], gy: vec![0.0; grid.len()] }
    }

    pub fn new(grid: Grid, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        if gx.len() != grid.len() || gy.len() != grid.len() {
            return Err(Error::invalid("dual field components do not match the grid"));
        }
        Ok(DualField { grid, gx, gy })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> (f64, f64) {
        let i = row * self.grid.width + col;
        (self.gx[i], self.gy[i])
    }

    /// `max |g|` over the grid (pointwise Euclidean modulus).
    pub fn max_modulus(&self) -> f64 {
        self.gx
            .iter()
            .zip(&self.gy)
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn scaled(&self, factor: f64) -> DualField {
        DualField {
            grid: self.grid,
            gx: self.gx.iter().map(|v| v * factor).collect(),
            gy: self.gy.iter().map(|v| v * factor).collect(),
        }
    }

    /// Plain pointwise sum `Σ (g₁ q₁ + g₂ q₂)` without area weight.
    pub fn dot(&self, other: &DualField) -> Result<f64> {
        self.grid.ensure_matches(&other.grid)?;
        let sx: f64 = self.gx.iter().zip(&other.gx).map(|(a, b)| a * b).sum();
        let sy: f64 = self.gy.iter().zip(&other.gy).map(|(a, b)| a * b).sum();
        Ok(sx + sy)
    }
}

// Raw kernels shared with the projector. `w`/`h` are the grid dimensions.

pub(crate) fn gradient_into(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for row in 0..h {
        let r = row * w;
        for col in 0..w - 1 {
            gx[r + col] = u[r + col + 1] - u[r + col];
        }
        gx[r + w - 1] = 0.0;
        if row + 1 < h {
            for col in 0..w {
                gy[r + col] = u[r + w + col] - u[r + col];
            }
        } else {
            gy[r..r + w].fill(0.0);
        }
    }
}

pub(crate) fn divergence_into(gx: &[f64], gy: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for row in 0..h {
        let r = row * w;
        for col in 0..w {
            let i = r + col;
            let mut d = 0.0;
            if col + 1 < w {
                d += gx[i];
            }
            if col > 0 {
                d -= gx[i - 1];
            }
            if row + 1 < h {
                d += gy[i];
            }
            if row > 0 {
                d -= gy[i - w];
            }
            out[i] = d;
        }
    }
}

/// Forward-difference gradient with zero flux across the far edges.
pub fn gradient(u: &Image) -> DualField {
    let g = *u.grid();
    let mut field = DualField::zeros(g);
    gradient_into(u.data(), g.width, g.height, &mut field.gx, &mut field.gy);
    field
}

/// Backward-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence(g: &DualField) -> Image {
    let grid = *g.grid();
    let mut out = vec![0.0; grid.len()];
    divergence_into(&g.gx, &g.gy, grid.width, grid.height, &mut out);
    Image::from_raw(grid, out)
}

/// Isotropic total variation `Σ |∇u| · h`.
pub fn tv_norm(u: &Image) -> f64 {
    let g = u.grid();
    let (w, h) = (g.width, g.height);
    let d = u.data();
    let mut acc = 0.0;
    for row in 0..h {
        let r = row * w;
        for col in 0..w {
            let i = r + col;
            let dx = if col + 1 < w { d[i + 1] - d[i] } else { 0.0 };
            let dy = if row + 1 < h { d[i + w] - d[i] } else { 0.0 };
            acc += (dx * dx + dy * dy).sqrt();
        }
    }
    acc * g.spacing
}

pub fn l2_norm_sq(u: &Image) -> f64 {
    u.data().iter().map(|v| v * v).sum::<f64>() * u.grid().pixel_area()
}

pub fn l2_norm(u: &Image) -> f64 {
    l2_norm_sq(u).sqrt()
}

pub fn l2_inner(u: &Image, v: &Image) -> Result<f64> {
    u.grid().ensure_matches(v.grid())?;
    let s: f64 = u.data().iter().zip(v.data()).map(|(a, b)| a * b).sum();
    Ok(s * u.grid().pixel_area())
}

pub fn l1_norm(u: &Image) -> f64 {
    u.data().iter().map(|v| v.abs()).sum::<f64>() * u.grid().pixel_area()
}

/// How the finite image sits in the plane.
///
/// `Neumann` is the reflecting boundary of the standard dual scheme: no flux
/// leaves the image, so only zero-mean images have a finite G-norm.
/// `ZeroExtended` treats the image as a compactly supported function on the
/// whole plane (zero outside the window): jumps to zero at the window edge
/// count in the total variation and flux may leave through the border.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Neumann,
    ZeroExtended,
}

impl Boundary {
    /// Grid on which the stencils of this boundary act.
    pub fn work_grid(self, grid: &Grid) -> Grid {
        match self {
            Boundary::Neumann => *grid,
            Boundary::ZeroExtended => grid.padded(),
        }
    }

    pub fn lift(self, u: &Image) -> Image {
        match self {
            Boundary::Neumann => u.clone(),
            Boundary::ZeroExtended => u.zero_padded(),
        }
    }

    pub fn restrict(self, work: &Image) -> Image {
        match self {
            Boundary::Neumann => work.clone(),
            Boundary::ZeroExtended => work.cropped(),
        }
    }

    pub fn gradient(self, u: &Image) -> DualField {
        gradient(&self.lift(u))
    }

    /// Negative adjoint of [`Boundary::gradient`]; `g` lives on the work grid.
    pub fn divergence(self, g: &DualField) -> Image {
        self.restrict(&divergence(g))
    }

    pub fn tv_norm(self, u: &Image) -> f64 {
        match self {
            Boundary::Neumann => tv_norm(u),
            Boundary::ZeroExtended => tv_norm(&u.zero_padded()),
        }
    }

    /// Whether the G-norm requires a zero-mean argument.
    pub fn needs_zero_mean(self) -> bool {
        matches!(self, Boundary::Neumann)
    }
}

/// Which BV quantity theorem checks use: `‖·‖_{L¹} + J(·)` or `J` alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvNorm {
    #[default]
    Full,
    Seminorm,
}

impl BvNorm {
    pub fn eval(self, u: &Image, boundary: Boundary) -> f64 {
        let tv = boundary.tv_norm(u);
        match self {
            BvNorm::Full => l1_norm(u) + tv,
            BvNorm::Seminorm => tv,
        }
    }
}
