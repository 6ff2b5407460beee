//! Nonlinear projection onto the G-ball and the ROF denoiser built on it.
//!
//! `P_{G_r}(f)` is computed with the semi-implicit dual fixed point
//!
//! ```text
//! pⁿ⁺¹ = (pⁿ + τ ∇(div pⁿ − f/r)) / (1 + τ |∇(div pⁿ − f/r)|)
//! ```
//!
//! started from `p⁰ = 0`, and the projection is `r · div p*`. Every iterate
//! stays in the unit ball pointwise, so `r · div pⁿ` is always an element of
//! the G-ball even before convergence. The radius is given in physical
//! G-norm units and converted to the pixel scale as `r / h`.
//!
//! With `accelerated` set, the same dual problem is solved by a projected
//! gradient method with Nesterov momentum instead, which reaches a given
//! duality gap in far fewer iterations on inputs whose dual solution is a
//! long-range flow (thin or isolated features).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, l2_norm_sq, Boundary, DualField, Grid, Image};
use crate::poisson::{PoissonBc, PoissonSolver};

/// Below this many pixels the row passes run sequentially.
const PARALLEL_MIN_PIXELS: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorParams {
    /// Ball radius in physical G-norm units.
    pub radius: f64,
    /// Fixed-point step τ.
    pub step: f64,
    /// Stop once the max-norm change of the dual field is at most this.
    pub fp_tol: f64,
    pub max_iters: usize,
    pub boundary: Boundary,
    /// Record the ROF energy of every primal iterate.
    pub record_energy: bool,
    /// Initialize from a coarse-to-fine pyramid instead of `p⁰ = 0`.
    pub multilevel: bool,
    /// Use the momentum-accelerated projected gradient iteration.
    #[serde(default)]
    pub accelerated: bool,
}

impl Default for ProjectorParams {
    fn default() -> Self {
        ProjectorParams {
            radius: 1.0,
            step: 0.125,
            fp_tol: 1e-6,
            max_iters: 5000,
            boundary: Boundary::Neumann,
            record_energy: false,
            multilevel: false,
            accelerated: false,
        }
    }
}

impl ProjectorParams {
    pub fn with_radius(radius: f64) -> Self {
        ProjectorParams { radius, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("projector radius must be positive, got {}", self.radius)));
        }
        if !(self.step > 0.0 && self.step <= 0.125) {
            return Err(Error::invalid(format!("step must lie in (0, 1/8], got {}", self.step)));
        }
        if self.fp_tol.is_nan() || self.fp_tol <= 0.0 {
            return Err(Error::invalid(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations_used: usize,
    /// Max-norm change of the dual field in the last iteration.
    pub final_residual: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_history: Option<Vec<f64>>,
}

/// Output of a projection together with the dual field that produced it.
#[derive(Clone, Debug)]
pub struct Projection {
    pub image: Image,
    pub dual: DualField,
    pub trace: SolveTrace,
}

/// Ball radius equivalent to the fidelity weight of `J(u) + λ‖f − u‖²`.
pub fn rof_ball_radius(lambda: f64) -> f64 {
    0.5 / lambda
}

/// `J(u) + λ‖f − u‖²` with the total variation of the chosen boundary.
pub fn rof_energy(f: &Image, u: &Image, lambda: f64, boundary: Boundary) -> Result<f64> {
    let (tv, fid) = rof_energy_terms(f, u, lambda, boundary)?;
    Ok(tv + fid)
}

/// `(J(u), λ‖f − u‖²)`.
pub fn rof_energy_terms(f: &Image, u: &Image, lambda: f64, boundary: Boundary) -> Result<(f64, f64)> {
    let r = f.sub(u)?;
    Ok((boundary.tv_norm(u), lambda * l2_norm_sq(&r)))
}

/// `P_{G_radius}(f)` from a zero dual field (or the coarse-to-fine start
/// when `params.multilevel` is set).
pub fn project_g_ball(f: &Image, params: &ProjectorParams) -> Result<(Image, SolveTrace)> {
    let p = project_g_ball_from(f, params, None)?;
    Ok((p.image, p.trace))
}

/// Like [`project_g_ball`] but warm-started from `init` when given. The
/// initial field is clamped into the unit ball.
pub fn project_g_ball_from(f: &Image, params: &ProjectorParams, init: Option<&DualField>) -> Result<Projection> {
    params.validate()?;
    let mut solver = DualSolver::new(f, params.radius, params.boundary, params.step);
    solver.set_accelerated(params.accelerated);
    match init {
        Some(p0) => solver.set_dual(p0)?,
        None if params.multilevel => {
            let p0 = multilevel_start(f, params)?;
            solver.set_dual(&p0)?;
        }
        None => {}
    }
    let trace = solver.run(params.fp_tol, params.max_iters, params.record_energy);
    Ok(Projection { image: solver.projection(), dual: solver.into_dual(), trace })
}

/// ROF minimizer of `J(u) + λ‖f − u‖²`: `u = f − P_{G_{1/(2λ)}}(f)`, `v = f − u`.
///
/// `params.radius` is ignored; the radius follows from `lambda`.
pub fn rof_solve(f: &Image, lambda: f64, params: &ProjectorParams) -> Result<(Image, Image, SolveTrace)> {
    let (u, v, trace, _) = rof_solve_from(f, lambda, params, None)?;
    Ok((u, v, trace))
}

pub fn rof_solve_from(
    f: &Image,
    lambda: f64,
    params: &ProjectorParams,
    init: Option<&DualField>,
) -> Result<(Image, Image, SolveTrace, DualField)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let p = ProjectorParams { radius: rof_ball_radius(lambda), ..*params };
    let proj = project_g_ball_from(f, &p, init)?;
    let v = proj.image;
    let u = f.sub(&v)?;
    Ok((u, v, proj.trace, proj.dual))
}

/// Iteration state of the dual fixed point on the boundary's work grid.
pub struct DualSolver {
    boundary: Boundary,
    grid: Grid,
    work: Grid,
    /// `f / r_pix` on the work grid (zero on the ring for the zero-extended case).
    f_scaled: Vec<f64>,
    f: Image,
    radius_pix: f64,
    step: f64,
    p: DualField,
    d: Vec<f64>,
    iterations: usize,
    lifter: Option<Lifter>,
    accelerated: bool,
    momentum: Option<Momentum>,
}

/// Extrapolated point and step parameter of the accelerated iteration.
struct Momentum {
    q: DualField,
    t: f64,
}

struct Lifter {
    solver: PoissonSolver,
    inner: Vec<f64>,
    phi: Vec<f64>,
}

/// Result of [`DualSolver::poisson_lift`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lift {
    /// `‖f − r · div p‖` before the lift.
    pub residual: f64,
    /// Max modulus of the exact representative, before clamping.
    pub feasible_max: f64,
    /// `r · feasible_max`: a G-norm of `f` attained by an explicit field,
    /// hence an upper bound on `‖f‖_G`.
    pub feasible_norm: f64,
}

impl DualSolver {
    pub fn new(f: &Image, radius: f64, boundary: Boundary, step: f64) -> Self {
        let grid = *f.grid();
        let work = boundary.work_grid(&grid);
        let radius_pix = radius / grid.spacing;
        let lifted = boundary.lift(f);
        let f_scaled = lifted.data().iter().map(|v| v / radius_pix).collect();
        DualSolver {
            boundary,
            grid,
            work,
            f_scaled,
            f: f.clone(),
            radius_pix,
            step,
            p: DualField::zeros(work),
            d: vec![0.0; work.len()],
            iterations: 0,
            lifter: None,
            accelerated: false,
            momentum: None,
        }
    }

    /// Replaces the image being projected, keeping the dual field.
    pub fn set_input(&mut self, f: &Image) -> Result<()> {
        self.grid.ensure_matches(f.grid())?;
        let lifted = self.boundary.lift(f);
        for (dst, v) in self.f_scaled.iter_mut().zip(lifted.data()) {
            *dst = v / self.radius_pix;
        }
        self.f = f.clone();
        self.momentum = None;
        Ok(())
    }

    /// Resets the dual field to zero.
    pub fn reset_dual(&mut self) {
        self.p = DualField::zeros(self.work);
        self.momentum = None;
    }

    /// Switches between the semi-implicit fixed point and the accelerated
    /// projected gradient iteration.
    pub fn set_accelerated(&mut self, on: bool) {
        self.accelerated = on;
        self.momentum = None;
    }

    /// Physical ball radius.
    pub fn radius(&self) -> f64 {
        self.radius_pix * self.grid.spacing
    }

    /// Changes the ball radius, keeping the current dual field.
    pub fn set_radius(&mut self, radius: f64) {
        let new_pix = radius / self.grid.spacing;
        let factor = self.radius_pix / new_pix;
        for v in &mut self.f_scaled {
            *v *= factor;
        }
        self.radius_pix = new_pix;
        self.momentum = None;
    }

    pub fn work_grid(&self) -> &Grid {
        &self.work
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn dual(&self) -> &DualField {
        &self.p
    }

    pub fn into_dual(self) -> DualField {
        self.p
    }

    /// Replaces the dual iterate, clamping every pixel into the unit ball.
    pub fn set_dual(&mut self, p0: &DualField) -> Result<()> {
        let (w, h) = (self.work.width, self.work.height);
        if p0.grid().width != w || p0.grid().height != h {
            return Err(Error::GridMismatch { left: self.work.describe(), right: p0.grid().describe() });
        }
        self.p = p0.clone();
        for i in 0..self.p.gx.len() {
            let n = (self.p.gx[i] * self.p.gx[i] + self.p.gy[i] * self.p.gy[i]).sqrt();
            if n > 1.0 {
                self.p.gx[i] /= n;
                self.p.gy[i] /= n;
            }
        }
        sanitize(&mut self.p, self.boundary);
        self.momentum = None;
        Ok(())
    }

    /// One iteration of the configured scheme; returns the max-norm change
    /// of the dual field.
    pub fn advance(&mut self) -> f64 {
        if self.accelerated {
            self.accelerated_step()
        } else {
            self.step()
        }
    }

    /// One projected gradient step from the extrapolated point `q`:
    /// `p⁺ = Π(q + τ ∇(div q − f/r))`, `q ← p⁺ + (tₖ − 1)/tₖ₊₁ (p⁺ − p)`.
    pub fn accelerated_step(&mut self) -> f64 {
        let (w, h) = (self.work.width, self.work.height);
        let rows_per_task = (PARALLEL_MIN_PIXELS / w).max(1);
        let parallel = self.work.len() >= 2 * PARALLEL_MIN_PIXELS;
        let mut m = self.momentum.take().unwrap_or_else(|| Momentum { q: self.p.clone(), t: 1.0 });
        std::mem::swap(&mut self.p, &mut m.q);
        self.compute_residual_field();
        std::mem::swap(&mut self.p, &mut m.q);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * m.t * m.t).sqrt());
        let beta = (m.t - 1.0) / t_next;
        let tau = self.step;
        let d = &self.d;
        let update = |block: usize, px: &mut [f64], py: &mut [f64], qx: &mut [f64], qy: &mut [f64]| -> f64 {
            let mut change = 0.0f64;
            let rows = px.chunks_mut(w).zip(py.chunks_mut(w)).zip(qx.chunks_mut(w).zip(qy.chunks_mut(w)));
            for (k, ((px, py), (qx, qy))) in rows.enumerate() {
                let row = block * rows_per_task + k;
                let cur = &d[row * w..(row + 1) * w];
                let next = (row + 1 < h).then(|| &d[(row + 1) * w..(row + 2) * w]);
                change = change.max(momentum_row(cur, next, tau, beta, px, py, qx, qy));
            }
            change
        };
        let chunk = w * rows_per_task;
        let change = if parallel {
            self.p
                .gx
                .par_chunks_mut(chunk)
                .zip(self.p.gy.par_chunks_mut(chunk))
                .zip(m.q.gx.par_chunks_mut(chunk).zip(m.q.gy.par_chunks_mut(chunk)))
                .enumerate()
                .map(|(b, ((px, py), (qx, qy)))| update(b, px, py, qx, qy))
                .reduce(|| 0.0, f64::max)
        } else {
            update(0, &mut self.p.gx, &mut self.p.gy, &mut m.q.gx, &mut m.q.gy)
        };
        m.t = t_next;
        self.momentum = Some(m);
        self.iterations += 1;
        change
    }

    /// One fixed-point iteration; returns the max-norm change of the dual field.
    pub fn step(&mut self) -> f64 {
        let (w, h) = (self.work.width, self.work.height);
        let rows_per_task = (PARALLEL_MIN_PIXELS / w).max(1);
        let parallel = self.work.len() >= 2 * PARALLEL_MIN_PIXELS;
        // Pass 1: d = div p − f/r.
        self.compute_residual_field();
        // Pass 2: semi-implicit update of p from ∇d.
        let tau = self.step;
        let d = &self.d;
        let update = |block: usize, px: &mut [f64], py: &mut [f64]| -> f64 {
            let mut change = 0.0f64;
            for (k, (px, py)) in px.chunks_mut(w).zip(py.chunks_mut(w)).enumerate() {
                let row = block * rows_per_task + k;
                let cur = &d[row * w..(row + 1) * w];
                let next = (row + 1 < h).then(|| &d[(row + 1) * w..(row + 2) * w]);
                change = change.max(update_row(cur, next, tau, px, py));
            }
            change
        };
        let change = if parallel {
            self.p
                .gx
                .par_chunks_mut(w * rows_per_task)
                .zip(self.p.gy.par_chunks_mut(w * rows_per_task))
                .enumerate()
                .map(|(b, (px, py))| update(b, px, py))
                .reduce(|| 0.0, f64::max)
        } else {
            update(0, &mut self.p.gx, &mut self.p.gy)
        };
        self.iterations += 1;
        change
    }

    /// `d = div p − f/r` on the work grid, zero on the ring.
    fn compute_residual_field(&mut self) {
        let (w, h) = (self.work.width, self.work.height);
        let ring = matches!(self.boundary, Boundary::ZeroExtended);
        let rows_per_task = (PARALLEL_MIN_PIXELS / w).max(1);
        let (gx, gy, fs) = (&self.p.gx, &self.p.gy, &self.f_scaled);
        let fill = |block: usize, out: &mut [f64]| {
            for (k, out) in out.chunks_mut(w).enumerate() {
                let row = block * rows_per_task + k;
                if ring && (row == 0 || row == h - 1) {
                    out.fill(0.0);
                    continue;
                }
                divergence_row(gx, gy, fs, w, row, out);
                if ring {
                    out[0] = 0.0;
                    out[w - 1] = 0.0;
                }
            }
        };
        if self.work.len() >= 2 * PARALLEL_MIN_PIXELS {
            self.d.par_chunks_mut(w * rows_per_task).enumerate().for_each(|(b, out)| fill(b, out));
        } else {
            fill(0, &mut self.d);
        }
    }

    /// Replaces `p` by an exact representative `p + ∇φ` with
    /// `r · div(p + ∇φ) = f`, then clamps it back into the unit ball.
    ///
    /// `φ` solves the Poisson equation for the current residual exactly
    /// (reflecting boundary, or zero on the ring for the zero-extended
    /// case). Under the reflecting boundary `f` must have zero mean for the
    /// representative to be exact.
    pub fn poisson_lift(&mut self) -> Lift {
        self.momentum = None;
        self.compute_residual_field();
        let (w, h) = (self.work.width, self.work.height);
        let ring = matches!(self.boundary, Boundary::ZeroExtended);
        let sq: f64 = self.d.iter().map(|x| x * x).sum();
        let residual = self.radius_pix * self.grid.spacing * sq.sqrt();
        let lifter = self.lifter.get_or_insert_with(|| {
            let (iw, ih) = if ring { (w - 2, h - 2) } else { (w, h) };
            let bc = if ring { PoissonBc::Dirichlet } else { PoissonBc::Neumann };
            Lifter { solver: PoissonSolver::new(iw, ih, bc), inner: vec![0.0; iw * ih], phi: vec![0.0; w * h] }
        });
        if ring {
            let iw = w - 2;
            for row in 1..h - 1 {
                for col in 1..w - 1 {
                    lifter.inner[(row - 1) * iw + col - 1] = -self.d[row * w + col];
                }
            }
            lifter.solver.solve_in_place(&mut lifter.inner);
            for row in 1..h - 1 {
                lifter.phi[row * w + 1..row * w + w - 1].copy_from_slice(&lifter.inner[(row - 1) * iw..row * iw]);
            }
        } else {
            for (x, d) in lifter.phi.iter_mut().zip(&self.d) {
                *x = -d;
            }
            lifter.solver.solve_in_place(&mut lifter.phi);
        }
        let phi = &lifter.phi;
        let mut max_sq = 0.0f64;
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if col + 1 < w {
                    self.p.gx[i] += phi[i + 1] - phi[i];
                }
                if row + 1 < h {
                    self.p.gy[i] += phi[i + w] - phi[i];
                }
                max_sq = max_sq.max(self.p.gx[i] * self.p.gx[i] + self.p.gy[i] * self.p.gy[i]);
            }
        }
        let feasible_max = max_sq.sqrt();
        if feasible_max > 1.0 {
            for (x, y) in self.p.gx.iter_mut().zip(self.p.gy.iter_mut()) {
                let n = (*x * *x + *y * *y).sqrt();
                if n > 1.0 {
                    *x /= n;
                    *y /= n;
                }
            }
        }
        Lift { residual, feasible_max, feasible_norm: feasible_max * self.radius() }
    }

    /// Iterates until the dual change is at most `fp_tol` or `max_iters`
    /// further iterations have run.
    pub fn run(&mut self, fp_tol: f64, max_iters: usize, record_energy: bool) -> SolveTrace {
        let mut history = record_energy.then(Vec::new);
        let lambda = 0.5 / (self.radius_pix * self.grid.spacing);
        let mut last = f64::INFINITY;
        let mut converged = false;
        let mut used = 0;
        for _ in 0..max_iters {
            last = self.advance();
            used += 1;
            if let Some(hist) = history.as_mut() {
                let u = self.primal();
                hist.push(rof_energy(&self.f, &u, lambda, self.boundary).unwrap_or(f64::NAN));
            }
            if last <= fp_tol {
                converged = true;
                break;
            }
        }
        SolveTrace { iterations_used: used, final_residual: last, converged, energy_history: history }
    }

    /// Duality gap of the ROF problem `min_z J(z) + ‖z − f‖²/(2r)` at the
    /// current iterate, with `z = f − r div p`: returns `(J(z) + ⟨p, ∇z⟩, J(z))`
    /// in physical units. The gap is non-negative and vanishes exactly at
    /// the solution.
    pub fn rof_gap(&mut self) -> (f64, f64) {
        // On the work grid z = −r · d, zero on the ring.
        self.compute_residual_field();
        let (w, h) = (self.work.width, self.work.height);
        let d = &self.d;
        let (mut j, mut c) = (0.0, 0.0);
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let ax = if col + 1 < w { d[i + 1] - d[i] } else { 0.0 };
                let ay = if row + 1 < h { d[i + w] - d[i] } else { 0.0 };
                j += (ax * ax + ay * ay).sqrt();
                c += self.p.gx[i] * ax + self.p.gy[i] * ay;
            }
        }
        let scale = self.radius_pix * self.grid.spacing;
        (scale * (j - c), scale * j)
    }

    /// `‖f − r div p‖` in physical units.
    pub fn residual_norm(&mut self) -> f64 {
        self.compute_residual_field();
        let sq: f64 = self.d.iter().map(|x| x * x).sum();
        self.radius_pix * self.grid.spacing * sq.sqrt()
    }

    /// `⟨f, z⟩ / J(z)` for the current primal iterate `z = f − r div p`, a
    /// lower bound on `‖f‖_G` (`None` when `J(z) = 0`). At the solution it
    /// equals `r + ‖z‖² / J(z)`, so it exceeds `r` exactly when `f` lies
    /// outside the ball.
    pub fn duality_ratio(&mut self) -> Option<f64> {
        self.compute_residual_field();
        let (w, h) = (self.work.width, self.work.height);
        let d = &self.d;
        let (mut j, mut inner) = (0.0, 0.0);
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let ax = if col + 1 < w { d[i + 1] - d[i] } else { 0.0 };
                let ay = if row + 1 < h { d[i + w] - d[i] } else { 0.0 };
                j += (ax * ax + ay * ay).sqrt();
                inner += self.f_scaled[i] * d[i];
            }
        }
        // z = −r d and f = r f_scaled on the work grid.
        (j > 0.0).then(|| -self.grid.spacing * self.radius_pix * inner / j)
    }

    /// Like [`DualSolver::run`], additionally stopping once the ROF gap is at
    /// most `gap_tol · J(z)` (checked every `check_every` iterations).
    pub fn run_to_gap(&mut self, fp_tol: f64, gap_tol: f64, max_iters: usize, check_every: usize) -> SolveTrace {
        let mut last = f64::INFINITY;
        let mut used = 0;
        let mut converged = false;
        while used < max_iters {
            last = self.advance();
            used += 1;
            if last <= fp_tol {
                converged = true;
                break;
            }
            if used % check_every == 0 {
                let (gap, j) = self.rof_gap();
                if gap <= gap_tol * j {
                    converged = true;
                    break;
                }
            }
        }
        SolveTrace { iterations_used: used, final_residual: last, converged, energy_history: None }
    }

    /// Current projection `r · div p` on the image grid.
    pub fn projection(&self) -> Image {
        let div = divergence(&self.p);
        let img = self.boundary.restrict(&div);
        img.scaled(self.radius_pix)
    }

    /// Current primal iterate `f − r · div p`.
    pub fn primal(&self) -> Image {
        let proj = self.projection();
        let data = self.f.data().iter().zip(proj.data()).map(|(a, b)| a - b).collect();
        Image::from_raw(self.grid, data)
    }

    pub fn input(&self) -> &Image {
        &self.f
    }
}

/// `out = div p − f/r` for one row. Relies on the far-edge components of
/// `p` being zero, which [`sanitize`] and the update both maintain.
#[inline]
fn divergence_row(gx: &[f64], gy: &[f64], fs: &[f64], w: usize, row: usize, out: &mut [f64]) {
    let r = row * w;
    let gx = &gx[r..r + w];
    let gyc = &gy[r..r + w];
    let fs = &fs[r..r + w];
    out[0] = gx[0] + gyc[0] - fs[0];
    for c in 1..w {
        out[c] = gx[c] - gx[c - 1] + gyc[c] - fs[c];
    }
    if row > 0 {
        let gyp = &gy[r - w..r];
        for (o, p) in out.iter_mut().zip(gyp) {
            *o -= p;
        }
    }
}

#[inline]
fn update_row(cur: &[f64], next: Option<&[f64]>, tau: f64, px: &mut [f64], py: &mut [f64]) -> f64 {
    let w = cur.len();
    let mut change = 0.0f64;
    let mut apply = |ax: f64, ay: f64, x: &mut f64, y: &mut f64| {
        let inv = 1.0 / (1.0 + tau * (ax * ax + ay * ay).sqrt());
        let nx = (*x + tau * ax) * inv;
        let ny = (*y + tau * ay) * inv;
        change = change.max((nx - *x).abs()).max((ny - *y).abs());
        *x = nx;
        *y = ny;
    };
    match next {
        Some(next) => {
            for c in 0..w - 1 {
                apply(cur[c + 1] - cur[c], next[c] - cur[c], &mut px[c], &mut py[c]);
            }
            apply(0.0, next[w - 1] - cur[w - 1], &mut px[w - 1], &mut py[w - 1]);
        }
        None => {
            for c in 0..w - 1 {
                apply(cur[c + 1] - cur[c], 0.0, &mut px[c], &mut py[c]);
            }
            apply(0.0, 0.0, &mut px[w - 1], &mut py[w - 1]);
        }
    }
    change
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn momentum_row(
    cur: &[f64],
    next: Option<&[f64]>,
    tau: f64,
    beta: f64,
    px: &mut [f64],
    py: &mut [f64],
    qx: &mut [f64],
    qy: &mut [f64],
) -> f64 {
    let w = cur.len();
    let mut change = 0.0f64;
    let mut apply = |c: usize, ax: f64, ay: f64| {
        let mut nx = qx[c] + tau * ax;
        let mut ny = qy[c] + tau * ay;
        let n2 = nx * nx + ny * ny;
        if n2 > 1.0 {
            let inv = 1.0 / n2.sqrt();
            nx *= inv;
            ny *= inv;
        }
        let (dx, dy) = (nx - px[c], ny - py[c]);
        change = change.max(dx.abs()).max(dy.abs());
        qx[c] = nx + beta * dx;
        qy[c] = ny + beta * dy;
        px[c] = nx;
        py[c] = ny;
    };
    match next {
        Some(next) => {
            for c in 0..w - 1 {
                apply(c, cur[c + 1] - cur[c], next[c] - cur[c]);
            }
            apply(w - 1, 0.0, next[w - 1] - cur[w - 1]);
        }
        None => {
            for c in 0..w - 1 {
                apply(c, cur[c + 1] - cur[c], 0.0);
            }
            apply(w - 1, 0.0, 0.0);
        }
    }
    change
}

/// Zeroes dual components that do not correspond to a stencil edge.
fn sanitize(p: &mut DualField, boundary: Boundary) {
    let g = *p.grid();
    let (w, h) = (g.width, g.height);
    for row in 0..h {
        p.gx[row * w + w - 1] = 0.0;
    }
    p.gy[(h - 1) * w..].fill(0.0);
    if boundary == Boundary::ZeroExtended {
        // Edges joining two ring pixels carry no flux.
        for col in 0..w {
            p.gx[col] = 0.0;
            p.gx[(h - 1) * w + col] = 0.0;
        }
        for row in 0..h {
            p.gy[row * w] = 0.0;
            p.gy[row * w + w - 1] = 0.0;
        }
    }
}

/// Smallest side for which another pyramid level is built.
const PYRAMID_MIN_SIDE: usize = 48;
const PYRAMID_LEVEL_ITERS: usize = 400;
const PYRAMID_COARSE_ITERS: usize = 4000;

/// 2×2 block average; the result covers the same physical window.
pub(crate) fn downsample(f: &Image) -> Image {
    let g = f.grid();
    let (w, h) = (g.width.div_ceil(2), g.height.div_ceil(2));
    let grid = Grid {
        width: w,
        height: h,
        spacing: 2.0 * g.spacing,
        origin: [g.origin[0] + 0.5 * g.spacing, g.origin[1] + 0.5 * g.spacing],
    };
    let mut data = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut s = 0.0;
            let mut n = 0.0;
            for dr in 0..2 {
                for dc in 0..2 {
                    let (r, c) = (2 * row + dr, 2 * col + dc);
                    if r < g.height && c < g.width {
                        s += f.get(c, r);
                        n += 1.0;
                    }
                }
            }
            data[row * w + col] = s / n;
        }
    }
    Image::from_raw(grid, data)
}

/// Bilinear transfer of a dual field between work grids covering the same window.
fn upsample_dual(coarse: &DualField, fine: Grid) -> DualField {
    let cg = *coarse.grid();
    let mut out = DualField::zeros(fine);
    let clamp = |v: f64, n: usize| v.max(0.0).min((n - 1) as f64);
    for row in 0..fine.height {
        for col in 0..fine.width {
            let (x, y) = fine.center(col, row);
            let cx = clamp((x - cg.origin[0]) / cg.spacing, cg.width);
            let cy = clamp((y - cg.origin[1]) / cg.spacing, cg.height);
            let (c0, r0) = (cx.floor() as usize, cy.floor() as usize);
            let (c1, r1) = ((c0 + 1).min(cg.width - 1), (r0 + 1).min(cg.height - 1));
            let (tx, ty) = (cx - c0 as f64, cy - r0 as f64);
            let lerp = |a: &[f64]| {
                let at = |c: usize, r: usize| a[r * cg.width + c];
                (1.0 - ty) * ((1.0 - tx) * at(c0, r0) + tx * at(c1, r0)) + ty * ((1.0 - tx) * at(c0, r1) + tx * at(c1, r1))
            };
            let i = row * fine.width + col;
            out.gx[i] = lerp(coarse.gx());
            out.gy[i] = lerp(coarse.gy());
        }
    }
    out
}

/// Dual starting field from a coarse-to-fine pyramid of the same projection.
pub fn multilevel_start(f: &Image, params: &ProjectorParams) -> Result<DualField> {
    let work = params.boundary.work_grid(f.grid());
    if f.width().min(f.height()) < PYRAMID_MIN_SIDE {
        return Ok(DualField::zeros(work));
    }
    let coarse = downsample(f);
    let p_coarse = coarse_solve(&coarse, params)?;
    let mut p = upsample_dual(&p_coarse, work);
    sanitize(&mut p, params.boundary);
    Ok(p)
}

fn coarse_solve(f: &Image, params: &ProjectorParams) -> Result<DualField> {
    let iters = if f.width().min(f.height()) < PYRAMID_MIN_SIDE { PYRAMID_COARSE_ITERS } else { PYRAMID_LEVEL_ITERS };
    let init = multilevel_start(f, params)?;
    let mut solver = DualSolver::new(f, params.radius, params.boundary, params.step);
    solver.set_dual(&init)?;
    solver.run(params.fp_tol, iters, false);
    Ok(solver.into_dual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gradient, l2_norm};

    fn disk(n: usize, amplitude: f64) -> Image {
        let grid = Grid::covering(n, n, [-2.0, -2.0, 2.0, 2.0]).unwrap();
        Image::from_fn(grid, |x, y| if x * x + y * y <= 1.0 { amplitude } else { 0.0 })
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let f = Image::zeros(Grid::pixels(16, 16).unwrap());
        let (p, trace) = project_g_ball(&f, &ProjectorParams::with_radius(1.0)).unwrap();
        assert_eq!(p.max_abs(), 0.0);
        assert_eq!(trace.iterations_used, 1);
        assert!(trace.converged);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let f = Image::zeros(Grid::pixels(4, 4).unwrap());
        for bad in [
            ProjectorParams { radius: 0.0, ..Default::default() },
            ProjectorParams { step: 0.2, ..Default::default() },
            ProjectorParams { fp_tol: 0.0, ..Default::default() },
            ProjectorParams { max_iters: 0, ..Default::default() },
        ] {
            assert!(project_g_ball(&f, &bad).is_err());
        }
    }

    #[test]
    fn element_of_the_ball_is_left_unchanged() {
        // f = ρ·div g with |g| ≤ 1 and ρ below the radius lies inside the ball.
        let grid = Grid::covering(48, 48, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let h = grid.spacing;
        let mut g = gradient(&Image::from_fn(grid, |x, y| (3.0 * x).sin() * (2.0 * y).cos() * 0.02 / h));
        let m = g.max_modulus();
        g = g.scaled(1.0 / m);
        let rho = 0.5;
        let f = divergence(&g).scaled(rho / h);
        let params = ProjectorParams { radius: 0.7, fp_tol: 1e-9, max_iters: 200_000, ..Default::default() };
        let (p, _) = project_g_ball(&f, &params).unwrap();
        let err = l2_norm(&f.sub(&p).unwrap());
        assert!(err <= 1e-3 * l2_norm(&f), "{err} vs {}", l2_norm(&f));
    }

    #[test]
    fn iterates_stay_in_the_unit_ball() {
        let f = disk(64, 3.0);
        let mut s = DualSolver::new(&f, 0.2, Boundary::Neumann, 0.125);
        for _ in 0..300 {
            s.step();
            assert!(s.dual().max_modulus() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn constant_image_is_its_own_rof_minimizer() {
        let f = Image::constant(Grid::pixels(12, 9).unwrap(), 0.7);
        let (u, v, _) = rof_solve(&f, 2.0, &ProjectorParams::default()).unwrap();
        assert!(u.max_abs_diff(&f).unwrap() < 1e-12);
        assert!(v.max_abs() < 1e-12);
    }

    #[test]
    fn rof_loses_intensity_on_a_disk() {
        let f = disk(64, 1.0);
        for lambda in [0.5, 4.0, 50.0] {
            let (u, _, _) = rof_solve(&f, lambda, &ProjectorParams::default()).unwrap();
            assert!(u.max() < f.max(), "lambda {lambda}: {}", u.max());
        }
    }

    #[test]
    fn rof_energy_beats_trivial_candidates() {
        let f = disk(48, 1.0).add(&Image::from_fn(*disk(48, 1.0).grid(), |x, _| 0.2 * (9.0 * x).cos())).unwrap();
        let lambda = 3.0;
        let (u, _, _) = rof_solve(&f, lambda, &ProjectorParams::default()).unwrap();
        let e = rof_energy(&f, &u, lambda, Boundary::Neumann).unwrap();
        assert!(e <= rof_energy(&f, &f, lambda, Boundary::Neumann).unwrap());
        assert!(e <= rof_energy(&f, &Image::zeros(*f.grid()), lambda, Boundary::Neumann).unwrap());
    }

    #[test]
    fn energy_history_is_recorded() {
        let f = disk(32, 1.0);
        let params = ProjectorParams { record_energy: true, max_iters: 50, ..Default::default() };
        let (_, _, trace) = rof_solve(&f, 1.0, &params).unwrap();
        assert_eq!(trace.energy_history.unwrap().len(), trace.iterations_used);
    }

    #[test]
    fn warm_start_continues_the_cold_run() {
        let f = disk(32, 1.0);
        let params = ProjectorParams { radius: 0.1, fp_tol: 1e-300, max_iters: 150, ..Default::default() };
        let first = project_g_ball_from(&f, &params, None).unwrap();
        let again = project_g_ball_from(&f, &params, Some(&first.dual)).unwrap();
        let long = project_g_ball_from(&f, &ProjectorParams { max_iters: 300, ..params }, None).unwrap();
        assert_eq!(again.image.data(), long.image.data());
    }

    #[test]
    fn multilevel_start_reaches_the_same_minimum() {
        let f = disk(128, 1.0);
        let lambda = 2.5;
        let base = ProjectorParams { fp_tol: 1e-7, max_iters: 50_000, ..Default::default() };
        let (plain, _, _) = rof_solve(&f, lambda, &base).unwrap();
        let (ml, _, _) = rof_solve(&f, lambda, &ProjectorParams { multilevel: true, ..base }).unwrap();
        let e_plain = rof_energy(&f, &plain, lambda, Boundary::Neumann).unwrap();
        let e_ml = rof_energy(&f, &ml, lambda, Boundary::Neumann).unwrap();
        assert!(e_ml <= e_plain * (1.0 + 1e-4), "{e_plain} vs {e_ml}");
        assert!((e_plain - e_ml).abs() < 2e-3 * e_plain, "{e_plain} vs {e_ml}");
    }

    #[test]
    fn accelerated_iteration_reaches_the_same_minimum() {
        let f = disk(96, 1.0);
        let lambda = 2.5;
        let base = ProjectorParams { fp_tol: 1e-9, max_iters: 40_000, ..Default::default() };
        let (plain, _, _) = rof_solve(&f, lambda, &base).unwrap();
        let (fast, _, trace) = rof_solve(&f, lambda, &ProjectorParams { accelerated: true, max_iters: 4000, ..base }).unwrap();
        let e_plain = rof_energy(&f, &plain, lambda, Boundary::Neumann).unwrap();
        let e_fast = rof_energy(&f, &fast, lambda, Boundary::Neumann).unwrap();
        assert!(trace.iterations_used <= 4000);
        // The plain iteration is still slightly above the minimum here.
        assert!(e_fast <= e_plain * (1.0 + 1e-6), "{e_plain} vs {e_fast}");
        assert!((e_plain - e_fast).abs() < 1e-3 * e_plain, "{e_plain} vs {e_fast}");
    }

    #[test]
    fn rof_gap_shrinks_to_zero_and_never_goes_negative() {
        for boundary in [Boundary::Neumann, Boundary::ZeroExtended] {
            let f = disk(48, 1.0);
            let mut s = DualSolver::new(&f, 0.1, boundary, 0.125);
            s.set_accelerated(true);
            let mut gaps = Vec::new();
            for _ in 0..6 {
                s.run(1e-14, 200, false);
                let (gap, j) = s.rof_gap();
                assert!(gap >= -1e-9 * j, "{gap}");
                gaps.push(gap / j);
            }
            assert!(gaps[5] < 1e-3 && gaps[5] < gaps[0], "{gaps:?}");
        }
    }

    #[test]
    fn run_to_gap_stops_at_the_requested_gap() {
        let f = disk(64, 1.0);
        let mut s = DualSolver::new(&f, 0.1, Boundary::Neumann, 0.125);
        let trace = s.run_to_gap(1e-14, 1e-2, 100_000, 5);
        assert!(trace.converged);
        let (gap, j) = s.rof_gap();
        assert!(gap <= 1e-2 * j);
        assert_eq!(trace.iterations_used % 5, 0);
    }

    #[test]
    fn downsample_preserves_mass() {
        let f = Image::from_fn(Grid::covering(10, 6, [0.0, 0.0, 1.0, 0.6]).unwrap(), |x, y| x + y * y);
        let c = downsample(&f);
        assert_eq!(c.width(), 5);
        assert!((c.sum() * 4.0 - f.sum()).abs() < 1e-12);
        for (a, b) in c.grid().domain().iter().zip(f.grid().domain()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
