//! Three-part decomposition `f = u + v + w` minimizing
//! `J(u) + λ‖v‖² + μ‖w‖_G` by alternating exact minimization.
//!
//! Naming: `u` is the structure part, `v = f − u − w` the square-integrable
//! residual and `w` the texture part.
//!
//! Each outer iteration performs
//!
//! ```text
//! w ← argmin_w λ‖f − u − w‖² + μ‖w‖_G
//! u ← (f − w) − P_{G_{1/(2λ)}}(f − w)
//! ```
//!
//! starting from `u = w = 0`. The `u` update is the ROF step. For the
//! texture update, [`TextureConstraint::Penalty`] solves the problem above:
//! with `r = f − u` and `α = μ/(2λ)`, `w = 0` when `J(r) ≤ α` and otherwise
//! `w = P_{G_t}(r)` with the radius `t` chosen so that `J(r − w) = α`
//! (then `‖w‖_G = t`). [`TextureConstraint::Ball`] instead uses `μ` as a
//! G-ball radius, `w = P_{G_μ}(f − u)`.

use serde::{Deserialize, Serialize};

use crate::analysis::{gnorm_estimate_with, GNormOptions};
use crate::error::{Error, Result};
use crate::grid::{l2_norm_sq, Boundary, BvNorm, Image};
use crate::projector::{rof_ball_radius, DualSolver, ProjectorParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureConstraint {
    /// `μ‖w‖_G` is a penalty in the objective.
    #[default]
    Penalty,
    /// `‖w‖_G ≤ μ` is a hard constraint.
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvgParams {
    pub lambda: f64,
    pub mu: f64,
    /// Stop once both `u` and `w` change by at most this in max-norm.
    pub stop_tol: f64,
    pub max_outer_iters: usize,
    /// Inner projector settings; `radius` is ignored.
    pub projector: ProjectorParams,
    pub texture: TextureConstraint,
    /// Carry the inner dual fields over between outer iterations.
    pub warm_start: bool,
    /// Relative accuracy of `J(r − w) = μ/(2λ)` in the penalty texture step.
    pub texture_tol: f64,
    /// Inner projections also stop once the ROF duality gap is at most
    /// this fraction of `J` of the primal iterate.
    pub inner_gap_tol: f64,
}

impl BvgParams {
    pub fn new(lambda: f64, mu: f64) -> Self {
        BvgParams {
            lambda,
            mu,
            stop_tol: 1e-4,
            max_outer_iters: 200,
            projector: ProjectorParams { accelerated: true, ..Default::default() },
            texture: TextureConstraint::Penalty,
            warm_start: true,
            texture_tol: 1e-3,
            inner_gap_tol: 1e-3,
        }
    }

    pub fn boundary(&self) -> Boundary {
        self.projector.boundary
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("stop_tol", self.stop_tol), ("texture_tol", self.texture_tol), ("inner_gap_tol", self.inner_gap_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("max_outer_iters must be at least 1"));
        }
        ProjectorParams { radius: 1.0, ..self.projector }.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub max_change_u: f64,
    pub max_change_w: f64,
    /// Projector iterations spent in this outer iteration.
    pub inner_iterations: usize,
    /// Radius of the ball `w` was projected on (0 when `w = 0`).
    pub texture_radius: f64,
    /// `J(u) + λ‖v‖² + μ‖w‖_G` with `‖w‖_G` taken as `texture_radius`;
    /// only recorded for the penalty form.
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BvgTrace {
    pub outer_iterations: usize,
    pub converged: bool,
    pub total_inner_iterations: usize,
    pub steps: Vec<OuterStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub u: Image,
    pub v: Image,
    pub w: Image,
    pub f: Image,
    pub boundary: Boundary,
    pub trace: BvgTrace,
}

impl Decomposition {
    /// Builds `(u, f − u − w, w)`.
    pub fn from_parts(f: Image, u: Image, w: Image, boundary: Boundary) -> Result<Self> {
        let v = f.sub(&u)?.sub(&w)?;
        Ok(Decomposition { u, v, w, f, boundary, trace: BvgTrace::default() })
    }

    /// Takes all three parts as given; `f` is their sum.
    pub fn from_triple(u: Image, v: Image, w: Image, boundary: Boundary) -> Result<Self> {
        let f = u.add(&v)?.add(&w)?;
        Ok(Decomposition { u, v, w, f, boundary, trace: BvgTrace::default() })
    }
}

pub fn bvg_decompose(f: &Image, params: &BvgParams) -> Result<Decomposition> {
    params.validate()?;
    let boundary = params.boundary();
    let grid = *f.grid();
    let mut u = Image::zeros(grid);
    let mut w = Image::zeros(grid);
    let mut trace = BvgTrace::default();
    let mut texture = TextureSolver::new(f, params);
    let mut structure = DualSolver::new(f, rof_ball_radius(params.lambda), boundary, params.projector.step);
    structure.set_accelerated(params.projector.accelerated);

    for _ in 0..params.max_outer_iters {
        let r = f.sub(&u)?;
        let (w_next, radius, texture_iters) = texture.step(&r)?;
        let s = f.sub(&w_next)?;
        let (u_next, structure_iters) = structure_step(&mut structure, &s, params)?;

        let max_change_u = u_next.max_abs_diff(&u)?;
        let max_change_w = w_next.max_abs_diff(&w)?;
        u = u_next;
        w = w_next;
        let objective = (params.texture == TextureConstraint::Penalty).then(|| {
            let v = f.data().iter().zip(u.data()).zip(w.data()).map(|((a, b), c)| a - b - c);
            let l2: f64 = v.map(|x| x * x).sum::<f64>() * grid.pixel_area();
            boundary.tv_norm(&u) + params.lambda * l2 + params.mu * radius
        });
        trace.total_inner_iterations += texture_iters + structure_iters;
        trace.outer_iterations += 1;
        trace.steps.push(OuterStep {
            max_change_u,
            max_change_w,
            inner_iterations: texture_iters + structure_iters,
            texture_radius: radius,
            objective,
        });
        if max_change_u.max(max_change_w) <= params.stop_tol {
            trace.converged = true;
            break;
        }
    }
    let mut d = Decomposition::from_parts(f.clone(), u, w, boundary)?;
    d.trace = trace;
    Ok(d)
}

const GAP_CHECK_EVERY: usize = 10;

/// `u = s − P_{G_{1/(2λ)}}(s)`. Under the reflecting boundary the mean of
/// `s` is carried by `u` and the projection acts on `s − mean`.
fn structure_step(solver: &mut DualSolver, s: &Image, params: &BvgParams) -> Result<(Image, usize)> {
    let boundary = params.boundary();
    let mean = if boundary.needs_zero_mean() { s.mean() } else { 0.0 };
    let centered = s.map(|x| x - mean);
    let radius = rof_ball_radius(params.lambda);

    // An explicit field inside the ball proves `P(s) = s`, so `u` is exactly the mean.
    let mut probe = DualSolver::new(&centered, radius, boundary, params.projector.step);
    if probe.poisson_lift().feasible_max <= 1.0 {
        return Ok((Image::constant(*s.grid(), mean), 0));
    }

    solver.set_input(&centered)?;
    if !params.warm_start {
        solver.reset_dual();
    }
    let start = solver.iterations();
    solver.run_to_gap(params.projector.fp_tol, params.inner_gap_tol, params.projector.max_iters, GAP_CHECK_EVERY);
    let u = solver.primal().map(|x| x + mean);
    Ok((u, solver.iterations() - start))
}

/// Texture update with its warm-start state.
struct TextureSolver {
    solver: DualSolver,
    params: BvgParams,
    /// Radius used by the previous penalty step.
    last_radius: Option<f64>,
}

impl TextureSolver {
    fn new(f: &Image, params: &BvgParams) -> Self {
        let radius = match params.texture {
            TextureConstraint::Ball => params.mu,
            TextureConstraint::Penalty => 1.0,
        };
        let mut solver = DualSolver::new(f, radius, params.boundary(), params.projector.step);
        solver.set_accelerated(params.projector.accelerated);
        TextureSolver {
            solver,
            params: *params,
            last_radius: None,
        }
    }

    /// Returns `(w, radius, projector iterations)`.
    fn step(&mut self, r: &Image) -> Result<(Image, f64, usize)> {
        let boundary = self.params.boundary();
        let mean = if boundary.needs_zero_mean() { r.mean() } else { 0.0 };
        let r = r.map(|x| x - mean);
        self.solver.set_input(&r)?;
        if !self.params.warm_start {
            self.solver.reset_dual();
            self.last_radius = None;
        }
        let start = self.solver.iterations();
        let (w, radius) = match self.params.texture {
            TextureConstraint::Ball => {
                self.run();
                (self.solver.projection(), self.params.mu)
            }
            TextureConstraint::Penalty => self.penalty_step(&r)?,
        };
        Ok((w, radius, self.solver.iterations() - start))
    }

    fn run(&mut self) {
        let p = &self.params.projector;
        self.solver.run_to_gap(p.fp_tol, self.params.inner_gap_tol, p.max_iters, GAP_CHECK_EVERY);
    }

    /// Moves the solver to radius `t`, rescaling the dual so the current
    /// projection is kept, and projects.
    fn project_at(&mut self, t: f64) -> Image {
        let prev = self.solver.radius();
        if prev != t {
            let p = self.solver.dual().scaled(prev / t);
            self.solver.set_radius(t);
            self.solver.set_dual(&p).expect("same work grid");
        }
        self.run();
        self.solver.projection()
    }

    /// `w = P_{G_t}(r)` with `J(r − w) = α`, or `w = 0` when `J(r) ≤ α`.
    fn penalty_step(&mut self, r: &Image) -> Result<(Image, f64)> {
        let boundary = self.params.boundary();
        let alpha = self.params.mu / (2.0 * self.params.lambda);
        let tv = |img: &Image| boundary.tv_norm(img);
        if tv(r) <= alpha {
            self.last_radius = None;
            return Ok((Image::zeros(*r.grid()), 0.0));
        }
        // Any radius at or above an explicit G-norm of r projects r onto itself.
        let mut probe = DualSolver::new(r, 1.0, boundary, self.params.projector.step);
        let t_max = probe.poisson_lift().feasible_norm;

        // φ(t) = J(r − P_t(r)) − α decreases from J(r) − α > 0 at t = 0 to −α at t_max.
        let (mut lo, mut phi_lo) = (0.0, tv(r) - alpha);
        let (mut hi, mut phi_hi) = (t_max, -alpha);
        let mut t = self.last_radius.filter(|&t| t > 0.0 && t < t_max).unwrap_or(0.5 * t_max);
        let mut best = None;
        let mut side = 0i32;
        for _ in 0..60 {
            let w = self.project_at(t);
            let phi = tv(&r.sub(&w)?) - alpha;
            let done = phi.abs() <= self.params.texture_tol * alpha;
            best = Some((w, t));
            if done {
                break;
            }
            if phi > 0.0 {
                lo = t;
                phi_lo = phi;
                if side == 1 {
                    phi_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = t;
                phi_hi = phi;
                if side == -1 {
                    phi_lo *= 0.5;
                }
                side = -1;
            }
            if hi - lo <= 1e-9 * hi {
                break;
            }
            // Illinois step on the bracket.
            t = (lo * phi_hi - hi * phi_lo) / (phi_hi - phi_lo);
            if !(t > lo && t < hi) {
                t = 0.5 * (lo + hi);
            }
        }
        let (w, t) = best.expect("at least one evaluation");
        self.last_radius = Some(t);
        Ok((w, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub total: f64,
    pub bv_term: f64,
    pub l2_term: f64,
    pub g_term: f64,
    /// `μ ×` the G-norm bracket width.
    pub g_term_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveOptions {
    pub bv_norm: BvNorm,
    pub gnorm: GNormOptions,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions { bv_norm: BvNorm::Full, gnorm: GNormOptions::default() }
    }
}

/// `‖u‖_BV + λ‖v‖² + μ‖w‖_G` with the full BV norm and the
/// decomposition's boundary.
pub fn objective(d: &Decomposition, lambda: f64, mu: f64) -> Result<Objective> {
    let opts = ObjectiveOptions { gnorm: GNormOptions { boundary: d.boundary, ..Default::default() }, ..Default::default() };
    objective_with(d, lambda, mu, &opts)
}

pub fn objective_with(d: &Decomposition, lambda: f64, mu: f64, opts: &ObjectiveOptions) -> Result<Objective> {
    let bv_term = opts.bv_norm.eval(&d.u, opts.gnorm.boundary);
    let l2_term = lambda * l2_norm_sq(&d.v);
    let g = gnorm_estimate_with(&d.w, &opts.gnorm)?;
    let g_term = mu * g.estimate;
    Ok(Objective { total: bv_term + l2_term + g_term, bv_term, l2_term, g_term, g_term_error: mu * g.bracket })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_norm, Grid};
    use crate::synth::{render, SceneSpec, Shape};

    fn grid(n: usize) -> Grid {
        Grid::covering(n, n, [-1.0, -1.0, 1.0, 1.0]).unwrap()
    }

    fn plane(lambda: f64, mu: f64) -> BvgParams {
        let mut p = BvgParams::new(lambda, mu);
        p.projector.boundary = Boundary::ZeroExtended;
        p
    }

    fn scene(n: usize) -> Image {
        let shape = Shape::Composite {
            parts: vec![
                Shape::Disk { center: [-0.3, 0.2], radius: 0.35, amplitude: 0.8 },
                Shape::TexturedSquare { center: [0.4, -0.3], side: 0.6, frequency: 6.0, amplitude: 0.5 },
            ],
        };
        render(&SceneSpec::new(shape, grid(n))).unwrap()
    }

    fn seminorm_objective(d: &Decomposition, lambda: f64, mu: f64) -> f64 {
        let opts = ObjectiveOptions {
            bv_norm: BvNorm::Seminorm,
            gnorm: GNormOptions { boundary: d.boundary, ..Default::default() },
        };
        objective_with(d, lambda, mu, &opts).unwrap().total
    }

    #[test]
    fn zero_input_gives_zero_parts() {
        let f = Image::zeros(grid(16));
        for texture in [TextureConstraint::Penalty, TextureConstraint::Ball] {
            let d = bvg_decompose(&f, &BvgParams { texture, ..BvgParams::new(1.0, 0.5) }).unwrap();
            assert_eq!(d.u.max_abs() + d.v.max_abs() + d.w.max_abs(), 0.0);
            assert!(d.trace.converged);
        }
    }

    #[test]
    fn parts_add_up_to_the_input() {
        let f = scene(40);
        for p in [BvgParams::new(8.0, 0.5), plane(8.0, 0.5), BvgParams { texture: TextureConstraint::Ball, ..plane(8.0, 0.01) }] {
            let d = bvg_decompose(&f, &p).unwrap();
            let sum = d.u.add(&d.v).unwrap().add(&d.w).unwrap();
            assert!(sum.max_abs_diff(&f).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let f = Image::zeros(grid(8));
        for p in [BvgParams::new(0.0, 1.0), BvgParams::new(1.0, -1.0), BvgParams { stop_tol: 0.0, ..BvgParams::new(1.0, 1.0) }] {
            assert!(bvg_decompose(&f, &p).is_err());
        }
        let mut p = BvgParams::new(1.0, 1.0);
        p.max_outer_iters = 0;
        assert!(bvg_decompose(&f, &p).is_err());
    }

    #[test]
    fn small_smooth_bump_stays_in_the_residual() {
        // J(f) ≈ 2π·A·σ·√(2π)·... is far below μ/(2λ) and ‖f‖_G far below 1/(2λ).
        let f = render(&SceneSpec::new(Shape::GaussianBump { center: [0.0, 0.0], sigma: 0.2, amplitude: 0.05 }, grid(48))).unwrap();
        let p = plane(1.0, 4.0);
        let d = bvg_decompose(&f, &p).unwrap();
        assert!(d.u.max_abs() <= 10.0 * p.stop_tol, "{}", d.u.max_abs());
        assert!(d.w.max_abs() <= 10.0 * p.stop_tol, "{}", d.w.max_abs());
        assert!(d.v.max_abs_diff(&f).unwrap() <= 20.0 * p.stop_tol);
    }

    #[test]
    fn penalty_texture_step_hits_the_bv_budget() {
        let f = scene(48);
        let (lambda, mu) = (20.0, 1.0);
        let d = bvg_decompose(&f, &plane(lambda, mu)).unwrap();
        let alpha = mu / (2.0 * lambda);
        let jv = Boundary::ZeroExtended.tv_norm(&d.v);
        assert!(d.w.max_abs() > 0.0);
        assert!((jv - alpha).abs() <= 5e-3 * alpha, "{jv} vs {alpha}");
    }

    #[test]
    fn trace_objective_never_increases() {
        for p in [plane(10.0, 0.8), BvgParams::new(10.0, 0.8)] {
            let d = bvg_decompose(&scene(40), &p).unwrap();
            let objs: Vec<f64> = d.trace.steps.iter().map(|s| s.objective.unwrap()).collect();
            for pair in objs.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-8, "{objs:?}");
            }
            if d.trace.converged {
                let last = d.trace.steps.last().unwrap();
                assert!(last.max_change_u.max(last.max_change_w) <= p.stop_tol);
            }
        }
    }

    #[test]
    fn solver_beats_the_trivial_decompositions() {
        let f = scene(40);
        let (lambda, mu) = (10.0, 0.8);
        let d = bvg_decompose(&f, &plane(lambda, mu)).unwrap();
        let ours = seminorm_objective(&d, lambda, mu);
        let g = *f.grid();
        let b = Boundary::ZeroExtended;
        for (u, w) in [(Image::zeros(g), Image::zeros(g)), (f.clone(), Image::zeros(g)), (Image::zeros(g), f.clone())] {
            let trivial = Decomposition::from_parts(f.clone(), u, w, b).unwrap();
            let theirs = seminorm_objective(&trivial, lambda, mu);
            assert!(ours <= theirs * (1.0 + 1e-3), "{ours} vs {theirs}");
        }
    }

    #[test]
    fn ball_mode_keeps_the_texture_in_the_ball() {
        let f = scene(40);
        let mu = 0.004;
        let p = BvgParams { texture: TextureConstraint::Ball, ..plane(10.0, mu) };
        let d = bvg_decompose(&f, &p).unwrap();
        let opts = GNormOptions { boundary: p.boundary(), ..Default::default() };
        let g = crate::analysis::gnorm_estimate_with(&d.w, &opts).unwrap();
        // w = μ div p with |p| ≤ 1 lies on the sphere of G_μ, where the
        // stall-based non-member calls are only good to a few percent.
        assert!(g.lower <= 1.03 * mu, "{} vs {mu}", g.lower);
        assert!(g.certified_lower <= mu * (1.0 + 1e-9), "{}", g.certified_lower);
        assert!(d.w.max_abs() > 0.0);
    }

    #[test]
    fn runs_are_deterministic_with_and_without_warm_start() {
        let f = scene(32);
        for warm_start in [true, false] {
            let p = BvgParams { warm_start, ..plane(10.0, 0.8) };
            let a = bvg_decompose(&f, &p).unwrap();
            let b = bvg_decompose(&f, &p).unwrap();
            assert_eq!(a.u.data(), b.u.data());
            assert_eq!(a.w.data(), b.w.data());
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn objective_of_the_residual_only_split_is_the_l2_term() {
        let f = scene(24);
        let d = Decomposition::from_parts(f.clone(), Image::zeros(*f.grid()), Image::zeros(*f.grid()), Boundary::ZeroExtended).unwrap();
        let o = objective(&d, 3.0, 1.0).unwrap();
        assert_eq!(o.bv_term, 0.0);
        assert_eq!(o.g_term, 0.0);
        assert!((o.total - 3.0 * l2_norm(&f).powi(2)).abs() <= 1e-12 * o.total);
    }
}
