//! Discrete G-norm by bisection on the projector radius.
//!
//! `‖v‖_G` is the smallest `μ` with `P_{G_μ}(v) = v`. Each probe runs the
//! accelerated dual iteration at radius `μ` and declares `v` a member once
//! `‖v − μ div p‖ ≤ tol·‖v‖`. Every `lift_every` steps the dual field is
//! replaced by the exact representative `p + ∇φ` with `μ div(p + ∇φ) = v`
//! (one Poisson solve) and clamped back into the unit ball. The Poisson
//! solve removes the slow low-frequency part of the residual, and the
//! representative's max modulus is an explicit upper bound on `‖v‖_G`
//! that is carried along as `certified_upper`.
//!
//! A probe is a non-member when the duality ratio exceeds `μ`, when the ROF
//! duality gap proves the exact residual above the tolerance, or when its
//! best residual stops improving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_inner, l2_norm, Boundary, Image};
use crate::projector::{project_g_ball_from, DualSolver, ProjectorParams};

/// Relative size of `|Σ v|` against `Σ |v|` accepted as zero mean.
pub const ZERO_MEAN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNormOptions {
    /// Membership tolerance relative to `‖v‖`; also the final bracket
    /// width relative to the starting upper bound.
    pub tol: f64,
    pub boundary: Boundary,
    /// Subtract the mean instead of failing on non-zero-mean input.
    pub subtract_mean: bool,
    /// Fixed-point iterations allowed per probe.
    pub max_iters: usize,
    /// Residual progress is compared at iterations `check_every · 2^k`.
    pub check_every: usize,
    /// A probe whose residual shrinks by less than this factor between two
    /// checks is counted as a non-member.
    pub stall_ratio: f64,
    /// Fixed-point iterations between two Poisson lifts.
    #[serde(default = "default_lift_every")]
    pub lift_every: usize,
}

fn default_lift_every() -> usize {
    128
}

impl Default for GNormOptions {
    fn default() -> Self {
        GNormOptions {
            tol: 1e-3,
            boundary: Boundary::Neumann,
            subtract_mean: false,
            max_iters: 4000,
            check_every: 16,
            stall_ratio: 0.85,
            lift_every: default_lift_every(),
        }
    }
}

impl GNormOptions {
    pub fn with_tol(tol: f64) -> Self {
        GNormOptions { tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid(format!("G-norm tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iters == 0 || self.check_every == 0 || self.lift_every == 0 {
            return Err(Error::invalid("max_iters, check_every and lift_every must be positive"));
        }
        if !(self.stall_ratio > 0.0 && self.stall_ratio < 1.0) {
            return Err(Error::invalid(format!("stall_ratio must lie in (0, 1), got {}", self.stall_ratio)));
        }
        Ok(())
    }
}

/// One bisection probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNormProbe {
    pub mu: f64,
    pub member: bool,
    /// `‖v − P_{G_μ}(v)‖ / ‖v‖` at the end of the probe.
    pub residual: f64,
    pub iterations: usize,
    /// False when the probe hit `max_iters` undecided and was counted as a non-member.
    pub decided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNormEstimate {
    /// Midpoint of the final bracket.
    pub estimate: f64,
    /// Width of the final bracket.
    pub bracket: f64,
    pub lower: f64,
    pub upper: f64,
    /// `‖v‖ / (2√π)`, the isoperimetric upper bound.
    pub initial_upper: f64,
    /// Smallest max modulus of an exact representative `v = div g` met
    /// during the search; a proven upper bound.
    pub certified_upper: f64,
    /// Largest `⟨v, z⟩ / J(z)` met during the search; a proven lower bound.
    pub certified_lower: f64,
    pub subtracted_mean: f64,
    /// Every probe was decided within its iteration budget.
    pub all_probes_decided: bool,
    pub total_iterations: usize,
    pub probes: Vec<GNormProbe>,
}

/// `(estimate, bracket)` with the default options and the given tolerance.
pub fn gnorm_estimate(v: &Image, tol: f64) -> Result<(f64, f64)> {
    let e = gnorm_estimate_with(v, &GNormOptions::with_tol(tol))?;
    Ok((e.estimate, e.bracket))
}

/// Checks the zero-mean precondition, returning the mean to subtract (0 if none).
pub fn zero_mean_check(v: &Image, boundary: Boundary, subtract: bool) -> Result<f64> {
    if !boundary.needs_zero_mean() {
        return Ok(0.0);
    }
    let total: f64 = v.sum();
    let mass: f64 = v.data().iter().map(|x| x.abs()).sum();
    if total.abs() <= ZERO_MEAN_TOL * mass {
        return Ok(0.0);
    }
    if subtract {
        Ok(v.mean())
    } else {
        Err(Error::NonZeroMean { mean: v.mean(), tolerance: ZERO_MEAN_TOL * mass / v.grid().len() as f64 })
    }
}

/// `⟨v, u⟩ / J(u)`, a lower bound on `‖v‖_G` whenever `J(u) > 0`.
pub fn duality_ratio(v: &Image, u: &Image, boundary: Boundary) -> Result<Option<f64>> {
    let j = boundary.tv_norm(u);
    if j <= 0.0 {
        return Ok(None);
    }
    Ok(Some(l2_inner(v, u)? / j))
}

pub fn gnorm_estimate_with(v: &Image, opts: &GNormOptions) -> Result<GNormEstimate> {
    opts.validate()?;
    let mean = zero_mean_check(v, opts.boundary, opts.subtract_mean)?;
    let v = if mean != 0.0 { v.map(|x| x - mean) } else { v.clone() };
    let norm = l2_norm(&v);
    let initial_upper = norm / (2.0 * std::f64::consts::PI.sqrt());
    if norm == 0.0 {
        return Ok(GNormEstimate {
            estimate: 0.0,
            bracket: 0.0,
            lower: 0.0,
            upper: 0.0,
            initial_upper: 0.0,
            certified_upper: 0.0,
            certified_lower: 0.0,
            subtracted_mean: mean,
            all_probes_decided: true,
            total_iterations: 0,
            probes: Vec::new(),
        });
    }

    let mut lo = duality_ratio(&v, &v, opts.boundary)?.unwrap_or(0.0).max(0.0);
    let mut search = Search::new(&v, initial_upper, opts, norm);
    let mut probes = Vec::new();
    let first = search.probe(initial_upper);
    let mut hi = if first.member { initial_upper } else { f64::INFINITY };
    if !first.member {
        lo = lo.max(initial_upper);
    }
    probes.push(first);
    hi = hi.min(search.certified_upper);
    // Lower end backed only by decided probes.
    let mut lo_decided = lo;

    while hi - lo > opts.tol * initial_upper {
        let mu = 0.5 * (lo + hi);
        let probe = search.probe(mu);
        if probe.member {
            hi = mu;
        } else {
            lo = mu;
            if probe.decided {
                lo_decided = mu;
            }
        }
        hi = hi.min(search.certified_upper);
        lo = lo.max(search.certified_lower).min(hi);
        lo_decided = lo_decided.max(search.certified_lower).min(hi);
        probes.push(probe);
    }

    Ok(GNormEstimate {
        estimate: 0.5 * (lo + hi),
        bracket: hi - lo_decided,
        lower: lo_decided,
        upper: hi,
        initial_upper,
        certified_upper: search.certified_upper,
        certified_lower: search.certified_lower,
        subtracted_mean: mean,
        all_probes_decided: probes.iter().all(|p| p.decided),
        total_iterations: search.solver.iterations(),
        probes,
    })
}

/// `‖v − P_{G_μ}(v)‖` after running the plain projector with `params`
/// (radius replaced by `mu`).
pub fn membership_residual(v: &Image, mu: f64, params: &ProjectorParams) -> Result<f64> {
    let p = ProjectorParams { radius: mu, ..*params };
    let proj = project_g_ball_from(v, &p, None)?;
    Ok(l2_norm(&v.sub(&proj.image)?))
}

/// Dual solver shared by the probes so each one warm-starts from the last.
struct Search<'a> {
    opts: &'a GNormOptions,
    norm: f64,
    solver: DualSolver,
    certified_upper: f64,
    /// Largest duality ratio met so far; a proven lower bound.
    certified_lower: f64,
}

impl<'a> Search<'a> {
    fn new(v: &Image, first_mu: f64, opts: &'a GNormOptions, norm: f64) -> Self {
        let mut solver = DualSolver::new(v, first_mu, opts.boundary, 0.125);
        solver.set_accelerated(true);
        Search { opts, norm, solver, certified_upper: f64::INFINITY, certified_lower: 0.0 }
    }

    fn probe(&mut self, mu: f64) -> GNormProbe {
        // Rescale the dual so the current projection is unchanged, then clamp.
        let prev = self.solver.radius();
        if prev != mu {
            let p = self.solver.dual().scaled(prev / mu);
            self.solver.set_radius(mu);
            self.solver.set_dual(&p).expect("same work grid");
        }
        let mut iterations = 0;
        let mut next_check = self.opts.check_every;
        // Lifts make the residual non-monotone; progress is measured on the
        // best value reached.
        let mut best = f64::INFINITY;
        let mut best_at_last_check = f64::INFINITY;
        loop {
            let checkpoint = iterations >= next_check;
            if checkpoint {
                next_check *= 2;
                if let Some(ratio) = self.solver.duality_ratio() {
                    self.certified_lower = self.certified_lower.max(ratio);
                    if ratio > mu {
                        let residual = self.solver.residual_norm() / self.norm;
                        return GNormProbe { mu, member: false, residual, iterations, decided: true };
                    }
                }
                // The ROF energy is 1-strongly convex, so the iterate lies
                // within √(2μ·gap) of the exact residual.
                let (gap, _) = self.solver.rof_gap();
                let residual = self.solver.residual_norm() / self.norm;
                let spread = (2.0 * mu * gap.max(0.0)).sqrt() / self.norm;
                if residual - spread > self.opts.tol {
                    return GNormProbe { mu, member: false, residual, iterations, decided: true };
                }
            }
            let lift = self.solver.poisson_lift();
            self.certified_upper = self.certified_upper.min(lift.feasible_norm);
            let residual = lift.residual / self.norm;
            let done = |member, decided| GNormProbe { mu, member, residual, iterations, decided };
            if lift.feasible_max <= 1.0 || residual <= self.opts.tol {
                return done(true, true);
            }
            best = best.min(residual);
            if checkpoint {
                if best > self.opts.stall_ratio * best_at_last_check {
                    return done(false, true);
                }
                best_at_last_check = best;
            }
            if iterations >= self.opts.max_iters {
                return done(false, false);
            }
            for _ in 0..self.opts.lift_every {
                self.solver.advance();
                iterations += 1;
            }
        }
    }
}
