//! Norm reports and the executable form of the three-part optimality
//! conditions: which regime an input falls in, which case a decomposition
//! satisfies, and the two norm inequalities the proofs rest on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gnorm::{gnorm_estimate_with, GNormEstimate, GNormOptions};
use crate::bvg::Decomposition;
use crate::error::Result;
use crate::grid::{l1_norm, l2_inner, l2_norm, Boundary, BvNorm, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Relative tolerance on every theorem comparison.
    pub tol: f64,
    /// BV quantity used for the thresholds and the `‖u‖_BV` terms.
    pub bv_norm: BvNorm,
    pub gnorm: GNormOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { tol: 0.05, bv_norm: BvNorm::Full, gnorm: GNormOptions::default() }
    }
}

impl AnalysisOptions {
    pub fn new(tol: f64, boundary: Boundary) -> Self {
        AnalysisOptions { tol, gnorm: GNormOptions { boundary, ..Default::default() }, ..Default::default() }
    }

    pub fn with_bv_norm(self, bv_norm: BvNorm) -> Self {
        AnalysisOptions { bv_norm, ..self }
    }

    pub fn boundary(&self) -> Boundary {
        self.gnorm.boundary
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l1: f64,
    pub l2: f64,
    pub tv: f64,
    /// `l1 + tv`.
    pub bv: f64,
    /// G-norm estimate; `None` when the estimator could not run.
    pub g: Option<f64>,
    /// Width of the estimator's final bracket.
    pub g_tolerance: f64,
    pub g_valid: bool,
    /// Proven upper bound on the G-norm from an explicit field.
    pub g_upper: Option<f64>,
    pub subtracted_mean: f64,
    pub boundary: Boundary,
    /// Why `g` is missing.
    pub g_error: Option<String>,
}

impl NormReport {
    /// The BV quantity selected by `norm`.
    pub fn bv_as(&self, norm: BvNorm) -> f64 {
        match norm {
            BvNorm::Full => self.bv,
            BvNorm::Seminorm => self.tv,
        }
    }
}

/// Norms of `f` under the reflecting boundary, G-norm to tolerance `tol`.
pub fn norms(f: &Image, tol: f64) -> Result<NormReport> {
    norms_with(f, &GNormOptions::with_tol(tol))
}

/// Estimator failures are reported in the record rather than returned.
pub fn norms_with(f: &Image, opts: &GNormOptions) -> Result<NormReport> {
    opts.validate()?;
    let l1 = l1_norm(f);
    let tv = opts.boundary.tv_norm(f);
    let mut report = NormReport {
        l1,
        l2: l2_norm(f),
        tv,
        bv: l1 + tv,
        g: None,
        g_tolerance: 0.0,
        g_valid: false,
        g_upper: None,
        subtracted_mean: 0.0,
        boundary: opts.boundary,
        g_error: None,
    };
    match gnorm_estimate_with(f, opts) {
        Ok(e) => fill_g(&mut report, &e),
        Err(e) => report.g_error = Some(e.to_string()),
    }
    Ok(report)
}

fn fill_g(report: &mut NormReport, e: &GNormEstimate) {
    report.g = Some(e.estimate);
    report.g_tolerance = e.bracket;
    report.g_valid = true;
    report.g_upper = Some(e.certified_upper.min(e.upper));
    report.subtracted_mean = e.subtracted_mean;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputClass {
    /// `‖f‖_G ≤ 1/(2λ)` and `‖f‖_BV ≤ μ/(2λ)`: the optimum is `0 + f + 0`.
    TrivialV,
    /// `‖f‖_G ≤ 1/(2λ)` and `‖f‖_BV > μ/(2λ)`.
    Nontrivial,
    /// `‖f‖_G > 1/(2λ)`.
    OutOfTheorem,
    /// The G-norm could not be estimated.
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `1/(2λ)`.
    pub g_thresh: f64,
    /// `μ/(2λ)`.
    pub bv_thresh: f64,
}

impl Thresholds {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Thresholds { g_thresh: 0.5 / lambda, bv_thresh: mu / (2.0 * lambda) }
    }
}

/// `value = lhs − rhs` of one optimality condition, with the magnitude it
/// is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    pub scale: f64,
    /// `value / scale`, or 0 when both vanish.
    pub relative: f64,
}

impl Gap {
    fn new(value: f64, scale: f64) -> Self {
        let relative = if scale > 0.0 {
            value / scale
        } else if value == 0.0 {
            0.0
        } else {
            value.signum() * f64::INFINITY
        };
        Gap { value, scale, relative }
    }

    /// `|value| ≤ tol · scale`.
    pub fn vanishes(&self, tol: f64) -> bool {
        self.relative.abs() <= tol
    }

    /// `value ≤ tol · scale`.
    pub fn non_positive(&self, tol: f64) -> bool {
        self.relative <= tol
    }
}

/// The four scalar conditions of the three cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    /// `‖v‖_BV − μ/(2λ)`.
    pub bv_v: Gap,
    /// `‖v‖_G − 1/(2λ)`; `None` when the estimator failed.
    pub g_v: Option<Gap>,
    /// `⟨u, v⟩ − ‖u‖_BV/(2λ)`.
    pub uv: Gap,
    /// `⟨v, w⟩ − (μ/(2λ))‖w‖_G`; `None` when the estimator failed.
    pub vw: Option<Gap>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFlags {
    /// `u = 0`, `‖v‖_BV = μ/(2λ)`, `‖v‖_G ≤ 1/(2λ)`, `⟨v, w⟩ = (μ/(2λ))‖w‖_G`.
    pub case1: bool,
    /// `w = 0`, `‖v‖_BV ≤ μ/(2λ)`, `‖v‖_G = 1/(2λ)`, `⟨u, v⟩ = ‖u‖_BV/(2λ)`.
    pub case2: bool,
    /// Both norm equalities and both inner-product equalities.
    pub case3: bool,
    /// `u = w = 0` with `v` inside both thresholds.
    pub trivial_optimum: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub lambda: f64,
    pub mu: f64,
    pub tol: f64,
    pub bv_norm: BvNorm,
    pub boundary: Boundary,
    pub thresholds: Thresholds,
    pub input_class: InputClass,
    /// `‖f‖_G < π/(λμ)`, under which the optimum is of the first case.
    pub predicts_case1: bool,
    /// `μ < 4π`, where optimal decompositions have `u = 0`.
    pub theorem1_regime: bool,
    pub input_norms: NormReport,
    pub gaps: Option<Gaps>,
    pub flags: Option<CaseFlags>,
    pub diagnostics: Vec<String>,
}

fn class_of(n: &NormReport, t: &Thresholds, bv_norm: BvNorm) -> InputClass {
    match n.g {
        None => InputClass::Unknown,
        Some(g) if g > t.g_thresh => InputClass::OutOfTheorem,
        Some(_) if n.bv_as(bv_norm) <= t.bv_thresh => InputClass::TrivialV,
        Some(_) => InputClass::Nontrivial,
    }
}

/// Regime of `f` with the default options and the reflecting boundary.
pub fn classify_input(f: &Image, lambda: f64, mu: f64, tol: f64) -> Result<CaseReport> {
    classify_input_with(f, lambda, mu, &AnalysisOptions { tol, ..Default::default() })
}

pub fn classify_input_with(f: &Image, lambda: f64, mu: f64, opts: &AnalysisOptions) -> Result<CaseReport> {
    validate(lambda, mu, opts)?;
    let input_norms = norms_with(f, &opts.gnorm)?;
    Ok(base_report(lambda, mu, opts, input_norms))
}

fn validate(lambda: f64, mu: f64, opts: &AnalysisOptions) -> Result<()> {
    for (name, v) in [("lambda", lambda), ("mu", mu), ("tol", opts.tol)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(crate::Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    opts.gnorm.validate()
}

fn base_report(lambda: f64, mu: f64, opts: &AnalysisOptions, input_norms: NormReport) -> CaseReport {
    let thresholds = Thresholds::new(lambda, mu);
    let mut diagnostics = Vec::new();
    if let Some(e) = &input_norms.g_error {
        diagnostics.push(format!("G-norm of f unavailable: {e}"));
    }
    CaseReport {
        lambda,
        mu,
        tol: opts.tol,
        bv_norm: opts.bv_norm,
        boundary: opts.boundary(),
        thresholds,
        input_class: class_of(&input_norms, &thresholds, opts.bv_norm),
        predicts_case1: input_norms.g.is_some_and(|g| g < PI / (lambda * mu)),
        theorem1_regime: mu < 4.0 * PI,
        input_norms,
        gaps: None,
        flags: None,
        diagnostics,
    }
}

/// Case flags of `d` with the default options and the decomposition's boundary.
pub fn check_optimality(d: &Decomposition, lambda: f64, mu: f64, tol: f64) -> Result<CaseReport> {
    check_optimality_with(d, lambda, mu, &AnalysisOptions::new(tol, d.boundary))
}

/// Evaluates the four gaps on `d` and sets each case flag whose conditions
/// all hold within `opts.tol` relative to their thresholds. A part is
/// treated as zero when its L² norm is at most `tol · ‖f‖`.
pub fn check_optimality_with(d: &Decomposition, lambda: f64, mu: f64, opts: &AnalysisOptions) -> Result<CaseReport> {
    validate(lambda, mu, opts)?;
    let tol = opts.tol;
    let input_norms = norms_with(&d.f, &opts.gnorm)?;
    let mut report = base_report(lambda, mu, opts, input_norms);
    let t = report.thresholds;
    let boundary = opts.boundary();

    let bv_u = opts.bv_norm.eval(&d.u, boundary);
    let bv_v = opts.bv_norm.eval(&d.v, boundary);
    let g_v = gnorm_estimate_with(&d.v, &opts.gnorm);
    let g_w = gnorm_estimate_with(&d.w, &opts.gnorm);
    for (name, e) in [("v", &g_v), ("w", &g_w)] {
        if let Err(e) = e {
            report.diagnostics.push(format!("G-norm of {name} unavailable: {e}"));
        }
    }
    let g_v = g_v.ok().map(|e| e.estimate);
    let g_w = g_w.ok().map(|e| e.estimate);

    let uv = l2_inner(&d.u, &d.v)?;
    let vw = l2_inner(&d.v, &d.w)?;
    let gaps = Gaps {
        bv_v: Gap::new(bv_v - t.bv_thresh, t.bv_thresh),
        g_v: g_v.map(|g| Gap::new(g - t.g_thresh, t.g_thresh)),
        uv: Gap::new(uv - t.g_thresh * bv_u, t.g_thresh * bv_u),
        vw: g_w.map(|g| Gap::new(vw - t.bv_thresh * g, t.bv_thresh * g)),
    };

    let f_norm = l2_norm(&d.f);
    let negligible = |x: &Image| l2_norm(x) <= tol * f_norm;
    let (u_zero, w_zero) = (negligible(&d.u), negligible(&d.w));
    let g_v_eq = gaps.g_v.is_some_and(|g| g.vanishes(tol));
    let g_v_le = gaps.g_v.is_some_and(|g| g.non_positive(tol));
    let vw_eq = gaps.vw.is_some_and(|g| g.vanishes(tol));
    report.flags = Some(CaseFlags {
        case1: u_zero && gaps.bv_v.vanishes(tol) && g_v_le && vw_eq,
        case2: w_zero && gaps.bv_v.non_positive(tol) && g_v_eq && gaps.uv.vanishes(tol),
        case3: gaps.bv_v.vanishes(tol) && g_v_eq && gaps.uv.vanishes(tol) && vw_eq,
        trivial_optimum: u_zero && w_zero && gaps.bv_v.non_positive(tol) && g_v_le,
    });
    report.gaps = Some(gaps);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `|⟨u, v⟩| ≤ ‖u‖_G ‖v‖_BV`, accepted with relative slack `opts.tol`.
pub fn lemma1_check(u: &Image, v: &Image, opts: &AnalysisOptions) -> Result<InequalityCheck> {
    let lhs = l2_inner(u, v)?.abs();
    let g = gnorm_estimate_with(u, &opts.gnorm)?;
    let rhs = g.estimate * opts.bv_norm.eval(v, opts.boundary());
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs * (1.0 + opts.tol) })
}

/// The chain `‖f‖_G ≤ ‖f‖_{L²}/(2√π) ≤ ‖f‖_BV/(4π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoperimetricChain {
    pub g: f64,
    pub l2_bound: f64,
    pub bv_bound: f64,
    pub g_le_l2: bool,
    pub l2_le_bv: bool,
}

/// Both links of the chain, each with relative slack `opts.tol`.
pub fn lemma4_check(f: &Image, opts: &AnalysisOptions) -> Result<IsoperimetricChain> {
    let g = gnorm_estimate_with(f, &opts.gnorm)?.estimate;
    let l2_bound = l2_norm(f) / (2.0 * PI.sqrt());
    let bv_bound = opts.bv_norm.eval(f, opts.boundary()) / (4.0 * PI);
    let slack = 1.0 + opts.tol;
    Ok(IsoperimetricChain { g, l2_bound, bv_bound, g_le_l2: g <= l2_bound * slack, l2_le_bv: l2_bound <= bv_bound * slack })
}
