//! Long thin structure detection on the texture component.
//!
//! Segments are meaningful alignments of level-line orientations. Every
//! sub-interval of a set of discrete lines is a candidate: lines run in
//! `directions` quantized directions over `[0, π)`, one pixel apart, and are
//! sampled every `stride` pixels. Each line is read in both orientations.
//! A candidate with `l` samples of which `k` are aligned with its direction
//! within `p·π` has
//!
//! ```text
//! NFA = N_tests · P[Binomial(l, p) ≥ k]
//! ```
//!
//! with `N_tests` the number of candidates. Under a null model of
//! independent uniform orientations the expected number of candidates with
//! `NFA ≤ ε` is at most `ε`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvg::{bvg_decompose, BvgParams, Decomposition};
use crate::error::{Error, Result};
use crate::grid::Image;

/// Smallest width and height accepted by [`detect_segments`].
pub const MIN_DETECTION_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Endpoint Hausdorff distance (physical) below which segments merge.
    pub merge_dist: f64,
    /// Largest angle between fused segments, radians.
    pub merge_angle: f64,
    /// Largest gap (physical) bridged between collinear segments.
    pub chain_gap: f64,
}

impl FusionParams {
    pub fn for_spacing(h: f64) -> Self {
        FusionParams { merge_dist: 3.0 * h, merge_angle: 5f64.to_radians(), chain_gap: 10.0 * h }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Angular tolerance as a fraction of `π`; also the null probability of
    /// a single alignment.
    pub precision: f64,
    /// NFA threshold.
    pub epsilon: f64,
    /// Shortest reported segment, physical units.
    pub min_length: f64,
    /// Distance between samples along a line, pixels.
    pub stride: f64,
    /// Number of line directions over `[0, π)`.
    pub directions: usize,
    /// Intensity quantization step. Gradients weaker than
    /// `quantization / sin(p·π)` leave the orientation undefined.
    pub quantization: f64,
    pub fusion: FusionParams,
}

impl DetectionParams {
    /// Defaults with fusion distances scaled to the pixel size `h`.
    pub fn for_spacing(h: f64) -> Self {
        DetectionParams {
            precision: 1.0 / 16.0,
            epsilon: 1.0,
            min_length: 0.0,
            stride: 2.0,
            directions: 64,
            quantization: 2.0 / 255.0,
            fusion: FusionParams::for_spacing(h),
        }
    }

    pub fn gradient_threshold(&self) -> f64 {
        self.quantization / (self.precision * PI).sin()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.precision > 0.0 && self.precision < 1.0) {
            return Err(Error::invalid(format!("precision must lie in (0, 1), got {}", self.precision)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.min_length >= 0.0 && self.min_length.is_finite()) {
            return Err(Error::invalid(format!("min_length must be non-negative, got {}", self.min_length)));
        }
        if !(self.stride >= 1.0 && self.stride.is_finite()) {
            return Err(Error::invalid(format!("stride must be at least one pixel, got {}", self.stride)));
        }
        if self.directions < 2 {
            return Err(Error::invalid(format!("need at least 2 directions, got {}", self.directions)));
        }
        if !(self.quantization >= 0.0 && self.quantization.is_finite()) {
            return Err(Error::invalid("quantization must be non-negative"));
        }
        let f = &self.fusion;
        if !(f.merge_dist >= 0.0 && f.chain_gap >= 0.0 && (0.0..=PI / 2.0).contains(&f.merge_angle)) {
            return Err(Error::invalid(format!("invalid fusion parameters {f:?}")));
        }
        Ok(())
    }
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams::for_spacing(1.0)
    }
}

/// Level-line orientation of every pixel, from the 2×2 block whose top-left
/// corner it is (clamped at the far borders).
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationField {
    pub width: usize,
    pub height: usize,
    /// Level-line angle in `(-π, π]`, the gradient turned clockwise by a
    /// right angle.
    pub angle: Vec<f64>,
    /// Gradient modulus in intensity units per pixel.
    pub magnitude: Vec<f64>,
    pub defined: Vec<bool>,
}

impl OrientationField {
    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    fn at(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.defined[i].then_some(self.angle[i])
    }
}

pub fn orientation_field(img: &Image) -> OrientationField {
    orientation_field_with(img, DetectionParams::default().gradient_threshold())
}

pub fn orientation_field_with(img: &Image, threshold: f64) -> OrientationField {
    let (w, h) = (img.width(), img.height());
    let u = img.data();
    let n = w * h;
    let (mut angle, mut magnitude, mut defined) = (vec![0.0; n], vec![0.0; n], vec![false; n]);
    for j in 0..h {
        let j1 = (j + 1).min(h - 1);
        for i in 0..w {
            let i1 = (i + 1).min(w - 1);
            let (a, b, c, d) = (u[j * w + i], u[j * w + i1], u[j1 * w + i], u[j1 * w + i1]);
            let gx = 0.5 * (b + d - a - c);
            let gy = 0.5 * (c + d - a - b);
            let m = gx.hypot(gy);
            let k = j * w + i;
            magnitude[k] = m;
            defined[k] = m > threshold;
            angle[k] = gx.atan2(-gy);
        }
    }
    OrientationField { width: w, height: h, angle, magnitude, defined }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub length: f64,
    /// Aligned samples.
    pub k: u64,
    /// Samples.
    pub l: u64,
    pub log10_nfa: f64,
    /// Width of the alignment strip in pixels.
    #[serde(skip, default = "unit_width")]
    pub width: f64,
}

fn unit_width() -> f64 {
    1.0
}

impl Segment {
    /// Direction angle in `(-π, π]`.
    pub fn angle(&self) -> f64 {
        (self.y2 - self.y1).atan2(self.x2 - self.x1)
    }

    fn endpoints(&self) -> [[f64; 2]; 2] {
        [[self.x1, self.y1], [self.x2, self.y2]]
    }

    fn order(&self, other: &Segment) -> Ordering {
        self.log10_nfa
            .total_cmp(&other.log10_nfa)
            .then(other.length.total_cmp(&self.length))
            .then(self.x1.total_cmp(&other.x1))
            .then(self.y1.total_cmp(&other.y1))
            .then(self.x2.total_cmp(&other.x2))
            .then(self.y2.total_cmp(&other.y2))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    /// Sorted by NFA, most meaningful first.
    pub segments: Vec<Segment>,
    pub n_tests: f64,
    /// No pixel had a defined orientation.
    pub degenerate: bool,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Angle between two undirected lines, in `[0, π/2]`.
pub fn line_angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn oriented_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// `log10 P[X ≥ k]` for `X ~ Binomial(l, p)`, through the regularized
/// incomplete beta function `I_p(k, l − k + 1)`.
pub fn log10_binomial_tail(l: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > l {
        return f64::NEG_INFINITY;
    }
    ln_incomplete_beta(k as f64, (l - k + 1) as f64, p) / std::f64::consts::LN_10
}

/// `ln I_x(a, b)` by the continued fraction, evaluated on the side where it
/// converges fast.
fn ln_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let ln_front = |a: f64, b: f64, x: f64| {
        libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (-x).ln_1p() - a.ln()
    };
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front(a, b, x) + beta_continued_fraction(a, b, x).ln()
    } else {
        let rest = (ln_front(b, a, 1.0 - x) + beta_continued_fraction(b, a, 1.0 - x).ln()).exp();
        (-rest).ln_1p()
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// A discrete line: start point and unit direction in pixel coordinates,
/// with `count` samples.
#[derive(Clone, Copy, Debug)]
struct Line {
    start: [f64; 2],
    dir: [f64; 2],
    theta: f64,
    count: usize,
}

impl Line {
    fn point(&self, i: f64, stride: f64) -> [f64; 2] {
        [self.start[0] + i * stride * self.dir[0], self.start[1] + i * stride * self.dir[1]]
    }
}

fn enumerate_lines(width: usize, height: usize, directions: usize, stride: f64) -> Vec<Line> {
    let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
    let mut lines = Vec::new();
    for d in 0..directions {
        let theta = PI * d as f64 / directions as f64;
        let (s, c) = theta.sin_cos();
        let (u, n) = ([c, s], [-s, c]);
        let offsets = [0.0, xmax * n[0], ymax * n[1], xmax * n[0] + ymax * n[1]];
        let lo = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut off = lo.ceil();
        while off <= hi + 1e-9 {
            let base = [off * n[0], off * n[1]];
            // Clip the line to the box of pixel centers.
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut empty = false;
            for (b, v, m) in [(base[0], u[0], xmax), (base[1], u[1], ymax)] {
                if v.abs() < 1e-12 {
                    if b < -1e-9 || b > m + 1e-9 {
                        empty = true;
                    }
                } else {
                    let (ta, tb) = ((-b) / v, (m - b) / v);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
            }
            if !empty && t1 >= t0 {
                let count = ((t1 - t0) / stride + 1e-9).floor() as usize + 1;
                if count >= 2 {
                    lines.push(Line { start: [base[0] + t0 * u[0], base[1] + t0 * u[1]], dir: u, theta, count });
                }
            }
            off += 1.0;
        }
    }
    lines
}

fn pixel_of(p: [f64; 2], width: usize, height: usize) -> (usize, usize) {
    let c = p[0].round().clamp(0.0, (width - 1) as f64) as usize;
    let r = p[1].round().clamp(0.0, (height - 1) as f64) as usize;
    (c, r)
}

/// A meaningful interval `[a, b]` of samples on a line, in reading order.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    line: usize,
    reversed: bool,
    a: usize,
    b: usize,
    k: u64,
    log10_nfa: f64,
}

impl Candidate {
    fn len(&self) -> usize {
        self.b - self.a + 1
    }

    /// Sample index along the line (forward order) of the `i`-th point.
    fn sample(&self, line: &Line, i: usize) -> usize {
        if self.reversed {
            line.count - 1 - (self.a + i)
        } else {
            self.a + i
        }
    }

    fn rank(&self, other: &Candidate) -> Ordering {
        self.log10_nfa
            .total_cmp(&other.log10_nfa)
            .then(other.len().cmp(&self.len()))
            .then(self.line.cmp(&other.line))
            .then(self.reversed.cmp(&other.reversed))
            .then(self.a.cmp(&other.a))
    }
}

pub fn detect_segments(img: &Image, params: &DetectionParams) -> Result<SegmentSet> {
    params.validate()?;
    let (width, height) = (img.width(), img.height());
    if width < MIN_DETECTION_SIZE || height < MIN_DETECTION_SIZE {
        return Err(Error::invalid(format!(
            "detection needs at least {MIN_DETECTION_SIZE}x{MIN_DETECTION_SIZE} pixels, got {width}x{height}"
        )));
    }
    let field = orientation_field_with(img, params.gradient_threshold());
    let lines = enumerate_lines(width, height, params.directions, params.stride);
    let pairs: f64 = lines.iter().map(|l| (l.count * (l.count - 1) / 2) as f64).sum();
    let n_tests = 2.0 * pairs;
    if field.defined_count() == 0 {
        return Ok(SegmentSet { segments: Vec::new(), n_tests, degenerate: true });
    }

    let p = params.precision;
    let n_max = lines.iter().map(|l| l.count).max().unwrap_or(0);
    let log_tests = n_tests.log10();
    let log_eps = params.epsilon.log10();
    // log10 NFA by (l, k), stored row by row.
    let table: Vec<Vec<f64>> = (0..=n_max)
        .into_par_iter()
        .map(|l| (0..=l).map(|k| log_tests + log10_binomial_tail(l as u64, k as u64, p)).collect())
        .collect();
    let tol = p * PI;
    let h = img.spacing();
    let min_samples = params.min_length / (params.stride * h);

    let per_line: Vec<Vec<Candidate>> = lines
        .par_iter()
        .enumerate()
        .map(|(index, line)| {
            let angles: Vec<Option<f64>> = (0..line.count)
                .map(|i| {
                    let (c, r) = pixel_of(line.point(i as f64, params.stride), width, height);
                    field.at(c, r)
                })
                .collect();
            let mut found = Vec::new();
            for reversed in [false, true] {
                let theta = if reversed { line.theta + PI } else { line.theta };
                let aligned: Vec<usize> = (0..line.count)
                    .filter(|&i| {
                        let j = if reversed { line.count - 1 - i } else { i };
                        angles[j].is_some_and(|a| oriented_diff(a, theta) <= tol)
                    })
                    .collect();
                let mut local = Vec::new();
                for (i, &a) in aligned.iter().enumerate() {
                    for (j, &b) in aligned.iter().enumerate().skip(i + 1) {
                        if ((b - a) as f64) < min_samples {
                            continue;
                        }
                        let (l, k) = (b - a + 1, j - i + 1);
                        let nfa = table[l][k];
                        if nfa <= log_eps {
                            local.push(Candidate { line: index, reversed, a, b, k: k as u64, log10_nfa: nfa });
                        }
                    }
                }
                found.extend(exclude_on_line(local));
            }
            found
        })
        .collect();

    let mut candidates: Vec<Candidate> = per_line.into_iter().flatten().collect();
    candidates.sort_by(|x, y| x.rank(y));

    let mut mask = vec![false; width * height];
    let mut segments = Vec::new();
    for cand in candidates {
        let line = &lines[cand.line];
        let hits = (0..cand.len())
            .filter(|&i| {
                let (c, r) = pixel_of(line.point(cand.sample(line, i) as f64, params.stride), width, height);
                mask[r * width + c]
            })
            .count();
        if 2 * hits > cand.len() {
            continue;
        }
        let p0 = line.point(cand.sample(line, 0) as f64, params.stride);
        let p1 = line.point(cand.sample(line, cand.len() - 1) as f64, params.stride);
        mark(&mut mask, width, height, p0, p1);
        let g = img.grid();
        let to_phys = |q: [f64; 2]| [g.origin[0] + q[0] * h, g.origin[1] + q[1] * h];
        let (a, b) = (to_phys(p0), to_phys(p1));
        segments.push(Segment {
            x1: a[0],
            y1: a[1],
            x2: b[0],
            y2: b[1],
            length: (cand.len() - 1) as f64 * params.stride * h,
            k: cand.k,
            l: cand.len() as u64,
            log10_nfa: cand.log10_nfa,
            width: 1.0,
        });
    }
    Ok(SegmentSet { segments, n_tests, degenerate: false })
}

/// Keeps the most meaningful intervals of one line reading, dropping any
/// that shares more than half of its samples with a kept one.
fn exclude_on_line(mut local: Vec<Candidate>) -> Vec<Candidate> {
    local.sort_by(|x, y| x.rank(y));
    let mut kept: Vec<Candidate> = Vec::new();
    for c in local {
        let clash = kept.iter().any(|k| {
            let shared = (c.b.min(k.b) + 1).saturating_sub(c.a.max(k.a));
            2 * shared > c.len()
        });
        if !clash {
            kept.push(c);
        }
    }
    kept
}

/// Marks the pixels within one pixel of the segment `p0 p1`.
fn mark(mask: &mut [bool], width: usize, height: usize, p0: [f64; 2], p1: [f64; 2]) {
    let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
    let steps = (2.0 * len).ceil() as usize + 1;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (c, r) = pixel_of([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])], width, height);
        for rr in r.saturating_sub(1)..=(r + 1).min(height - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(width - 1) {
                mask[rr * width + cc] = true;
            }
        }
    }
}

/// Merges near-duplicate segments and chains collinear ones until no pair
/// qualifies. The result is a fixed point, so fusing it again changes
/// nothing.
pub fn fuse_segments(set: &SegmentSet, params: &DetectionParams) -> SegmentSet {
    let f = params.fusion;
    let mut segs = set.segments.clone();
    loop {
        let mut changed = false;
        let mut i = 0;
        while i < segs.len() {
            let mut j = i + 1;
            while j < segs.len() {
                if let Some(m) = try_fuse(&segs[i], &segs[j], &f) {
                    segs[i] = m;
                    segs.remove(j);
                    changed = true;
                    j = i + 1;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !changed {
            break;
        }
    }
    segs.sort_by(|a, b| a.order(b));
    SegmentSet { segments: segs, n_tests: set.n_tests, degenerate: set.degenerate }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn endpoint_hausdorff(a: &Segment, b: &Segment) -> f64 {
    let directed = |x: &Segment, y: &Segment| {
        x.endpoints()
            .iter()
            .map(|&p| y.endpoints().iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn try_fuse(a: &Segment, b: &Segment, f: &FusionParams) -> Option<Segment> {
    if line_angle_diff(a.angle(), b.angle()) > f.merge_angle {
        return None;
    }
    // The longer segment carries the line; ties go to the more meaningful.
    let (base, other) = match b.length.total_cmp(&a.length).then(a.order(b)) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let origin = [base.x1, base.y1];
    let u = [(base.x2 - base.x1) / base.length, (base.y2 - base.y1) / base.length];
    let along = |p: [f64; 2]| (p[0] - origin[0]) * u[0] + (p[1] - origin[1]) * u[1];
    let across = |p: [f64; 2]| ((p[0] - origin[0]) * u[1] - (p[1] - origin[1]) * u[0]).abs();

    let (best, worst) = if a.order(b) == Ordering::Greater { (b, a) } else { (a, b) };
    let (k, l) = if endpoint_hausdorff(a, b) <= f.merge_dist {
        (best.k, best.l)
    } else {
        let ends = other.endpoints();
        if ends.iter().any(|&p| across(p) > f.merge_dist) {
            return None;
        }
        let (t0, t1) = (along(ends[0]).min(along(ends[1])), along(ends[0]).max(along(ends[1])));
        let gap = (t0 - base.length).max(-t1).max(0.0);
        if gap > f.chain_gap {
            return None;
        }
        (best.k + worst.k, best.l + worst.l)
    };
    let ts = [0.0, base.length, along(other.endpoints()[0]), along(other.endpoints()[1])];
    let lo = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(Segment {
        x1: origin[0] + lo * u[0],
        y1: origin[1] + lo * u[1],
        x2: origin[0] + hi * u[0],
        y2: origin[1] + hi * u[1],
        length: hi - lo,
        k,
        l,
        log10_nfa: a.log10_nfa.min(b.log10_nfa),
        width: a.width.max(b.width),
    })
}

#[derive(Clone, Debug)]
pub struct RoadDetection {
    pub decomposition: Decomposition,
    pub segments: SegmentSet,
    /// The input with the segments drawn at its maximum intensity.
    pub overlay: Image,
}

/// Decomposes `f`, detects segments on the texture component and fuses
/// them.
pub fn road_pipeline(f: &Image, bvg: &BvgParams, det: &DetectionParams) -> Result<RoadDetection> {
    det.validate()?;
    let decomposition = bvg_decompose(f, bvg)?;
    let raw = detect_segments(&decomposition.w, det)?;
    let mut segments = fuse_segments(&raw, det);
    segments.segments.retain(|s| s.length >= det.min_length);
    let overlay = draw_segments(f, &segments.segments);
    Ok(RoadDetection { decomposition, segments, overlay })
}

/// Draws segments on a copy of `img` at its maximum value (one above a flat
/// image so they stay visible).
pub fn draw_segments(img: &Image, segments: &[Segment]) -> Image {
    let mut out = img.clone();
    let (lo, hi) = (img.min(), img.max());
    let ink = if hi > lo { hi } else { hi + 1.0 };
    let g = *img.grid();
    for s in segments {
        let p0 = [(s.x1 - g.origin[0]) / g.spacing, (s.y1 - g.origin[1]) / g.spacing];
        let p1 = [(s.x2 - g.origin[0]) / g.spacing, (s.y2 - g.origin[1]) / g.spacing];
        let steps = (2.0 * dist(p0, p1)).ceil() as usize + 1;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]));
            if x > -0.5 && y > -0.5 && x < g.width as f64 - 0.5 && y < g.height as f64 - 0.5 {
                let (c, r) = pixel_of([x, y], g.width, g.height);
                out.set(c, r, ink);
            }
        }
    }
    out
}
