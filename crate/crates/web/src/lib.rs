//! WebAssembly bindings for the demo page in `www/`.
//!
//! Images cross the boundary as row-major `Float64Array`s on an `n × n`
//! grid covering `[-1, 1]²`. Reports come back as JSON strings.

use bvg_core::analysis::{gnorm_estimate_with, GNormOptions};
use bvg_core::bvg::{bvg_decompose, objective, BvgParams};
use bvg_core::roads::{detect_segments, draw_segments, fuse_segments, DetectionParams, Segment};
use bvg_core::synth::{render, SceneSpec, Shape};
use bvg_core::{Boundary, Grid, Image};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DOMAIN: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

fn grid(n: usize) -> Result<Grid, String> {
    Grid::covering(n, n, DOMAIN).map_err(|e| e.to_string())
}

fn image(n: usize, data: Vec<f64>) -> Result<Image, String> {
    Image::new(grid(n)?, data).map_err(|e| e.to_string())
}

fn plane(lambda: f64, mu: f64) -> BvgParams {
    let mut p = BvgParams::new(lambda, mu);
    p.projector.boundary = Boundary::ZeroExtended;
    p
}

/// Demo scenes: a thin bar with optional clutter.
pub fn scene_data(n: usize, kind: &str, noise: f64, seed: u64) -> Result<Vec<f64>, String> {
    let bar = Shape::centered_bar([0.0, 0.0], 1.3, 0.03, 0.5, 1.0);
    let mut parts = match kind {
        "bar" => vec![bar],
        "disk" => vec![Shape::Disk { center: [0.0, 0.0], radius: 0.5, amplitude: 1.0 }],
        "mixed" => vec![
            bar,
            Shape::Disk { center: [0.45, -0.4], radius: 0.3, amplitude: 0.8 },
            Shape::TexturedSquare { center: [-0.5, 0.45], side: 0.6, frequency: 6.0, amplitude: 0.4 },
        ],
        other => return Err(format!("unknown scene '{other}'")),
    };
    if noise > 0.0 {
        parts.push(Shape::Noise { sigma: noise, seed });
    }
    let spec = SceneSpec::new(Shape::Composite { parts }, grid(n)?).with_edge_blur(1.0);
    render(&spec).map(Image::into_data).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub objective: f64,
    pub bv_term: f64,
    pub l2_term: f64,
    pub g_term: f64,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// The three parts of a decomposition plus its objective.
#[wasm_bindgen]
pub struct Parts {
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    summary: String,
}

#[wasm_bindgen]
impl Parts {
    #[wasm_bindgen(getter)]
    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn v(&self) -> Vec<f64> {
        self.v.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn w(&self) -> Vec<f64> {
        self.w.clone()
    }

    /// JSON with the objective terms and the iteration count.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

pub fn decompose_data(n: usize, data: Vec<f64>, lambda: f64, mu: f64) -> Result<Parts, String> {
    let f = image(n, data)?;
    let d = bvg_decompose(&f, &plane(lambda, mu)).map_err(|e| e.to_string())?;
    let obj = objective(&d, lambda, mu).map_err(|e| e.to_string())?;
    let summary = Summary {
        objective: obj.total,
        bv_term: obj.bv_term,
        l2_term: obj.l2_term,
        g_term: obj.g_term,
        outer_iterations: d.trace.outer_iterations,
        converged: d.trace.converged,
    };
    Ok(Parts {
        u: d.u.into_data(),
        v: d.v.into_data(),
        w: d.w.into_data(),
        summary: serde_json::to_string(&summary).map_err(|e| e.to_string())?,
    })
}

#[derive(Debug, Serialize)]
pub struct GNorm {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn gnorm_data(n: usize, data: Vec<f64>, tol: f64) -> Result<GNorm, String> {
    let opts = GNormOptions { boundary: Boundary::ZeroExtended, tol, ..Default::default() };
    let e = gnorm_estimate_with(&image(n, data)?, &opts).map_err(|e| e.to_string())?;
    Ok(GNorm { estimate: e.estimate, lower: e.lower, upper: e.upper })
}

/// Fused segments found on `data` and the image with them drawn in.
pub fn detect_data(n: usize, data: Vec<f64>) -> Result<(Vec<Segment>, Vec<f64>), String> {
    let img = image(n, data)?;
    let det = DetectionParams::for_spacing(img.spacing());
    let raw = detect_segments(&img, &det).map_err(|e| e.to_string())?;
    let fused = fuse_segments(&raw, &det).segments;
    let overlay = draw_segments(&img, &fused).into_data();
    Ok((fused, overlay))
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Renders a demo scene (`bar`, `disk` or `mixed`) on an `n × n` grid.
#[wasm_bindgen]
pub fn synth(n: usize, kind: &str, noise: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    scene_data(n, kind, noise, seed).map_err(js)
}

#[wasm_bindgen]
pub fn decompose(n: usize, data: Vec<f64>, lambda: f64, mu: f64) -> Result<Parts, JsError> {
    decompose_data(n, data, lambda, mu).map_err(js)
}

/// G-norm estimate on the plane, as JSON `{estimate, lower, upper}`.
#[wasm_bindgen]
pub fn gnorm(n: usize, data: Vec<f64>, tol: f64) -> Result<String, JsError> {
    let g = gnorm_data(n, data, tol).map_err(js)?;
    serde_json::to_string(&g).map_err(|e| js(e.to_string()))
}

/// Segments on `data` (usually the texture part). Returns JSON
/// `{segments, overlay}`.
#[wasm_bindgen]
pub fn detect(n: usize, data: Vec<f64>) -> Result<String, JsError> {
    let (segments, overlay) = detect_data(n, data).map_err(js)?;
    serde_json::to_string(&serde_json::json!({ "segments": segments, "overlay": overlay })).map_err(|e| js(e.to_string()))
}
