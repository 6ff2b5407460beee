use std::path::{Path, PathBuf};

use bvg_core::analysis::{
    check_optimality_with, classify_input_with, gnorm_estimate_with, norms_with, AnalysisOptions, GNormOptions,
    NormReport,
};
use bvg_core::bvg::{bvg_decompose, objective_with, BvgParams, ObjectiveOptions, TextureConstraint};
use bvg_core::grid::{Boundary, BvNorm, Grid, Image};
use bvg_core::io::{decode_bvgf, decode_pgm, Intensity, PgmDepth, BVGF_MAGIC};
use bvg_core::projector::{rof_energy_terms, rof_solve, ProjectorParams};
use bvg_core::roads::{road_pipeline, DetectionParams, FusionParams};
use bvg_core::synth::{oracle_norms, render, resolution_warnings, SceneSpec, Shape};
use log::{info, warn};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult, Context};
use crate::manifest::Recorder;
use crate::output::{write_atomic, write_image, write_json, write_signed_pgm};

pub struct Ctx {
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

pub fn run(command: Command, ctx: &Ctx) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a, ctx),
        Command::Rof(a) => rof(a, ctx),
        Command::Decompose(a) => decompose(a, ctx),
        Command::Analyze(a) => analyze(a, ctx),
        Command::Classify(a) => classify(a, ctx),
        Command::Check(a) => check(a, ctx),
        Command::Gnorm(a) => gnorm(a, ctx),
        Command::DetectRoads(a) => detect_roads(a, ctx),
    }
}

fn load(rec: &mut Recorder, path: &Path, spacing: Option<f64>) -> CliResult<Image> {
    let bytes = rec.read_input(path)?;
    let img = if bytes.starts_with(BVGF_MAGIC) {
        decode_bvgf(&bytes).with_path(path)?
    } else {
        decode_pgm(&bytes).with_path(path)?.restored()
    };
    let img = match spacing {
        None => img,
        Some(h) => {
            let g = img.grid();
            let grid = Grid::new(g.width, g.height, h, g.origin).with_path(path)?;
            Image::new(grid, img.into_data()).with_path(path)?
        }
    };
    if !img.is_finite() {
        return Err(CliError::Io(format!("{}: image contains non-finite values", path.display())));
    }
    Ok(img)
}

fn load_input(rec: &mut Recorder, input: &InputArgs) -> CliResult<Image> {
    load(rec, &input.input, input.spacing)
}

fn parse_list<const N: usize>(flag: &str, text: &str, sep: char) -> CliResult<[f64; N]> {
    let parts: Vec<&str> = text.split(sep).map(str::trim).collect();
    let bad = || CliError::Usage(format!("--{flag}: expected {N} numbers separated by '{sep}', got '{text}'"));
    if parts.len() != N {
        return Err(bad());
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn parse_grid(text: &str, domain: &str) -> CliResult<Grid> {
    let [w, h] = parse_list::<2>("grid", text, 'x')?;
    if w.fract() != 0.0 || h.fract() != 0.0 || w < 1.0 || h < 1.0 {
        return Err(CliError::Usage(format!("--grid: expected positive integers, got '{text}'")));
    }
    let domain = parse_list::<4>("domain", domain, ',')?;
    Grid::covering(w as usize, h as usize, domain).map_err(|e| CliError::Usage(format!("--grid/--domain: {e}")))
}

fn ensure_finite(name: &str, img: &Image) -> CliResult<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{name} contains non-finite values")))
    }
}

fn depth(out: &ImageOutArgs) -> PgmDepth {
    out.depth.into()
}

fn synth(a: SynthArgs, ctx: &Ctx) -> CliResult<()> {
    let grid = parse_grid(&a.grid, &a.domain)?;
    let center = parse_list::<2>("center", &a.center, ',')?;
    let mut rec = Recorder::new("synth", json!({}));
    let shape = match (a.kind, &a.spec) {
        (_, Some(path)) => {
            let bytes = rec.read_input(path)?;
            serde_json::from_slice::<Shape>(&bytes).map_err(|e| CliError::io(path, e))?
        }
        (Some(kind), None) => match kind {
            ShapeKind::Disk => Shape::Disk { center, radius: a.radius, amplitude: a.amplitude },
            ShapeKind::TexturedSquare => {
                Shape::TexturedSquare { center, side: a.side, frequency: a.frequency, amplitude: a.amplitude }
            }
            ShapeKind::Bar => {
                Shape::centered_bar(center, a.length, a.thickness, a.angle.to_radians(), a.amplitude)
            }
            ShapeKind::GaussianBump => Shape::GaussianBump { center, sigma: a.sigma, amplitude: a.amplitude },
            ShapeKind::Noise => Shape::Noise { sigma: a.sigma, seed: a.seed },
        },
        (None, None) => unreachable!("clap requires --kind or --spec"),
    };
    if let Some(seed) = noise_seed(&shape) {
        rec.set_seed(seed);
    }
    let spec = SceneSpec { shape, grid, supersample: a.supersample, strict: a.strict, edge_blur: a.edge_blur };
    let warnings = resolution_warnings(&spec.shape, &spec.grid);
    for w in &warnings {
        warn!("{w}");
    }
    let img = render(&spec)?;
    let stored = write_image(&a.output, &img, depth(&a.out))?;
    info!("wrote {} ({})", a.output.display(), grid.describe());
    if let Some(path) = &a.oracle {
        let oracle = oracle_norms(&spec.shape)?;
        let rec = rec.with_parameters(json!({ "scene": spec }));
        write_json(
            path,
            &json!({ "manifest": rec.finish(), "scene": spec, "oracle": oracle, "warnings": warnings, "stored": stored }),
        )?;
    }
    ctx.say(format!("{}: {}", a.output.display(), grid.describe()));
    Ok(())
}

fn noise_seed(shape: &Shape) -> Option<u64> {
    match shape {
        Shape::Noise { seed, .. } => Some(*seed),
        Shape::Composite { parts } => parts.iter().find_map(noise_seed),
        _ => None,
    }
}

fn rof(a: RofArgs, ctx: &Ctx) -> CliResult<()> {
    let (lambda, radius) = match (a.lambda, a.ball_radius) {
        (Some(l), None) => (l, 0.5 / l),
        (None, Some(r)) => (0.5 / r, r),
        _ => unreachable!("clap enforces exactly one of --lambda and --ball-radius"),
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CliError::Usage(format!("--lambda/--ball-radius must be positive, got {lambda} / {radius}")));
    }
    let params = ProjectorParams {
        radius,
        fp_tol: a.tol,
        max_iters: a.max_iters,
        boundary: a.boundary.into(),
        accelerated: a.accelerated,
        ..Default::default()
    };
    params.validate()?;
    let mut rec = Recorder::new("rof", json!({ "lambda": lambda, "ball_radius": radius, "projector": params }));
    let f = load_input(&mut rec, &a.input)?;
    let (u, v, trace) = rof_solve(&f, lambda, &params)?;
    ensure_finite("u", &u)?;
    if !trace.converged {
        warn!("projector stopped after {} iterations (residual {:.3e})", trace.iterations_used, trace.final_residual);
    }
    let (tv, fidelity) = rof_energy_terms(&f, &u, lambda, params.boundary)?;
    let u_stored = write_image(&a.output, &u, depth(&a.out))?;
    let v_stored = match &a.v_out {
        Some(p) => Some(write_image(p, &v, depth(&a.out))?),
        None => None,
    };
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "manifest": rec.finish(),
                "iterations_used": trace.iterations_used,
                "final_residual": trace.final_residual,
                "converged": trace.converged,
                "energy": { "tv": tv, "fidelity": fidelity, "total": tv + fidelity },
                "u": u_stored,
                "v": v_stored,
            }),
        )?;
    }
    ctx.say(format!(
        "iterations {} residual {:.3e} energy {:.6} (tv {:.6}, fidelity {:.6})",
        trace.iterations_used,
        trace.final_residual,
        tv + fidelity,
        tv,
        fidelity
    ));
    Ok(())
}

fn bvg_params(s: &SolverArgs) -> CliResult<BvgParams> {
    let mut p = BvgParams::new(s.lambda, s.mu);
    p.stop_tol = s.tol;
    p.max_outer_iters = s.max_iters;
    p.warm_start = !s.no_warm_start;
    p.projector.boundary = s.boundary.into();
    p.texture = match s.texture {
        TextureArg::Penalty => TextureConstraint::Penalty,
        TextureArg::Ball => TextureConstraint::Ball,
    };
    p.validate()?;
    Ok(p)
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn decompose(a: DecomposeArgs, ctx: &Ctx) -> CliResult<()> {
    let params = bvg_params(&a.solver)?;
    let gnorm = GNormOptions { tol: a.gnorm_tol, boundary: params.boundary(), ..Default::default() };
    gnorm.validate()?;
    let bv_norm: BvNorm = a.bv_norm.into();
    let mut rec = Recorder::new("decompose", json!({ "bvg": params, "bv_norm": bv_norm, "gnorm": gnorm }));
    let f = load_input(&mut rec, &a.input)?;
    info!("decomposing {} with lambda {} mu {}", f.grid().describe(), params.lambda, params.mu);
    let d = bvg_decompose(&f, &params)?;
    for (name, img) in [("u", &d.u), ("v", &d.v), ("w", &d.w)] {
        ensure_finite(name, img)?;
    }
    if !d.trace.converged {
        warn!("stopped after {} outer iterations without meeting the tolerance", d.trace.outer_iterations);
    }

    let mut stored = serde_json::Map::new();
    for (name, img) in [("u", &d.u), ("v", &d.v), ("w", &d.w)] {
        write_atomic(&prefixed(&a.out_prefix, &format!("_{name}.bvgf")), &bvg_core::io::encode_bvgf(img))?;
        let s = write_signed_pgm(&prefixed(&a.out_prefix, &format!("_{name}.pgm")), img, depth(&a.out), Intensity::Stretch)?;
        stored.insert(name.to_string(), json!(s));
    }

    let objective = objective_with(&d, params.lambda, params.mu, &ObjectiveOptions { bv_norm, gnorm });
    let norms = |img: &Image| -> CliResult<NormReport> { Ok(norms_with(img, &gnorm)?) };
    let case_report = if a.no_check {
        None
    } else {
        let opts = AnalysisOptions { tol: 0.05, bv_norm, gnorm };
        Some(check_optimality_with(&d, params.lambda, params.mu, &opts)?)
    };
    let report = json!({
        "manifest": rec.finish(),
        "objective": objective.as_ref().ok(),
        "objective_error": objective.as_ref().err().map(|e| e.to_string()),
        "norms": { "f": norms(&f)?, "u": norms(&d.u)?, "v": norms(&d.v)?, "w": norms(&d.w)? },
        "trace": d.trace,
        "case_report": case_report,
        "stored": stored,
    });
    write_json(&prefixed(&a.out_prefix, "_report.json"), &report)?;
    ctx.say(format!(
        "outer iterations {} converged {} objective {}",
        d.trace.outer_iterations,
        d.trace.converged,
        objective.map_or_else(|e| format!("unavailable ({e})"), |o| format!("{:.6}", o.total))
    ));
    Ok(())
}

fn gnorm_options(n: &NormArgs) -> CliResult<GNormOptions> {
    let o = GNormOptions { tol: n.tol, boundary: n.boundary.into(), subtract_mean: n.subtract_mean, ..Default::default() };
    o.validate()?;
    Ok(o)
}

fn analyze(a: AnalyzeArgs, ctx: &Ctx) -> CliResult<()> {
    let opts = gnorm_options(&a.norms)?;
    let mut rec = Recorder::new("analyze", json!({ "gnorm": opts }));
    let f = load_input(&mut rec, &a.input)?;
    let report = norms_with(&f, &opts)?;
    if let Some(path) = &a.json {
        write_json(path, &json!({ "manifest": rec.finish(), "norms": report }))?;
    }
    ctx.say(format!(
        "l1 {:.6} l2 {:.6} tv {:.6} bv {:.6} g {}",
        report.l1,
        report.l2,
        report.tv,
        report.bv,
        report.g.map_or("unavailable".to_string(), |g| format!("{g:.6} ± {:.1e}", report.g_tolerance))
    ));
    match report.g_error {
        Some(e) => Err(CliError::Numerical(format!("G-norm: {e}"))),
        None => Ok(()),
    }
}

fn gnorm(a: GnormArgs, ctx: &Ctx) -> CliResult<()> {
    let opts = gnorm_options(&a.norms)?;
    let mut rec = Recorder::new("gnorm", json!({ "gnorm": opts }));
    let f = load_input(&mut rec, &a.input)?;
    let e = gnorm_estimate_with(&f, &opts)?;
    if let Some(path) = &a.json {
        write_json(path, &json!({ "manifest": rec.finish(), "estimate": e }))?;
    }
    ctx.say(format!(
        "g {:.6} bracket [{:.6}, {:.6}] certified [{:.6}, {:.6}] probes {}",
        e.estimate,
        e.lower,
        e.upper,
        e.certified_lower,
        e.certified_upper,
        e.probes.len()
    ));
    Ok(())
}

fn analysis_options(t: &TheoremArgs, subtract_mean: bool) -> AnalysisOptions {
    let mut o = AnalysisOptions::new(t.tol, t.boundary.into()).with_bv_norm(t.bv_norm.into());
    o.gnorm.subtract_mean = subtract_mean;
    o
}

fn classify(a: ClassifyArgs, ctx: &Ctx) -> CliResult<()> {
    let opts = analysis_options(&a.theorem, a.subtract_mean);
    let mut rec = Recorder::new(
        "classify",
        json!({ "lambda": a.theorem.lambda, "mu": a.theorem.mu, "analysis": opts }),
    );
    let f = load_input(&mut rec, &a.input)?;
    let report = classify_input_with(&f, a.theorem.lambda, a.theorem.mu, &opts)?;
    if let Some(path) = &a.theorem.json {
        write_json(path, &json!({ "manifest": rec.finish(), "report": report }))?;
    }
    ctx.say(format!(
        "class {:?} predicts_case1 {} theorem1_regime {}",
        report.input_class, report.predicts_case1, report.theorem1_regime
    ));
    match &report.input_norms.g_error {
        Some(e) => Err(CliError::Numerical(format!("G-norm: {e}"))),
        None => Ok(()),
    }
}

fn check(a: CheckArgs, ctx: &Ctx) -> CliResult<()> {
    let opts = analysis_options(&a.theorem, false);
    let mut rec =
        Recorder::new("check", json!({ "lambda": a.theorem.lambda, "mu": a.theorem.mu, "analysis": opts }));
    let u = load(&mut rec, &a.u, None)?;
    let v = load(&mut rec, &a.v, None)?;
    let w = load(&mut rec, &a.w, None)?;
    let boundary: Boundary = a.theorem.boundary.into();
    let d = bvg_core::bvg::Decomposition::from_triple(u, v, w, boundary)
        .map_err(|e| CliError::Io(format!("components do not share a grid: {e}")))?;
    let report = check_optimality_with(&d, a.theorem.lambda, a.theorem.mu, &opts)?;
    if let Some(path) = &a.theorem.json {
        write_json(path, &json!({ "manifest": rec.finish(), "report": report }))?;
    }
    let flags = report.flags.unwrap_or_default();
    ctx.say(format!(
        "case1 {} case2 {} case3 {} trivial {}",
        flags.case1, flags.case2, flags.case3, flags.trivial_optimum
    ));
    for d in &report.diagnostics {
        warn!("{d}");
    }
    Ok(())
}

fn detection_params(a: &DetectRoadsArgs, h: f64) -> CliResult<DetectionParams> {
    let base = FusionParams::for_spacing(h);
    let p = DetectionParams {
        precision: a.precision,
        epsilon: a.epsilon,
        min_length: a.min_length,
        stride: a.stride,
        directions: a.directions,
        fusion: FusionParams {
            merge_dist: a.merge_dist.unwrap_or(base.merge_dist),
            merge_angle: a.merge_angle.to_radians(),
            chain_gap: a.chain_gap.unwrap_or(base.chain_gap),
        },
        ..DetectionParams::for_spacing(h)
    };
    p.validate()?;
    Ok(p)
}

fn detect_roads(a: DetectRoadsArgs, ctx: &Ctx) -> CliResult<()> {
    let bvg = bvg_params(&a.solver)?;
    let mut rec = Recorder::new("detect-roads", json!({}));
    let f = load_input(&mut rec, &a.input)?;
    let det = detection_params(&a, f.spacing())?;
    let rec = rec.with_parameters(json!({ "bvg": bvg, "detection": det }));
    let r = road_pipeline(&f, &bvg, &det)?;
    ensure_finite("w", &r.decomposition.w)?;
    let segs = &r.segments;
    if let Some(path) = &a.segments {
        write_json(path, &segs.segments)?;
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &segs.segments {
            w.serialize(s).map_err(|e| CliError::io(path, e))?;
        }
        if segs.segments.is_empty() {
            w.write_record(["x1", "y1", "x2", "y2", "length", "k", "l", "log10_nfa"]).map_err(|e| CliError::io(path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
        write_atomic(path, &bytes)?;
    }
    if let Some(path) = &a.overlay {
        write_image(path, &r.overlay, depth(&a.out))?;
    }
    if let Some(path) = &a.w_out {
        write_image(path, &r.decomposition.w, depth(&a.out))?;
    }
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "manifest": rec.finish(),
                "n_tests": segs.n_tests,
                "degenerate": segs.degenerate,
                "count": segs.len(),
                "trace": r.decomposition.trace,
                "segments": segs.segments,
            }),
        )?;
    }
    if segs.degenerate {
        warn!("texture component has no defined orientations");
    }
    ctx.say(format!("{} segments ({:.3e} tests)", segs.len(), segs.n_tests));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_grids_parse() {
        assert_eq!(parse_list::<2>("center", "1, -2.5", ',').unwrap(), [1.0, -2.5]);
        assert_eq!(parse_list::<2>("center", "1,2,3", ',').unwrap_err().exit_code(), 1);
        let g = parse_grid("8x4", "-2,-1,2,1").unwrap();
        assert_eq!((g.width, g.height, g.spacing), (8, 4, 0.5));
        assert!(parse_grid("8x4.5", "0,0,1,1").is_err());
        assert!(parse_grid("8x8", "0,0,1,2").is_err());
    }

    #[test]
    fn prefix_gets_a_suffix() {
        assert_eq!(prefixed(Path::new("out/run"), "_u.pgm"), PathBuf::from("out/run_u.pgm"));
    }

    #[test]
    fn fusion_defaults_follow_the_spacing() {
        let cli = <crate::args::Cli as clap::Parser>::parse_from(["bvg", "detect-roads", "-i", "x.pgm", "--lambda", "1", "--mu", "1"]);
        let Command::DetectRoads(a) = cli.command else { panic!() };
        let p = detection_params(&a, 0.5).unwrap();
        assert_eq!(p.fusion.merge_dist, 1.5);
        assert_eq!(p.fusion.chain_gap, 5.0);
    }
}
