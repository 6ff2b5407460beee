use std::f64::consts::PI;

use bvg_core::analysis::{classify_input_with, AnalysisOptions};
use bvg_core::bvg::{bvg_decompose, objective, BvgParams, Decomposition};
use bvg_core::synth::{render, SceneSpec, Shape};
use bvg_core::{Boundary, BvNorm, Grid, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZE: Boundary = Boundary::ZeroExtended;

fn plane(lambda: f64, mu: f64) -> BvgParams {
    let mut p = BvgParams::new(lambda, mu);
    p.projector.boundary = ZE;
    p
}

fn random_scene(rng: &mut ChaCha8Rng, grid: Grid) -> Image {
    let mut parts = vec![Shape::Noise { sigma: rng.random_range(0.0..0.1), seed: rng.random() }];
    for _ in 0..rng.random_range(1..4) {
        let center = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        parts.push(match rng.random_range(0..3) {
            0 => Shape::Disk { center, radius: rng.random_range(0.15..0.4), amplitude: rng.random_range(-1.0..1.0) },
            1 => Shape::centered_bar(center, rng.random_range(0.4..1.2), 0.06, rng.random_range(0.0..PI), 1.0),
            _ => Shape::TexturedSquare { center, side: 0.5, frequency: 5.0, amplitude: rng.random_range(0.1..0.5) },
        });
    }
    render(&SceneSpec::new(Shape::Composite { parts }, grid)).unwrap()
}

#[test]
fn decomposition_beats_the_trivial_splits_on_random_scenes() {
    let grid = Grid::covering(40, 40, [-1.0, -1.0, 1.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (lambda, mu) = (10.0, 0.8);
    for i in 0..10 {
        let f = random_scene(&mut rng, grid);
        let d = bvg_decompose(&f, &plane(lambda, mu)).unwrap();
        let ours = objective(&d, lambda, mu).unwrap();
        let z = Image::zeros(grid);
        for (u, w) in [(z.clone(), z.clone()), (f.clone(), z.clone()), (z.clone(), f.clone())] {
            let theirs = objective(&Decomposition::from_parts(f.clone(), u, w, ZE).unwrap(), lambda, mu).unwrap();
            let slack = ours.g_term_error + theirs.g_term_error + 1e-3 * theirs.total;
            assert!(ours.total <= theirs.total + slack, "scene {i}: {ours:?} vs {theirs:?}");
        }
    }
}

#[test]
fn thin_bar_moves_into_the_texture_component() {
    let (l, eps, lambda, mu) = (0.8, 0.012, 10.0, 2.0 * PI);
    let grid = Grid::covering(256, 256, [-0.5, -0.5, 0.5, 0.5]).unwrap();
    let bar = Shape::Bar { start: [-0.4, 0.0], length: l, thickness: eps, angle: 0.0, amplitude: 1.0 };
    let f = render(&SceneSpec::new(bar, grid)).unwrap();
    let opts = AnalysisOptions::new(0.05, ZE).with_bv_norm(BvNorm::Seminorm);
    assert!(classify_input_with(&f, lambda, mu, &opts).unwrap().predicts_case1);

    let d = bvg_decompose(&f, &plane(lambda, mu)).unwrap();
    let tv = |img: &Image| ZE.tv_norm(img);
    let tv_f = tv(&f);
    assert!(tv(&d.u) <= 0.05 * tv_f, "‖u‖_BV = {} of {tv_f}", tv(&d.u));
    assert!(tv(&d.w) >= 0.5 * tv_f, "‖w‖_BV = {} of {tv_f}", tv(&d.w));
    let bound = tv_f - mu / (2.0 * lambda);
    assert!(tv(&d.w) >= bound * (1.0 - 0.05), "‖w‖_BV = {} below {bound}", tv(&d.w));
}
