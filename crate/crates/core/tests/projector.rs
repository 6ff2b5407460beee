use bvg_core::analysis::{gnorm_estimate_with, GNormOptions};
use bvg_core::projector::{project_g_ball, rof_energy, rof_solve, ProjectorParams};
use bvg_core::synth::{render, SceneSpec, Shape};
use bvg_core::{Boundary, Grid, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight(radius: f64, boundary: Boundary) -> ProjectorParams {
    ProjectorParams { radius, fp_tol: 1e-9, max_iters: 200_000, boundary, accelerated: true, ..Default::default() }
}

fn disk(n: usize, amplitude: f64) -> Image {
    let grid = Grid::covering(n, n, [-2.0, -2.0, 2.0, 2.0]).unwrap();
    render(&SceneSpec::new(Shape::Disk { center: [0.0, 0.0], radius: 1.0, amplitude }, grid)).unwrap()
}

#[test]
fn projection_of_an_outside_point_lands_on_the_sphere() {
    // ‖3θ‖_G = 1.5, well outside the ball of radius 0.4.
    let f = disk(64, 3.0);
    let radius = 0.4;
    let (v, _) = project_g_ball(&f, &tight(radius, Boundary::ZeroExtended)).unwrap();
    let opts = GNormOptions { boundary: Boundary::ZeroExtended, tol: 1e-3, ..Default::default() };
    let g = gnorm_estimate_with(&v, &opts).unwrap().estimate;
    assert!((g - radius).abs() <= 0.02 * radius, "‖P(f)‖_G = {g}");
}

#[test]
fn small_members_of_the_ball_are_left_alone() {
    // ‖0.1θ‖_G = 0.05, inside the ball of radius 0.5.
    let f = disk(48, 0.1);
    let (v, _) = project_g_ball(&f, &tight(0.5, Boundary::ZeroExtended)).unwrap();
    let rel = v.sub(&f).unwrap().data().iter().map(|x| x * x).sum::<f64>().sqrt()
        / f.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(rel <= 1e-3, "{rel}");
}

#[test]
fn rof_minimizer_survives_random_perturbations() {
    let grid = Grid::covering(24, 24, [-1.0, -1.0, 1.0, 1.0]).unwrap();
    let f = render(&SceneSpec::new(
        Shape::Composite {
            parts: vec![
                Shape::Disk { center: [0.1, -0.2], radius: 0.5, amplitude: 1.0 },
                Shape::Noise { sigma: 0.1, seed: 3 },
            ],
        },
        grid,
    ))
    .unwrap();
    let lambda = 8.0;
    let params = ProjectorParams { fp_tol: 1e-12, max_iters: 400_000, accelerated: true, ..Default::default() };
    let (u, _, _) = rof_solve(&f, lambda, &params).unwrap();
    let e0 = rof_energy(&f, &u, lambda, Boundary::Neumann).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let zeta = Image::new(grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        for eps in [1e-2, 1e-3] {
            let e = rof_energy(&f, &u.add(&zeta.scaled(eps)).unwrap(), lambda, Boundary::Neumann).unwrap();
            assert!(e0 <= e + 1e-6, "ε = {eps}: {e0} > {e}");
        }
    }
}

/// Energy of `img` in the band of the texture: squared correlation with
/// `cos` and `sin` at frequency `freq` inside the square.
fn band_energy(img: &Image, center: [f64; 2], side: f64, freq: f64) -> f64 {
    let g = img.grid();
    let (mut c, mut s) = (0.0, 0.0);
    for row in 0..g.height {
        for col in 0..g.width {
            let (x, y) = g.center(col, row);
            if (x - center[0]).abs() < side / 2.0 && (y - center[1]).abs() < side / 2.0 {
                let phase = 2.0 * std::f64::consts::PI * freq * (x - center[0]);
                c += img.get(col, row) * phase.cos();
                s += img.get(col, row) * phase.sin();
            }
        }
    }
    (c * c + s * s) * g.pixel_area().powi(2)
}

#[test]
fn texture_band_energy_of_v_shrinks_as_lambda_grows() {
    let grid = Grid::covering(64, 64, [-1.0, -1.0, 1.0, 1.0]).unwrap();
    let (center, side, freq) = ([0.4, 0.0], 0.8, 5.0);
    let f = render(&SceneSpec::new(
        Shape::Composite {
            parts: vec![
                Shape::Disk { center: [-0.5, 0.0], radius: 0.35, amplitude: 1.0 },
                Shape::TexturedSquare { center, side, frequency: freq, amplitude: 0.5 },
            ],
        },
        grid,
    ))
    .unwrap();
    let params = ProjectorParams { fp_tol: 1e-7, max_iters: 50_000, accelerated: true, ..Default::default() };
    let energies: Vec<f64> = [16.0, 64.0, 256.0]
        .iter()
        .map(|&lambda| band_energy(&rof_solve(&f, lambda, &params).unwrap().1, center, side, freq))
        .collect();
    assert!(energies[0] >= energies[1] && energies[1] >= energies[2], "{energies:?}");
    assert!(energies[2] < 0.5 * energies[0], "{energies:?}");
}
