#![allow(dead_code)]

use bvg_core::grid::{Grid, Image};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discrete G-norm under reflecting boundaries by direct conic
/// optimization: minimize `t` subject to `div g = v / h` (pixel stencil)
/// and `|g_i| ≤ t` at every pixel; the norm is `h · t`.
pub fn gnorm_oracle(v: &Image) -> f64 {
    let g = v.grid();
    let (w, h, n) = (g.width, g.height, g.len());
    // Unknowns: t, gx[0..n], gy[0..n].
    let nvar = 1 + 2 * n;
    let (gx, gy) = (|i: usize| 1 + i, |i: usize| 1 + n + i);
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    // One divergence equation is implied by the zero sum of v; drop it.
    for i in 0..n - 1 {
        let (r, c) = (i / w, i % w);
        let mut push = |col: usize, val: f64| {
            rows.push(b.len());
            cols.push(col);
            vals.push(val);
        };
        if c + 1 < w {
            push(gx(i), 1.0);
        }
        if c > 0 {
            push(gx(i - 1), -1.0);
        }
        if r + 1 < h {
            push(gy(i), 1.0);
        }
        if r > 0 {
            push(gy(i - w), -1.0);
        }
        b.push(v.data()[i] / g.spacing);
    }
    let n_eq = b.len();
    for i in 0..n {
        for col in [0, gx(i), gy(i)] {
            rows.push(b.len());
            cols.push(col);
            vals.push(-1.0);
            b.push(0.0);
        }
    }
    let mut cones = vec![SupportedConeT::ZeroConeT(n_eq)];
    cones.extend((0..n).map(|_| SupportedConeT::SecondOrderConeT(3)));
    let a = CscMatrix::new_from_triplets(b.len(), nvar, rows, cols, vals);
    let p = CscMatrix::zeros((nvar, nvar));
    let mut q = vec![0.0; nvar];
    q[0] = 1.0;
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "oracle failed: {:?}",
        solver.solution.status
    );
    g.spacing * solver.solution.x[0]
}

/// Fifty fixed 5×5 zero-mean images: random fields of several kinds plus
/// a few structured ones.
pub fn oracle_suite() -> Vec<Image> {
    let grid = Grid::pixels(5, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    let structured: [fn(f64, f64) -> f64; 5] = [
        |x, y| if (x - 2.0).hypot(y - 2.0) <= 1.2 { 1.0 } else { 0.0 },
        |x, y| if (x + y) as i64 % 2 == 0 { 1.0 } else { -1.0 },
        |x, _| x - 2.0,
        |x, y| if x == 1.0 && y == 2.0 { 1.0 } else if x == 3.0 && y == 2.0 { -1.0 } else { 0.0 },
        |x, y| (x * 1.3).sin() * (y * 0.7).cos(),
    ];
    for f in structured {
        out.push(Image::from_fn(grid, f).subtract_mean());
    }
    while out.len() < 50 {
        let kind = out.len() % 3;
        let data: Vec<f64> = (0..25)
            .map(|_| match kind {
                0 => rng.random_range(-1.0..1.0),
                1 => if rng.random_bool(0.3) { rng.random_range(0.0..2.0) } else { 0.0 },
                _ => rng.random_range(-0.1..0.1) * 10f64.powi(rng.random_range(0..2)),
            })
            .collect();
        out.push(Image::new(grid, data).unwrap().subtract_mean());
    }
    out
}
