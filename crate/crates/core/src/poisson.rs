//! Exact solves of the discrete Poisson equation `div ∇φ = r` for the
//! forward/backward stencil pair, by fast cosine and sine transforms.
//!
//! With reflecting boundaries the operator is diagonal in the DCT-II basis;
//! with `φ = 0` outside the grid it is diagonal in the DST-I basis.

use std::sync::Arc;

use rustdct::{Dst1, DctPlanner, TransformType2And3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoissonBc {
    /// Zero flux across the grid edge; the solution is fixed to zero mean.
    Neumann,
    /// `φ = 0` on a virtual ring of pixels around the grid.
    Dirichlet,
}

enum Plans {
    Cosine { rows: Arc<dyn TransformType2And3<f64>>, cols: Arc<dyn TransformType2And3<f64>> },
    Sine { rows: Arc<dyn Dst1<f64>>, cols: Arc<dyn Dst1<f64>> },
}

pub struct PoissonSolver {
    width: usize,
    height: usize,
    bc: PoissonBc,
    plans: Plans,
    /// `1 / (eigenvalue)` per mode, row-major; 0 for the null mode.
    inv_eig: Vec<f64>,
    transposed: Vec<f64>,
    scratch: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(width: usize, height: usize, bc: PoissonBc) -> Self {
        assert!(width > 0 && height > 0);
        let mut planner = DctPlanner::new();
        let (plans, eig_x, eig_y, scale) = match bc {
            PoissonBc::Neumann => {
                let eig = |n: usize| (0..n).map(|k| 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos() - 2.0).collect::<Vec<_>>();
                let plans = Plans::Cosine { rows: planner.plan_dct2(width), cols: planner.plan_dct2(height) };
                (plans, eig(width), eig(height), 4.0 / (width * height) as f64)
            }
            PoissonBc::Dirichlet => {
                let eig = |n: usize| {
                    (0..n).map(|k| 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos() - 2.0).collect::<Vec<_>>()
                };
                let plans = Plans::Sine { rows: planner.plan_dst1(width), cols: planner.plan_dst1(height) };
                (plans, eig(width), eig(height), 4.0 / ((width + 1) * (height + 1)) as f64)
            }
        };
        let mut inv_eig = Vec::with_capacity(width * height);
        for ey in &eig_y {
            for ex in &eig_x {
                let lam = ex + ey;
                inv_eig.push(if lam.abs() < 1e-14 { 0.0 } else { scale / lam });
            }
        }
        let scratch_len = match &plans {
            Plans::Cosine { rows, cols } => rows.get_scratch_len().max(cols.get_scratch_len()),
            Plans::Sine { rows, cols } => rows.get_scratch_len().max(cols.get_scratch_len()),
        };
        PoissonSolver {
            width,
            height,
            bc,
            plans,
            inv_eig,
            transposed: vec![0.0; width * height],
            scratch: vec![0.0; scratch_len],
        }
    }

    pub fn boundary(&self) -> PoissonBc {
        self.bc
    }

    /// Replaces `data` (the right-hand side, row-major) by the solution.
    /// Under [`PoissonBc::Neumann`] the mean of the right-hand side is
    /// dropped and the solution has zero mean.
    pub fn solve_in_place(&mut self, data: &mut [f64]) {
        assert_eq!(data.len(), self.width * self.height);
        self.transform(data, true);
        for (x, s) in data.iter_mut().zip(&self.inv_eig) {
            *x *= s;
        }
        self.transform(data, false);
    }

    /// Separable 2-D transform: rows, then columns through a transpose.
    fn transform(&mut self, data: &mut [f64], forward: bool) {
        let (w, h) = (self.width, self.height);
        let scratch = &mut self.scratch;
        let run = |plans: &Plans, buf: &mut [f64], len: usize, along_rows: bool, scratch: &mut [f64]| {
            for line in buf.chunks_exact_mut(len) {
                match plans {
                    Plans::Cosine { rows, cols } => {
                        let plan = if along_rows { rows } else { cols };
                        if forward {
                            plan.process_dct2_with_scratch(line, scratch);
                        } else {
                            plan.process_dct3_with_scratch(line, scratch);
                        }
                    }
                    Plans::Sine { rows, cols } => {
                        let plan = if along_rows { rows } else { cols };
                        // The FFT-based DST-I in rustdct 0.7 reads two scratch
                        // entries it expects to be zero without clearing them.
                        scratch.fill(0.0);
                        plan.process_dst1_with_scratch(line, scratch);
                    }
                }
            }
        };
        run(&self.plans, data, w, true, scratch);
        transpose(data, &mut self.transposed, w, h);
        run(&self.plans, &mut self.transposed, h, false, scratch);
        transpose(&self.transposed, data, h, w);
    }
}

/// `dst[c·h + r] = src[r·w + c]` for a `w × h` row-major source.
fn transpose(src: &[f64], dst: &mut [f64], w: usize, h: usize) {
    const B: usize = 32;
    for r0 in (0..h).step_by(B) {
        for c0 in (0..w).step_by(B) {
            for r in r0..(r0 + B).min(h) {
                for c in c0..(c0 + B).min(w) {
                    dst[c * h + r] = src[r * w + c];
                }
            }
        }
    }
}
