use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ModeBox;

/// Collocation or padded physical grid for one mode box, with cached FFT
/// plans. Grid values follow `u(x_j) = sum_k u_k e^{i k.x_j}` and
/// `x_j = 2 pi j / n` along each axis.
pub struct Transform {
    space: ModeBox,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    map: Vec<usize>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("space", &self.space).field("n", &self.n).finish()
    }
}

impl Transform {
    /// Grid with `n` points per axis; `n` must be at least `2M + 1`.
    pub fn new(space: ModeBox, n: usize) -> Self {
        assert!(n > 2 * space.cutoff, "grid too coarse for the mode box");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let mut map = Vec::with_capacity(space.len());
        let mut coords = vec![0i64; space.dim];
        for i in 0..space.len() {
            space.coords_into(i, &mut coords);
            let mut lin = 0usize;
            for &c in &coords {
                lin = lin * n + c.rem_euclid(n as i64) as usize;
            }
            map.push(lin);
        }
        Transform {
            space,
            n,
            fwd,
            inv,
            map,
            line: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// `2M + 1` points per axis: every box mode is represented exactly and
    /// products alias back into the box.
    pub fn collocation(space: ModeBox) -> Self {
        Self::new(space, 2 * space.cutoff + 1)
    }

    /// `2 (2M + 1)` points per axis: enough to evaluate cubic products of
    /// box-limited fields without aliasing inside the box.
    pub fn padded(space: ModeBox) -> Self {
        Self::new(space, 2 * (2 * space.cutoff + 1))
    }

    pub fn space(&self) -> ModeBox {
        self.space
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn grid_len(&self) -> usize {
        self.n.pow(self.space.dim as u32)
    }

    /// Grid position of box mode `i`.
    pub fn grid_index(&self, i: usize) -> usize {
        self.map[i]
    }

    /// Synthesizes grid values from box coefficients.
    pub fn to_grid(&mut self, coeffs: &[Complex64], grid: &mut Vec<Complex64>) {
        grid.clear();
        grid.resize(self.grid_len(), Complex64::new(0.0, 0.0));
        for (i, c) in coeffs.iter().enumerate() {
            grid[self.map[i]] = *c;
        }
        let inv = self.inv.clone();
        self.apply_all_axes(&*inv, grid);
    }

    /// Analyzes grid values and keeps the box coefficients. `grid` is used
    /// as workspace and left transformed.
    pub fn from_grid(&mut self, grid: &mut [Complex64], coeffs: &mut [Complex64]) {
        let fwd = self.fwd.clone();
        self.apply_all_axes(&*fwd, grid);
        let scale = 1.0 / self.grid_len() as f64;
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = grid[self.map[i]] * scale;
        }
    }

    fn apply_all_axes(&mut self, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
        let n = self.n;
        let dim = self.space.dim;
        let total = data.len();
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut self.scratch);
                continue;
            }
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    let base = start + off;
                    for j in 0..n {
                        self.line[j] = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut self.line, &mut self.scratch);
                    for j in 0..n {
                        data[base + j * stride] = self.line[j];
                    }
                }
            }
        }
    }
}
