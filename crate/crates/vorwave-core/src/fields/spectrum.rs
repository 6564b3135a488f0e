//! Dense coefficient boxes over integer multi-indices and their FFT grids.

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Unnormalized in-place transform along every axis of a row-major array
/// (last axis fastest). `inverse` uses the `e^{+i}` kernel.
pub(crate) fn fft_nd(data: &mut [C64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    debug_assert_eq!(total, data.len());
    let mut stride = 1usize;
    let mut line = Vec::new();
    for axis in (0..dims.len()).rev() {
        let n = dims[axis];
        if n > 1 {
            let fft = plan(n, inverse);
            let block = stride * n;
            line.resize(n, C64::new(0.0, 0.0));
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    if stride == 1 {
                        fft.process(&mut data[base..base + n]);
                    } else {
                        for k in 0..n {
                            line[k] = data[base + k * stride];
                        }
                        fft.process(&mut line);
                        for k in 0..n {
                            data[base + k * stride] = line[k];
                        }
                    }
                }
            }
        }
        stride *= n;
    }
}

/// Smallest even integer `>= min` whose only prime factors are 2, 3 and 5.
pub fn good_size(min: usize) -> usize {
    let mut n = min.max(2);
    loop {
        if n % 2 == 0 {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            if m == 1 {
                return n;
            }
        }
        n += 1;
    }
}

/// Grid length that dealiases quadratic products of modes `|k| <= cut`.
pub fn dealiased_len(cut: usize) -> usize {
    good_size(3 * cut + 2)
}

/// Index layout shared by every field with the same cutoffs.
#[derive(Debug)]
pub(crate) struct Shape {
    pub cuts: Vec<usize>,
    pub grid: Vec<usize>,
    /// Flat multi-indices, `cuts.len()` entries per mode.
    pub modes: Vec<i64>,
    /// Position of each mode inside the FFT grid.
    pub grid_pos: Vec<usize>,
}

impl Shape {
    fn build(cuts: &[usize], grid: &[usize]) -> Shape {
        let dims: Vec<usize> = cuts.iter().map(|c| 2 * c + 1).collect();
        let len: usize = dims.iter().product();
        let rank = cuts.len();
        let mut modes = vec![0i64; len * rank];
        let mut grid_pos = vec![0usize; len];
        for flat in 0..len {
            let mut rem = flat;
            let mut pos = 0usize;
            let mut gstride = 1usize;
            for d in (0..rank).rev() {
                let idx = rem % dims[d];
                rem /= dims[d];
                let k = idx as i64 - cuts[d] as i64;
                modes[flat * rank + d] = k;
                let g = grid[d] as i64;
                pos += (((k % g) + g) % g) as usize * gstride;
                gstride *= grid[d];
            }
            grid_pos[flat] = pos;
        }
        Shape {
            cuts: cuts.to_vec(),
            grid: grid.to_vec(),
            modes,
            grid_pos,
        }
    }

    pub fn get(cuts: &[usize], grid: &[usize]) -> Arc<Shape> {
        static CACHE: OnceLock<Mutex<HashMap<(Vec<usize>, Vec<usize>), Arc<Shape>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (cuts.to_vec(), grid.to_vec());
        let mut map = cache.lock().expect("shape cache poisoned");
        map.entry(key)
            .or_insert_with(|| Arc::new(Shape::build(cuts, grid)))
            .clone()
    }

    pub fn rank(&self) -> usize {
        self.cuts.len()
    }

    pub fn len(&self) -> usize {
        self.grid_pos.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn mode(&self, flat: usize) -> &[i64] {
        let r = self.rank();
        &self.modes[flat * r..(flat + 1) * r]
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (d, &kd) in k.iter().enumerate() {
            let c = self.cuts[d] as i64;
            if kd.abs() > c {
                return None;
            }
            flat = flat * (2 * self.cuts[d] + 1) + (kd + c) as usize;
        }
        Some(flat)
    }

    /// Flat index of the mode `-k`.
    pub fn mirror(&self, flat: usize) -> usize {
        self.len() - 1 - flat
    }
}

/// Coefficients on a shape. Pure data; all algebra lives in the wrappers.
#[derive(Clone, Debug)]
pub(crate) struct Spectrum {
    pub shape: Arc<Shape>,
    pub data: Vec<C64>,
}

impl Spectrum {
    pub fn zeros(cuts: &[usize], grid: &[usize]) -> Spectrum {
        let shape = Shape::get(cuts, grid);
        let n = shape.len();
        Spectrum {
            shape,
            data: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn to_grid(&self) -> Vec<f64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.shape.grid_len()];
        for (i, &p) in self.shape.grid_pos.iter().enumerate() {
            buf[p] = self.data[i];
        }
        fft_nd(&mut buf, &self.shape.grid, true);
        buf.into_iter().map(|z| z.re).collect()
    }

    pub fn from_grid(shape: &Arc<Shape>, values: &[f64]) -> Spectrum {
        assert_eq!(values.len(), shape.grid_len(), "grid length mismatch");
        let mut buf: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_nd(&mut buf, &shape.grid, false);
        let norm = 1.0 / shape.grid_len() as f64;
        let mut data: Vec<C64> = shape.grid_pos.iter().map(|&p| buf[p] * norm).collect();
        // Real input: enforce exact conjugate pairing against round-off.
        let n = data.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let avg = (data[i] + data[j].conj()) * 0.5;
            data[i] = avg;
            data[j] = avg.conj();
        }
        if n % 2 == 1 {
            data[n / 2].im = 0.0;
        }
        Spectrum {
            shape: shape.clone(),
            data,
        }
    }

    pub fn conj_defect(&self) -> f64 {
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let n = self.data.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let d = (self.data[i] - self.data[n - 1 - i].conj()).norm();
            worst = worst.max(d);
        }
        worst / scale
    }

    pub fn same_shape(&self, other: &Spectrum) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape) || self.shape.cuts == other.shape.cuts
    }

    /// Copies coefficients into a box with other cutoffs (pad or truncate).
    pub fn recut(&self, cuts: &[usize], grid: &[usize]) -> Spectrum {
        let mut out = Spectrum::zeros(cuts, grid);
        for i in 0..self.data.len() {
            if let Some(j) = out.shape.index(self.shape.mode(i)) {
                out.data[j] = self.data[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_sizes_are_even_smooth() {
        assert_eq!(good_size(7), 8);
        assert_eq!(good_size(11), 12);
        assert_eq!(good_size(49), 50);
        assert_eq!(good_size(74), 80);
    }

    #[test]
    fn nd_roundtrip() {
        let dims = [4usize, 6, 5];
        let n: usize = dims.iter().product();
        let orig: Vec<C64> = (0..n).map(|i| C64::new(i as f64 * 0.3, -(i as f64).sin())).collect();
        let mut buf = orig.clone();
        fft_nd(&mut buf, &dims, false);
        fft_nd(&mut buf, &dims, true);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / n as f64 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mirror_is_negation() {
        let s = Shape::get(&[2, 3], &[8, 10]);
        for i in 0..s.len() {
            let m = s.mirror(i);
            let a = s.mode(i);
            let b = s.mode(m);
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1], -b[1]);
        }
    }
}
