//! Band matrix with an in-place LU factorisation without pivoting. The plant
//! operator `C/dt + K` is strictly diagonally dominant, so no pivoting is
//! needed.

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    /// Half bandwidth; entries with `|i - j| > w` are zero.
    w: usize,
    /// Row-major, `data[i * (2w + 1) + (j + w - i)]`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, w: usize) -> Self {
        Self {
            n,
            w,
            data: vec![0.0; n * (2 * w + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.w, "entry ({i}, {j}) outside band");
        i * (2 * self.w + 1) + (j + self.w - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.w {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `out = A·x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.w);
            let hi = (i + self.w).min(self.n - 1);
            *o = (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum();
        }
    }

    /// Doolittle factorisation in place; returns `None` on a zero pivot.
    pub fn factorize(mut self) -> Option<BandLu> {
        let (n, w) = (self.n, self.w);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let end = (k + w).min(n - 1);
            for i in k + 1..=end {
                let ik = self.idx(i, k);
                let factor = self.data[ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[ik] = factor;
                for j in k + 1..=end {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= factor * kj;
                }
            }
        }
        Some(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    /// Solves `A·x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, w) = (self.m.n, self.m.w);
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let mut s = b[i];
            for j in lo..i {
                s -= self.m.data[self.m.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + w).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.m.data[self.m.idx(i, j)] * b[j];
            }
            b[i] = s / self.m.data[self.m.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve_on_dominant_band_matrix() {
        let n = 17;
        let w = 3;
        let mut band = BandMatrix::zeros(n, w);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(w)..=(i + w).min(n - 1) {
                let v = if i == j {
                    20.0 + i as f64
                } else {
                    -(((i * 7 + j * 3) % 5) as f64) * 0.5
                };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let expected = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let mut x = rhs.clone();
        let mut prod = vec![0.0; n];
        band.mul_vec(expected.as_slice(), &mut prod);
        for (p, r) in prod.iter().zip(&rhs) {
            assert!((p - r).abs() < 1e-12);
        }
        band.factorize().unwrap().solve(&mut x);
        for (a, b) in x.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
