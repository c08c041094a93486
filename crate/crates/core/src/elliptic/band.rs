//! Symmetric positive definite band matrices and their Cholesky factors.

use crate::error::{MuskatError, Result};

/// Lower band storage: row `i` keeps columns `i - bw ..= i`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` at `(i, j)`; only the lower triangle is stored, so callers
    /// pass each symmetric pair once.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Replaces row and column `p` by the identity.
    pub fn pin(&mut self, p: usize) {
        for j in p.saturating_sub(self.bw)..=p {
            let k = self.idx(p, j);
            self.data[k] = 0.0;
        }
        for i in p..(p + self.bw + 1).min(self.n) {
            let k = self.idx(i, p);
            self.data[k] = 0.0;
        }
        let k = self.idx(p, p);
        self.data[k] = 1.0;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let v = self.data[self.idx(i, j)];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut sum = self.data[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in klo..j {
                    sum -= self.data[ri + k] * self.data[rj + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(MuskatError::Solver(format!(
                            "matrix not positive definite at pivot {i} (value {sum:e})"
                        )));
                    }
                    self.data[ri + i] = sum.sqrt();
                } else {
                    self.data[ri + j] = sum / self.data[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, l: self.data })
    }
}

#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> usize {
        i * (self.bw + 1) + self.bw - i
    }

    /// Solves `L y = b` in place, assuming `b[..start]` vanishes.
    pub fn forward_from(&self, b: &mut [f64], start: usize) {
        for i in start..self.n {
            let lo = i.saturating_sub(self.bw).max(start);
            let r = self.row(i);
            let s: f64 = self.l[r + lo..r + i].iter().zip(&b[lo..i]).map(|(l, b)| l * b).sum();
            b[i] = (b[i] - s) / self.l[r + i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let r = self.row(i);
            let xi = y[i] / self.l[r + i];
            y[i] = xi;
            let lo = i.saturating_sub(self.bw);
            for (yk, lk) in y[lo..i].iter_mut().zip(&self.l[r + lo..r + i]) {
                *yk -= lk * xi;
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_from(b, 0);
        self.backward(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_spd_band_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, bw) = (40, 5);
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.gen_range(-1.0..1.0));
            }
            a.add(i, i, 2.0 * bw as f64 + 1.0);
        }
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x);
        let chol = a.cholesky().unwrap();
        let mut y = b.clone();
        chol.solve_in_place(&mut y);
        for i in 0..n {
            assert!((y[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pinned_row_decouples() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 2.0);
        a.add(1, 0, -1.0);
        a.add(1, 1, 2.0);
        a.add(2, 1, -1.0);
        a.add(2, 2, 2.0);
        a.pin(1);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.get(2, 1), 0.0);
        assert_eq!(a.get(1, 1), 1.0);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(a.cholesky().is_err());
    }
}
