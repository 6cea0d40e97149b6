//! Row-major dense matrices and the handful of products the network needs.
//!
//! Every product parallelizes over output rows only, so results are
//! bit-identical for any thread count.

use rand::Rng;
use rayon::prelude::*;

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn add_assign(&mut self, o: &Matrix) {
        debug_assert_eq!(self.shape(), o.shape());
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Sum over rows, as a `1 × cols` matrix.
    pub fn column_sums(&self) -> Matrix {
        let mut s = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (a, b) in s.data.iter_mut().zip(self.row(i)) {
                *a += b;
            }
        }
        s
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row(&mut self, r: &Matrix) {
        debug_assert_eq!(r.len(), self.cols);
        for i in 0..self.rows {
            for (a, b) in self.row_mut(i).iter_mut().zip(&r.data) {
                *a += b;
            }
        }
    }

    /// Concatenates columns of two matrices with equal row counts.
    pub fn hcat(&self, o: &Matrix) -> Matrix {
        assert_eq!(self.rows, o.rows);
        let mut m = Matrix::zeros(self.rows, self.cols + o.cols);
        for i in 0..self.rows {
            let r = m.row_mut(i);
            r[..self.cols].copy_from_slice(self.row(i));
            r[self.cols..].copy_from_slice(o.row(i));
        }
        m
    }

    /// Splits columns at `k`.
    pub fn hsplit(&self, k: usize) -> (Matrix, Matrix) {
        let mut a = Matrix::zeros(self.rows, k);
        let mut b = Matrix::zeros(self.rows, self.cols - k);
        for i in 0..self.rows {
            a.row_mut(i).copy_from_slice(&self.row(i)[..k]);
            b.row_mut(i).copy_from_slice(&self.row(i)[k..]);
        }
        (a, b)
    }
}

/// Uniform on ±sqrt(6 / (rows + cols)).
pub fn xavier_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows > 0 && cols > 0, "xavier_init needs positive dimensions");
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
}

fn row_times(a_row: &[f64], b: &Matrix, out: &mut [f64]) {
    for (k, &x) in a_row.iter().enumerate() {
        if x != 0.0 {
            for (o, y) in out.iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    }
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let mut c = Matrix::zeros(a.rows, b.cols);
    if b.cols == 0 {
        return c;
    }
    if a.rows * a.cols * b.cols < PAR_THRESHOLD {
        for i in 0..a.rows {
            row_times(a.row(i), b, c.row_mut(i));
        }
    } else {
        c.data.par_chunks_mut(b.cols).enumerate().for_each(|(i, out)| row_times(a.row(i), b, out));
    }
    c
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_tn shape mismatch");
    matmul(&a.transpose(), b)
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt shape mismatch");
    matmul(a, &b.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn products_agree_with_naive_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = xavier_init(70, 33, &mut rng);
        let b = xavier_init(33, 41, &mut rng);
        let c = matmul(&a, &b);
        for i in 0..70 {
            for j in 0..41 {
                let s: f64 = (0..33).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - s).abs() < 1e-12);
            }
        }
        let d = matmul_tn(&a.transpose(), &b);
        let e = matmul_nt(&a, &b.transpose());
        assert_eq!(c, d);
        assert_eq!(c, e);
    }

    #[test]
    fn hcat_and_hsplit_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = xavier_init(5, 3, &mut rng);
        let b = xavier_init(5, 4, &mut rng);
        let (x, y) = a.hcat(&b).hsplit(3);
        assert_eq!((x, y), (a, b));
    }
}
