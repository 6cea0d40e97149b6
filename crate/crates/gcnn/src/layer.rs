//! Spatial graph convolution block: gated neighbor aggregation, ReLU,
//! batch norm, dropout and a residual connection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::batch::Level;
use crate::matrix::{matmul, matmul_nt, matmul_tn, xavier_init, Matrix};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SGConv {
    pub w_self: Matrix,
    /// One neighbor transform per edge class.
    pub w_nbr: Vec<Matrix>,
    /// Positional gate, `3 × width`.
    pub u_pos: Matrix,
    pub bias: Matrix,
    pub gamma: Matrix,
    pub beta: Matrix,
    /// Residual projection when input and output widths differ.
    pub proj: Option<Matrix>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Everything the backward pass needs from one training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    h: Matrix,
    m: Vec<Matrix>,
    gpre: Matrix,
    z: Matrix,
    xhat: Matrix,
    inv_std: Vec<f64>,
    mask: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

impl Tape {
    /// Sign pattern of every ReLU input, for locating kinks.
    pub fn relu_pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.z.data.iter().chain(&self.gpre.data).map(|&x| x > 0.0)
    }
}

pub enum Pass<'a> {
    Infer,
    Train { rng: &'a mut ChaCha8Rng, dropout: f64 },
}

impl SGConv {
    pub fn new(d_in: usize, d_out: usize, edge_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        SGConv {
            w_self: xavier_init(d_in, d_out, rng),
            w_nbr: (0..edge_classes).map(|_| xavier_init(d_in, d_out, rng)).collect(),
            u_pos: xavier_init(3, d_out, rng),
            bias: Matrix::zeros(1, d_out),
            gamma: Matrix::filled(1, d_out, 1.0),
            beta: Matrix::zeros(1, d_out),
            proj: (d_in != d_out).then(|| xavier_init(d_in, d_out, rng)),
            running_mean: vec![0.0; d_out],
            running_var: vec![1.0; d_out],
        }
    }

    pub fn zeros_like(&self) -> Self {
        SGConv {
            w_self: self.w_self.zeros_like(),
            w_nbr: self.w_nbr.iter().map(Matrix::zeros_like).collect(),
            u_pos: self.u_pos.zeros_like(),
            bias: self.bias.zeros_like(),
            gamma: self.gamma.zeros_like(),
            beta: self.beta.zeros_like(),
            proj: self.proj.as_ref().map(Matrix::zeros_like),
            running_mean: vec![0.0; self.running_mean.len()],
            running_var: vec![0.0; self.running_var.len()],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_self.rows
    }

    pub fn d_out(&self) -> usize {
        self.w_self.cols
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.w_self];
        v.extend(self.w_nbr.iter());
        v.extend([&self.u_pos, &self.bias, &self.gamma, &self.beta]);
        v.extend(self.proj.iter());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w_self];
        v.extend(self.w_nbr.iter_mut());
        v.extend([&mut self.u_pos, &mut self.bias, &mut self.gamma, &mut self.beta]);
        v.extend(self.proj.iter_mut());
        v
    }

    pub fn forward(&self, lvl: &Level, h: &Matrix, pass: Pass) -> (Matrix, Option<Tape>) {
        let (n, d) = (h.rows, self.d_out());
        let mut z = matmul(h, &self.w_self);
        let m: Vec<Matrix> = self.w_nbr.iter().map(|w| matmul(h, w)).collect();

        let n_edges = lvl.nbr.len();
        let mut gpre = Matrix::zeros(n_edges, d);
        for e in 0..n_edges {
            let p = lvl.dp[e];
            let row = gpre.row_mut(e);
            for (j, g) in row.iter_mut().enumerate() {
                *g = 1.0 + p[0] * self.u_pos.data[j] + p[1] * self.u_pos.data[d + j] + p[2] * self.u_pos.data[2 * d + j];
            }
        }
        for v in 0..n {
            let deg = lvl.degree(v);
            if deg == 0 {
                continue;
            }
            let inv = 1.0 / deg as f64;
            let mut acc = vec![0.0; d];
            for e in lvl.edges(v) {
                let mu = m[lvl.class[e] as usize].row(lvl.nbr[e] as usize);
                for ((a, &g), &x) in acc.iter_mut().zip(gpre.row(e)).zip(mu) {
                    if g > 0.0 {
                        *a += g * x;
                    }
                }
            }
            for (zz, a) in z.row_mut(v).iter_mut().zip(&acc) {
                *zz += a * inv;
            }
        }
        z.add_row(&self.bias);

        let mut r = z.clone();
        r.data.iter_mut().for_each(|x| *x = x.max(0.0));

        let train = matches!(pass, Pass::Train { .. });
        let (mean, var) = if train {
            let mut mean = r.column_sums().data;
            mean.iter_mut().for_each(|x| *x /= n as f64);
            let mut var = vec![0.0; d];
            for i in 0..n {
                for ((s, x), mu) in var.iter_mut().zip(r.row(i)).zip(&mean) {
                    *s += (x - mu) * (x - mu);
                }
            }
            var.iter_mut().for_each(|x| *x /= n as f64);
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = r;
        for i in 0..n {
            for ((x, mu), s) in xhat.row_mut(i).iter_mut().zip(&mean).zip(&inv_std) {
                *x = (*x - mu) * s;
            }
        }
        let mut out = xhat.clone();
        for i in 0..n {
            for ((y, g), b) in out.row_mut(i).iter_mut().zip(&self.gamma.data).zip(&self.beta.data) {
                *y = *y * g + b;
            }
        }

        let mut mask = Vec::new();
        if let Pass::Train { rng, dropout } = pass {
            if dropout > 0.0 {
                let keep = 1.0 / (1.0 - dropout);
                mask = (0..n * d).map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep }).collect();
                out.data.iter_mut().zip(&mask).for_each(|(y, k)| *y *= k);
            }
        }

        match &self.proj {
            Some(p) => out.add_assign(&matmul(h, p)),
            None => out.add_assign(h),
        }

        let tape = train.then(|| Tape {
            h: h.clone(),
            m,
            gpre,
            z,
            xhat,
            inv_std,
            mask,
            batch_mean: mean,
            batch_var: var,
        });
        (out, tape)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&self, lvl: &Level, tape: &Tape, dout: &Matrix, grad: &mut SGConv) -> Matrix {
        let (n, d) = (dout.rows, self.d_out());
        let h = &tape.h;

        let mut dh = match &self.proj {
            Some(p) => {
                grad.proj.as_mut().expect("gradient shape").add_assign(&matmul_tn(h, dout));
                matmul_nt(dout, p)
            }
            None => dout.clone(),
        };

        let mut dy = dout.clone();
        if !tape.mask.is_empty() {
            dy.data.iter_mut().zip(&tape.mask).for_each(|(g, k)| *g *= k);
        }
        let mut dxhat = dy;
        let mut sum_dx = vec![0.0; d];
        let mut sum_dx_xhat = vec![0.0; d];
        for i in 0..n {
            let xr = tape.xhat.row(i);
            for j in 0..d {
                let g = dxhat.data[i * d + j];
                grad.gamma.data[j] += g * xr[j];
                grad.beta.data[j] += g;
                let gx = g * self.gamma.data[j];
                dxhat.data[i * d + j] = gx;
                sum_dx[j] += gx;
                sum_dx_xhat[j] += gx * xr[j];
            }
        }
        let nf = n as f64;
        let mut dz = dxhat;
        for i in 0..n {
            let xr = tape.xhat.row(i);
            let zr = tape.z.row(i);
            for j in 0..d {
                let k = i * d + j;
                let dr = tape.inv_std[j] / nf * (nf * dz.data[k] - sum_dx[j] - xr[j] * sum_dx_xhat[j]);
                dz.data[k] = if zr[j] > 0.0 { dr } else { 0.0 };
            }
        }

        grad.bias.add_assign(&dz.column_sums());
        grad.w_self.add_assign(&matmul_tn(h, &dz));
        dh.add_assign(&matmul_nt(&dz, &self.w_self));

        let mut dm: Vec<Matrix> = tape.m.iter().map(Matrix::zeros_like).collect();
        let mut q = vec![0.0; d];
        for v in 0..n {
            let deg = lvl.degree(v);
            if deg == 0 {
                continue;
            }
            let inv = 1.0 / deg as f64;
            for (qq, g) in q.iter_mut().zip(dz.row(v)) {
                *qq = g * inv;
            }
            for e in lvl.edges(v) {
                let (c, u) = (lvl.class[e] as usize, lvl.nbr[e] as usize);
                let p = lvl.dp[e];
                let gp = tape.gpre.row(e);
                let mu = tape.m[c].row(u);
                let dmu = dm[c].row_mut(u);
                for j in 0..d {
                    if gp[j] > 0.0 {
                        dmu[j] += q[j] * gp[j];
                        let dg = q[j] * mu[j];
                        grad.u_pos.data[j] += p[0] * dg;
                        grad.u_pos.data[d + j] += p[1] * dg;
                        grad.u_pos.data[2 * d + j] += p[2] * dg;
                    }
                }
            }
        }
        for (c, g) in dm.iter().enumerate() {
            grad.w_nbr[c].add_assign(&matmul_tn(h, g));
            dh.add_assign(&matmul_nt(g, &self.w_nbr[c]));
        }
        dh
    }

    /// Folds a batch's statistics into the running estimates.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        for (r, m) in self.running_mean.iter_mut().zip(mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in self.running_var.iter_mut().zip(var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}
