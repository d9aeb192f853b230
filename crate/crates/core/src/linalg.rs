//! Dense cubic third-order tensors and a few matrix helpers shared by the
//! moment, decomposition and adjoint code.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Dense `n × n × n` tensor stored in row-major order (`(i * n + j) * n + k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.data[(i * n + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.data[at] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.data[at] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tensor3) {
        assert_eq!(self.n, other.n, "tensor dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += s * a ⊗ b ⊗ c`.
    pub fn add_outer(&mut self, s: f64, a: &[f64], b: &[f64], c: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let si = s * a[i];
            if si == 0.0 {
                continue;
            }
            for j in 0..n {
                let sij = si * b[j];
                if sij == 0.0 {
                    continue;
                }
                let row = &mut self.data[(i * n + j) * n..(i * n + j + 1) * n];
                for (r, ck) in row.iter_mut().zip(c) {
                    *r += sij * ck;
                }
            }
        }
    }

    /// `self += s * v ⊗ v ⊗ v`.
    pub fn add_cube(&mut self, s: f64, v: &[f64]) {
        self.add_outer(s, v, v, v);
    }

    /// `self_abc += s * (m_ab v_c + m_ac v_b + v_a m_bc)`.
    pub fn add_sym_matrix_vector(&mut self, s: f64, m: &DMatrix<f64>, v: &[f64]) {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let val = m[(a, b)] * v[c] + m[(a, c)] * v[b] + v[a] * m[(b, c)];
                    self.data[(a * n + b) * n + c] += s * val;
                }
            }
        }
    }

    /// `T(u, v, w) = Σ T_abc u_a v_b w_c`.
    pub fn apply3(&self, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for a in 0..n {
            let mut acc_a = 0.0;
            for b in 0..n {
                let row = &self.data[(a * n + b) * n..(a * n + b + 1) * n];
                let inner: f64 = row.iter().zip(w).map(|(t, x)| t * x).sum();
                acc_a += v[b] * inner;
            }
            total += u[a] * acc_a;
        }
        total
    }

    /// `T(I, u, v)`: contraction over the last two modes.
    pub fn contract_last_two(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (a, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..n {
                let row = &self.data[(a * n + b) * n..(a * n + b + 1) * n];
                let inner: f64 = row.iter().zip(v).map(|(t, x)| t * x).sum();
                acc += u[b] * inner;
            }
            *o = acc;
        }
        out
    }

    /// `T(I, I, v)` as an `n × n` matrix.
    pub fn contract_last(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| {
            let row = &self.data[(a * n + b) * n..(a * n + b + 1) * n];
            row.iter().zip(v).map(|(t, x)| t * x).sum()
        })
    }

    /// `c_k = Σ_ab T_abk m_ab`: contraction of the first two modes with a matrix.
    pub fn contract_first_two_with(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                let mab = m[(a, b)];
                if mab == 0.0 {
                    continue;
                }
                let row = &self.data[(a * n + b) * n..(a * n + b + 1) * n];
                for (o, t) in out.iter_mut().zip(row) {
                    *o += mab * t;
                }
            }
        }
        out
    }

    /// Multilinear transform `T(W, W, W)` for `W` of shape `n × k`.
    pub fn multilinear(&self, w: &DMatrix<f64>) -> Tensor3 {
        assert_eq!(w.nrows(), self.n, "multilinear: row count must match tensor dimension");
        let n = self.n;
        let k = w.ncols();
        // contract mode 3: n×n×k
        let mut t1 = vec![0.0; n * n * k];
        for ab in 0..n * n {
            let row = &self.data[ab * n..(ab + 1) * n];
            for r in 0..k {
                t1[ab * k + r] = row.iter().enumerate().map(|(c, t)| t * w[(c, r)]).sum();
            }
        }
        // contract mode 2: n×k×k
        let mut t2 = vec![0.0; n * k * k];
        for a in 0..n {
            for q in 0..k {
                for r in 0..k {
                    let mut acc = 0.0;
                    for b in 0..n {
                        acc += w[(b, q)] * t1[(a * n + b) * k + r];
                    }
                    t2[(a * k + q) * k + r] = acc;
                }
            }
        }
        let mut out = Tensor3::zeros(k);
        for p in 0..k {
            for q in 0..k {
                for r in 0..k {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += w[(a, p)] * t2[(a * k + q) * k + r];
                    }
                    out.data[(p * k + q) * k + r] = acc;
                }
            }
        }
        out
    }

    /// Average over the six index permutations.
    pub fn symmetrized(&self) -> Tensor3 {
        let n = self.n;
        Tensor3::from_fn(n, |i, j, k| {
            (self.get(i, j, k)
                + self.get(i, k, j)
                + self.get(j, i, k)
                + self.get(j, k, i)
                + self.get(k, i, j)
                + self.get(k, j, i))
                / 6.0
        })
    }

    /// Largest deviation from permutation symmetry, relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.get(i, j, k);
                    for w in [
                        self.get(i, k, j),
                        self.get(j, i, k),
                        self.get(j, k, i),
                        self.get(k, i, j),
                        self.get(k, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst / scale
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

pub fn column_vec(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multilinear_identity_is_noop() {
        let t = Tensor3::from_fn(3, |i, j, k| (i + 2 * j + 3 * k) as f64);
        let out = t.multilinear(&DMatrix::identity(3, 3));
        assert_eq!(out, t);
    }

    #[test]
    fn multilinear_matches_apply3() {
        let t = Tensor3::from_fn(4, |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64 - 2.0);
        let w = DMatrix::from_fn(4, 2, |i, j| (i as f64 + 1.0) * if j == 0 { 0.5 } else { -0.25 });
        let out = t.multilinear(&w);
        for p in 0..2 {
            for q in 0..2 {
                for r in 0..2 {
                    let direct = t.apply3(
                        &column_vec(&w, p),
                        &column_vec(&w, q),
                        &column_vec(&w, r),
                    );
                    assert!((out.get(p, q, r) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cube_is_symmetric() {
        let mut t = Tensor3::zeros(3);
        t.add_cube(2.0, &[1.0, -2.0, 0.5]);
        assert_eq!(t.relative_asymmetry(), 0.0);
        assert!((t.apply3(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]) + 2.0).abs() < 1e-15);
    }
}
