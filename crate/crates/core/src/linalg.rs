//! Small dense linear algebra: the handful of kernels separation needs for
//! `M <= 8` channels. Everything is row-major `f64`.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Dense `M x M` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput("matrix must have at least one row".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::shape(
                    format!("row {i} of length {dim}"),
                    format!("length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::shape(
                format!("{} entries", dim * dim),
                format!("{} entries", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        if rhs.dim != self.dim {
            return Err(Error::shape(format!("{0}x{0}", self.dim), format!("{0}x{0}", rhs.dim)));
        }
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self - scale * other`, entrywise.
    pub fn sub_scaled(&self, other: &SquareMatrix, scale: f64) -> SquareMatrix {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - scale * b).collect();
        SquareMatrix { dim: self.dim, data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn determinant(&self) -> f64 {
        determinant_row_major(self.dim, self.data.clone())
    }

    /// Signed minors: entry `(m, l)` is `(-1)^(m+l)` times the determinant of
    /// the matrix with row `m` and column `l` removed, i.e. `d det / d w_ml`.
    pub fn cofactor_matrix(&self) -> SquareMatrix {
        let n = self.dim;
        if n == 1 {
            return SquareMatrix::identity(1);
        }
        let mut out = Self::zeros(n);
        let mut minor = Vec::with_capacity((n - 1) * (n - 1));
        for m in 0..n {
            for l in 0..n {
                minor.clear();
                for i in (0..n).filter(|&i| i != m) {
                    for j in (0..n).filter(|&j| j != l) {
                        minor.push(self[(i, j)]);
                    }
                }
                let sign = if (m + l) % 2 == 0 { 1.0 } else { -1.0 };
                out[(m, l)] = sign * determinant_row_major(n - 1, minor.clone());
            }
        }
        out
    }

    /// Inverse through the adjugate. Fails when `|det| < 1e-300`.
    pub fn inverse(&self) -> Result<SquareMatrix> {
        let det = self.determinant();
        if det.abs() < 1e-300 {
            return Err(Error::SingularDemixer { det });
        }
        let cof = self.cofactor_matrix();
        let mut inv = cof.transpose();
        inv.data.iter_mut().for_each(|v| *v /= det);
        Ok(inv)
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&self) -> Result<SquareMatrix> {
        let mut out = self.clone();
        for i in 0..self.dim {
            let norm = self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::ZeroRow { row: i });
            }
            for j in 0..self.dim {
                out[(i, j)] /= norm;
            }
        }
        Ok(out)
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    pub fn sym_eig(&self) -> Result<SymEig> {
        let n = self.dim;
        let scale = self.max_abs();
        let mut asym = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        if scale > 0.0 && asym / scale > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                asymmetry: asym / scale,
            });
        }

        let mut a = self.clone();
        // symmetrize so rotations see an exactly symmetric matrix
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let mut v = SquareMatrix::identity(n);
        let total = a.frobenius_norm();

        let mut converged = n == 1 || total == 0.0;
        let mut sweep = 0;
        while !converged {
            if sweep == JACOBI_MAX_SWEEPS {
                return Err(Error::NoConvergence { sweeps: sweep });
            }
            sweep += 1;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            converged = off <= 1e-15 * total;
        }

        let mut order: Vec<usize> = (0..n).collect();
        // stable: ties keep solver order
        order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = SquareMatrix::zeros(n);
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new_col)] = v[(k, old_col)];
            }
        }
        Ok(SymEig { values, vectors })
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Display for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Eigenvalues in descending order and the matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
}

impl SymEig {
    /// `E diag(values) E^T`.
    pub fn reconstruct(&self) -> SquareMatrix {
        let n = self.values.len();
        let e = &self.vectors;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n).map(|k| e[(i, k)] * self.values[k] * e[(j, k)]).sum();
            }
        }
        out
    }
}

pub fn sym_eig(a: &SquareMatrix) -> Result<SymEig> {
    a.sym_eig()
}

pub fn determinant(w: &SquareMatrix) -> f64 {
    w.determinant()
}

pub fn cofactor_matrix(w: &SquareMatrix) -> SquareMatrix {
    w.cofactor_matrix()
}

pub fn normalize_rows(w: &SquareMatrix) -> Result<SquareMatrix> {
    w.normalize_rows()
}

fn determinant_row_major(n: usize, mut a: Vec<f64>) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        let p = a[pivot * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
            }
            det = -det;
        }
        det *= p;
        for i in col + 1..n {
            let factor = a[i * n + col] / p;
            if factor != 0.0 {
                for j in col..n {
                    a[i * n + j] -= factor * a[col * n + j];
                }
            }
        }
    }
    det
}

/// Multichannel signal block: rows are channels, columns are time samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            data: vec![0.0; channels * samples],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.len();
        if channels == 0 {
            return Err(Error::InvalidInput("signal block needs at least one channel".into()));
        }
        let samples = rows[0].len();
        let mut data = Vec::with_capacity(channels * samples);
        for (m, row) in rows.iter().enumerate() {
            if row.len() != samples {
                return Err(Error::shape(
                    format!("{samples} samples in channel {m}"),
                    format!("{}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(channels, samples, data)
    }

    pub fn from_row_major(channels: usize, samples: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * samples {
            return Err(Error::shape(
                format!("{channels}x{samples} = {} values", channels * samples),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("signal values must be finite".into()));
        }
        Ok(Self {
            channels,
            samples,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.samples..(m + 1) * self.samples]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.samples..(m + 1) * self.samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.samples.max(1)).take(self.channels)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn get(&self, m: usize, t: usize) -> f64 {
        self.data[m * self.samples + t]
    }

    pub fn set(&mut self, m: usize, t: usize, v: f64) {
        self.data[m * self.samples + t] = v;
    }

    /// Sample vector at time `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.channels).map(|m| self.get(m, t)).collect()
    }

    /// Time-major copy, `T x M`, so each sample vector is contiguous.
    pub fn to_time_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for t in 0..self.samples {
            for m in 0..self.channels {
                out.push(self.get(m, t));
            }
        }
        out
    }

    pub fn channel_means(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().sum::<f64>() / self.samples as f64)
            .collect()
    }

    /// Sample covariance with `1/T` normalization.
    pub fn covariance(&self) -> SquareMatrix {
        let mean = self.channel_means();
        let n = self.channels;
        let mut cov = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let ri = self.row(i);
                let rj = self.row(j);
                let s: f64 = ri.iter().zip(rj).map(|(a, b)| (a - mean[i]) * (b - mean[j])).sum();
                let c = s / self.samples as f64;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        cov
    }

    /// `A * self` for a square `A` acting on the channel axis.
    pub fn left_mul(&self, a: &SquareMatrix) -> Result<SampleMatrix> {
        if a.dim() != self.channels {
            return Err(Error::shape(
                format!("{0}x{0} matrix", self.channels),
                format!("{0}x{0}", a.dim()),
            ));
        }
        let mut out = SampleMatrix::zeros(self.channels, self.samples);
        for i in 0..self.channels {
            for k in 0..self.channels {
                let c = a[(i, k)];
                if c == 0.0 {
                    continue;
                }
                let src = self.row(k);
                for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
        Ok(out)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Keeps the first `samples` columns.
    pub fn truncated(&self, samples: usize) -> SampleMatrix {
        let samples = samples.min(self.samples);
        let rows: Vec<Vec<f64>> = self.rows().map(|r| r[..samples].to_vec()).collect();
        SampleMatrix::from_rows(&rows).expect("truncation preserves shape")
    }
}
