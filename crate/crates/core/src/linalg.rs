//! Small dense linear algebra: a column-major matrix, pivoted Householder QR
//! least squares and a Cholesky solver.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("design has rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Relative threshold on the pivoted diagonal of R (columns are unit-scaled first).
pub const RANK_TOL: f64 = 1e-10;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, columns: &[C]) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(LinalgError::Dimension(format!(
                    "column {j} has {} rows, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Matrix {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    /// `X β`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.col(j)) {
                    *o += b * x;
                }
            }
        }
        out
    }

    /// `Xᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on large columns.
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub beta: Vec<f64>,
    pub rss: f64,
}

/// Pivoted Householder QR of a column-equilibrated copy of `x`.
struct Qr {
    /// Householder vectors below the diagonal, R on and above (n × p, column-major).
    a: Matrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
    scale: Vec<f64>,
}

fn qr(x: &Matrix) -> Result<Qr, LinalgError> {
    let (n, p) = (x.rows, x.cols);
    if n < p {
        return Err(LinalgError::RankDeficient { rank: n, cols: p });
    }
    let mut a = x.clone();
    let mut scale = vec![1.0; p];
    for (j, s) in scale.iter_mut().enumerate() {
        let nrm = norm(a.col(j));
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(LinalgError::RankDeficient {
                rank: 0,
                cols: p,
            });
        }
        *s = nrm;
        a.col_mut(j).iter_mut().for_each(|v| *v /= nrm);
    }
    let mut perm: Vec<usize> = (0..p).collect();
    let mut tau = vec![0.0; p];
    let mut r00 = 0.0;
    for k in 0..p {
        // Pivot: remaining column with the largest trailing norm.
        let (best, best_norm) = (k..p)
            .map(|j| (j, norm(&a.col(j)[k..])))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best != k {
            for i in 0..n {
                a.data.swap(k * n + i, best * n + i);
            }
            perm.swap(k, best);
            scale.swap(k, best);
        }
        if k == 0 {
            r00 = best_norm;
        }
        if best_norm <= RANK_TOL * r00 {
            return Err(LinalgError::RankDeficient { rank: k, cols: p });
        }
        // Householder reflector for a[k.., k].
        let col = &mut a.data[k * n..(k + 1) * n];
        let alpha = if col[k] > 0.0 { -best_norm } else { best_norm };
        let v0 = col[k] - alpha;
        for v in col[k + 1..].iter_mut() {
            *v /= v0;
        }
        tau[k] = (alpha - col[k]) / alpha;
        col[k] = alpha;
        for j in k + 1..p {
            let (left, right) = a.data.split_at_mut(j * n);
            let vk = &left[k * n..(k + 1) * n];
            let cj = &mut right[..n];
            let mut s = cj[k];
            for i in k + 1..n {
                s += vk[i] * cj[i];
            }
            s *= tau[k];
            cj[k] -= s;
            for i in k + 1..n {
                cj[i] -= s * vk[i];
            }
        }
    }
    Ok(Qr {
        a,
        tau,
        perm,
        scale,
    })
}

impl Qr {
    /// Applies `Qᵀ` to `y` in place.
    fn qt_mul(&self, y: &mut [f64]) {
        let n = self.a.rows;
        for k in 0..self.a.cols {
            let v = self.a.col(k);
            let mut s = y[k];
            for i in k + 1..n {
                s += v[i] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in k + 1..n {
                y[i] -= s * v[i];
            }
        }
    }

    fn solve(&self, y: &[f64]) -> LeastSquares {
        let p = self.a.cols;
        let mut qty = y.to_vec();
        self.qt_mul(&mut qty);
        let rss = qty[p..].iter().map(|v| v * v).sum();
        let mut z = vec![0.0; p];
        for k in (0..p).rev() {
            let mut s = qty[k];
            for j in k + 1..p {
                s -= self.a.get(k, j) * z[j];
            }
            z[k] = s / self.a.get(k, k);
        }
        let mut beta = vec![0.0; p];
        for k in 0..p {
            beta[self.perm[k]] = z[k] / self.scale[k];
        }
        LeastSquares { beta, rss }
    }
}

/// Least-squares solution of `x β ≈ y`; errors when `x` is numerically rank deficient.
pub fn lstsq(x: &Matrix, y: &[f64]) -> Result<LeastSquares, LinalgError> {
    if y.len() != x.rows {
        return Err(LinalgError::Dimension(format!(
            "response has {} rows, design {}",
            y.len(),
            x.rows
        )));
    }
    if x.cols == 0 {
        return Ok(LeastSquares {
            beta: Vec::new(),
            rss: y.iter().map(|v| v * v).sum(),
        });
    }
    Ok(qr(x)?.solve(y))
}

/// Errors unless `x` has full column rank.
pub fn check_full_rank(x: &Matrix) -> Result<(), LinalgError> {
    if x.cols == 0 {
        return Ok(());
    }
    qr(x).map(|_| ())
}

/// Solves `a z = b` for symmetric positive definite `a` (row-major p × p).
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let p = b.len();
    if a.len() != p * p {
        return Err(LinalgError::Dimension(format!("{} entries for order {p}", a.len())));
    }
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(LinalgError::NotPositiveDefinite);
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            z[i] -= l[i * p + k] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            z[i] -= l[k * p + i] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_and_residual() {
        let x = Matrix::from_columns(3, &[vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let ls = lstsq(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((ls.beta[0] - 1.0).abs() < 1e-12);
        assert!((ls.beta[1] - 2.0).abs() < 1e-12);
        assert!(ls.rss < 1e-24);
        let ls = lstsq(&x, &[0.0, 1.0, 0.0]).unwrap();
        // Residuals of a line through (0,0),(1,1),(2,0): fitted 1/3 everywhere.
        assert!((ls.rss - (1.0 / 9.0 + 4.0 / 9.0 + 1.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn detects_collinearity() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let x = Matrix::from_columns(4, &[c.clone(), c.iter().map(|v| 2.0 * v).collect()]).unwrap();
        assert!(matches!(lstsq(&x, &c), Err(LinalgError::RankDeficient { .. })));
        let z = Matrix::from_columns(4, &[c.clone(), vec![0.0; 4]]).unwrap();
        assert!(lstsq(&z, &c).is_err());
    }

    #[test]
    fn badly_scaled_columns_are_fine() {
        let a: Vec<f64> = (1..=6).map(|i| i as f64 * 1e6).collect();
        let b: Vec<f64> = (1..=6).map(|i| (i as f64).powi(2) * 1e-6).collect();
        let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 3e-6 * u - 2e6 * v).collect();
        let x = Matrix::from_columns(6, &[a, b]).unwrap();
        let ls = lstsq(&x, &y).unwrap();
        assert!((ls.beta[0] - 3e-6).abs() < 1e-15);
        assert!((ls.beta[1] + 2e6).abs() < 1e-4);
    }

    #[test]
    fn cholesky() {
        let z = cholesky_solve(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0]).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-15 && z[1].abs() < 1e-15);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_err());
    }
}
