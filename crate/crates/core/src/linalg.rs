//! Small dense linear algebra: square matrices, one-sided Jacobi SVD and
//! the orthogonal polar factor used by Procrustes alignment.

use crate::{Error, Result};

/// Sequential dot product. Summation order is fixed (left to right) so that
/// results are reproducible bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Dot product over four interleaved partial sums. Faster than [`dot`] and
/// still deterministic, but rounds differently.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail = dot(ra, rb);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Row-major dense matrix.
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                expected: cols,
                actual: r.len(),
            });
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖MᵀM − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.transpose().matmul(self).expect("square product");
        gram.frobenius_distance(&Matrix::identity(self.cols))
    }
}

/// Singular value decomposition `A = U Σ Vᵀ` of a square matrix.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
    pub sweeps: usize,
}

pub const JACOBI_TOLERANCE: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Column pairs of `A` are rotated until every pair is orthogonal to within
/// `JACOBI_TOLERANCE` relative to their norms; the accumulated rotations
/// form `V`, the column norms are the singular values and the normalised
/// columns form `U`. Columns with negligible norm get `U` columns completed
/// to an orthonormal basis.
pub fn svd_jacobi(a: &Matrix) -> Result<Svd> {
    if a.rows != a.cols {
        return Err(Error::Dimension {
            expected: a.rows,
            actual: a.cols,
        });
    }
    let n = a.cols;
    // g[j] is column j of A; v[j] is column j of V.
    let t = a.transpose();
    let mut g: Vec<Vec<f64>> = (0..n).map(|j| t.row(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut sweeps = 0;
    loop {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::SvdNoConvergence(sweeps));
        }
        sweeps += 1;
        // squared column norms, refreshed every sweep and updated per rotation
        let mut sq: Vec<f64> = g.iter().map(|c| dot4(c, c)).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot4(&g[p], &g[q]);
                if gamma.abs() <= JACOBI_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                let (lo, hi) = g.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], cos, sin);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], cos, sin);
                sq[p] = alpha - tan * gamma;
                sq[q] = beta + tan * gamma;
            }
        }
        if !rotated {
            break;
        }
    }

    let singular_values: Vec<f64> = g.iter().map(|c| norm(c)).collect();
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * 1e-12 * n as f64;
    let mut u_cols: Vec<Option<Vec<f64>>> = g
        .into_iter()
        .zip(&singular_values)
        .map(|(c, &s)| (s > cutoff).then(|| c.iter().map(|x| x / s).collect()))
        .collect();
    complete_basis(&mut u_cols, n);

    let mut u = Matrix::zeros(n, n);
    let mut vm = Matrix::zeros(n, n);
    for j in 0..n {
        let uc = u_cols[j].as_ref().expect("basis completed");
        for i in 0..n {
            u.set(i, j, uc[i]);
            vm.set(i, j, v[j][i]);
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v: vm,
        sweeps,
    })
}

fn rotate(p: &mut [f64], q: &mut [f64], cos: f64, sin: f64) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let xp = *x;
        *x = cos * xp - sin * *y;
        *y = sin * xp + cos * *y;
    }
}

/// Fills the `None` slots with unit vectors orthogonal to all others, taken
/// from the standard basis by (twice-applied) Gram–Schmidt.
fn complete_basis(cols: &mut [Option<Vec<f64>>], n: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let proj = dot(&e, c);
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let len = norm(&e);
            if len > 1e-6 {
                e.iter_mut().for_each(|x| *x /= len);
                cols[j] = Some(e);
                break;
            }
        }
    }
}

/// Nearest orthogonal matrix to `a` in Frobenius norm: `U Vᵀ` from its SVD.
pub fn orthogonal_polar_factor(a: &Matrix) -> Result<Matrix> {
    let svd = svd_jacobi(a)?;
    svd.u.matmul(&svd.v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn reconstruct(s: &Svd) -> Matrix {
        let n = s.singular_values.len();
        let mut us = s.u.clone();
        for i in 0..n {
            for j in 0..n {
                us.set(i, j, s.u.get(i, j) * s.singular_values[j]);
            }
        }
        us.matmul(&s.v.transpose()).unwrap()
    }

    #[test]
    fn svd_reconstructs() {
        for (n, seed) in [(1, 1), (2, 2), (7, 3), (40, 4)] {
            let a = random(n, seed);
            let s = svd_jacobi(&a).unwrap();
            assert!(reconstruct(&s).frobenius_distance(&a) < 1e-10, "n={n}");
            // columns of U are orthogonal to the sweep tolerance, pair by pair
            assert!(s.u.orthogonality_error() < n as f64 * JACOBI_TOLERANCE, "n={n}");
            assert!(s.v.orthogonality_error() < 1e-12, "n={n}");
            assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rank_deficient_completes_u() {
        // rank one
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let s = svd_jacobi(&a).unwrap();
        assert!(s.u.orthogonality_error() < 1e-10);
        assert!(reconstruct(&s).frobenius_distance(&a) < 1e-10);
        let w = orthogonal_polar_factor(&Matrix::zeros(4, 4)).unwrap();
        assert!(w.orthogonality_error() < 1e-12);
    }

    #[test]
    fn polar_factor_of_orthogonal_is_itself() {
        let r = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(orthogonal_polar_factor(&r).unwrap().frobenius_distance(&r) < 1e-14);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = a.transpose();
        assert_eq!(b.data(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[5.0, 11.0, 11.0, 25.0]);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
