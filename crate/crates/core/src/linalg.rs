//! Dense linear solves for the implicit steps and the boundary-value
//! Newton iteration. Row-major storage, partial pivoting, nothing fancy:
//! the systems here are at most a few hundred unknowns.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    n: usize,
    a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::size("matrix rows must be square"));
        }
        let mut a = Vec::with_capacity(n * n);
        for r in rows {
            a.extend_from_slice(r);
        }
        Ok(Self { n, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.a[i * n..(i + 1) * n];
            y[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
        y
    }

    /// Solves self * x = b in place via LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::size(format!(
                "rhs length {} does not match matrix size {}",
                b.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut lu = self.a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[col * n + col].abs();
            for r in (col + 1)..n {
                let v = lu[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::singular(format!(
                    "pivot {best} in column {col} of {n}x{n} system"
                )));
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = lu[col * n + col];
            for r in (col + 1)..n {
                let m = lu[r * n + col] / d;
                if m == 0.0 {
                    continue;
                }
                lu[r * n + col] = 0.0;
                for j in (col + 1)..n {
                    lu[r * n + j] -= m * lu[col * n + j];
                }
                x[r] -= m * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= lu[i * n + j] * x[j];
            }
            x[i] = s / lu[i * n + i];
        }
        Ok(x)
    }

    /// Infinity-norm condition estimate via the explicit inverse. Intended
    /// for the small transform matrices only.
    pub fn cond_inf(&self) -> Result<f64> {
        let n = self.n;
        let mut inv_norm: f64 = 0.0;
        let mut cols = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                cols[j][i] = col[i];
            }
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| cols[j][i].abs()).sum();
            inv_norm = inv_norm.max(row_sum);
        }
        let mut norm: f64 = 0.0;
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| self.get(i, j).abs()).sum();
            norm = norm.max(row_sum);
        }
        Ok(norm * inv_norm)
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n != other.n {
            return Err(Error::size("matrix sizes differ in product"));
        }
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.add_to(i, j, aik * other.get(k, j));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = m.solve(&[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pivots_on_zero_diagonal() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = m.solve(&[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn reports_singular() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(m.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn random_roundtrip() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 3, 7, 20] {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let base: f64 = rng.gen_range(-1.0..1.0);
                            if i == j {
                                base + 4.0
                            } else {
                                base
                            }
                        })
                        .collect()
                })
                .collect();
            let m = Matrix::from_rows(&rows).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = m.matvec(&x);
            let got = m.solve(&b).unwrap();
            for i in 0..n {
                assert!((got[i] - x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn condition_of_identity() {
        let m = Matrix::identity(4);
        assert!((m.cond_inf().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_and_product() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let t = m.transpose();
        assert_eq!(t.get(0, 1), 3.0);
        let p = m.matmul(&t).unwrap();
        assert_eq!(p.get(0, 0), 5.0);
        assert_eq!(p.get(1, 1), 25.0);
    }
}
