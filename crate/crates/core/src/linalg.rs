//! Small dense factorizations for the p×p systems that appear in every sweep.
//!
//! Matrices here are row-major `Vec<f64>` of side `p`. The covariate dimension is
//! small (a handful of columns), so these routines favour zero-dependency loops
//! over the generic nalgebra paths in the hot code.

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chol {
    p: usize,
    l: Vec<f64>,
}

/// Failure of [`Chol::factor_with_floor`]: the offending column and its pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub column: usize,
    pub pivot: f64,
}

impl Chol {
    /// Factor a symmetric positive-definite matrix; fails when a pivot (the
    /// Schur-complement diagonal, before the square root) drops to `floor` or below.
    pub fn factor_with_floor(a: &[f64], p: usize, floor: f64) -> Result<Self, PivotFailure> {
        debug_assert_eq!(a.len(), p * p);
        let mut l = vec![0.0; p * p];
        for j in 0..p {
            let mut d = a[j * p + j];
            for k in 0..j {
                d -= l[j * p + k] * l[j * p + k];
            }
            if !(d > floor) {
                return Err(PivotFailure { column: j, pivot: d });
            }
            let djj = d.sqrt();
            l[j * p + j] = djj;
            for i in (j + 1)..p {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                l[i * p + j] = s / djj;
            }
        }
        Ok(Self { p, l })
    }

    pub fn factor(a: &[f64], p: usize) -> Option<Self> {
        Self::factor_with_floor(a, p, 0.0).ok()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Row-major lower factor.
    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.p + j]
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let p = self.p;
        for i in 0..p {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * p + k] * b[k];
            }
            b[i] = s / self.l[i * p + i];
        }
    }

    /// Solve `Lᵀ x = b` in place.
    pub fn solve_upper_t_in_place(&self, b: &mut [f64]) {
        let p = self.p;
        for i in (0..p).rev() {
            let mut s = b[i];
            for k in (i + 1)..p {
                s -= self.l[k * p + i] * b[k];
            }
            b[i] = s / self.l[i * p + i];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_t_in_place(&mut x);
        x
    }

    /// `Lᵀ v`.
    pub fn mul_lt(&self, v: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut out = vec![0.0; p];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in i..p {
                s += self.l[k * p + i] * v[k];
            }
            *o = s;
        }
        out
    }

    /// `A⁻¹` as a row-major matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        inv
    }
}

/// `vᵀ A v` for row-major symmetric `A`.
pub fn quad_form(a: &[f64], v: &[f64]) -> f64 {
    let p = v.len();
    let mut s = 0.0;
    for i in 0..p {
        let mut r = 0.0;
        for j in 0..p {
            r += a[i * p + j] * v[j];
        }
        s += v[i] * r;
    }
    s
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
