//! Dense linear-algebra kernels.
//!
//! Everything here works on `nalgebra` dense storage. Problem sizes are
//! desk-scale (a few thousand rows at most), so every factorization is dense.
//!
//! - [`solve_linear`]: LU with partial (row) pivoting on a row-equilibrated copy,
//!   reporting [`Error::SingularMatrix`] instead of returning garbage.
//! - [`weighted_least_squares`]: Householder QR of `diag(sqrt(w)) A`; the normal
//!   matrix `A^T W A` is never formed.
//! - [`sym_eig_min`] and [`min_singular_value`] for the certificates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Serializes a [`DenseVector`] as a plain sequence of numbers.
pub mod vector_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::DenseVector;

    pub fn serialize<S: Serializer>(v: &DenseVector, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DenseVector, D::Error> {
        Vec::<f64>::deserialize(d).map(DenseVector::from_vec)
    }
}

/// Relative pivot floor of the LU factorization.
pub const PIVOT_FLOOR_REL: f64 = 1e-14;

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Maximum absolute row sum.
pub fn inf_norm(m: &DenseMatrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DenseVector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// LU factorization `P D M = L U` where `D` equilibrates the rows of `M` to unit
/// max-norm.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: DenseMatrix,
    perm: Vec<usize>,
    row_scale: DenseVector,
    min_pivot: f64,
}

impl LuFactor {
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }

        let mut row_scale = DenseVector::zeros(n);
        let mut lu = m.clone();
        for i in 0..n {
            let amax = lu.row(i).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            if amax == 0.0 {
                return Err(Error::SingularMatrix {
                    pivot: 0.0,
                    floor: PIVOT_FLOOR_REL,
                });
            }
            row_scale[i] = 1.0 / amax;
            lu.row_mut(i).scale_mut(1.0 / amax);
        }
        let floor = PIVOT_FLOOR_REL * inf_norm(&lu);

        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmax < floor {
                return Err(Error::SingularMatrix { pivot: pmax, floor });
            }
            min_pivot = min_pivot.min(pmax);
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        let ukj = lu[(k, j)];
                        lu[(i, j)] -= factor * ukj;
                    }
                }
            }
        }

        Ok(LuFactor {
            lu,
            perm,
            row_scale,
            min_pivot,
        })
    }

    /// Smallest pivot magnitude met during elimination (on the equilibrated matrix).
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve(&self, rhs: &DenseVector) -> Result<DenseVector> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, matrix is {n}x{n}",
                rhs.len()
            )));
        }
        let mut v =
            DenseVector::from_iterator(n, self.perm.iter().map(|&i| rhs[i] * self.row_scale[i]));
        for i in 0..n {
            let mut s = v[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * v[j];
            }
            v[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = v[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * v[j];
            }
            v[i] = s / self.lu[(i, i)];
        }
        Ok(v)
    }
}

/// Solves `M v = rhs` by pivoted LU.
pub fn solve_linear(m: &DenseMatrix, rhs: &DenseVector) -> Result<DenseVector> {
    if rhs.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, matrix has {} rows",
            rhs.len(),
            m.nrows()
        )));
    }
    LuFactor::new(m)?.solve(rhs)
}

/// Minimizes `sum_i w_i (a_i^T x - b_i)^2` through QR of the row-scaled design.
pub fn weighted_least_squares(
    a: &DenseMatrix,
    b: &DenseVector,
    w: &DenseVector,
) -> Result<DenseVector> {
    let (m, n) = a.shape();
    if b.len() != m || w.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "A is {m}x{n}, b has {} entries, w has {}",
            b.len(),
            w.len()
        )));
    }
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "underdetermined system: {m} rows, {n} columns"
        )));
    }
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NonPositiveWeight { index, value });
    }
    if !(w.sum() > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }

    let sqrt_w = w.map(f64::sqrt);
    let mut scaled = a.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row.scale_mut(sqrt_w[i]);
    }
    let rhs = b.component_mul(&sqrt_w);

    let qr = scaled.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let qtb = qr.q().tr_mul(&rhs);
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { ratio: smin / smax })
}

/// Algebraically smallest eigenvalue of the symmetric part `(S + S^T) / 2`.
///
/// Non-finite input yields NaN.
pub fn sym_eig_min(s: &DenseMatrix) -> f64 {
    assert_eq!(s.nrows(), s.ncols(), "sym_eig_min needs a square matrix");
    if s.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let sym = (s + s.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest singular value of a tall matrix.
pub fn min_singular_value(m: &DenseMatrix) -> f64 {
    assert!(
        m.nrows() >= m.ncols(),
        "min_singular_value needs rows >= cols"
    );
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    m.singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank with the relative threshold [`RANK_TOL`].
pub fn numerical_rank(m: &DenseMatrix) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}
