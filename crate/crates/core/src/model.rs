//! The MEWLS problem and its stationarity system.
//!
//! The unknown vector is laid out as `y = (lambda, mu, w_1..w_m, x_1..x_n)` and
//! the stationarity map is
//!
//! ```text
//! F1 = u^T w - 1
//! F2 = w^T (Ax - b)^2 - E
//! F3 = log w + (1 + lambda) u + mu (Ax - b)^2
//! F4 = A^T W A x - A^T W b
//! ```
//!
//! where squares are elementwise and `u` is the all-ones vector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{
    inf_norm, min_singular_value, spectral_norm, vec_inf_norm, weighted_least_squares, DenseMatrix,
    DenseVector, RANK_TOL,
};

/// Default feasibility tolerance for branch certification.
pub const FEAS_TOL: f64 = 1e-8;

/// Relative threshold on `max r*^2 - min r*^2` below which the start is degenerate.
pub const R2_SPREAD_TOL: f64 = 1e-12;

/// Overdetermined system `A x ~ b` with full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    a: DenseMatrix,
    b: DenseVector,
    a_inf: f64,
    b_inf: f64,
}

impl Problem {
    pub fn new(a: DenseMatrix, b: DenseVector) -> Result<Self> {
        let (m, n) = a.shape();
        if n == 0 || m < n {
            return Err(Error::DimensionMismatch(format!(
                "need m >= n >= 1, got A {m}x{n}"
            )));
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "A has {m} rows but b has {} entries",
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in A or b".into()));
        }
        let smax = spectral_norm(&a);
        let smin = min_singular_value(&a);
        if !(smax > 0.0) || smin <= RANK_TOL * smax {
            return Err(Error::RankDeficient {
                ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        let a_inf = inf_norm(&a);
        let b_inf = vec_inf_norm(&b);
        Ok(Problem { a, b, a_inf, b_inf })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseVector {
        &self.b
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Dimension `2 + m + n` of the stationarity system.
    pub fn dim(&self) -> usize {
        2 + self.m() + self.n()
    }

    pub fn a_inf_norm(&self) -> f64 {
        self.a_inf
    }

    pub fn b_inf_norm(&self) -> f64 {
        self.b_inf
    }

    /// Below this MSE the system is treated as consistent.
    pub fn e_floor(&self) -> f64 {
        1e-14 * (1.0 + self.b.norm_squared() / self.m() as f64)
    }

    /// SHA-256 over the shape and the little-endian bytes of `A` (row-major) and `b`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.m() as u64).to_le_bytes());
        h.update((self.n() as u64).to_le_bytes());
        for row in self.a.row_iter() {
            for v in row.iter() {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.b.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Rows of the problem selected by `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> (DenseMatrix, DenseVector) {
        let a = DenseMatrix::from_fn(rows.len(), self.n(), |i, j| self.a[(rows[i], j)]);
        let b = DenseVector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i]));
        (a, b)
    }
}

/// One point `y = (lambda, mu, w, x)` of the stationarity system at MSE level `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    pub lambda: f64,
    pub mu: f64,
    #[serde(with = "crate::numerics::vector_serde")]
    pub w: DenseVector,
    #[serde(with = "crate::numerics::vector_serde")]
    pub x: DenseVector,
    pub e: f64,
}

impl BranchState {
    pub fn dim(&self) -> usize {
        2 + self.w.len() + self.x.len()
    }

    pub fn to_vector(&self) -> DenseVector {
        let (m, n) = (self.w.len(), self.x.len());
        let mut y = DenseVector::zeros(2 + m + n);
        y[0] = self.lambda;
        y[1] = self.mu;
        y.rows_mut(2, m).copy_from(&self.w);
        y.rows_mut(2 + m, n).copy_from(&self.x);
        y
    }

    pub fn from_vector(y: &DenseVector, m: usize, n: usize, e: f64) -> Self {
        assert_eq!(y.len(), 2 + m + n, "state vector has wrong length");
        BranchState {
            lambda: y[0],
            mu: y[1],
            w: y.rows(2, m).into_owned(),
            x: y.rows(2 + m, n).into_owned(),
            e,
        }
    }

    pub fn min_weight(&self) -> f64 {
        self.w.min()
    }

    fn check_weights(&self) -> Result<()> {
        match self.w.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            Some((index, &value)) => Err(Error::NonPositiveWeight { index, value }),
            None => Ok(()),
        }
    }
}

/// Uniform-weight (ordinary least squares) quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    #[serde(with = "crate::numerics::vector_serde")]
    pub x_star: DenseVector,
    #[serde(with = "crate::numerics::vector_serde")]
    pub r_star: DenseVector,
    pub e_uw: f64,
    /// `max_i r*_i^2 - min_i r*_i^2`
    pub r2_spread: f64,
}

impl OlsSummary {
    /// True when `r*^2` is numerically constant, so `u` and `r*^2` are dependent and
    /// the Jacobian at the start is singular.
    pub fn is_degenerate(&self) -> bool {
        let max_r2 = self.r_star.iter().map(|r| r * r).fold(0.0, f64::max);
        self.r2_spread <= R2_SPREAD_TOL * (1.0 + max_r2)
    }
}

/// OLS solution and the corresponding critical point with `mu = 0`.
pub fn ols_initial(p: &Problem) -> Result<(OlsSummary, BranchState)> {
    let m = p.m();
    let uniform = DenseVector::from_element(m, 1.0 / m as f64);
    let x_star = weighted_least_squares(p.a(), p.b(), &uniform)?;
    let r_star = residuals(p, &x_star);
    let e_uw = r_star.norm_squared() / m as f64;
    if e_uw <= p.e_floor() {
        return Err(Error::ZeroResidual {
            e_uw,
            floor: p.e_floor(),
        });
    }
    let r2 = r_star.map(|r| r * r);
    let r2_spread = r2.max() - r2.min();
    let state = BranchState {
        lambda: -(1.0 + (1.0 / m as f64).ln()),
        mu: 0.0,
        w: uniform,
        x: x_star.clone(),
        e: e_uw,
    };
    Ok((
        OlsSummary {
            x_star,
            r_star,
            e_uw,
            r2_spread,
        },
        state,
    ))
}

/// `r = A x - b`
pub fn residuals(p: &Problem, x: &DenseVector) -> DenseVector {
    p.a() * x - p.b()
}

/// Shannon entropy with the convention `0 log 0 = 0`.
pub fn entropy(w: &DenseVector) -> f64 {
    -w.iter()
        .filter(|&&wi| wi > 0.0)
        .map(|&wi| wi * wi.ln())
        .sum::<f64>()
}

/// `sum_i w_i r_i^2`
pub fn weighted_mse(w: &DenseVector, r: &DenseVector) -> f64 {
    w.iter().zip(r.iter()).map(|(wi, ri)| wi * ri * ri).sum()
}

/// Evaluates the stationarity map at `y` (the MSE level is `y.e`).
pub fn eval_f(p: &Problem, y: &BranchState) -> Result<DenseVector> {
    y.check_weights()?;
    let (m, n) = (p.m(), p.n());
    let r = residuals(p, &y.x);
    let mut f = DenseVector::zeros(2 + m + n);
    f[0] = y.w.sum() - 1.0;
    f[1] = weighted_mse(&y.w, &r) - y.e;
    for i in 0..m {
        f[2 + i] = y.w[i].ln() + (1.0 + y.lambda) + y.mu * r[i] * r[i];
    }
    // A^T W A x - A^T W b = A^T (w .* r)
    let wr = y.w.component_mul(&r);
    f.rows_mut(2 + m, n).copy_from(&p.a().tr_mul(&wr));
    Ok(f)
}

/// Exact Jacobian of [`eval_f`] with respect to `(lambda, mu, w, x)`, valid off the
/// branch as well (the `x`-block of the second row is kept).
pub fn jacobian(p: &Problem, y: &BranchState) -> Result<DenseMatrix> {
    let mut j = jacobian_on_branch(p, y)?;
    let m = p.m();
    let r = residuals(p, &y.x);
    let atwr = p.a().tr_mul(&y.w.component_mul(&r));
    for k in 0..p.n() {
        j[(1, 2 + m + k)] = 2.0 * atwr[k];
    }
    Ok(j)
}

/// Jacobian with the `2 (A^T W r)^T` block dropped; equals [`jacobian`] wherever the
/// weighted normal equations hold.
pub fn jacobian_on_branch(p: &Problem, y: &BranchState) -> Result<DenseMatrix> {
    y.check_weights()?;
    let (m, n) = (p.m(), p.n());
    let a = p.a();
    let r = residuals(p, &y.x);
    let mut j = DenseMatrix::zeros(2 + m + n, 2 + m + n);
    for i in 0..m {
        let (wi, ri) = (y.w[i], r[i]);
        j[(0, 2 + i)] = 1.0;
        j[(1, 2 + i)] = ri * ri;
        j[(2 + i, 0)] = 1.0;
        j[(2 + i, 1)] = ri * ri;
        j[(2 + i, 2 + i)] = 1.0 / wi;
        for k in 0..n {
            j[(2 + i, 2 + m + k)] = 2.0 * y.mu * ri * a[(i, k)];
            j[(2 + m + k, 2 + i)] = ri * a[(i, k)];
        }
    }
    // A^T W A
    for k in 0..n {
        for l in k..n {
            let s: f64 = (0..m).map(|i| y.w[i] * a[(i, k)] * a[(i, l)]).sum();
            j[(2 + m + k, 2 + m + l)] = s;
            j[(2 + m + l, 2 + m + k)] = s;
        }
    }
    Ok(j)
}

/// `w_i = exp(-mu r_i^2) / Z`, evaluated with the exponent shifted by its minimum.
pub fn gibbs_weights(mu: f64, r: &DenseVector) -> DenseVector {
    let t = r.map(|ri| mu * ri * ri);
    let tmin = t.min();
    let unnormalized = t.map(|ti| (-(ti - tmin)).exp());
    let z = unnormalized.sum();
    unnormalized / z
}

/// `|| w - gibbs_weights(mu, r(x)) ||_inf`
pub fn gibbs_consistency(p: &Problem, y: &BranchState) -> f64 {
    let g = gibbs_weights(y.mu, &residuals(p, &y.x));
    vec_inf_norm(&(&y.w - g))
}

/// Residuals of the three constraint groups that define a branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `|u^T w - 1|`
    pub normalization: f64,
    /// `|w^T r^2 - E|`
    pub mse: f64,
    /// `||A^T W r||_inf`
    pub normal_equations: f64,
}

impl Feasibility {
    pub fn is_certified(&self, p: &Problem, e: f64, feas_tol: f64) -> bool {
        self.normalization <= feas_tol
            && self.mse <= feas_tol * (1.0 + e)
            && self.normal_equations <= feas_tol * p.a_inf_norm() * p.b_inf_norm()
    }
}

pub fn feasibility(p: &Problem, y: &BranchState) -> Feasibility {
    let r = residuals(p, &y.x);
    Feasibility {
        normalization: (y.w.sum() - 1.0).abs(),
        mse: (weighted_mse(&y.w, &r) - y.e).abs(),
        normal_equations: vec_inf_norm(&p.a().tr_mul(&y.w.component_mul(&r))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::LuFactor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine(points: &[(f64, f64)]) -> Problem {
        let a = DenseMatrix::from_fn(
            points.len(),
            2,
            |i, j| if j == 0 { 1.0 } else { points[i].0 },
        );
        let b = DenseVector::from_iterator(points.len(), points.iter().map(|p| p.1));
        Problem::new(a, b).unwrap()
    }

    fn four() -> Problem {
        affine(&[(0.3, 0.4), (0.3, 0.6), (0.7, 0.4), (0.7, 0.6)])
    }

    fn eight() -> Problem {
        affine(&[
            (0.3, 0.4),
            (0.3, 0.6),
            (0.7, 0.4),
            (0.7, 0.6),
            (0.1, 0.2),
            (0.1, 0.8),
            (0.9, 0.2),
            (0.9, 0.8),
        ])
    }

    fn random_problem(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Problem {
        let a = DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DenseVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        Problem::new(a, b).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BranchState {
        let w = DenseVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
        BranchState {
            lambda: rng.random_range(-2.0..2.0),
            mu: rng.random_range(0.0..5.0),
            w,
            x: DenseVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            e: rng.random_range(0.01..0.5),
        }
    }

    /// Straight transcription of the four residual blocks, written without the
    /// helpers used by `eval_f`.
    #[allow(clippy::needless_range_loop)]
    fn eval_f_by_hand(p: &Problem, y: &BranchState) -> Vec<f64> {
        let (m, n) = (p.m(), p.n());
        let mut r = vec![0.0; m];
        for i in 0..m {
            let mut s = -p.b()[i];
            for k in 0..n {
                s += p.a()[(i, k)] * y.x[k];
            }
            r[i] = s;
        }
        let mut out = vec![0.0; 2 + m + n];
        out[0] = y.w.iter().sum::<f64>() - 1.0;
        out[1] = (0..m).map(|i| y.w[i] * r[i] * r[i]).sum::<f64>() - y.e;
        for i in 0..m {
            out[2 + i] = y.w[i].ln() + 1.0 + y.lambda + y.mu * r[i] * r[i];
        }
        for k in 0..n {
            let atwax: f64 = (0..m)
                .map(|i| {
                    p.a()[(i, k)] * y.w[i] * (0..n).map(|l| p.a()[(i, l)] * y.x[l]).sum::<f64>()
                })
                .sum();
            let atwb: f64 = (0..m).map(|i| p.a()[(i, k)] * y.w[i] * p.b()[i]).sum();
            out[2 + m + k] = atwax - atwb;
        }
        out
    }

    fn fd_jacobian(p: &Problem, y: &BranchState, h: f64) -> DenseMatrix {
        let (m, n) = (p.m(), p.n());
        let base = y.to_vector();
        let d = base.len();
        let mut j = DenseMatrix::zeros(d, d);
        for c in 0..d {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[c] += h;
            minus[c] -= h;
            let fp = eval_f(p, &BranchState::from_vector(&plus, m, n, y.e)).unwrap();
            let fm = eval_f(p, &BranchState::from_vector(&minus, m, n, y.e)).unwrap();
            j.set_column(c, &((fp - fm) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn problem_validation() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            Problem::new(a, DenseVector::zeros(2)),
            Err(Error::RankDeficient { .. })
        ));
        let a = DenseMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            Problem::new(a, DenseVector::zeros(1)),
            Err(Error::DimensionMismatch(_))
        ));
        let a = DenseMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            Problem::new(a, DenseVector::zeros(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ols_on_symmetric_datasets() {
        let (ols, y0) = ols_initial(&four()).unwrap();
        assert!((ols.x_star[0] - 0.5).abs() < 1e-14 && ols.x_star[1].abs() < 1e-14);
        assert!((ols.e_uw - 0.01).abs() < 1e-15);
        assert!(ols.is_degenerate());
        assert_eq!(y0.mu, 0.0);
        assert!((y0.lambda - (4f64.ln() - 1.0)).abs() < 1e-15);

        let (ols, _) = ols_initial(&eight()).unwrap();
        assert!((ols.e_uw - 0.05).abs() < 1e-12);
        assert!(!ols.is_degenerate());
        assert!((ols.e_uw - ols.r_star.norm_squared() / 8.0).abs() <= 1e-12 * ols.e_uw);
    }

    #[test]
    fn ols_refuses_consistent_system() {
        let a = DenseMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = Problem::new(a, DenseVector::from_vec(vec![2.0, 4.0, 6.0])).unwrap();
        assert!(matches!(ols_initial(&p), Err(Error::ZeroResidual { .. })));
    }

    #[test]
    fn residual_cases() {
        let p = four();
        let r = residuals(&p, &DenseVector::from_vec(vec![0.5, 0.0]));
        let expect = [0.1, -0.1, 0.1, -0.1];
        for (ri, ei) in r.iter().zip(expect) {
            assert!((ri - ei).abs() < 1e-15);
        }
        assert_eq!(residuals(&p, &DenseVector::zeros(2)), -p.b());
    }

    #[test]
    fn entropy_cases() {
        assert!((entropy(&DenseVector::from_element(4, 0.25)) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&DenseVector::from_vec(vec![0.0, 1.0, 0.0])), 0.0);
        assert!((entropy(&DenseVector::from_vec(vec![0.5, 0.5, 0.0])) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn weighted_mse_cases() {
        let (ols, _) = ols_initial(&eight()).unwrap();
        let mse = weighted_mse(&DenseVector::from_element(8, 0.125), &ols.r_star);
        assert!((mse - 0.05).abs() < 1e-15);
        let r = DenseVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(
            weighted_mse(
                &DenseVector::from_vec(vec![0.2, 0.3, 0.5]),
                &DenseVector::zeros(3)
            ),
            0.0
        );
        assert_eq!(
            weighted_mse(&DenseVector::from_vec(vec![0.0, 1.0, 0.0]), &r),
            4.0
        );
    }

    #[test]
    fn f_vanishes_at_start() {
        for p in [four(), eight()] {
            let (_, y0) = ols_initial(&p).unwrap();
            let f = eval_f(&p, &y0).unwrap();
            assert!(vec_inf_norm(&f) <= 1e-12, "{f}");
        }
    }

    #[test]
    fn f_is_affine_in_lambda() {
        let p = eight();
        let (_, y0) = ols_initial(&p).unwrap();
        let f0 = eval_f(&p, &y0).unwrap();
        let mut y1 = y0.clone();
        y1.lambda += 0.37;
        let df = eval_f(&p, &y1).unwrap() - f0;
        for (i, v) in df.iter().enumerate() {
            let expect = if (2..10).contains(&i) { 0.37 } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn f_matches_hand_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_problem(&mut rng, 3, 1);
            let y = random_state(&mut rng, 3, 1);
            let f = eval_f(&p, &y).unwrap();
            let g = eval_f_by_hand(&p, &y);
            for (a, b) in f.iter().zip(g) {
                assert!((a - b).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let p = eight();
        let (_, mut y) = ols_initial(&p).unwrap();
        y.w[3] = 0.0;
        assert_eq!(
            eval_f(&p, &y).unwrap_err(),
            Error::NonPositiveWeight {
                index: 3,
                value: 0.0
            }
        );
        assert!(jacobian(&p, &y).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_problem(&mut rng, 4, 2);
        let y = random_state(&mut rng, 4, 2);
        let j = jacobian(&p, &y).unwrap();
        let fd = fd_jacobian(&p, &y, 1e-6);
        assert!((j - fd).amax() <= 1e-6);
    }

    #[test]
    fn jacobian_singular_iff_constant_r2() {
        let p = four();
        let (_, y0) = ols_initial(&p).unwrap();
        assert!(matches!(
            LuFactor::new(&jacobian(&p, &y0).unwrap()),
            Err(Error::SingularMatrix { .. })
        ));
        let p = eight();
        let (_, y0) = ols_initial(&p).unwrap();
        assert!(LuFactor::new(&jacobian(&p, &y0).unwrap()).is_ok());
    }

    #[test]
    fn on_branch_jacobian_agrees_on_branch() {
        let p = eight();
        let (_, y0) = ols_initial(&p).unwrap();
        let diff = jacobian(&p, &y0).unwrap() - jacobian_on_branch(&p, &y0).unwrap();
        assert!(diff.amax() < 1e-15);
    }

    #[test]
    fn gibbs_cases() {
        let r = DenseVector::from_vec(vec![0.3, -1.2, 2.0]);
        assert!(
            vec_inf_norm(&(gibbs_weights(0.0, &r) - DenseVector::from_element(3, 1.0 / 3.0)))
                < 1e-16
        );
        let w = gibbs_weights(1.0, &DenseVector::from_vec(vec![0.0, 1.0]));
        let e1 = (-1.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e1)).abs() < 1e-15);
        assert!((w[0] - 0.731059).abs() < 1e-6 && (w[1] - 0.268941).abs() < 1e-6);
        let w = gibbs_weights(1e6, &DenseVector::from_vec(vec![0.0, 1.0, -1.0]));
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn gibbs_drift_cases() {
        let p = eight();
        let (_, y0) = ols_initial(&p).unwrap();
        assert!(gibbs_consistency(&p, &y0) <= 1e-14);
        let mut y1 = y0.clone();
        y1.w[2] += 1e-3;
        assert!((gibbs_consistency(&p, &y1) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn feasibility_at_start() {
        let p = eight();
        let (_, y0) = ols_initial(&p).unwrap();
        assert!(feasibility(&p, &y0).is_certified(&p, y0.e, FEAS_TOL));
    }

    #[test]
    fn fingerprint_depends_on_data() {
        let f4 = four().fingerprint();
        assert_eq!(f4.len(), 64);
        assert_eq!(f4, four().fingerprint());
        assert_ne!(f4, eight().fingerprint());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_jacobian_matches_fd(seed in any::<u64>(), m in 2usize..11, n in 1usize..4) {
            prop_assume!(m >= n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, m, n);
            let y = random_state(&mut rng, m, n);
            let diff = jacobian(&p, &y).unwrap() - fd_jacobian(&p, &y, 1e-6);
            prop_assert!(diff.amax() <= 1e-6, "max diff {}", diff.amax());
        }

        #[test]
        fn prop_gibbs_normalized_and_shift_invariant(
            mu in 0.0f64..50.0,
            r in proptest::collection::vec(-2.0f64..2.0, 1..12),
            shift in 0.0f64..3.0,
        ) {
            let r = DenseVector::from_vec(r);
            let w = gibbs_weights(mu, &r);
            prop_assert!((w.sum() - 1.0).abs() <= 1e-14);
            // adding `shift` to every r_i^2
            let shifted = r.map(|ri| (ri * ri + shift).sqrt());
            let ws = gibbs_weights(mu, &shifted);
            prop_assert!(vec_inf_norm(&(w - ws)) <= 1e-13);
        }

        #[test]
        fn prop_uniform_gibbs_has_max_entropy(r in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let m = r.len() as f64;
            let w = gibbs_weights(0.0, &DenseVector::from_vec(r));
            prop_assert!((entropy(&w) - m.ln()).abs() <= 1e-13);
        }
    }
}
