//! Benchmark fixtures.

use mewls::{example1, example2, BranchState, DatasetConfig, Example2Variant, Problem};
use mewls::{ContinuationConfig, DenseMatrix, DenseVector};

pub fn eight_point() -> Problem {
    example2(Example2Variant::Eight).1
}

/// Exact Example 1 data with `n` inliers and `n` outliers.
pub fn line_with_outliers(n: usize) -> Problem {
    let cfg = DatasetConfig {
        n_inliers: n,
        n_outliers: n,
        ..Default::default()
    };
    example1(&cfg).expect("default settings are valid").1
}

/// `A = ones(4, 1)`, `b = (0, 0.2, 0.5, 1.5)`.
pub fn toy() -> Problem {
    Problem::new(
        DenseMatrix::from_element(4, 1, 1.0),
        DenseVector::from_vec(vec![0.0, 0.2, 0.5, 1.5]),
    )
    .expect("toy problem has full rank")
}

/// A branch point halfway down from the start.
pub fn mid_branch_state(p: &Problem) -> BranchState {
    let (ols, _) = mewls::ols_initial(p).expect("fixture is well posed");
    let cfg = ContinuationConfig::with_target(0.5 * ols.e_uw);
    let out = mewls::continuation::trace_branch(p, &cfg).expect("valid config");
    out.trajectory
        .expect("fixture is not degenerate")
        .last()
        .state
        .clone()
}
