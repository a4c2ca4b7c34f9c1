//! Synthetic regression datasets and CSV ingestion.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; Gaussian noise
//! is drawn with the ziggurat sampler of `rand_distr::Normal`. Draw order: one noise
//! value per inlier (only when the variance is positive), then the outlier
//! ordinates with rejection.

mod csv;

pub use self::csv::{
    fmt17, format_dataset_csv, format_problem_csv, format_trajectory_csv, load_csv, parse_csv,
    parse_trajectory_csv, save_dataset_csv, save_problem_csv, save_trajectory_csv, LoadedProblem,
    TRAJECTORY_FIXED_COLUMNS,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Problem;
use crate::numerics::{DenseMatrix, DenseVector};

pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64; normal=ziggurat(rand_distr)";

/// Outlier ordinates are redrawn at most this many times.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Outlier => "outlier",
        }
    }
}

/// Planar point cloud fitted with the affine design `[1, x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<(f64, f64)>,
    /// One label per point, when ground truth is known.
    pub labels: Option<Vec<Label>>,
    pub seed: Option<u64>,
    pub noise_sigma2: f64,
    pub rng_algorithm: Option<String>,
}

impl LabeledDataset {
    pub fn to_problem(&self) -> Result<Problem> {
        affine_problem(&self.points)
    }

    pub fn indices_with(&self, label: Label) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == label).collect(),
            None => Vec::new(),
        }
    }
}

/// Design `[1, x_i]`, observations `y_i`.
pub fn affine_problem(points: &[(f64, f64)]) -> Result<Problem> {
    let a = DenseMatrix::from_fn(
        points.len(),
        2,
        |i, j| if j == 0 { 1.0 } else { points[i].0 },
    );
    let b = DenseVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    Problem::new(a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_inliers: usize,
    pub n_outliers: usize,
    /// `(intercept, slope)`
    pub line: (f64, f64),
    /// Variance of the Gaussian noise added to inlier ordinates.
    pub noise_sigma2: f64,
    pub outlier_band: (f64, f64),
    /// Minimum height of an outlier above the line.
    pub outlier_margin: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_inliers: 10,
            n_outliers: 10,
            line: (0.0, 0.5),
            noise_sigma2: 0.0,
            outlier_band: (0.55, 1.0),
            outlier_margin: 0.35,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.outlier_band;
        if self.n_inliers < 2 {
            return Err(Error::InvalidInput("need at least two inliers".into()));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "outlier band ({lo}, {hi}) must be an interval inside [0, 1]"
            )));
        }
        if !(self.outlier_margin > 0.0) {
            return Err(Error::InvalidInput(
                "outlier margin must be positive".into(),
            ));
        }
        if !(self.noise_sigma2 >= 0.0) || !self.noise_sigma2.is_finite() {
            return Err(Error::InvalidInput(
                "noise variance must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Inliers on a line over equispaced abscissae in `[0, 1]`, plus outliers at the
/// same abscissae lifted into the upper band.
pub fn example1(cfg: &DatasetConfig) -> Result<(LabeledDataset, Problem)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c0, c1) = cfg.line;
    let line = |x: f64| c0 + c1 * x;
    let xs: Vec<f64> = (0..cfg.n_inliers)
        .map(|i| i as f64 / (cfg.n_inliers - 1) as f64)
        .collect();

    let mut points = Vec::with_capacity(cfg.n_inliers + cfg.n_outliers);
    let mut labels = Vec::with_capacity(points.capacity());
    let noise = if cfg.noise_sigma2 > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma2.sqrt()).expect("finite positive std"))
    } else {
        None
    };
    for &x in &xs {
        let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        points.push((x, line(x) + eps));
        labels.push(Label::Inlier);
    }

    let (lo, hi) = cfg.outlier_band;
    for k in 0..cfg.n_outliers {
        let x = xs[k % xs.len()];
        let floor = line(x) + cfg.outlier_margin;
        let y = (0..MAX_REDRAWS)
            .map(|_| rng.random_range(lo..hi))
            .find(|&y| y >= floor)
            .unwrap_or_else(|| floor.max(0.5 * (lo + hi)));
        points.push((x, y));
        labels.push(Label::Outlier);
    }

    let dataset = LabeledDataset {
        points,
        labels: Some(labels),
        seed: Some(cfg.seed),
        noise_sigma2: cfg.noise_sigma2,
        rng_algorithm: Some(RNG_ALGORITHM.to_string()),
    };
    let problem = dataset.to_problem()?;
    Ok((dataset, problem))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example2Variant {
    Four,
    Eight,
}

/// Point clouds symmetric about `y = 1/2`.
pub fn example2(variant: Example2Variant) -> (LabeledDataset, Problem) {
    let mut points = vec![(0.3, 0.4), (0.3, 0.6), (0.7, 0.4), (0.7, 0.6)];
    if variant == Example2Variant::Eight {
        points.extend([(0.1, 0.2), (0.1, 0.8), (0.9, 0.2), (0.9, 0.8)]);
    }
    let dataset = LabeledDataset {
        labels: Some(vec![Label::Inlier; points.len()]),
        points,
        seed: None,
        noise_sigma2: 0.0,
        rng_algorithm: None,
    };
    let problem = dataset
        .to_problem()
        .expect("symmetric design has full rank");
    (dataset, problem)
}
