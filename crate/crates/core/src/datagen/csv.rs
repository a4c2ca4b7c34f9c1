use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{affine_problem, Label, LabeledDataset};
use crate::continuation::{BranchSample, Trajectory};
use crate::error::{Error, Result};
use crate::model::{ols_initial, BranchState, Problem};
use crate::numerics::{DenseMatrix, DenseVector};

pub const TRAJECTORY_FIXED_COLUMNS: [&str; 6] = [
    "E",
    "lambda",
    "mu",
    "H",
    "eig_min_schur",
    "sigma_min_weighted",
];

/// Scientific notation with 17 significant digits, which parses back to the same double.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// A problem read from CSV. `dataset` is set for the `x,y[,label]` format.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: Problem,
    pub dataset: Option<LabeledDataset>,
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LoadedProblem> {
    parse_csv(&fs::read_to_string(path)?)
}

/// All non-blank records with their 1-based line numbers, header first.
fn records(text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse_field(text: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = text.parse().map_err(|_| Error::ParseError {
        line,
        column,
        message: format!("'{text}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::ParseError {
            line,
            column,
            message: format!("'{text}' is not finite"),
        });
    }
    Ok(v)
}

fn check_width(fields: &[String], expected: usize, line: usize) -> Result<()> {
    if fields.len() != expected {
        return Err(Error::ParseError {
            line,
            column: fields.len().min(expected) + 1,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<LoadedProblem> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(Error::ParseError {
            line: 1,
            column: 1,
            message: "missing header".into(),
        });
    }
    let (_, header) = rows.remove(0);
    let cols: Vec<&str> = header.iter().map(String::as_str).collect();
    match cols.as_slice() {
        ["x", "y"] => parse_points(&rows, false),
        ["x", "y", "label"] => parse_points(&rows, true),
        [coeffs @ .., "b"] if !coeffs.is_empty() => {
            for (j, c) in coeffs.iter().enumerate() {
                if *c != format!("a_{}", j + 1) {
                    return Err(Error::ParseError {
                        line: 1,
                        column: j + 1,
                        message: format!("expected header a_{}, found '{c}'", j + 1),
                    });
                }
            }
            parse_general(&rows, coeffs.len())
        }
        _ => Err(Error::ParseError {
            line: 1,
            column: 1,
            message: format!("unrecognized header '{}'", cols.join(",")),
        }),
    }
}

fn parse_points(rows: &[(usize, Vec<String>)], labelled: bool) -> Result<LoadedProblem> {
    let width = if labelled { 3 } else { 2 };
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (line, fields) in rows {
        let line = *line;
        check_width(fields, width, line)?;
        points.push((
            parse_field(&fields[0], line, 1)?,
            parse_field(&fields[1], line, 2)?,
        ));
        if labelled {
            labels.push(match fields[2].as_str() {
                "inlier" => Label::Inlier,
                "outlier" => Label::Outlier,
                other => {
                    return Err(Error::ParseError {
                        line,
                        column: 3,
                        message: format!("unknown label '{other}'"),
                    })
                }
            });
        }
    }
    if points.is_empty() {
        return Err(Error::DimensionMismatch("no data rows (m = 0)".into()));
    }
    let problem = affine_problem(&points)?;
    let dataset = LabeledDataset {
        points,
        labels: labelled.then_some(labels),
        seed: None,
        noise_sigma2: 0.0,
        rng_algorithm: None,
    };
    Ok(LoadedProblem {
        problem,
        dataset: Some(dataset),
    })
}

fn parse_general(rows: &[(usize, Vec<String>)], n: usize) -> Result<LoadedProblem> {
    let mut entries = Vec::new();
    let mut rhs = Vec::new();
    for (line, fields) in rows {
        let line = *line;
        check_width(fields, n + 1, line)?;
        for (j, f) in fields[..n].iter().enumerate() {
            entries.push(parse_field(f, line, j + 1)?);
        }
        rhs.push(parse_field(&fields[n], line, n + 1)?);
    }
    if rhs.is_empty() {
        return Err(Error::DimensionMismatch("no data rows (m = 0)".into()));
    }
    let a = DenseMatrix::from_row_slice(rhs.len(), n, &entries);
    let problem = Problem::new(a, DenseVector::from_vec(rhs))?;
    Ok(LoadedProblem {
        problem,
        dataset: None,
    })
}

pub fn format_dataset_csv(d: &LabeledDataset) -> String {
    let mut out = String::new();
    match &d.labels {
        Some(labels) => {
            out.push_str("x,y,label\n");
            for ((x, y), l) in d.points.iter().zip(labels) {
                let _ = writeln!(out, "{},{},{}", fmt17(*x), fmt17(*y), l.as_str());
            }
        }
        None => {
            out.push_str("x,y\n");
            for (x, y) in &d.points {
                let _ = writeln!(out, "{},{}", fmt17(*x), fmt17(*y));
            }
        }
    }
    out
}

pub fn format_problem_csv(p: &Problem) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=p.n()).map(|j| format!("a_{j}")).collect();
    let _ = writeln!(out, "{},b", header.join(","));
    for i in 0..p.m() {
        let row: Vec<String> = (0..p.n()).map(|j| fmt17(p.a()[(i, j)])).collect();
        let _ = writeln!(out, "{},{}", row.join(","), fmt17(p.b()[i]));
    }
    out
}

pub fn format_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let Some(s0) = traj.samples.first() else {
        return out;
    };
    let (m, n) = (s0.state.w.len(), s0.state.x.len());
    let mut header: Vec<String> = TRAJECTORY_FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=m).map(|i| format!("w_{i}")));
    header.extend((1..=n).map(|j| format!("x_{j}")));
    let _ = writeln!(out, "{}", header.join(","));
    for s in &traj.samples {
        let st = &s.state;
        let fixed = [
            st.e,
            st.lambda,
            st.mu,
            s.entropy,
            s.eig_min_schur,
            s.sigma_min_weighted,
        ];
        let row: Vec<String> = fixed
            .iter()
            .chain(st.w.iter())
            .chain(st.x.iter())
            .map(|v| fmt17(*v))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Rebuilds a trajectory from its CSV export. Per-sample diagnostics are
/// recomputed from the states; step sizes and iteration counts are not stored.
pub fn parse_trajectory_csv(text: &str, p: &Problem) -> Result<Trajectory> {
    let (m, n) = (p.m(), p.n());
    let mut rows = records(text)?;
    let header = if rows.is_empty() {
        Vec::new()
    } else {
        rows.remove(0).1
    };
    let width = TRAJECTORY_FIXED_COLUMNS.len() + m + n;
    if header.len() != width || header[..6] != TRAJECTORY_FIXED_COLUMNS {
        return Err(Error::DimensionMismatch(format!(
            "trajectory header does not match a problem with m = {m}, n = {n}"
        )));
    }
    let mut samples = Vec::new();
    for (line, fields) in rows {
        check_width(&fields, width, line)?;
        let vals = fields
            .iter()
            .enumerate()
            .map(|(j, f)| parse_field(f, line, j + 1))
            .collect::<Result<Vec<f64>>>()?;
        let state = BranchState {
            e: vals[0],
            lambda: vals[1],
            mu: vals[2],
            w: DenseVector::from_column_slice(&vals[6..6 + m]),
            x: DenseVector::from_column_slice(&vals[6 + m..]),
        };
        samples.push(BranchSample::new(p, state, 0, 0.0));
    }
    if samples.is_empty() {
        return Err(Error::DimensionMismatch("trajectory has no samples".into()));
    }
    let (ols, _) = ols_initial(p)?;
    Ok(Trajectory {
        problem_fingerprint: p.fingerprint(),
        samples,
        ols,
    })
}

pub fn save_dataset_csv(d: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_dataset_csv(d))?)
}

pub fn save_problem_csv(p: &Problem, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_problem_csv(p))?)
}

pub fn save_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_trajectory_csv(traj))?)
}
