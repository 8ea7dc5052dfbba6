//! Synthetic benchmark data and samplers.
//!
//! The bivariate scenarios draw each unit from one of four groups with
//! equal probability; within a group the observation comes from a
//! two-part scale mixture around the group mean, a tight part (unit
//! variance, probability 0.2) and a wide part (variance 200,
//! probability 0.8). The three scenarios differ only in how far the
//! four group means sit apart, from well separated (A) through a
//! square layout (B) to heavily overlapping (C).

pub mod gibbs;
pub mod metrics;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::chain::Dataset;
use crate::chainfile::fmt_real;
use crate::error::{Error, Result};
use crate::seeds;

/// Number of groups in the bivariate scenarios.
pub const SCENARIO_GROUPS: usize = 4;

/// Mixing weights of the within-group scale mixture.
pub const SUBCOMPONENT_WEIGHTS: [f64; 2] = [0.2, 0.8];

/// Isotropic variances of the within-group scale mixture.
pub const SUBCOMPONENT_VARIANCES: [f64; 2] = [1.0, 200.0];

/// Benchmark scenario tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];

    /// Group means, one `(x, y)` pair per group.
    pub fn component_means(self) -> [[f64; 2]; SCENARIO_GROUPS] {
        match self {
            Scenario::A => [[25.0, 0.0], [60.0, 0.0], [0.0, 20.0], [50.0, 20.0]],
            Scenario::B => [[-10.0, -10.0], [20.0, -10.0], [-10.0, 20.0], [20.0, 20.0]],
            Scenario::C => [[-10.0, -10.0], [20.0, -10.0], [5.0, 5.0], [5.0, 25.0]],
        }
    }

    /// Group means flattened row-major (`G x 2`).
    pub fn means_flat(self) -> Vec<f64> {
        self.component_means().into_iter().flatten().collect()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario {other:?}, expected A, B or C"
            ))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A generated data set together with its ground truth.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub data: Dataset,
    /// True group of every unit, 1-based.
    pub labels: Vec<u32>,
    /// True group means, row-major `groups x d`.
    pub truth_means: Vec<f64>,
    pub groups: usize,
}

/// Draws `n` units from the given scenario.
pub fn generate_scenario(scenario: Scenario, n: usize, seed: u64) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let means = scenario.component_means();
    let sds: Vec<f64> = SUBCOMPONENT_VARIANCES.iter().map(|v| v.sqrt()).collect();
    let mut rng = seeds::rng(seed);
    let mut values = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.random_range(0..SCENARIO_GROUPS);
        let s = if rng.random::<f64>() < SUBCOMPONENT_WEIGHTS[0] {
            0
        } else {
            1
        };
        for j in 0..2 {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            values.push(means[g][j] + sds[s] * e);
        }
        labels.push(g as u32 + 1);
    }
    Ok(LabeledSample {
        data: Dataset::new(n, 2, values)?,
        labels,
        truth_means: scenario.means_flat(),
        groups: SCENARIO_GROUPS,
    })
}

/// Draws `n` scalar observations from a plain Gaussian mixture with the
/// given component means, standard deviations and weights.
pub fn generate_univariate_mixture(
    means: &[f64],
    sds: &[f64],
    weights: &[f64],
    n: usize,
    seed: u64,
) -> Result<LabeledSample> {
    let g = means.len();
    if g == 0 || sds.len() != g || weights.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "means, sds and weights must have equal positive length, got {}, {}, {}",
            means.len(),
            sds.len(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    if sds.iter().any(|&s| !(s > 0.0)) || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument(
            "standard deviations and weights must be positive".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    let mut rng = seeds::rng(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut comp = g - 1;
        for (k, &w) in weights.iter().enumerate() {
            cum += w;
            if u < cum {
                comp = k;
                break;
            }
        }
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        values.push(means[comp] + sds[comp] * e);
        labels.push(comp as u32 + 1);
    }
    Ok(LabeledSample {
        data: Dataset::new(n, 1, values)?,
        labels,
        truth_means: means.to_vec(),
        groups: g,
    })
}

/// Writes a sample as CSV with header `y1,...,yd,true_label`, reals in
/// lossless scientific notation.
pub fn write_sample_csv(sample: &LabeledSample, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let d = sample.data.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("y{j}")).collect();
    header.push("true_label".into());
    writeln!(w, "{}", header.join(","))?;
    for i in 0..sample.data.units() {
        let mut fields: Vec<String> = sample.data.row(i).iter().map(|&v| fmt_real(v)).collect();
        fields.push(sample.labels[i].to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a data CSV with header `y1,...,yd[,true_label]`; returns the
/// data and the labels when the column is present.
pub fn read_sample_csv(path: impl AsRef<Path>) -> Result<(Dataset, Option<Vec<u32>>)> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::InvalidArgument(format!(
                "{}: empty file, expected a header row",
                path.display()
            )))
        }
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let has_labels = cols.last() == Some(&"true_label");
    let d = if has_labels { cols.len() - 1 } else { cols.len() };
    if d == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: no data columns in header {header:?}",
            path.display()
        )));
    }
    for (j, &c) in cols.iter().take(d).enumerate() {
        let expected = format!("y{}", j + 1);
        if c != expected {
            return Err(Error::InvalidArgument(format!(
                "{}: header column {} is {c:?}, expected {expected:?}",
                path.display(),
                j + 1
            )));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        let expected_fields = if has_labels { d + 1 } else { d };
        if fields.len() != expected_fields {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: {} fields, expected {}",
                path.display(),
                idx + 2,
                fields.len(),
                expected_fields
            )));
        }
        for &f in fields.iter().take(d) {
            let v: f64 = f.parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "{}:{}: cannot parse {f:?} as a real",
                    path.display(),
                    idx + 2
                ))
            })?;
            values.push(v);
        }
        if has_labels {
            let l: u32 = fields[d].parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "{}:{}: cannot parse {:?} as a label",
                    path.display(),
                    idx + 2,
                    fields[d]
                ))
            })?;
            labels.push(l);
        }
    }
    let n = values.len() / d;
    let data = Dataset::new(n, d, values)?;
    Ok((data, has_labels.then_some(labels)))
}
