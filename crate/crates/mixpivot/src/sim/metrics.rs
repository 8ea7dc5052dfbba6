//! Summary metrics for relabelled chains.

use crate::assignment;
use crate::chain::MixtureChain;
use crate::error::{Error, Result};

/// Key used to order components when measuring switching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchKey {
    /// Order by one coordinate of the component means (0-based).
    MuDim(usize),
    /// Order by the component weights.
    Pi,
}

/// Per-component posterior mean estimates: the coordinatewise median of
/// the draws, row-major `G x d`.
pub fn estimate_component_means(chain: &MixtureChain) -> Vec<f64> {
    let mut out = vec![0.0; chain.g() * chain.d()];
    let mut buf = Vec::with_capacity(chain.h());
    for k in 0..chain.g() {
        for j in 0..chain.d() {
            buf.clear();
            buf.extend((0..chain.h()).map(|h| chain.mu_at(h, k)[j]));
            out[k * chain.d() + j] = median(&mut buf);
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Euclidean estimation error per true component.
///
/// `estimates` and `truth` are row-major `groups x dim`. Estimated
/// components are matched to true ones by the assignment minimising the
/// total squared error, so the result does not depend on how the
/// estimate happens to be labelled. Entry `g` of the result is the
/// distance from true component `g` to the estimate matched with it.
pub fn component_errors(
    estimates: &[f64],
    truth: &[f64],
    groups: usize,
    dim: usize,
) -> Result<Vec<f64>> {
    if groups == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "need at least one component and one dimension".into(),
        ));
    }
    if estimates.len() != groups * dim || truth.len() != groups * dim {
        return Err(Error::DimensionMismatch(format!(
            "estimates ({}) and truth ({}) must both have {} entries",
            estimates.len(),
            truth.len(),
            groups * dim
        )));
    }
    // cost[e][t] = squared distance from estimate e to true component t.
    let mut cost = vec![0.0; groups * groups];
    for e in 0..groups {
        for t in 0..groups {
            let d2: f64 = (0..dim)
                .map(|j| (estimates[e * dim + j] - truth[t * dim + j]).powi(2))
                .sum();
            cost[e * groups + t] = d2;
        }
    }
    let matched = assignment::min_cost_assignment(&cost, groups);
    let mut errors = vec![0.0; groups];
    for (e, &t) in matched.iter().enumerate() {
        errors[t] = cost[e * groups + t].sqrt();
    }
    Ok(errors)
}

/// Fraction of consecutive sweeps whose component ranking under `key`
/// differs, in `[0, 1]`. A chain whose labels never switch and whose
/// components stay well separated scores 0; a chain with free label
/// switching scores close to `1 - 1/G!` in expectation. Needs at least
/// two sweeps.
pub fn switch_rate(chain: &MixtureChain, key: SwitchKey) -> Result<f64> {
    if chain.h() < 2 {
        return Err(Error::InvalidArgument(
            "switch rate needs at least two sweeps".into(),
        ));
    }
    if let SwitchKey::MuDim(j) = key {
        if j >= chain.d() {
            return Err(Error::InvalidArgument(format!(
                "mean coordinate {} out of range for {}-dimensional components",
                j + 1,
                chain.d()
            )));
        }
    }
    let ranking = |h: usize| -> Vec<usize> {
        let mut order: Vec<usize> = (0..chain.g()).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = match key {
                SwitchKey::MuDim(j) => (chain.mu_at(h, a)[j], chain.mu_at(h, b)[j]),
                SwitchKey::Pi => (chain.pi_at(h, a), chain.pi_at(h, b)),
            };
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        order
    };
    let mut switches = 0usize;
    let mut prev = ranking(0);
    for h in 1..chain.h() {
        let cur = ranking(h);
        if cur != prev {
            switches += 1;
        }
        prev = cur;
    }
    Ok(switches as f64 / (chain.h() - 1) as f64)
}
