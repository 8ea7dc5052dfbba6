//! Alternative relabelling methods used for comparison.
//!
//! Three families are implemented:
//!
//! * a latent-class Bernoulli mixture fitted by EM to the stacked
//!   allocation indicator rows ([`pk_fit`] / [`pk_relabel`]), which
//!   groups the `H * G` per-iteration component indicator vectors into
//!   `G` classes and relabels each iteration by its components' class
//!   memberships;
//! * iterative minimisation of the Kullback-Leibler divergence between
//!   per-iteration classification probabilities and their running
//!   average ([`stephens_kl`] / [`apply_permutations`]), one permutation
//!   per iteration;
//! * a deterministic identifiability constraint that orders components
//!   by a parameter ([`relabel_by_ordering`]).

use rand::Rng;

use crate::assignment::{max_score_assignment, min_cost_assignment};
use crate::chain::{Dataset, MixtureChain};
use crate::error::{Error, Result};
use crate::seeds;

/// Stopping rule for the iterative fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative change of the objective below which the fit stops.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Lower clamp for Bernoulli parameters and probability logs.
const PROB_FLOOR: f64 = 1e-12;

/// Fitted latent-class model over allocation indicator rows.
#[derive(Debug, Clone)]
pub struct EmFit {
    units: usize,
    groups: usize,
    rows: usize,
    /// Bernoulli occupation parameters, `n x G` row-major.
    pub q: Vec<f64>,
    /// Class responsibilities per indicator row, `(H * G) x G`
    /// row-major; row `h * G + g` describes component `g + 1` of
    /// iteration `h + 1`.
    pub responsibilities: Vec<f64>,
    /// Log-likelihood after every EM sweep (uniform class weights,
    /// additive constants dropped).
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmFit {
    pub fn units(&self) -> usize {
        self.units
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Number of indicator rows, `H * G`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn loglik(&self) -> f64 {
        *self
            .loglik_trace
            .last()
            .expect("the fit runs at least one sweep")
    }

    pub fn q_at(&self, i: usize, g: usize) -> f64 {
        self.q[i * self.groups + g]
    }

    /// Responsibilities of the row for component `g` of iteration `h`
    /// (0-based).
    pub fn responsibility_row(&self, h: usize, g: usize) -> &[f64] {
        let r = h * self.groups + g;
        &self.responsibilities[r * self.groups..(r + 1) * self.groups]
    }
}

/// Fits a `G`-class Bernoulli mixture to the stacked indicator rows of
/// the chain's allocations: row `(h, g)` is the length-`n` binary vector
/// marking which units component `g` holds at iteration `h`. Class
/// weights are uniform; `seed` drives the random initialisation of the
/// occupation parameters. Non-convergence within `opts.max_iter` sweeps
/// is reported through [`EmFit::converged`], not as an error.
pub fn pk_fit(chain: &MixtureChain, opts: FitOptions, seed: u64) -> EmFit {
    let n = chain.n();
    let g = chain.g();
    let h = chain.h();
    let rows = h * g;

    // Unit membership lists per row avoid touching every (row, unit)
    // pair: a row's indicator vector is sparse in its support.
    let mut support: Vec<Vec<u32>> = vec![Vec::new(); rows];
    for hh in 0..h {
        for (i, &label) in chain.z_row(hh).iter().enumerate() {
            support[hh * g + (label as usize - 1)].push(i as u32);
        }
    }

    // Uniform draws normalised per unit row: asymmetric almost surely,
    // since the symmetric table is a fixed point of the EM updates.
    let mut rng = seeds::rng(seed);
    let mut q: Vec<f64> = (0..n * g).map(|_| rng.random_range(0.0..1.0)).collect();
    for i in 0..n {
        let total: f64 = q[i * g..(i + 1) * g].iter().sum();
        for c in 0..g {
            q[i * g + c] = (q[i * g + c] / total).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        }
    }
    let mut gamma = vec![0.0; rows * g];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0usize;

    let mut log_q = vec![0.0; n * g];
    let mut log_1mq = vec![0.0; n * g];
    let mut base = vec![0.0; g];
    while sweeps < opts.max_iter {
        sweeps += 1;
        // E step, in log space.
        for idx in 0..n * g {
            log_q[idx] = q[idx].ln();
            log_1mq[idx] = (1.0 - q[idx]).ln();
        }
        for c in 0..g {
            base[c] = (0..n).map(|i| log_1mq[i * g + c]).sum();
        }
        let mut loglik = 0.0;
        for (r, members) in support.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let row = &mut gamma[r * g..(r + 1) * g];
            for c in 0..g {
                let mut l = base[c];
                for &i in members {
                    let idx = i as usize * g + c;
                    l += log_q[idx] - log_1mq[idx];
                }
                row[c] = l;
                best = best.max(l);
            }
            let mut norm = 0.0;
            for v in row.iter_mut() {
                *v = (*v - best).exp();
                norm += *v;
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
            loglik += best + norm.ln();
        }
        trace.push(loglik);

        // M step: weighted occupation frequencies, clamped away from
        // the boundary to keep the next E step finite.
        let mut denom = vec![0.0; g];
        let mut numer = vec![0.0; n * g];
        for (r, members) in support.iter().enumerate() {
            let row = &gamma[r * g..(r + 1) * g];
            for c in 0..g {
                denom[c] += row[c];
            }
            for &i in members {
                let base_idx = i as usize * g;
                for c in 0..g {
                    numer[base_idx + c] += row[c];
                }
            }
        }
        for i in 0..n {
            for c in 0..g {
                let d = denom[c];
                let value = if d > 0.0 { numer[i * g + c] / d } else { 0.5 };
                q[i * g + c] = value.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            }
        }

        if sweeps >= 2 {
            let prev = trace[sweeps - 2];
            let curr = trace[sweeps - 1];
            if (curr - prev).abs() <= opts.tol * (1.0 + curr.abs()) {
                converged = true;
                break;
            }
        }
    }

    EmFit {
        units: n,
        groups: g,
        rows,
        q,
        responsibilities: gamma,
        loglik_trace: trace,
        iterations: sweeps,
        converged,
    }
}

/// Relabels each iteration by assigning its components to the fitted
/// latent classes: component `g` takes the class with the largest
/// responsibility, falling back to the assignment maximising the total
/// responsibility whenever the per-component argmaxes collide.
pub fn pk_relabel(chain: &MixtureChain, fit: &EmFit) -> Result<MixtureChain> {
    let g = chain.g();
    if fit.groups() != g || fit.units() != chain.n() || fit.rows() != chain.h() * g {
        return Err(Error::DimensionMismatch(format!(
            "fit covers {} rows over {} units and {} classes, chain needs {} over {} and {}",
            fit.rows(),
            fit.units(),
            fit.groups(),
            chain.h() * g,
            chain.n(),
            g
        )));
    }
    let mut perms = Vec::with_capacity(chain.h());
    let mut score = vec![0.0; g * g];
    for h in 0..chain.h() {
        for comp in 0..g {
            score[comp * g..(comp + 1) * g].copy_from_slice(fit.responsibility_row(h, comp));
        }
        let mut perm = vec![0u32; g];
        let mut taken = vec![false; g];
        let mut collided = false;
        for comp in 0..g {
            let row = &score[comp * g..(comp + 1) * g];
            let mut best = 0usize;
            for c in 1..g {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if taken[best] {
                collided = true;
                break;
            }
            taken[best] = true;
            perm[comp] = best as u32 + 1;
        }
        if collided {
            let assignment = max_score_assignment(&score, g);
            for comp in 0..g {
                perm[comp] = assignment[comp] as u32 + 1;
            }
        }
        perms.push(perm);
    }
    let mut out = chain.with_permuted_labels(&perms)?;
    let mut meta = out.meta().clone();
    meta.relabelled_by = Some("pk".into());
    out.set_meta(meta);
    Ok(out)
}

/// Model family for per-unit classification probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    /// Gaussian components on scalar data; dispersions are variances
    /// (`phi` width 1).
    UnivariateGaussian,
    /// Gaussian components on vector data; dispersions are row-major
    /// `d x d` covariance matrices (`phi` width `d * d`).
    MultivariateGaussian,
}

/// Per-iteration, per-unit component membership probabilities.
#[derive(Debug, Clone)]
pub struct ClassProbs {
    iterations: usize,
    units: usize,
    groups: usize,
    p: Vec<f64>,
}

impl ClassProbs {
    /// Wraps row-major `H x n x G` probabilities; every `(h, i)` row
    /// must already be normalised.
    pub fn from_values(iterations: usize, units: usize, groups: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != iterations * units * groups {
            return Err(Error::DimensionMismatch(format!(
                "classification probabilities expect {} values, got {}",
                iterations * units * groups,
                p.len()
            )));
        }
        Ok(ClassProbs {
            iterations,
            units,
            groups,
            p,
        })
    }

    pub fn h(&self) -> usize {
        self.iterations
    }

    pub fn n(&self) -> usize {
        self.units
    }

    pub fn g(&self) -> usize {
        self.groups
    }

    pub fn at(&self, h: usize, i: usize, g: usize) -> f64 {
        self.p[(h * self.units + i) * self.groups + g]
    }

    pub fn row(&self, h: usize, i: usize) -> &[f64] {
        let base = (h * self.units + i) * self.groups;
        &self.p[base..base + self.groups]
    }
}

/// Computes `p[h][i][g]`, the posterior probability that unit `i`
/// belongs to component `g` under the parameters drawn at iteration
/// `h`, normalised over components. Requires the chain to carry the
/// dispersion block the family expects.
pub fn classification_probs(
    data: &Dataset,
    chain: &MixtureChain,
    family: ModelFamily,
) -> Result<ClassProbs> {
    if data.units() != chain.n() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} units, chain allocates {}",
            data.units(),
            chain.n()
        )));
    }
    if data.dim() != chain.d() {
        return Err(Error::DimensionMismatch(format!(
            "data dimension {} does not match chain dimension {}",
            data.dim(),
            chain.d()
        )));
    }
    let d = chain.d();
    match family {
        ModelFamily::UnivariateGaussian => {
            if d != 1 {
                return Err(Error::InvalidArgument(format!(
                    "univariate family needs 1-dimensional data, got {d}"
                )));
            }
            if chain.phi_width() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "univariate family needs one variance per component, phi width is {}",
                    chain.phi_width()
                )));
            }
        }
        ModelFamily::MultivariateGaussian => {
            if chain.phi_width() != d * d {
                return Err(Error::InvalidArgument(format!(
                    "multivariate family needs {} covariance reals per component, phi width is {}",
                    d * d,
                    chain.phi_width()
                )));
            }
        }
    }

    let n = chain.n();
    let g = chain.g();
    let mut p = vec![0.0; chain.h() * n * g];
    let mut logs = vec![0.0; g];
    for h in 0..chain.h() {
        // Per-component terms reused across units.
        let mut log_pi = vec![0.0; g];
        let mut chol: Vec<Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>> = Vec::new();
        let mut log_det = vec![0.0; g];
        for comp in 0..g {
            log_pi[comp] = chain.pi_at(h, comp).ln();
            match family {
                ModelFamily::UnivariateGaussian => {
                    let var = chain.phi_at(h, comp)[0];
                    if var <= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "iteration {}, component {}: variance {var} is not positive",
                            h + 1,
                            comp + 1
                        )));
                    }
                    log_det[comp] = var.ln();
                }
                ModelFamily::MultivariateGaussian => {
                    let cov = nalgebra::DMatrix::from_row_slice(d, d, chain.phi_at(h, comp));
                    let ch = nalgebra::Cholesky::new(cov).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "iteration {}, component {}: covariance is not positive definite",
                            h + 1,
                            comp + 1
                        ))
                    })?;
                    log_det[comp] = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    if chol.len() <= comp {
                        chol.resize_with(comp + 1, || None);
                    }
                    chol[comp] = Some(ch);
                }
            }
        }
        for i in 0..n {
            let y = data.row(i);
            let mut best = f64::NEG_INFINITY;
            for comp in 0..g {
                let quad = match family {
                    ModelFamily::UnivariateGaussian => {
                        let r = y[0] - chain.mu_at(h, comp)[0];
                        r * r / chain.phi_at(h, comp)[0]
                    }
                    ModelFamily::MultivariateGaussian => {
                        let mu = chain.mu_at(h, comp);
                        let diff =
                            nalgebra::DVector::from_iterator(d, (0..d).map(|j| y[j] - mu[j]));
                        let ch = chol[comp].as_ref().expect("factorised above");
                        let sol = ch.l().solve_lower_triangular(&diff).expect("full rank");
                        sol.norm_squared()
                    }
                };
                let l = log_pi[comp] - 0.5 * log_det[comp] - 0.5 * quad;
                logs[comp] = l;
                best = best.max(l);
            }
            let base = (h * n + i) * g;
            let mut norm = 0.0;
            for comp in 0..g {
                let v = (logs[comp] - best).exp();
                p[base + comp] = v;
                norm += v;
            }
            for comp in 0..g {
                p[base + comp] /= norm;
            }
        }
    }
    ClassProbs::from_values(chain.h(), n, g, p)
}

/// One permutation per iteration; `perms[h][g]` is the raw component
/// (1-based) occupying slot `g + 1` after relabelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSequence {
    pub perms: Vec<Vec<u32>>,
}

/// Result of the KL permutation search.
#[derive(Debug, Clone)]
pub struct StephensResult {
    pub perms: PermutationSequence,
    /// Average permuted classification probabilities, `n x G` row-major.
    pub q: Vec<f64>,
    /// Total KL loss after every sweep.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates between averaging the permuted classification
/// probabilities and re-assigning each iteration the loss-minimising
/// permutation, until the permutations stop changing. The per-sweep
/// loss is non-increasing; ties in the per-iteration assignment go to
/// the lexicographically first permutation.
pub fn stephens_kl(probs: &ClassProbs, opts: FitOptions) -> StephensResult {
    let h = probs.h();
    let n = probs.n();
    let g = probs.g();
    let mut perms: Vec<Vec<usize>> = vec![(0..g).collect(); h];
    let mut q = vec![0.0; n * g];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0usize;
    let mut cost = vec![0.0; g * g];

    while sweeps < opts.max_iter {
        sweeps += 1;
        // Average the probabilities under the current permutations.
        q.iter_mut().for_each(|v| *v = 0.0);
        for hh in 0..h {
            let perm = &perms[hh];
            for i in 0..n {
                let row = probs.row(hh, i);
                for slot in 0..g {
                    q[i * g + slot] += row[perm[slot]];
                }
            }
        }
        let scale = 1.0 / h as f64;
        q.iter_mut().for_each(|v| *v *= scale);

        // Re-assign each iteration's permutation against the average.
        let log_q: Vec<f64> = q.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
        let mut total = 0.0;
        let mut changed = false;
        for hh in 0..h {
            for slot in 0..g {
                for raw in 0..g {
                    let mut c = 0.0;
                    for i in 0..n {
                        let p = probs.at(hh, i, raw);
                        if p > 0.0 {
                            c += p * (p.max(PROB_FLOOR).ln() - log_q[i * g + slot]);
                        }
                    }
                    cost[slot * g + raw] = c;
                }
            }
            let assignment = min_cost_assignment(&cost, g);
            for slot in 0..g {
                total += cost[slot * g + assignment[slot]];
            }
            if assignment != perms[hh] {
                changed = true;
                perms[hh] = assignment;
            }
        }
        trace.push(total);
        if !changed {
            converged = true;
            break;
        }
        if sweeps >= 2 {
            let prev = trace[sweeps - 2];
            let curr = trace[sweeps - 1];
            if (prev - curr).abs() <= opts.tol * (1.0 + curr.abs()) {
                converged = true;
                break;
            }
        }
    }

    StephensResult {
        perms: PermutationSequence {
            perms: perms
                .into_iter()
                .map(|p| p.into_iter().map(|v| v as u32 + 1).collect())
                .collect(),
        },
        q,
        loss_trace: trace,
        iterations: sweeps,
        converged,
    }
}

/// Applies a slot-to-raw permutation sequence to a chain: after the
/// call, slot `g` of iteration `h` holds what raw component
/// `perms[h][g - 1]` held before.
pub fn apply_permutations(
    chain: &MixtureChain,
    perms: &PermutationSequence,
    method: &str,
) -> Result<MixtureChain> {
    let g = chain.g();
    let mut raw_to_slot = Vec::with_capacity(perms.perms.len());
    for (h, perm) in perms.perms.iter().enumerate() {
        if perm.len() != g {
            return Err(Error::InvalidArgument(format!(
                "permutation for iteration {} has length {}, expected {}",
                h + 1,
                perm.len(),
                g
            )));
        }
        let mut inverse = vec![0u32; g];
        for (slot, &raw) in perm.iter().enumerate() {
            if raw < 1 || raw as usize > g || inverse[raw as usize - 1] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "permutation for iteration {} is not a bijection of 1..={}",
                    h + 1,
                    g
                )));
            }
            inverse[raw as usize - 1] = slot as u32 + 1;
        }
        raw_to_slot.push(inverse);
    }
    let mut out = chain.with_permuted_labels(&raw_to_slot)?;
    let mut meta = out.meta().clone();
    meta.relabelled_by = Some(method.to_string());
    out.set_meta(meta);
    Ok(out)
}

/// Sort key for the ordering-constraint relabelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKey {
    /// Ascending component mean along the given 0-based dimension.
    MuDim(usize),
    /// Ascending mixture weight.
    Pi,
}

impl std::fmt::Display for OrderKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderKey::MuDim(d) => write!(f, "mu{}", d + 1),
            OrderKey::Pi => write!(f, "pi"),
        }
    }
}

/// Relabels every iteration so the components are sorted ascending by
/// the key; exact ties keep the raw component order.
pub fn relabel_by_ordering(chain: &MixtureChain, key: OrderKey) -> Result<MixtureChain> {
    if let OrderKey::MuDim(dim) = key {
        if dim >= chain.d() {
            return Err(Error::InvalidArgument(format!(
                "ordering dimension {} outside the chain's 1..={}",
                dim + 1,
                chain.d()
            )));
        }
    }
    let g = chain.g();
    let mut perms = Vec::with_capacity(chain.h());
    for h in 0..chain.h() {
        let mut order: Vec<usize> = (0..g).collect();
        let key_of = |comp: usize| match key {
            OrderKey::MuDim(dim) => chain.mu_at(h, comp)[dim],
            OrderKey::Pi => chain.pi_at(h, comp),
        };
        order.sort_by(|&a, &b| key_of(a).partial_cmp(&key_of(b)).unwrap().then(a.cmp(&b)));
        let mut perm = vec![0u32; g];
        for (rank, &comp) in order.iter().enumerate() {
            perm[comp] = rank as u32 + 1;
        }
        perms.push(perm);
    }
    let mut out = chain.with_permuted_labels(&perms)?;
    let mut meta = out.meta().clone();
    meta.relabelled_by = Some(format!("ordering:{key}"));
    out.set_meta(meta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::MixtureChain;

    /// Two iterations of the same two-component state with the labels
    /// swapped in the second one.
    fn mirrored_chain() -> MixtureChain {
        let mut b = MixtureChain::builder(2, 4, 1).phi_width(1);
        b.push_iteration(
            &[1, 1, 2, 2],
            &[0.0, 10.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        b.push_iteration(
            &[2, 2, 1, 1],
            &[10.0, 0.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        b.finish().unwrap()
    }

    #[test]
    fn em_loglik_is_monotone_and_aligns_the_mirror() {
        let chain = mirrored_chain();
        let fit = pk_fit(&chain, FitOptions::default(), 11);
        for w in fit.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()),
                "log-likelihood decreased: {:?}",
                fit.loglik_trace
            );
        }
        assert!(fit.converged);
        let out = pk_relabel(&chain, &fit).unwrap();
        assert_eq!(out.z_row(0), out.z_row(1));
        assert_eq!(out.mu_row(0), out.mu_row(1));
        assert_eq!(out.meta().relabelled_by.as_deref(), Some("pk"));
    }

    #[test]
    fn em_responsibilities_are_normalised() {
        let chain = mirrored_chain();
        let fit = pk_fit(&chain, FitOptions::default(), 3);
        for h in 0..chain.h() {
            for g in 0..chain.g() {
                let row = fit.responsibility_row(h, g);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row sums to {sum}");
            }
        }
    }

    #[test]
    fn classification_probs_univariate_extremes() {
        let data = Dataset::from_rows(vec![vec![0.0], vec![10.0]]).unwrap();
        let mut b = MixtureChain::builder(2, 2, 1).phi_width(1);
        b.push_iteration(&[1, 2], &[0.0, 10.0], &[0.5, 0.5], Some(&[1.0, 1.0]))
            .unwrap();
        let chain = b.finish().unwrap();
        let p = classification_probs(&data, &chain, ModelFamily::UnivariateGaussian).unwrap();
        // Unit 1 at the first component's mean, 10 sigma from the other:
        // odds are exp(-50).
        let expected = (-50.0f64).exp() / (1.0 + (-50.0f64).exp());
        assert!((p.at(0, 0, 1) - expected).abs() < 1e-30);
        assert!((p.at(0, 0, 0) + p.at(0, 0, 1) - 1.0).abs() < 1e-15);
        assert!((p.at(0, 1, 0) - expected).abs() < 1e-30);
    }

    #[test]
    fn classification_probs_multivariate_matches_univariate() {
        // A 2-d problem that separates along the first axis only, with
        // identity covariances, must reproduce the univariate numbers.
        let data = Dataset::from_rows(vec![vec![0.0, 5.0], vec![10.0, 5.0]]).unwrap();
        let mut b = MixtureChain::builder(2, 2, 2).phi_width(4);
        b.push_iteration(
            &[1, 2],
            &[0.0, 5.0, 10.0, 5.0],
            &[0.5, 0.5],
            Some(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let chain = b.finish().unwrap();
        let p = classification_probs(&data, &chain, ModelFamily::MultivariateGaussian).unwrap();
        let expected = (-50.0f64).exp() / (1.0 + (-50.0f64).exp());
        assert!((p.at(0, 0, 1) - expected).abs() < 1e-30);
    }

    #[test]
    fn classification_probs_validates_shapes() {
        let data = Dataset::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let mut b = MixtureChain::builder(2, 2, 1);
        b.push_iteration(&[1, 2], &[0.0, 1.0], &[0.5, 0.5], None)
            .unwrap();
        let chain = b.finish().unwrap();
        // No dispersion block.
        assert!(classification_probs(&data, &chain, ModelFamily::UnivariateGaussian).is_err());
        let other = Dataset::from_rows(vec![vec![0.0]]).unwrap();
        assert!(classification_probs(&other, &chain, ModelFamily::UnivariateGaussian).is_err());
    }

    #[test]
    fn stephens_aligns_the_mirror_and_loss_never_increases() {
        let data = Dataset::from_rows(vec![vec![-0.1], vec![0.3], vec![9.8], vec![10.2]]).unwrap();
        // Two draws in one labelling, one in the mirrored labelling; the
        // majority breaks the tie and the minority must be swapped back.
        let mut b = MixtureChain::builder(2, 4, 1).phi_width(1);
        b.push_iteration(&[1, 1, 2, 2], &[0.0, 10.0], &[0.5, 0.5], Some(&[1.0, 1.0]))
            .unwrap();
        b.push_iteration(&[2, 2, 1, 1], &[10.0, 0.0], &[0.5, 0.5], Some(&[1.0, 1.0]))
            .unwrap();
        b.push_iteration(&[1, 1, 2, 2], &[0.0, 10.0], &[0.5, 0.5], Some(&[1.0, 1.0]))
            .unwrap();
        let chain = b.finish().unwrap();
        let probs = classification_probs(&data, &chain, ModelFamily::UnivariateGaussian).unwrap();
        let result = stephens_kl(&probs, FitOptions::default());
        assert!(result.converged);
        for w in result.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
        }
        assert_eq!(result.perms.perms[0], result.perms.perms[2]);
        assert_ne!(result.perms.perms[0], result.perms.perms[1]);
        let out = apply_permutations(&chain, &result.perms, "stephens").unwrap();
        assert_eq!(out.z_row(0), out.z_row(1));
        assert_eq!(out.mu_row(0), out.mu_row(1));
        assert_eq!(out.meta().relabelled_by.as_deref(), Some("stephens"));
    }

    #[test]
    fn apply_permutations_validates_bijections() {
        let chain = mirrored_chain();
        let bad = PermutationSequence {
            perms: vec![vec![1, 1], vec![1, 2]],
        };
        assert!(apply_permutations(&chain, &bad, "x").is_err());
        let short = PermutationSequence {
            perms: vec![vec![1, 2]],
        };
        assert!(apply_permutations(&chain, &short, "x").is_err());
    }

    #[test]
    fn ordering_sorts_components_per_iteration() {
        let chain = mirrored_chain();
        let out = relabel_by_ordering(&chain, OrderKey::MuDim(0)).unwrap();
        for h in 0..out.h() {
            assert_eq!(out.mu_row(h), &[0.0, 10.0]);
        }
        assert_eq!(out.z_row(0), &[1, 1, 2, 2]);
        assert_eq!(out.z_row(1), &[1, 1, 2, 2]);
        assert_eq!(out.meta().relabelled_by.as_deref(), Some("ordering:mu1"));
        assert!(relabel_by_ordering(&chain, OrderKey::MuDim(1)).is_err());
    }

    #[test]
    fn ordering_by_weight_breaks_ties_stably() {
        let mut b = MixtureChain::builder(3, 3, 1);
        b.push_iteration(&[1, 2, 3], &[5.0, 1.0, 3.0], &[0.25, 0.5, 0.25], None)
            .unwrap();
        let chain = b.finish().unwrap();
        let out = relabel_by_ordering(&chain, OrderKey::Pi).unwrap();
        // Weights 0.25 (raw 1) and 0.25 (raw 3) tie: raw order kept.
        assert_eq!(out.pi_row(0), &[0.25, 0.25, 0.5]);
        assert_eq!(out.mu_row(0), &[5.0, 3.0, 1.0]);
        assert_eq!(out.z_row(0), &[1, 3, 2]);
    }
}
