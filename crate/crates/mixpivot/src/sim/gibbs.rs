//! Conjugate Gibbs samplers for finite Gaussian mixtures.
//!
//! Both samplers cycle weights, component parameters and allocations
//! under standard conjugate priors: Normal-Inverse-Gamma per component
//! in the univariate model, Normal-Inverse-Wishart in the multivariate
//! one, and a symmetric Dirichlet on the weights. An optional move
//! applies a uniformly random permutation to the component labels at
//! the end of every sweep; the posterior is invariant under it, and it
//! guarantees the raw output actually exhibits label switching instead
//! of leaving it to chance.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::chain::{ChainBuilder, ChainMeta, Dataset, MixtureChain};
use crate::error::{Error, Result};
use crate::seeds;

/// Prior for the samplers. The dispersion entries are read according
/// to the model family: for the univariate sampler `disp_shape` and
/// `disp_scale[0]` are the Inverse-Gamma shape and scale of the
/// component variance; for the multivariate sampler `disp_shape` is
/// the Inverse-Wishart degrees of freedom and `disp_scale` its
/// row-major `d x d` scale matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Prior component mean location (length `d`).
    pub mean_loc: Vec<f64>,
    /// Prior precision multiplier on the mean (often written kappa).
    pub mean_scale: f64,
    pub disp_shape: f64,
    pub disp_scale: Vec<f64>,
    /// Symmetric Dirichlet concentration on the weights.
    pub weight_conc: f64,
}

impl PriorSpec {
    /// Weakly informative default for scalar data: the mean sits at the
    /// sample mean with small precision, and the variance prior is
    /// centred on the per-component share of the sample variance,
    /// `var / G^2` (splitting a scalar spread into `G` blocks divides
    /// the within-block variance by about `G^2`).
    pub fn default_univariate(data: &Dataset, components: usize) -> Result<PriorSpec> {
        if data.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "univariate prior needs 1-dimensional data, got {} dimensions",
                data.dim()
            )));
        }
        if components == 0 {
            return Err(Error::InvalidArgument(
                "prior needs at least one component".into(),
            ));
        }
        let var = data.col_vars()[0].max(1.0) / (components * components) as f64;
        Ok(PriorSpec {
            mean_loc: data.col_means(),
            mean_scale: 0.01,
            disp_shape: 2.0,
            disp_scale: vec![var],
            weight_conc: 1.0,
        })
    }

    /// Default for vector data: Inverse-Wishart with an isotropic scale
    /// centred on a within-component variance estimate: the smaller of
    /// the volume-share heuristic `mean(var) / G^(2/d)` and the pooled
    /// within-cell variance of a k-means split of the data into
    /// `components` cells (fixed internal seed, so the prior is a pure
    /// function of its inputs). Both are upper estimates of the
    /// within-component spread, each with a failure regime, so the
    /// tighter one anchors the prior. The degrees of freedom carry
    /// three tenths of the sample size (at most 150, at least two)
    /// beyond `d`: deliberately more than token, because with a
    /// near-flat dispersion prior the sampler can buy likelihood by
    /// reshaping components (merging close blocks, splitting
    /// heavy-tailed ones), and those competing modes derail the
    /// allocation structure the relabelling step depends on.
    pub fn default_multivariate(data: &Dataset, components: usize) -> Result<PriorSpec> {
        let d = data.dim();
        if components == 0 {
            return Err(Error::InvalidArgument(
                "prior needs at least one component".into(),
            ));
        }
        let df = d as f64 + (data.units() as f64 * 0.3).clamp(2.0, 150.0);
        let vars = data.col_vars();
        let mean_var = (vars.iter().sum::<f64>() / d as f64).max(1.0);
        let volume_share = mean_var / (components as f64).powf(2.0 / d as f64);
        let mut rng = seeds::rng(0x5ca1e);
        let cells = kmeans_allocation(&mut rng, data, components);
        let block_var = pooled_within_variance(data, &cells, components)
            .min(volume_share)
            .max(mean_var * 1e-6);
        let mut scale = vec![0.0; d * d];
        for j in 0..d {
            scale[j * d + j] = block_var * (df - d as f64 - 1.0);
        }
        Ok(PriorSpec {
            mean_loc: data.col_means(),
            mean_scale: 0.01,
            disp_shape: df,
            disp_scale: scale,
            weight_conc: 1.0,
        })
    }

    fn validate(&self, d: usize, multivariate: bool) -> Result<()> {
        if self.mean_loc.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "prior mean has {} entries, data has {} dimensions",
                self.mean_loc.len(),
                d
            )));
        }
        if !(self.mean_scale > 0.0) || !self.mean_scale.is_finite() {
            return Err(Error::InvalidArgument(
                "prior mean scale must be positive and finite".into(),
            ));
        }
        if !(self.weight_conc > 0.0) || !self.weight_conc.is_finite() {
            return Err(Error::InvalidArgument(
                "weight concentration must be positive and finite".into(),
            ));
        }
        if multivariate {
            if self.disp_scale.len() != d * d {
                return Err(Error::DimensionMismatch(format!(
                    "dispersion scale has {} entries, expected {} for a {d} x {d} matrix",
                    self.disp_scale.len(),
                    d * d
                )));
            }
            if !(self.disp_shape > (d - 1) as f64) {
                return Err(Error::InvalidArgument(format!(
                    "dispersion degrees of freedom must exceed {} for {d}-dimensional data",
                    d - 1
                )));
            }
            let m = DMatrix::from_row_slice(d, d, &self.disp_scale);
            if Cholesky::new(m).is_none() {
                return Err(Error::InvalidArgument(
                    "dispersion scale matrix is not positive definite".into(),
                ));
            }
        } else {
            if self.disp_scale.len() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "dispersion scale has {} entries, expected 1 for scalar data",
                    self.disp_scale.len()
                )));
            }
            if !(self.disp_shape > 0.0) || !(self.disp_scale[0] > 0.0) {
                return Err(Error::InvalidArgument(
                    "dispersion shape and scale must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Run length and options for one sampler call.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub components: usize,
    /// Total sweeps, burn-in included; must exceed `burnin`.
    pub iterations: usize,
    /// Leading sweeps dropped from the returned chain.
    pub burnin: usize,
    /// Apply a uniformly random label permutation each sweep.
    pub permute_move: bool,
    /// Prior; data-driven defaults when `None`.
    pub prior: Option<PriorSpec>,
    /// Starting allocation (length n, labels in `1..=components`);
    /// a short k-means pass when `None`.
    pub init: Option<Vec<u32>>,
}

impl GibbsConfig {
    pub fn new(components: usize, iterations: usize, burnin: usize) -> GibbsConfig {
        GibbsConfig {
            components,
            iterations,
            burnin,
            permute_move: true,
            prior: None,
            init: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidArgument(
                "sampler needs at least one component".into(),
            ));
        }
        if self.iterations <= self.burnin {
            return Err(Error::InvalidArgument(format!(
                "iteration count {} must exceed burn-in {}",
                self.iterations, self.burnin
            )));
        }
        Ok(())
    }
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut cum = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return k;
        }
    }
    probs.len() - 1
}

fn draw_weights(rng: &mut ChaCha8Rng, counts: &[usize], conc: f64) -> Vec<f64> {
    let mut w: Vec<f64> = counts
        .iter()
        .map(|&c| {
            let g = Gamma::new(conc + c as f64, 1.0).expect("valid gamma shape");
            g.sample(rng)
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn random_permutation(rng: &mut ChaCha8Rng, g: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..g).collect();
    for i in (1..g).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Mean over axes of the within-cell variance under a hard allocation,
/// weighted by cell size.
fn pooled_within_variance(data: &Dataset, cells: &[u32], g: usize) -> f64 {
    let n = data.units();
    let d = data.dim();
    let mut sums = vec![0.0; g * d];
    let mut counts = vec![0usize; g];
    for i in 0..n {
        let k = cells[i] as usize - 1;
        counts[k] += 1;
        for (j, v) in data.row(i).iter().enumerate() {
            sums[k * d + j] += v;
        }
    }
    let mut ss = 0.0;
    for i in 0..n {
        let k = cells[i] as usize - 1;
        for (j, v) in data.row(i).iter().enumerate() {
            let c = sums[k * d + j] / counts[k] as f64;
            ss += (v - c) * (v - c);
        }
    }
    ss / (n * d) as f64
}

/// Resolves the starting allocation: the caller-supplied labels when
/// present, otherwise a k-means pass.
fn initial_allocation(
    rng: &mut ChaCha8Rng,
    data: &Dataset,
    g: usize,
    init: Option<&[u32]>,
) -> Result<Vec<u32>> {
    match init {
        Some(z0) => {
            if z0.len() != data.units() {
                return Err(Error::InvalidArgument(format!(
                    "initial allocation has {} entries for {} units",
                    z0.len(),
                    data.units()
                )));
            }
            if z0.iter().any(|&l| l == 0 || l as usize > g) {
                return Err(Error::InvalidArgument(format!(
                    "initial allocation labels must lie in 1..={g}"
                )));
            }
            Ok(z0.to_vec())
        }
        None => Ok(kmeans_allocation(rng, data, g)),
    }
}

/// Initial hard allocation from a short k-means pass: Lloyd iterations
/// from several random-unit seedings, keeping the run with the lowest
/// within-cluster sum of squares. Starting the chain from a data-driven
/// partition drops it straight into the dominant allocation basin; from
/// a uniformly random start the sampler can spend hundreds of sweeps in
/// configurations where two clusters share a component, which wrecks
/// the co-clustering estimates the relabelling relies on. Restarts keep
/// one unlucky seeding (centers stranded on the tails of a
/// wide-dispersion group) from baking a merged pair of groups into the
/// start.
fn kmeans_allocation(rng: &mut ChaCha8Rng, data: &Dataset, g: usize) -> Vec<u32> {
    let n = data.units();
    let d = data.dim();
    if g == 1 || n <= g {
        return (0..n).map(|i| (i % g) as u32 + 1).collect();
    }
    let dist2 =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut best: Option<(f64, Vec<u32>)> = None;
    for _ in 0..10 {
        let mut picked: Vec<usize> = Vec::with_capacity(g);
        while picked.len() < g {
            let i = rng.random_range(0..n);
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        let mut centers: Vec<Vec<f64>> = picked.iter().map(|&i| data.row(i).to_vec()).collect();
        let mut assign = vec![0u32; n];
        for _ in 0..25 {
            let mut changed = false;
            for i in 0..n {
                let mut nearest = (0usize, f64::INFINITY);
                for (k, c) in centers.iter().enumerate() {
                    let dd = dist2(c, data.row(i));
                    if dd < nearest.1 {
                        nearest = (k, dd);
                    }
                }
                let label = nearest.0 as u32 + 1;
                if assign[i] != label {
                    assign[i] = label;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = vec![0.0; g * d];
            let mut counts = vec![0usize; g];
            for i in 0..n {
                let k = assign[i] as usize - 1;
                counts[k] += 1;
                for (j, v) in data.row(i).iter().enumerate() {
                    sums[k * d + j] += v;
                }
            }
            for k in 0..g {
                // A center whose cell empties keeps its previous position.
                if counts[k] > 0 {
                    for j in 0..d {
                        centers[k][j] = sums[k * d + j] / counts[k] as f64;
                    }
                }
            }
        }
        let wcss: f64 = (0..n)
            .map(|i| dist2(&centers[assign[i] as usize - 1], data.row(i)))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| wcss < *b) {
            best = Some((wcss, assign));
        }
    }
    best.unwrap().1
}

/// Applies `perm` (old index -> new index) in place to the per-sweep state.
fn permute_state(
    perm: &[usize],
    z: &mut [u32],
    mu: &mut Vec<f64>,
    pi: &mut Vec<f64>,
    phi: &mut Vec<f64>,
    d: usize,
    phi_width: usize,
) {
    let g = perm.len();
    for label in z.iter_mut() {
        *label = perm[(*label - 1) as usize] as u32 + 1;
    }
    let old_mu = mu.clone();
    let old_pi = pi.clone();
    let old_phi = phi.clone();
    for old in 0..g {
        let new = perm[old];
        mu[new * d..(new + 1) * d].copy_from_slice(&old_mu[old * d..(old + 1) * d]);
        pi[new] = old_pi[old];
        phi[new * phi_width..(new + 1) * phi_width]
            .copy_from_slice(&old_phi[old * phi_width..(old + 1) * phi_width]);
    }
}

/// Gibbs sampler for a univariate Gaussian mixture with
/// Normal-Inverse-Gamma component priors. The returned chain stores
/// component variances as its dispersion block (`phi_width == 1`).
pub fn gibbs_univariate(data: &Dataset, cfg: &GibbsConfig, seed: u64) -> Result<MixtureChain> {
    cfg.validate()?;
    if data.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "univariate sampler needs 1-dimensional data, got {} dimensions",
            data.dim()
        )));
    }
    let prior = match &cfg.prior {
        Some(p) => p.clone(),
        None => PriorSpec::default_univariate(data, cfg.components)?,
    };
    prior.validate(1, false)?;
    let n = data.units();
    let g = cfg.components;
    let m0 = prior.mean_loc[0];
    let kappa0 = prior.mean_scale;
    let a0 = prior.disp_shape;
    let b0 = prior.disp_scale[0];

    let mut rng = seeds::rng(seed);
    let mut z = initial_allocation(&mut rng, data, g, cfg.init.as_deref())?;
    let mut mu = vec![0.0; g];
    let mut var = vec![1.0; g];
    let mut pi = vec![1.0 / g as f64; g];

    let mut builder = ChainBuilder::new(g, n, 1).phi_width(1).meta(ChainMeta {
        seed: Some(seed),
        sampler: Some("gibbs-univariate".into()),
        scenario: None,
        burnin: Some(cfg.burnin),
        relabelled_by: None,
    });
    let mut probs = vec![0.0; g];

    for sweep in 0..cfg.iterations {
        // Component sufficient statistics.
        let mut counts = vec![0usize; g];
        let mut sums = vec![0.0; g];
        for i in 0..n {
            let k = (z[i] - 1) as usize;
            counts[k] += 1;
            sums[k] += data.value(i, 0);
        }
        let mut ss = vec![0.0; g];
        for i in 0..n {
            let k = (z[i] - 1) as usize;
            let r = data.value(i, 0) - sums[k] / counts[k] as f64;
            ss[k] += r * r;
        }

        pi = draw_weights(&mut rng, &counts, prior.weight_conc);

        for k in 0..g {
            let nk = counts[k] as f64;
            let ybar = if counts[k] > 0 { sums[k] / nk } else { 0.0 };
            let kappa_n = kappa0 + nk;
            let m_n = (kappa0 * m0 + nk * ybar) / kappa_n;
            let a_n = a0 + nk / 2.0;
            let b_n = b0 + 0.5 * ss[k] + 0.5 * kappa0 * nk * (ybar - m0).powi(2) / kappa_n;
            let gamma = Gamma::new(a_n, 1.0 / b_n).expect("valid gamma parameters");
            var[k] = 1.0 / gamma.sample(&mut rng);
            let e: f64 = rng.sample(StandardNormal);
            mu[k] = m_n + e * (var[k] / kappa_n).sqrt();
        }

        for i in 0..n {
            let y = data.value(i, 0);
            let mut best = f64::NEG_INFINITY;
            for k in 0..g {
                let lp = pi[k].ln() - 0.5 * var[k].ln() - 0.5 * (y - mu[k]).powi(2) / var[k];
                probs[k] = lp;
                best = best.max(lp);
            }
            for p in &mut probs {
                *p = (*p - best).exp();
            }
            z[i] = categorical(&mut rng, &probs) as u32 + 1;
        }

        if cfg.permute_move {
            let perm = random_permutation(&mut rng, g);
            permute_state(&perm, &mut z, &mut mu, &mut pi, &mut var, 1, 1);
        }

        if sweep >= cfg.burnin {
            builder.push_iteration(&z, &mu, &pi, Some(&var))?;
        }
    }

    builder.finish()
}

struct NiwPosterior {
    mean: DVector<f64>,
    kappa: f64,
    dof: f64,
    scale: DMatrix<f64>,
}

fn niw_update(
    prior_mean: &DVector<f64>,
    kappa0: f64,
    nu0: f64,
    psi0: &DMatrix<f64>,
    rows: &[&[f64]],
) -> NiwPosterior {
    let d = prior_mean.len();
    let nk = rows.len() as f64;
    if rows.is_empty() {
        return NiwPosterior {
            mean: prior_mean.clone(),
            kappa: kappa0,
            dof: nu0,
            scale: psi0.clone(),
        };
    }
    let mut ybar = DVector::zeros(d);
    for r in rows {
        for j in 0..d {
            ybar[j] += r[j];
        }
    }
    ybar /= nk;
    let mut scatter = DMatrix::zeros(d, d);
    for r in rows {
        let dev = DVector::from_iterator(d, (0..d).map(|j| r[j] - ybar[j]));
        scatter += &dev * dev.transpose();
    }
    let kappa_n = kappa0 + nk;
    let mean_n = (prior_mean * kappa0 + &ybar * nk) / kappa_n;
    let dev0 = &ybar - prior_mean;
    let scale_n = psi0 + scatter + (&dev0 * dev0.transpose()) * (kappa0 * nk / kappa_n);
    NiwPosterior {
        mean: mean_n,
        kappa: kappa_n,
        dof: nu0 + nk,
        scale: scale_n,
    }
}

/// Draws from the Inverse-Wishart with the given degrees of freedom and
/// scale matrix, by inverting a Bartlett-decomposed Wishart draw.
fn sample_inverse_wishart(
    rng: &mut ChaCha8Rng,
    dof: f64,
    scale: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    let chol_scale = Cholesky::new(scale.clone()).ok_or_else(|| {
        Error::InvalidArgument("posterior scale matrix is not positive definite".into())
    })?;
    let scale_inv = chol_scale.inverse();
    let l = Cholesky::new(scale_inv)
        .ok_or_else(|| {
            Error::InvalidArgument("inverted scale matrix is not positive definite".into())
        })?
        .l();
    let mut bartlett = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64).map_err(|_| {
            Error::InvalidArgument(format!(
                "degrees of freedom {dof} too small for dimension {d}"
            ))
        })?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    // chol(W) for W ~ Wishart(dof, scale^-1); the draw we want is W^-1.
    let root = l * bartlett;
    let root_inv = root
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::InvalidArgument("degenerate Wishart draw".into()))?;
    Ok(root_inv.transpose() * root_inv)
}

/// Gibbs sampler for a multivariate Gaussian mixture with
/// Normal-Inverse-Wishart component priors. The returned chain stores
/// row-major component covariance matrices as its dispersion block
/// (`phi_width == d * d`).
pub fn gibbs_multivariate(data: &Dataset, cfg: &GibbsConfig, seed: u64) -> Result<MixtureChain> {
    cfg.validate()?;
    let d = data.dim();
    let prior = match &cfg.prior {
        Some(p) => p.clone(),
        None => PriorSpec::default_multivariate(data, cfg.components)?,
    };
    prior.validate(d, true)?;
    let n = data.units();
    let g = cfg.components;
    let prior_mean = DVector::from_row_slice(&prior.mean_loc);
    let psi0 = DMatrix::from_row_slice(d, d, &prior.disp_scale);
    let kappa0 = prior.mean_scale;
    let nu0 = prior.disp_shape;

    let mut rng = seeds::rng(seed);
    let mut z = initial_allocation(&mut rng, data, g, cfg.init.as_deref())?;
    let mut mu = vec![0.0; g * d];
    let mut pi = vec![1.0 / g as f64; g];
    let mut phi = vec![0.0; g * d * d];
    let mut factors: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); g];
    let mut logdets = vec![0.0; g];

    let mut builder = ChainBuilder::new(g, n, d).phi_width(d * d).meta(ChainMeta {
        seed: Some(seed),
        sampler: Some("gibbs-multivariate".into()),
        scenario: None,
        burnin: Some(cfg.burnin),
        relabelled_by: None,
    });
    let mut probs = vec![0.0; g];
    let mut dev = DVector::zeros(d);

    for sweep in 0..cfg.iterations {
        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); g];
        for i in 0..n {
            members[(z[i] - 1) as usize].push(data.row(i));
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();

        pi = draw_weights(&mut rng, &counts, prior.weight_conc);

        for k in 0..g {
            let post = niw_update(&prior_mean, kappa0, nu0, &psi0, &members[k]);
            let sigma = sample_inverse_wishart(&mut rng, post.dof, &post.scale)?;
            let chol = Cholesky::new(sigma.clone()).ok_or_else(|| {
                Error::InvalidArgument("sampled covariance is not positive definite".into())
            })?;
            let e = DVector::from_iterator(d, (0..d).map(|_| rng.sample(StandardNormal)));
            let lower = chol.l();
            let mean = &post.mean + (&lower * e) / post.kappa.sqrt();
            for j in 0..d {
                mu[k * d + j] = mean[j];
            }
            for r in 0..d {
                for c in 0..d {
                    phi[k * d * d + r * d + c] = sigma[(r, c)];
                }
            }
            logdets[k] = (0..d).map(|j| lower[(j, j)].ln()).sum::<f64>() * 2.0;
            factors[k] = lower;
        }

        for i in 0..n {
            let y = data.row(i);
            let mut best = f64::NEG_INFINITY;
            for k in 0..g {
                for j in 0..d {
                    dev[j] = y[j] - mu[k * d + j];
                }
                let solved = factors[k].solve_lower_triangular_mut(&mut dev);
                debug_assert!(solved, "triangular factor is invertible");
                let lp = pi[k].ln() - 0.5 * logdets[k] - 0.5 * dev.norm_squared();
                probs[k] = lp;
                best = best.max(lp);
            }
            for p in &mut probs {
                *p = (*p - best).exp();
            }
            z[i] = categorical(&mut rng, &probs) as u32 + 1;
        }

        if cfg.permute_move {
            let perm = random_permutation(&mut rng, g);
            permute_state(&perm, &mut z, &mut mu, &mut pi, &mut phi, d, d * d);
            let old_factors = factors.clone();
            let old_logdets = logdets.clone();
            for k in 0..g {
                factors[perm[k]] = old_factors[k].clone();
                logdets[perm[k]] = old_logdets[k];
            }
        }

        if sweep >= cfg.burnin {
            builder.push_iteration(&z, &mu, &pi, Some(&phi))?;
        }
    }

    builder.finish()
}
