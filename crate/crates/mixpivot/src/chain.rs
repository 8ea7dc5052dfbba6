//! In-memory representation of data sets and mixture MCMC output.
//!
//! A [`MixtureChain`] holds `H` posterior draws for a `G`-component
//! mixture over `n` units in `d` dimensions: allocation vectors `z`,
//! component means `mu`, mixture weights `pi`, and optionally a block of
//! per-component dispersion parameters. Label values inside `z` are
//! 1-based (`1..=G`), matching the on-disk format; positional indices in
//! accessor methods (`h`, `i`, `g`) are plain 0-based Rust indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for mixture-weight rows summing to one.
pub const PI_SUM_TOL: f64 = 1e-8;

/// Fixed-size rectangular data set, rows are units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    units: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a data set from row-major values. All entries must be
    /// finite and `values.len()` must equal `units * dim`.
    pub fn new(units: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if units == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one unit and one dimension".into(),
            ));
        }
        if values.len() != units * dim {
            return Err(Error::DimensionMismatch(format!(
                "dataset expects {} values ({} units x {} dims), got {}",
                units * dim,
                units,
                dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dataset value at unit {}, dimension {} is not finite",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Dataset { units, dim, values })
    }

    /// Builds a data set from one `Vec` per unit.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        let dim = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "dataset row {} has {} values, expected {}",
                bad + 1,
                rows[bad].len(),
                dim
            )));
        }
        let units = rows.len();
        Dataset::new(units, dim, rows.into_iter().flatten().collect())
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.units {
            for (j, v) in self.row(i).iter().enumerate() {
                m[j] += v;
            }
        }
        for v in &mut m {
            *v /= self.units as f64;
        }
        m
    }

    /// Unbiased column variances (zero when there is a single unit).
    pub fn col_vars(&self) -> Vec<f64> {
        if self.units < 2 {
            return vec![0.0; self.dim];
        }
        let means = self.col_means();
        let mut s = vec![0.0; self.dim];
        for i in 0..self.units {
            for (j, v) in self.row(i).iter().enumerate() {
                let r = v - means[j];
                s[j] += r * r;
            }
        }
        for v in &mut s {
            *v /= (self.units - 1) as f64;
        }
        s
    }
}

/// Provenance carried alongside a chain, round-tripped through files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    /// Master seed the chain was sampled under, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Name of the sampler that produced the chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    /// Synthetic scenario tag when the data came from the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Number of burn-in iterations already removed from the chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    /// Relabelling method applied to the chain, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabelled_by: Option<String>,
}

impl ChainMeta {
    pub fn is_empty(&self) -> bool {
        *self == ChainMeta::default()
    }
}

/// One structural-invariant breach found by [`MixtureChain::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based iteration the breach was found in, if tied to one.
    pub iteration: Option<usize>,
    /// Which block of the chain is affected (`"z"`, `"mu"`, ...).
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.iteration {
            Some(h) => write!(f, "iteration {}, field {}: {}", h, self.field, self.message),
            None => write!(f, "field {}: {}", self.field, self.message),
        }
    }
}

fn violations_to_error(violations: &[Violation]) -> Error {
    let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
    let mut msg = shown.join("; ");
    if violations.len() > 3 {
        msg.push_str(&format!(" (+{} more)", violations.len() - 3));
    }
    Error::InvalidChain(msg)
}

/// Posterior draws from a finite mixture sampler.
///
/// Storage is flat and row-major: `z` is `H x n`, `mu` is `H x G x d`,
/// `pi` is `H x G`, and `phi`, when present, is `H x G x phi_width`
/// (dispersions are per component, e.g. `phi_width == 1` for variances
/// or `d * d` for vectorised covariance matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureChain {
    iterations: usize,
    components: usize,
    units: usize,
    dim: usize,
    phi_width: usize,
    z: Vec<u32>,
    mu: Vec<f64>,
    pi: Vec<f64>,
    phi: Vec<f64>,
    meta: ChainMeta,
}

impl MixtureChain {
    /// Assembles a chain from flat blocks, rejecting any structural
    /// invariant breach. `phi_width` is the number of dispersion reals
    /// per component (0 when the chain carries none).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        components: usize,
        units: usize,
        dim: usize,
        phi_width: usize,
        z: Vec<u32>,
        mu: Vec<f64>,
        pi: Vec<f64>,
        phi: Vec<f64>,
        meta: ChainMeta,
    ) -> Result<Self> {
        if components == 0 || units == 0 || dim == 0 {
            return Err(Error::InvalidChain(
                "component count, unit count and dimension must all be positive".into(),
            ));
        }
        if z.is_empty() || z.len() % units != 0 {
            return Err(Error::InvalidChain(format!(
                "allocation block of {} labels is not a positive multiple of n = {}",
                z.len(),
                units
            )));
        }
        let iterations = z.len() / units;
        if mu.len() != iterations * components * dim {
            return Err(Error::InvalidChain(format!(
                "mean block has {} reals, expected H*G*d = {}",
                mu.len(),
                iterations * components * dim
            )));
        }
        if pi.len() != iterations * components {
            return Err(Error::InvalidChain(format!(
                "weight block has {} reals, expected H*G = {}",
                pi.len(),
                iterations * components
            )));
        }
        if phi.len() != iterations * components * phi_width {
            return Err(Error::InvalidChain(format!(
                "dispersion block has {} reals, expected H*G*phi_width = {}",
                phi.len(),
                iterations * components * phi_width
            )));
        }
        let chain = MixtureChain {
            iterations,
            components,
            units,
            dim,
            phi_width,
            z,
            mu,
            pi,
            phi,
            meta,
        };
        let violations = chain.validate();
        if violations.is_empty() {
            Ok(chain)
        } else {
            Err(violations_to_error(&violations))
        }
    }

    /// Number of iterations `H`.
    pub fn h(&self) -> usize {
        self.iterations
    }

    /// Number of components `G`.
    pub fn g(&self) -> usize {
        self.components
    }

    /// Number of units `n`.
    pub fn n(&self) -> usize {
        self.units
    }

    /// Data dimension `d`.
    pub fn d(&self) -> usize {
        self.dim
    }

    /// Dispersion reals per component; 0 when the chain carries none.
    pub fn phi_width(&self) -> usize {
        self.phi_width
    }

    pub fn has_dispersion(&self) -> bool {
        self.phi_width > 0
    }

    pub fn meta(&self) -> &ChainMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: ChainMeta) {
        self.meta = meta;
    }

    /// Allocation of unit `i` at iteration `h` (a 1-based label).
    pub fn z_at(&self, h: usize, i: usize) -> u32 {
        self.z[h * self.units + i]
    }

    /// Allocation vector of iteration `h`.
    pub fn z_row(&self, h: usize) -> &[u32] {
        &self.z[h * self.units..(h + 1) * self.units]
    }

    /// Mean vector of component `g` (0-based) at iteration `h`.
    pub fn mu_at(&self, h: usize, g: usize) -> &[f64] {
        let base = (h * self.components + g) * self.dim;
        &self.mu[base..base + self.dim]
    }

    /// All component means of iteration `h`, `G * d` reals.
    pub fn mu_row(&self, h: usize) -> &[f64] {
        let base = h * self.components * self.dim;
        &self.mu[base..base + self.components * self.dim]
    }

    /// Weight of component `g` (0-based) at iteration `h`.
    pub fn pi_at(&self, h: usize, g: usize) -> f64 {
        self.pi[h * self.components + g]
    }

    /// Weight vector of iteration `h`.
    pub fn pi_row(&self, h: usize) -> &[f64] {
        &self.pi[h * self.components..(h + 1) * self.components]
    }

    /// Dispersion block of component `g` at iteration `h`; empty when the
    /// chain carries no dispersions.
    pub fn phi_at(&self, h: usize, g: usize) -> &[f64] {
        let base = (h * self.components + g) * self.phi_width;
        &self.phi[base..base + self.phi_width]
    }

    /// Dispersion blocks of iteration `h`, `G * phi_width` reals.
    pub fn phi_row(&self, h: usize) -> &[f64] {
        let base = h * self.components * self.phi_width;
        &self.phi[base..base + self.components * self.phi_width]
    }

    /// Checks every structural invariant and reports all breaches:
    /// labels within `1..=G`, finite parameter blocks, non-negative
    /// weights, and each weight row summing to one within [`PI_SUM_TOL`].
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for h in 0..self.iterations {
            for (i, &label) in self.z_row(h).iter().enumerate() {
                if label < 1 || label as usize > self.components {
                    out.push(Violation {
                        iteration: Some(h + 1),
                        field: "z",
                        message: format!(
                            "label {} at unit {} out of range 1..={}",
                            label,
                            i + 1,
                            self.components
                        ),
                    });
                }
            }
            if let Some(pos) = self.mu_row(h).iter().position(|v| !v.is_finite()) {
                out.push(Violation {
                    iteration: Some(h + 1),
                    field: "mu",
                    message: format!(
                        "non-finite mean for component {}, dimension {}",
                        pos / self.dim + 1,
                        pos % self.dim + 1
                    ),
                });
            }
            let pi = self.pi_row(h);
            if let Some(pos) = pi.iter().position(|v| !v.is_finite()) {
                out.push(Violation {
                    iteration: Some(h + 1),
                    field: "pi",
                    message: format!("non-finite weight for component {}", pos + 1),
                });
            } else {
                if let Some(pos) = pi.iter().position(|&v| v < 0.0) {
                    out.push(Violation {
                        iteration: Some(h + 1),
                        field: "pi",
                        message: format!("negative weight for component {}", pos + 1),
                    });
                }
                let sum: f64 = pi.iter().sum();
                if (sum - 1.0).abs() > PI_SUM_TOL {
                    out.push(Violation {
                        iteration: Some(h + 1),
                        field: "pi",
                        message: format!("weights sum to {sum:.17e}, expected 1"),
                    });
                }
            }
            if let Some(pos) = self.phi_row(h).iter().position(|v| !v.is_finite()) {
                out.push(Violation {
                    iteration: Some(h + 1),
                    field: "phi",
                    message: format!(
                        "non-finite dispersion for component {}",
                        pos / self.phi_width + 1
                    ),
                });
            }
        }
        out
    }

    /// Applies one label permutation per iteration. `perms[h]` has length
    /// `G` and maps each raw component `g` (1-based) to its new label
    /// `perms[h][g-1]`: allocations become `perm[z-1]` and the parameter
    /// blocks of raw component `g` move to slot `perm[g-1]`.
    pub fn with_permuted_labels(&self, perms: &[Vec<u32>]) -> Result<MixtureChain> {
        if perms.len() != self.iterations {
            return Err(Error::DimensionMismatch(format!(
                "{} permutations supplied for {} iterations",
                perms.len(),
                self.iterations
            )));
        }
        let g = self.components;
        for (h, perm) in perms.iter().enumerate() {
            if perm.len() != g {
                return Err(Error::InvalidArgument(format!(
                    "permutation for iteration {} has length {}, expected {}",
                    h + 1,
                    perm.len(),
                    g
                )));
            }
            let mut seen = vec![false; g];
            for &t in perm {
                if t < 1 || t as usize > g || seen[t as usize - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "permutation for iteration {} is not a bijection of 1..={}",
                        h + 1,
                        g
                    )));
                }
                seen[t as usize - 1] = true;
            }
        }

        let mut out = self.clone();
        for h in 0..self.iterations {
            let perm = &perms[h];
            for i in 0..self.units {
                let raw = self.z_at(h, i) as usize;
                out.z[h * self.units + i] = perm[raw - 1];
            }
            for raw in 0..g {
                let slot = perm[raw] as usize - 1;
                let src = (h * g + raw) * self.dim;
                let dst = (h * g + slot) * self.dim;
                out.mu[dst..dst + self.dim].copy_from_slice(&self.mu[src..src + self.dim]);
                out.pi[h * g + slot] = self.pi[h * g + raw];
                if self.phi_width > 0 {
                    let src = (h * g + raw) * self.phi_width;
                    let dst = (h * g + slot) * self.phi_width;
                    out.phi[dst..dst + self.phi_width]
                        .copy_from_slice(&self.phi[src..src + self.phi_width]);
                }
            }
        }
        Ok(out)
    }

    /// Relabels every iteration into the canonical first-appearance
    /// order: the component of unit 1 becomes label 1, the next distinct
    /// component to appear becomes label 2, and so on; components that
    /// allocate no unit fill the remaining labels in raw order. Two
    /// iterations that differ only by a label permutation map to the
    /// same canonical form.
    pub fn canonicalized_per_iteration(&self) -> MixtureChain {
        let g = self.components;
        let mut perms = Vec::with_capacity(self.iterations);
        for h in 0..self.iterations {
            let mut perm = vec![0u32; g];
            let mut next = 1u32;
            for &label in self.z_row(h) {
                let slot = &mut perm[label as usize - 1];
                if *slot == 0 {
                    *slot = next;
                    next += 1;
                }
            }
            for slot in &mut perm {
                if *slot == 0 {
                    *slot = next;
                    next += 1;
                }
            }
            perms.push(perm);
        }
        self.with_permuted_labels(&perms)
            .expect("first-appearance maps are bijections")
    }

    /// Restricts the chain to the given 1-based iteration numbers, which
    /// must be strictly increasing and within `1..=H`.
    pub fn restricted_to(&self, iterations: &[usize]) -> Result<MixtureChain> {
        if iterations.is_empty() {
            return Err(Error::InvalidArgument(
                "iteration subset must not be empty".into(),
            ));
        }
        let mut prev = 0usize;
        for &h in iterations {
            if h <= prev || h > self.iterations {
                return Err(Error::InvalidArgument(format!(
                    "iteration numbers must be strictly increasing within 1..={}, got {}",
                    self.iterations, h
                )));
            }
            prev = h;
        }
        let g = self.components;
        let mut z = Vec::with_capacity(iterations.len() * self.units);
        let mut mu = Vec::with_capacity(iterations.len() * g * self.dim);
        let mut pi = Vec::with_capacity(iterations.len() * g);
        let mut phi = Vec::with_capacity(iterations.len() * g * self.phi_width);
        for &h1 in iterations {
            let h = h1 - 1;
            z.extend_from_slice(self.z_row(h));
            mu.extend_from_slice(self.mu_row(h));
            pi.extend_from_slice(self.pi_row(h));
            phi.extend_from_slice(self.phi_row(h));
        }
        MixtureChain::from_parts(
            g,
            self.units,
            self.dim,
            self.phi_width,
            z,
            mu,
            pi,
            phi,
            self.meta.clone(),
        )
    }

    /// Starts an incremental builder for a chain of the given shape.
    pub fn builder(components: usize, units: usize, dim: usize) -> ChainBuilder {
        ChainBuilder::new(components, units, dim)
    }
}

/// Accumulates iterations one at a time, validating once at the end.
#[derive(Debug, Clone)]
pub struct ChainBuilder {
    components: usize,
    units: usize,
    dim: usize,
    phi_width: usize,
    z: Vec<u32>,
    mu: Vec<f64>,
    pi: Vec<f64>,
    phi: Vec<f64>,
    meta: ChainMeta,
}

impl ChainBuilder {
    pub fn new(components: usize, units: usize, dim: usize) -> Self {
        ChainBuilder {
            components,
            units,
            dim,
            phi_width: 0,
            z: Vec::new(),
            mu: Vec::new(),
            pi: Vec::new(),
            phi: Vec::new(),
            meta: ChainMeta::default(),
        }
    }

    /// Declares `width` dispersion reals per component. Must be called
    /// before the first iteration is pushed.
    pub fn phi_width(mut self, width: usize) -> Self {
        assert!(self.z.is_empty(), "set phi width before pushing iterations");
        self.phi_width = width;
        self
    }

    pub fn meta(mut self, meta: ChainMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Appends one draw. Slice lengths must match the declared shape;
    /// `phi` is required exactly when a positive phi width was declared.
    pub fn push_iteration(
        &mut self,
        z: &[u32],
        mu: &[f64],
        pi: &[f64],
        phi: Option<&[f64]>,
    ) -> Result<()> {
        if z.len() != self.units
            || mu.len() != self.components * self.dim
            || pi.len() != self.components
        {
            return Err(Error::DimensionMismatch(format!(
                "iteration {} has blocks z={}, mu={}, pi={}, expected z={}, mu={}, pi={}",
                self.z.len() / self.units + 1,
                z.len(),
                mu.len(),
                pi.len(),
                self.units,
                self.components * self.dim,
                self.components
            )));
        }
        match (self.phi_width, phi) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "dispersion block pushed onto a chain with no phi width".into(),
                ))
            }
            (w, Some(p)) if p.len() == self.components * w => self.phi.extend_from_slice(p),
            (w, got) => {
                return Err(Error::DimensionMismatch(format!(
                    "dispersion block of {} reals, expected G*phi_width = {}",
                    got.map_or(0, <[f64]>::len),
                    self.components * w
                )))
            }
        }
        self.z.extend_from_slice(z);
        self.mu.extend_from_slice(mu);
        self.pi.extend_from_slice(pi);
        Ok(())
    }

    /// Number of iterations pushed so far.
    pub fn len(&self) -> usize {
        self.z.len() / self.units
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn finish(self) -> Result<MixtureChain> {
        MixtureChain::from_parts(
            self.components,
            self.units,
            self.dim,
            self.phi_width,
            self.z,
            self.mu,
            self.pi,
            self.phi,
            self.meta,
        )
    }
}
