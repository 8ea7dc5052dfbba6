//! Runtime-selectable algorithm variants behind common traits.
//!
//! Two registries live here. [`PivotSelector`] covers the ways of
//! picking one pivot unit per group (the six similarity criteria and
//! the identity-submatrix search), and [`RelabelStrategy`] covers whole
//! relabelling methods (pivot-anchored and the three reference
//! methods). Both are looked up by name so callers can hold a
//! `Box<dyn ...>` chosen from a config string.
//!
//! Every relabelling strategy is equivariant: permuting the component
//! labels of any input iteration leaves the output exactly unchanged.
//! The pivot-anchored method has this property by construction; the
//! reference methods get it by canonicalising each iteration's labels
//! (first-appearance order) before fitting, which erases the arbitrary
//! input labelling without changing the underlying states.

use crate::baselines::{
    self, classification_probs, pk_fit, pk_relabel, relabel_by_ordering, stephens_kl,
    FitOptions, ModelFamily, OrderKey,
};
use crate::chain::{Dataset, MixtureChain};
use crate::error::{Error, Result};
use crate::partitioning::{hclust_complete, Partition};
use crate::pivotal::{self, Criterion, IterationFilter, MusParams, PivotSet};
use crate::similarity::{estimate_similarity, SimilarityMatrix};

/// Picks one pivot unit per group of a reference partition.
pub trait PivotSelector: Send + Sync {
    /// Registry tag, one of `a..f` or `mus`.
    fn name(&self) -> &'static str;
    fn select(&self, sim: &SimilarityMatrix, partition: &Partition) -> Result<PivotSet>;
}

struct CriterionSelector(Criterion);

impl PivotSelector for CriterionSelector {
    fn name(&self) -> &'static str {
        self.0.tag()
    }

    fn select(&self, sim: &SimilarityMatrix, partition: &Partition) -> Result<PivotSet> {
        pivotal::select_pivots_criterion(sim, partition, self.0)
    }
}

struct MusSelector(MusParams);

impl PivotSelector for MusSelector {
    fn name(&self) -> &'static str {
        "mus"
    }

    fn select(&self, sim: &SimilarityMatrix, partition: &Partition) -> Result<PivotSet> {
        pivotal::select_pivots_mus(sim, partition, self.0)
    }
}

/// Tags accepted by [`pivot_selector`].
pub const PIVOT_SELECTOR_NAMES: [&str; 7] = ["a", "b", "c", "d", "e", "f", "mus"];

/// Looks up a pivot selector by tag, with default parameters for `mus`.
pub fn pivot_selector(name: &str) -> Result<Box<dyn PivotSelector>> {
    pivot_selector_with(name, MusParams::default())
}

/// Looks up a pivot selector by tag; `mus` uses the given parameters.
pub fn pivot_selector_with(name: &str, mus: MusParams) -> Result<Box<dyn PivotSelector>> {
    if name == "mus" {
        return Ok(Box::new(MusSelector(mus)));
    }
    Ok(Box::new(CriterionSelector(Criterion::from_tag(name)?)))
}

/// Input to a relabelling strategy.
#[derive(Debug, Clone, Copy)]
pub struct RelabelRequest<'a> {
    pub chain: &'a MixtureChain,
    /// Groups the output should distinguish. The pivot-anchored method
    /// accepts any value in `1..=G`; the reference methods keep all `G`
    /// components and reject anything else.
    pub groups: usize,
    /// Observed data, required by strategies that rescore units.
    pub data: Option<&'a Dataset>,
    /// Seed for strategies with randomised initialisation.
    pub seed: u64,
}

impl<'a> RelabelRequest<'a> {
    pub fn new(chain: &'a MixtureChain) -> Self {
        RelabelRequest {
            chain,
            groups: chain.g(),
            data: None,
            seed: 0,
        }
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn data(mut self, data: &'a Dataset) -> Self {
        self.data = Some(data);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Output of a relabelling strategy.
#[derive(Debug, Clone)]
pub struct RelabelOutput {
    pub chain: MixtureChain,
    /// Pivot units, for methods that anchor on them.
    pub pivots: Option<PivotSet>,
    /// Iteration bookkeeping, for methods that drop sweeps. `None`
    /// means every input iteration was kept.
    pub filter: Option<IterationFilter>,
}

impl RelabelOutput {
    /// Fraction of input iterations present in the output.
    pub fn kept_proportion(&self) -> f64 {
        match &self.filter {
            Some(f) => f.kept_proportion(),
            None => 1.0,
        }
    }
}

/// A complete relabelling method.
pub trait RelabelStrategy: Send + Sync {
    /// Registry tag: `pivotal`, `pk`, `stephens` or `ordering`.
    fn name(&self) -> &'static str;

    /// Whether [`RelabelRequest::data`] must be set.
    fn needs_data(&self) -> bool {
        false
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput>;
}

/// Pivot-anchored relabelling: similarity, complete-linkage cut at the
/// requested group count, pivot selection, then anchoring with the
/// invalid sweeps dropped.
pub struct PivotalStrategy {
    pub selector: Box<dyn PivotSelector>,
}

impl PivotalStrategy {
    pub fn new(selector: Box<dyn PivotSelector>) -> Self {
        PivotalStrategy { selector }
    }
}

impl RelabelStrategy for PivotalStrategy {
    fn name(&self) -> &'static str {
        "pivotal"
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput> {
        let sim = estimate_similarity(req.chain);
        let dend = hclust_complete(&sim.dissimilarity());
        let partition = dend.cut(req.groups)?;
        let pivots = self.selector.select(&sim, &partition)?;
        let result = pivotal::pivotal_relabel(req.chain, &pivots)?;
        Ok(RelabelOutput {
            chain: result.chain,
            pivots: Some(result.pivots),
            filter: Some(result.filter),
        })
    }
}

/// Pivot-anchored relabelling with a fixed, user-supplied pivot set.
pub struct ManualPivotStrategy {
    pub pivots: PivotSet,
}

impl RelabelStrategy for ManualPivotStrategy {
    fn name(&self) -> &'static str {
        "pivotal"
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput> {
        if self.pivots.groups() != req.groups {
            return Err(Error::InvalidArgument(format!(
                "{} pivots supplied but {} groups requested",
                self.pivots.groups(),
                req.groups
            )));
        }
        let result = pivotal::pivotal_relabel(req.chain, &self.pivots)?;
        Ok(RelabelOutput {
            chain: result.chain,
            pivots: Some(result.pivots),
            filter: Some(result.filter),
        })
    }
}

fn require_full_groups(req: &RelabelRequest, method: &str) -> Result<()> {
    if req.groups != req.chain.g() {
        return Err(Error::InvalidArgument(format!(
            "{method} keeps all {} components and cannot produce {} groups",
            req.chain.g(),
            req.groups
        )));
    }
    Ok(())
}

/// Relabelling via an EM fit of a Bernoulli mixture to the stacked
/// allocation indicators.
pub struct PkStrategy {
    pub options: FitOptions,
}

impl Default for PkStrategy {
    fn default() -> Self {
        PkStrategy {
            options: FitOptions::default(),
        }
    }
}

impl RelabelStrategy for PkStrategy {
    fn name(&self) -> &'static str {
        "pk"
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput> {
        require_full_groups(req, "pk")?;
        let canonical = req.chain.canonicalized_per_iteration();
        let fit = pk_fit(&canonical, self.options, req.seed);
        let chain = pk_relabel(&canonical, &fit)?;
        Ok(RelabelOutput {
            chain,
            pivots: None,
            filter: None,
        })
    }
}

/// Relabelling by the iterative KL permutation search over
/// classification probabilities.
pub struct StephensStrategy {
    pub options: FitOptions,
}

impl Default for StephensStrategy {
    fn default() -> Self {
        StephensStrategy {
            options: FitOptions::default(),
        }
    }
}

impl RelabelStrategy for StephensStrategy {
    fn name(&self) -> &'static str {
        "stephens"
    }

    fn needs_data(&self) -> bool {
        true
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput> {
        require_full_groups(req, "stephens")?;
        let data = req.data.ok_or_else(|| {
            Error::InvalidArgument("stephens needs the observed data to rescore units".into())
        })?;
        if !req.chain.has_dispersion() {
            return Err(Error::InvalidArgument(
                "stephens needs a chain with component dispersions".into(),
            ));
        }
        let family = if req.chain.d() == 1 {
            ModelFamily::UnivariateGaussian
        } else {
            ModelFamily::MultivariateGaussian
        };
        let canonical = req.chain.canonicalized_per_iteration();
        let probs = classification_probs(data, &canonical, family)?;
        let result = stephens_kl(&probs, self.options);
        let chain = baselines::apply_permutations(&canonical, &result.perms, "stephens")?;
        Ok(RelabelOutput {
            chain,
            pivots: None,
            filter: None,
        })
    }
}

/// Relabelling by sorting components on a scalar key every iteration.
pub struct OrderingStrategy {
    pub key: OrderKey,
}

impl RelabelStrategy for OrderingStrategy {
    fn name(&self) -> &'static str {
        "ordering"
    }

    fn run(&self, req: &RelabelRequest) -> Result<RelabelOutput> {
        require_full_groups(req, "ordering")?;
        let canonical = req.chain.canonicalized_per_iteration();
        let chain = relabel_by_ordering(&canonical, self.key)?;
        Ok(RelabelOutput {
            chain,
            pivots: None,
            filter: None,
        })
    }
}

/// Tags accepted by [`relabel_strategy`] (the `ordering` tag also
/// accepts a key suffix).
pub const RELABEL_STRATEGY_NAMES: [&str; 4] = ["pivotal", "pk", "stephens", "ordering"];

/// Looks up a relabelling method by tag.
///
/// `pivotal` takes an optional selector suffix (`pivotal:e`,
/// `pivotal:mus`; plain `pivotal` uses criterion `b`). `ordering`
/// takes an optional key suffix (`ordering:mu1`, `ordering:pi`; plain
/// `ordering` sorts on the first mean coordinate).
pub fn relabel_strategy(name: &str) -> Result<Box<dyn RelabelStrategy>> {
    let (head, suffix) = match name.split_once(':') {
        Some((h, s)) => (h, Some(s)),
        None => (name, None),
    };
    match head {
        "pivotal" => {
            let selector = pivot_selector(suffix.unwrap_or("b"))?;
            Ok(Box::new(PivotalStrategy::new(selector)))
        }
        "pk" if suffix.is_none() => Ok(Box::new(PkStrategy::default())),
        "stephens" if suffix.is_none() => Ok(Box::new(StephensStrategy::default())),
        "ordering" => {
            let key = match suffix {
                None => OrderKey::MuDim(0),
                Some("pi") => OrderKey::Pi,
                Some(s) => {
                    let dim = s
                        .strip_prefix("mu")
                        .and_then(|t| t.parse::<usize>().ok())
                        .filter(|&k| k >= 1)
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "unknown ordering key {s:?}, expected pi or mu<k>"
                            ))
                        })?;
                    OrderKey::MuDim(dim - 1)
                }
            };
            Ok(Box::new(OrderingStrategy { key }))
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown relabelling method {name:?}, expected one of {:?}",
            RELABEL_STRATEGY_NAMES
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainBuilder;

    fn switching_chain() -> MixtureChain {
        let mut b = ChainBuilder::new(2, 4, 1).phi_width(1);
        b.push_iteration(
            &[1, 1, 2, 2],
            &[-5.0, 5.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        b.push_iteration(
            &[2, 2, 1, 1],
            &[5.0, -5.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        b.push_iteration(
            &[1, 1, 2, 2],
            &[-5.0, 5.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        b.finish().unwrap()
    }

    fn the_data() -> Dataset {
        Dataset::new(4, 1, vec![-5.1, -4.9, 4.9, 5.1]).unwrap()
    }

    #[test]
    fn registry_knows_all_tags() {
        for tag in PIVOT_SELECTOR_NAMES {
            assert_eq!(pivot_selector(tag).unwrap().name(), tag);
        }
        assert!(pivot_selector("z").is_err());
        for tag in RELABEL_STRATEGY_NAMES {
            assert_eq!(relabel_strategy(tag).unwrap().name(), tag);
        }
        assert!(relabel_strategy("pivotal:mus").is_ok());
        assert!(relabel_strategy("pivotal:q").is_err());
        assert!(relabel_strategy("ordering:mu2").is_ok());
        assert!(relabel_strategy("ordering:mu0").is_err());
        assert!(relabel_strategy("ordering:sigma").is_err());
        assert!(relabel_strategy("pk:x").is_err());
        assert!(relabel_strategy("binder").is_err());
    }

    #[test]
    fn every_strategy_undoes_the_switch() {
        let chain = switching_chain();
        let data = the_data();
        for tag in RELABEL_STRATEGY_NAMES {
            let strategy = relabel_strategy(tag).unwrap();
            let req = RelabelRequest::new(&chain).data(&data).seed(3);
            let out = strategy.run(&req).unwrap();
            assert_eq!(out.chain.g(), 2, "{tag}");
            // All three sweeps describe the same state; once relabelled
            // they must be identical.
            for h in 1..out.chain.h() {
                assert_eq!(out.chain.z_row(h), out.chain.z_row(0), "{tag}");
                assert_eq!(out.chain.mu_row(h), out.chain.mu_row(0), "{tag}");
            }
            assert_eq!(out.kept_proportion(), 1.0, "{tag}");
        }
    }

    #[test]
    fn strategies_are_exactly_equivariant() {
        let chain = switching_chain();
        // Permute iteration 0's labels; the state set is unchanged.
        let perms = vec![vec![2, 1], vec![1, 2], vec![1, 2]];
        let permuted = chain.with_permuted_labels(&perms).unwrap();
        let data = the_data();
        for tag in RELABEL_STRATEGY_NAMES {
            let strategy = relabel_strategy(tag).unwrap();
            let a = strategy
                .run(&RelabelRequest::new(&chain).data(&data).seed(9))
                .unwrap();
            let b = strategy
                .run(&RelabelRequest::new(&permuted).data(&data).seed(9))
                .unwrap();
            assert_eq!(a.chain, b.chain, "{tag}");
        }
    }

    #[test]
    fn reference_methods_reject_group_shrinking() {
        let chain = switching_chain();
        let data = the_data();
        for tag in ["pk", "stephens", "ordering"] {
            let strategy = relabel_strategy(tag).unwrap();
            let req = RelabelRequest::new(&chain).groups(1).data(&data);
            assert!(strategy.run(&req).is_err(), "{tag}");
        }
        // Cutting this chain to one group drops every sweep (each uses
        // two labels), which the pivot-anchored method reports as the
        // no-valid-iterations outcome rather than a usage error.
        let strategy = relabel_strategy("pivotal").unwrap();
        let err = strategy
            .run(&RelabelRequest::new(&chain).groups(1))
            .unwrap_err();
        assert!(err.is_no_valid_iterations());

        // A three-component chain that only ever occupies two labels
        // genuinely shrinks to two groups.
        let mut b = ChainBuilder::new(3, 4, 1).phi_width(1);
        b.push_iteration(
            &[1, 1, 3, 3],
            &[-5.0, 0.0, 5.0],
            &[0.45, 0.1, 0.45],
            Some(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        b.push_iteration(
            &[2, 2, 1, 1],
            &[5.0, -5.0, 0.0],
            &[0.45, 0.45, 0.1],
            Some(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        let sparse = b.finish().unwrap();
        let out = strategy
            .run(&RelabelRequest::new(&sparse).groups(2))
            .unwrap();
        assert_eq!(out.chain.g(), 2);
        assert_eq!(out.kept_proportion(), 1.0);
        assert_eq!(out.chain.z_row(0), out.chain.z_row(1));
        assert_eq!(out.chain.mu_row(0), &[-5.0, 5.0]);
    }

    #[test]
    fn stephens_requires_data() {
        let chain = switching_chain();
        let strategy = relabel_strategy("stephens").unwrap();
        assert!(strategy.needs_data());
        let err = strategy.run(&RelabelRequest::new(&chain)).unwrap_err();
        assert!(err.to_string().contains("data"), "{err}");
    }

    #[test]
    fn manual_pivots_anchor_like_selected_ones() {
        let chain = switching_chain();
        let manual = ManualPivotStrategy {
            pivots: PivotSet::manual(vec![1, 3], 4).unwrap(),
        };
        let auto = relabel_strategy("pivotal").unwrap();
        let a = manual.run(&RelabelRequest::new(&chain)).unwrap();
        let b = auto.run(&RelabelRequest::new(&chain)).unwrap();
        // Same pivots either way; only the method tag in the metadata
        // differs ("manual" vs the criterion).
        let mut am = a.chain.clone();
        let mut bm = b.chain.clone();
        am.set_meta(Default::default());
        bm.set_meta(Default::default());
        assert_eq!(am, bm);
        assert_eq!(a.chain.meta().relabelled_by.as_deref(), Some("pivotal:manual"));
        assert!(manual
            .run(&RelabelRequest::new(&chain).groups(1))
            .is_err());
    }

    #[test]
    fn relabelled_by_tags_name_the_method() {
        let chain = switching_chain();
        let data = the_data();
        let cases = [
            ("pivotal:e", "pivotal:e"),
            ("pk", "pk"),
            ("stephens", "stephens"),
            ("ordering:pi", "ordering:pi"),
        ];
        for (tag, expected) in cases {
            let out = relabel_strategy(tag)
                .unwrap()
                .run(&RelabelRequest::new(&chain).data(&data).seed(1))
                .unwrap();
            assert_eq!(
                out.chain.meta().relabelled_by.as_deref(),
                Some(expected),
                "{tag}"
            );
        }
    }
}
