//! Pivot selection and pivotal relabelling.
//!
//! Given a reference partition of the units into `G_hat` groups, one
//! pivotal unit is chosen per group, picked to be strongly tied to its
//! own group and/or maximally separated from the others. Iterations
//! where the pivots fail to disambiguate the components are dropped;
//! every remaining iteration is permuted so that each pivot ends up in
//! the group it represents.
//!
//! Six scored selection criteria are provided, identified by the tags
//! `a` to `f` (all aggregates exclude the unit's own self-similarity):
//!
//! | tag | rule |
//! |-----|------|
//! | `a` | maximise the largest within-group similarity |
//! | `b` | maximise the sum of within-group similarities |
//! | `c` | minimise the smallest within-group similarity |
//! | `d` | minimise the smallest outside-group similarity |
//! | `e` | minimise the sum of outside-group similarities |
//! | `f` | maximise within-group sum minus outside-group sum |
//!
//! Tag `c` deliberately picks weakly attached units and serves as a
//! negative control in evaluations. The alternative `mus` searcher looks
//! for tuples of units, one per group, whose pairwise similarities are
//! all within tolerance of zero (an identity submatrix) and picks the
//! units appearing in the most such tuples.

use crate::chain::MixtureChain;
use crate::error::{Error, Result};
use crate::partitioning::Partition;
use crate::similarity::SimilarityMatrix;

/// Scored pivot-selection rules, tagged `a` to `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// `a`: maximise the largest within-group similarity.
    WithinMax,
    /// `b`: maximise the within-group similarity sum.
    WithinSum,
    /// `c`: minimise the smallest within-group similarity.
    WithinMin,
    /// `d`: minimise the smallest outside-group similarity.
    OutsideMin,
    /// `e`: minimise the outside-group similarity sum.
    OutsideSum,
    /// `f`: maximise within-group sum minus outside-group sum.
    Margin,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::WithinMax,
        Criterion::WithinSum,
        Criterion::WithinMin,
        Criterion::OutsideMin,
        Criterion::OutsideSum,
        Criterion::Margin,
    ];

    /// Single-letter tag used in configuration and reports.
    pub fn tag(self) -> &'static str {
        match self {
            Criterion::WithinMax => "a",
            Criterion::WithinSum => "b",
            Criterion::WithinMin => "c",
            Criterion::OutsideMin => "d",
            Criterion::OutsideSum => "e",
            Criterion::Margin => "f",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.tag() == tag)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown pivot criterion {tag:?}, expected one of a, b, c, d, e, f"
                ))
            })
    }

    /// Score for a candidate and whether higher scores win.
    fn score(self, sim: &SimilarityMatrix, unit: usize, part: &Partition) -> (f64, bool) {
        let own = part.label_of(unit);
        let mut within_sum = 0.0;
        let mut within_max = f64::NEG_INFINITY;
        let mut within_min = f64::INFINITY;
        let mut outside_sum = 0.0;
        let mut outside_min = f64::INFINITY;
        for j in 0..part.len() {
            if j == unit {
                continue;
            }
            let c = sim.at(unit, j);
            if part.label_of(j) == own {
                within_sum += c;
                within_max = within_max.max(c);
                within_min = within_min.min(c);
            } else {
                outside_sum += c;
                outside_min = outside_min.min(c);
            }
        }
        match self {
            Criterion::WithinMax => (within_max, true),
            Criterion::WithinSum => (within_sum, true),
            Criterion::WithinMin => (within_min, false),
            Criterion::OutsideMin => (outside_min, false),
            Criterion::OutsideSum => (outside_sum, false),
            Criterion::Margin => (within_sum - outside_sum, true),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// One pivotal unit per group. `units[k]` is the 1-based unit number
/// anchoring group `k + 1`; `method` records how the set was obtained
/// (a criterion tag, `"mus"`, or `"manual"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotSet {
    pub units: Vec<usize>,
    pub method: String,
}

impl PivotSet {
    /// Wraps caller-chosen pivots, validating that they are distinct
    /// and within `1..=n`.
    pub fn manual(units: Vec<usize>, n: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("pivot set is empty".into()));
        }
        for (k, &u) in units.iter().enumerate() {
            if u < 1 || u > n {
                return Err(Error::InvalidArgument(format!(
                    "pivot {} is unit {}, outside 1..={}",
                    k + 1,
                    u,
                    n
                )));
            }
            if units[..k].contains(&u) {
                return Err(Error::InvalidArgument(format!(
                    "unit {} appears twice in the pivot set",
                    u
                )));
            }
        }
        Ok(PivotSet {
            units,
            method: "manual".into(),
        })
    }

    /// Number of groups the set anchors.
    pub fn groups(&self) -> usize {
        self.units.len()
    }

    /// 0-based unit index of the pivot anchoring group `k + 1`.
    pub fn idx(&self, k: usize) -> usize {
        self.units[k] - 1
    }
}

/// Selects one pivot per group of `part` by the given criterion. Ties
/// resolve to the lowest unit number; for a singleton group the sole
/// member is returned.
pub fn select_pivots_criterion(
    sim: &SimilarityMatrix,
    part: &Partition,
    criterion: Criterion,
) -> Result<PivotSet> {
    if sim.n() != part.len() {
        return Err(Error::DimensionMismatch(format!(
            "similarity covers {} units, partition {}",
            sim.n(),
            part.len()
        )));
    }
    let mut units = Vec::with_capacity(part.groups());
    for g in 1..=part.groups() as u32 {
        let members = part.members(g);
        let mut best: Option<(usize, f64)> = None;
        for &u in &members {
            let (score, maximize) = criterion.score(sim, u, part);
            let wins = match best {
                None => true,
                Some((_, bs)) => {
                    if maximize {
                        score > bs
                    } else {
                        score < bs
                    }
                }
            };
            if wins {
                best = Some((u, score));
            }
        }
        let (u, _) = best.expect("every group label has at least one member");
        units.push(u + 1);
    }
    Ok(PivotSet {
        units,
        method: criterion.tag().to_string(),
    })
}

/// Largest group count the identity-submatrix search accepts; candidate
/// tuples grow as `m^groups`.
pub const MUS_MAX_GROUPS: usize = 6;

/// Parameters of the identity-submatrix pivot search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusParams {
    /// Candidates retained per group (the units with the most
    /// near-zero similarities towards other groups).
    pub m: usize,
    /// Similarities at or below this tolerance count as zero.
    pub eps: f64,
}

impl Default for MusParams {
    fn default() -> Self {
        MusParams { m: 5, eps: 0.0 }
    }
}

/// Identity-submatrix pivot search. Per group, the `m` units with the
/// most near-zero cross-group similarities become candidates; every
/// cross-group tuple of candidates whose pairwise similarities are all
/// at most `eps` counts once for each of its members; each group's most
/// counted candidate (ties to the lowest unit number) becomes the pivot.
pub fn select_pivots_mus(
    sim: &SimilarityMatrix,
    part: &Partition,
    params: MusParams,
) -> Result<PivotSet> {
    if sim.n() != part.len() {
        return Err(Error::DimensionMismatch(format!(
            "similarity covers {} units, partition {}",
            sim.n(),
            part.len()
        )));
    }
    let groups = part.groups();
    if groups < 2 {
        return Err(Error::InvalidArgument(
            "identity-submatrix search needs at least two groups".into(),
        ));
    }
    if groups > MUS_MAX_GROUPS {
        return Err(Error::InvalidArgument(format!(
            "identity-submatrix search supports at most {MUS_MAX_GROUPS} groups, got {groups}"
        )));
    }
    if params.m == 0 {
        return Err(Error::InvalidArgument(
            "identity-submatrix search needs m >= 1 candidates per group".into(),
        ));
    }
    if !(params.eps >= 0.0) {
        return Err(Error::InvalidArgument(
            "identity-submatrix tolerance must be non-negative".into(),
        ));
    }

    let n = part.len();
    let labels = part.labels();
    // Near-zero cross-group similarity count per unit.
    let mut zero_count = vec![0usize; n];
    for u in 0..n {
        for j in 0..n {
            if labels[j] != labels[u] && sim.at(u, j) <= params.eps {
                zero_count[u] += 1;
            }
        }
    }

    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(groups);
    for g in 1..=groups as u32 {
        let mut members = part.members(g);
        members.sort_by(|&a, &b| zero_count[b].cmp(&zero_count[a]).then(a.cmp(&b)));
        members.truncate(params.m);
        candidates.push(members);
    }

    // Count, for every candidate, the cross-group tuples it belongs to
    // whose pairwise similarities are all within tolerance of zero.
    let mut tuple_counts = vec![0u64; n];
    let mut found_any = false;
    let mut pick = vec![0usize; groups];
    'outer: loop {
        let tuple: Vec<usize> = (0..groups).map(|g| candidates[g][pick[g]]).collect();
        let separated = (0..groups).all(|a| {
            ((a + 1)..groups).all(|b| sim.at(tuple[a], tuple[b]) <= params.eps)
        });
        if separated {
            found_any = true;
            for &u in &tuple {
                tuple_counts[u] += 1;
            }
        }
        // Advance the mixed-radix counter over candidate positions.
        for g in (0..groups).rev() {
            pick[g] += 1;
            if pick[g] < candidates[g].len() {
                continue 'outer;
            }
            pick[g] = 0;
        }
        break;
    }
    if !found_any {
        return Err(Error::MusNoSeparatedPivots);
    }

    let mut units = Vec::with_capacity(groups);
    for cand in &candidates {
        let mut sorted = cand.clone();
        sorted.sort_unstable();
        let mut best = sorted[0];
        for &u in &sorted[1..] {
            if tuple_counts[u] > tuple_counts[best] {
                best = u;
            }
        }
        units.push(best + 1);
    }
    Ok(PivotSet {
        units,
        method: "mus".into(),
    })
}

/// Classification of every iteration of a chain against a pivot set.
/// The three vectors hold disjoint, strictly increasing 1-based
/// iteration numbers and together cover `1..=H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationFilter {
    /// Iterations that can be anchored: no excess groups, all pivots in
    /// distinct components.
    pub kept: Vec<usize>,
    /// Iterations whose draw occupies more distinct components than
    /// there are pivots.
    pub excess_groups: Vec<usize>,
    /// Iterations (not already excess) where at least two pivots share
    /// a component.
    pub pivot_collisions: Vec<usize>,
}

impl IterationFilter {
    /// Fraction of the chain that survives the filter.
    pub fn kept_proportion(&self) -> f64 {
        let total = self.kept.len() + self.excess_groups.len() + self.pivot_collisions.len();
        self.kept.len() as f64 / total as f64
    }
}

/// Splits the iterations of `chain` by whether the pivots disambiguate
/// them. An iteration is dropped when its draw occupies more distinct
/// components than `pivots.groups()`, or when two pivots land in the
/// same component.
///
/// # Panics
/// If a pivot unit number exceeds the chain's unit count.
pub fn compute_filter(chain: &MixtureChain, pivots: &PivotSet) -> IterationFilter {
    let g_hat = pivots.groups();
    for k in 0..g_hat {
        assert!(
            pivots.idx(k) < chain.n(),
            "pivot unit {} outside the chain's 1..={}",
            pivots.units[k],
            chain.n()
        );
    }
    let mut kept = Vec::new();
    let mut excess = Vec::new();
    let mut collisions = Vec::new();
    let mut seen = vec![false; chain.g()];
    for h in 0..chain.h() {
        let z = chain.z_row(h);
        seen.iter_mut().for_each(|s| *s = false);
        let mut distinct = 0usize;
        for &label in z {
            let slot = &mut seen[label as usize - 1];
            if !*slot {
                *slot = true;
                distinct += 1;
            }
        }
        if distinct > g_hat {
            excess.push(h + 1);
            continue;
        }
        let mut pivot_seen = vec![false; chain.g()];
        let mut collided = false;
        for k in 0..g_hat {
            let label = z[pivots.idx(k)] as usize - 1;
            if pivot_seen[label] {
                collided = true;
                break;
            }
            pivot_seen[label] = true;
        }
        if collided {
            collisions.push(h + 1);
        } else {
            kept.push(h + 1);
        }
    }
    IterationFilter {
        kept,
        excess_groups: excess,
        pivot_collisions: collisions,
    }
}

/// Output of [`relabel`].
#[derive(Debug, Clone)]
pub struct RelabelResult {
    /// Anchored chain over the kept iterations with `pivots.groups()`
    /// components.
    pub chain: MixtureChain,
    pub pivots: PivotSet,
    pub filter: IterationFilter,
    /// `|kept| / H` of the input chain.
    pub kept_proportion: f64,
}

/// Anchors every kept iteration on the pivots: iteration `h` is
/// permuted so that the component containing pivot `k` becomes label
/// `k + 1`, carrying the component's mean, weight and dispersion along.
///
/// The output chain has `pivots.groups()` components. When that is
/// fewer than the input's component count, the dropped (empty)
/// components' weights are removed and each kept row of `pi` is
/// renormalised to sum to one; with equal counts the parameter rows are
/// copied bit-exactly.
pub fn relabel(
    chain: &MixtureChain,
    pivots: &PivotSet,
    filter: &IterationFilter,
) -> Result<RelabelResult> {
    if filter.kept.is_empty() {
        return Err(Error::NoValidIterations);
    }
    let g_hat = pivots.groups();
    let shrinking = g_hat < chain.g();
    let mut builder = MixtureChain::builder(g_hat, chain.n(), chain.d());
    if chain.has_dispersion() {
        builder = builder.phi_width(chain.phi_width());
    }
    let mut meta = chain.meta().clone();
    meta.relabelled_by = Some(format!("pivotal:{}", pivots.method));
    builder = builder.meta(meta);

    let mut z_new = vec![0u32; chain.n()];
    let mut mu_new = vec![0.0; g_hat * chain.d()];
    let mut pi_new = vec![0.0; g_hat];
    let mut phi_new = vec![0.0; g_hat * chain.phi_width()];
    for &h1 in &filter.kept {
        let h = h1 - 1;
        let z = chain.z_row(h);
        // inverse[raw label - 1] = anchored label; kept iterations use
        // exactly the labels the pivots occupy, so the map is total.
        let mut inverse = vec![0u32; chain.g()];
        for k in 0..g_hat {
            let raw = z[pivots.idx(k)] as usize;
            inverse[raw - 1] = k as u32 + 1;
        }
        for (i, &raw) in z.iter().enumerate() {
            let mapped = inverse[raw as usize - 1];
            if mapped == 0 {
                return Err(Error::InvalidArgument(format!(
                    "iteration {} uses component {} which no pivot occupies; \
                     the filter does not belong to this chain and pivot set",
                    h1, raw
                )));
            }
            z_new[i] = mapped;
        }
        for k in 0..g_hat {
            let raw = z[pivots.idx(k)] as usize - 1;
            mu_new[k * chain.d()..(k + 1) * chain.d()].copy_from_slice(chain.mu_at(h, raw));
            pi_new[k] = chain.pi_at(h, raw);
            if chain.has_dispersion() {
                let w = chain.phi_width();
                phi_new[k * w..(k + 1) * w].copy_from_slice(chain.phi_at(h, raw));
            }
        }
        if shrinking {
            let total: f64 = pi_new.iter().sum();
            for p in &mut pi_new {
                *p /= total;
            }
        }
        builder.push_iteration(
            &z_new,
            &mu_new,
            &pi_new,
            chain.has_dispersion().then_some(&phi_new[..]),
        )?;
    }

    Ok(RelabelResult {
        chain: builder.finish()?,
        pivots: pivots.clone(),
        filter: filter.clone(),
        kept_proportion: filter.kept.len() as f64 / chain.h() as f64,
    })
}

/// Computes the filter and relabels in one step.
pub fn pivotal_relabel(chain: &MixtureChain, pivots: &PivotSet) -> Result<RelabelResult> {
    let filter = compute_filter(chain, pivots);
    relabel(chain, pivots, &filter)
}
