//! Reference partitions from pairwise dissimilarities.
//!
//! The reference grouping that pins down one unit per group is obtained
//! by complete-linkage agglomerative clustering of `1 - c`, cut into the
//! desired number of groups. This module also provides loss-based
//! alternatives and the partition comparison metrics used to evaluate
//! relabelled output: weighted pair-disagreement distance, its posterior
//! expectation, the expected Binder loss against a similarity matrix,
//! and the adjusted Rand index.

use crate::chain::MixtureChain;
use crate::error::{Error, Result};
use crate::similarity::{Dissimilarity, SimilarityMatrix};

/// Hard grouping of `n` units with labels canonicalised to first
/// appearance: unit 1 always carries label 1, and every label in
/// `1..=groups` occurs at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<u32>,
    groups: usize,
}

impl Partition {
    /// Builds a partition from arbitrary group labels, renumbering them
    /// by order of first appearance.
    pub fn from_labels(labels: &[u32]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("partition has no units".into()));
        }
        let mut mapping: Vec<(u32, u32)> = Vec::new();
        let mut canonical = Vec::with_capacity(labels.len());
        for &raw in labels {
            let found = mapping.iter().find(|(from, _)| *from == raw);
            let label = match found {
                Some(&(_, to)) => to,
                None => {
                    let to = mapping.len() as u32 + 1;
                    mapping.push((raw, to));
                    to
                }
            };
            canonical.push(label);
        }
        Ok(Partition {
            labels: canonical,
            groups: mapping.len(),
        })
    }

    /// Partition induced by the allocation vector of iteration `h`
    /// (0-based) of a chain.
    pub fn from_chain_iteration(chain: &MixtureChain, h: usize) -> Self {
        Partition::from_labels(chain.z_row(h)).expect("chains have at least one unit")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of groups actually present.
    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Canonical 1-based group label per unit.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_of(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// 0-based indices of the units carrying 1-based label `g`.
    pub fn members(&self, g: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == g)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes the labels as one comma-separated line.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let line: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        std::fs::write(path.as_ref(), line.join(",") + "\n")?;
        Ok(())
    }
}

/// One agglomeration step: clusters `a` and `b` (with `a < b`) merge at
/// the given complete-linkage height. Cluster ids follow the usual
/// convention: units are singleton clusters `1..=n`, and the k-th merge
/// (1-based) creates cluster `n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Full agglomeration history over `n` units (`n - 1` merges).
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Partition obtained by stopping the agglomeration once `groups`
    /// clusters remain.
    pub fn cut(&self, groups: usize) -> Result<Partition> {
        if groups == 0 || groups > self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot cut a dendrogram over {} units into {} groups",
                self.n, groups
            )));
        }
        // Track the current cluster id of every unit through the merges.
        let mut cluster: Vec<usize> = (1..=self.n).collect();
        for (k, merge) in self.merges.iter().take(self.n - groups).enumerate() {
            let new_id = self.n + k + 1;
            for c in &mut cluster {
                if *c == merge.a || *c == merge.b {
                    *c = new_id;
                }
            }
        }
        let as_labels: Vec<u32> = cluster.iter().map(|&c| c as u32).collect();
        Partition::from_labels(&as_labels)
    }
}

/// Complete-linkage agglomerative clustering via stored-matrix
/// Lance-Williams updates (`d(a+b, k) = max(d(a, k), d(b, k))`).
///
/// Each step merges the active pair at minimal distance; exact ties are
/// broken towards the lexicographically smallest cluster-id pair, so the
/// result is fully deterministic.
pub fn hclust_complete(dissim: &Dissimilarity) -> Dendrogram {
    let n = dissim.n();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = dissim.at(i, j);
        }
    }
    let mut alive = vec![true; n];
    let mut id: Vec<usize> = (1..=n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for sa in 0..n {
            if !alive[sa] {
                continue;
            }
            for sb in (sa + 1)..n {
                if !alive[sb] {
                    continue;
                }
                let dist = d[sa * n + sb];
                let (lo, hi) = if id[sa] < id[sb] {
                    (id[sa], id[sb])
                } else {
                    (id[sb], id[sa])
                };
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => {
                        dist < bd || (dist == bd && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((dist, lo, hi, sa, sb));
                }
            }
        }
        let (height, lo, hi, sa, sb) = best.expect("at least two clusters remain");
        merges.push(Merge { a: lo, b: hi, height });
        for k in 0..n {
            if alive[k] && k != sa && k != sb {
                let updated = d[sa * n + k].max(d[sb * n + k]);
                d[sa * n + k] = updated;
                d[k * n + sa] = updated;
            }
        }
        alive[sb] = false;
        id[sa] = n + step + 1;
    }
    Dendrogram { n, merges }
}

/// Weighted count of pair disagreements between a reference partition
/// `a` and a drawn partition `b`: `d1` weighs pairs co-clustered in `b`
/// but split in `a`, `d2` pairs split in `b` but co-clustered in `a`.
pub fn partition_distance(a: &Partition, b: &Partition, d1: f64, d2: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "partitions cover {} and {} units",
            a.len(),
            b.len()
        )));
    }
    Ok(pair_disagreement(a.labels(), b.labels(), d1, d2))
}

fn pair_disagreement(a: &[u32], b: &[u32], d1: f64, d2: f64) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            let together_a = a[i] == a[k];
            let together_b = b[i] == b[k];
            if together_b && !together_a {
                total += d1;
            } else if !together_b && together_a {
                total += d2;
            }
        }
    }
    total
}

/// Average weighted pair-disagreement distance between `z_star` and the
/// allocation draws of a chain. With `d1 == d2 == 1` this equals the
/// expected Binder loss against the chain's similarity matrix.
pub fn expected_distance_mcmc(
    z_star: &Partition,
    chain: &MixtureChain,
    d1: f64,
    d2: f64,
) -> Result<f64> {
    if z_star.len() != chain.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} units, chain has {}",
            z_star.len(),
            chain.n()
        )));
    }
    let mut total = 0.0;
    for h in 0..chain.h() {
        total += pair_disagreement(z_star.labels(), chain.z_row(h), d1, d2);
    }
    Ok(total / chain.h() as f64)
}

/// Expected Binder loss of a hard partition against estimated
/// co-clustering probabilities: the sum over unit pairs of
/// `|1[same group] - c_ik|`.
pub fn expected_binder_loss(z_star: &Partition, sim: &SimilarityMatrix) -> Result<f64> {
    if z_star.len() != sim.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} units, similarity is over {}",
            z_star.len(),
            sim.n()
        )));
    }
    let labels = z_star.labels();
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            let delta = if labels[i] == labels[k] { 1.0 } else { 0.0 };
            total += (delta - sim.at(i, k)).abs();
        }
    }
    Ok(total)
}

/// Picks the candidate with minimal expected Binder loss, returning its
/// index and loss. Ties go to the earliest candidate.
pub fn select_partition(
    candidates: &[Partition],
    sim: &SimilarityMatrix,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "partition selection needs at least one candidate".into(),
        ));
    }
    let mut best = (0usize, f64::INFINITY);
    for (idx, cand) in candidates.iter().enumerate() {
        let loss = expected_binder_loss(cand, sim)?;
        if loss < best.1 {
            best = (idx, loss);
        }
    }
    Ok(best)
}

/// Upper bound on `n` for [`min_binder_exhaustive`]; the number of set
/// partitions explodes beyond this.
pub const EXHAUSTIVE_MAX_UNITS: usize = 10;

/// Finds the partition with at most `max_groups` groups minimising the
/// expected Binder loss by enumerating every set partition (restricted
/// growth strings in lexicographic order; ties go to the first optimum).
/// Only feasible for `n <= 10`.
pub fn min_binder_exhaustive(
    sim: &SimilarityMatrix,
    max_groups: usize,
) -> Result<(Partition, f64)> {
    let n = sim.n();
    if n > EXHAUSTIVE_MAX_UNITS {
        return Err(Error::InvalidArgument(format!(
            "exhaustive partition search supports at most {EXHAUSTIVE_MAX_UNITS} units, got {n}"
        )));
    }
    if max_groups == 0 {
        return Err(Error::InvalidArgument(
            "exhaustive partition search needs max_groups >= 1".into(),
        ));
    }
    let mut best: Option<(Partition, f64)> = None;
    let mut rgs = vec![0u32; n];
    loop {
        let partition = Partition::from_labels(&rgs.iter().map(|&v| v + 1).collect::<Vec<_>>())?;
        if partition.groups() <= max_groups {
            let loss = expected_binder_loss(&partition, sim)?;
            if best.as_ref().map_or(true, |(_, bl)| loss < *bl) {
                best = Some((partition, loss));
            }
        }
        if !next_restricted_growth(&mut rgs) {
            break;
        }
    }
    Ok(best.expect("at least the all-in-one partition is enumerated"))
}

/// Advances a restricted growth string in place; false once exhausted.
/// RGS constraint: `s[0] == 0` and `s[i] <= max(s[..i]) + 1`.
fn next_restricted_growth(s: &mut [u32]) -> bool {
    let n = s.len();
    for i in (1..n).rev() {
        let max_prefix = s[..i].iter().copied().max().unwrap_or(0);
        if s[i] <= max_prefix {
            s[i] += 1;
            for v in &mut s[i + 1..] {
                *v = 0;
            }
            return true;
        }
    }
    false
}

/// Adjusted Rand index between two partitions of the same units; 1 for
/// identical groupings, near 0 for independent ones.
pub fn adjusted_rand(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "partitions cover {} and {} units",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let ga = a.groups();
    let gb = b.groups();
    let mut table = vec![0u64; ga * gb];
    let mut rows = vec![0u64; ga];
    let mut cols = vec![0u64; gb];
    for i in 0..n {
        let s = a.label_of(i) as usize - 1;
        let t = b.label_of(i) as usize - 1;
        table[s * gb + t] += 1;
        rows[s] += 1;
        cols[t] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&v| choose2(v)).sum();
    let row_sum: f64 = rows.iter().map(|&v| choose2(v)).sum();
    let col_sum: f64 = cols.iter().map(|&v| choose2(v)).sum();
    let expected = row_sum * col_sum / choose2(n as u64);
    let max_index = 0.5 * (row_sum + col_sum);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_unit_similarity() -> SimilarityMatrix {
        SimilarityMatrix::from_values(
            4,
            vec![
                1.0, 0.9, 0.1, 0.0, //
                0.9, 1.0, 0.0, 0.1, //
                0.1, 0.0, 1.0, 0.8, //
                0.0, 0.1, 0.8, 1.0,
            ],
        )
        .unwrap()
    }

    #[test]
    fn partition_canonicalises_labels() {
        let p = Partition::from_labels(&[7, 7, 2, 9, 2]).unwrap();
        assert_eq!(p.labels(), &[1, 1, 2, 3, 2]);
        assert_eq!(p.groups(), 3);
        assert_eq!(p.members(2), vec![2, 4]);
        assert!(Partition::from_labels(&[]).is_err());
    }

    #[test]
    fn hclust_two_pairs() {
        let d = four_unit_similarity().dissimilarity();
        let dend = hclust_complete(&d);
        let heights = dend.heights();
        assert_eq!(heights.len(), 3);
        assert!((heights[0] - 0.1).abs() < 1e-15);
        assert!((heights[1] - 0.2).abs() < 1e-15);
        assert!((heights[2] - 1.0).abs() < 1e-15);
        assert_eq!(dend.cut(2).unwrap().labels(), &[1, 1, 2, 2]);
        assert_eq!(dend.cut(4).unwrap().labels(), &[1, 2, 3, 4]);
        assert_eq!(dend.cut(1).unwrap().labels(), &[1, 1, 1, 1]);
        assert!(dend.cut(0).is_err());
        assert!(dend.cut(5).is_err());
    }

    #[test]
    fn hclust_breaks_ties_towards_low_ids() {
        let d = Dissimilarity::from_values(
            4,
            vec![
                0.0, 0.5, 0.5, 0.5, //
                0.5, 0.0, 0.5, 0.5, //
                0.5, 0.5, 0.0, 0.5, //
                0.5, 0.5, 0.5, 0.0,
            ],
        )
        .unwrap();
        let dend = hclust_complete(&d);
        assert_eq!((dend.merges()[0].a, dend.merges()[0].b), (1, 2));
        assert_eq!((dend.merges()[1].a, dend.merges()[1].b), (3, 4));
        assert_eq!(dend.cut(2).unwrap().labels(), &[1, 1, 2, 2]);
    }

    #[test]
    fn pair_disagreement_weights() {
        let a = Partition::from_labels(&[1, 1, 2, 2]).unwrap();
        let b = Partition::from_labels(&[1, 1, 1, 2]).unwrap();
        // Pairs (1,3) and (2,3) are together in b only; (3,4) in a only.
        assert_eq!(partition_distance(&a, &b, 1.0, 1.0).unwrap(), 3.0);
        assert_eq!(partition_distance(&a, &b, 2.0, 1.0).unwrap(), 5.0);
        assert_eq!(partition_distance(&a, &b, 1.0, 3.0).unwrap(), 5.0);
        assert_eq!(partition_distance(&a, &a, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn binder_loss_example() {
        let sim = four_unit_similarity();
        let p = Partition::from_labels(&[1, 1, 2, 2]).unwrap();
        // |1-.9| + |0-.1| + |0-0| + |0-0| + |0-.1| + |1-.8| = 0.5
        let loss = expected_binder_loss(&p, &sim).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        let lumped = Partition::from_labels(&[1, 1, 1, 1]).unwrap();
        let worse = expected_binder_loss(&lumped, &sim).unwrap();
        assert!(worse > loss);
    }

    #[test]
    fn selection_prefers_lower_loss_and_earlier_ties() {
        let sim = four_unit_similarity();
        let cands = vec![
            Partition::from_labels(&[1, 1, 1, 1]).unwrap(),
            Partition::from_labels(&[1, 1, 2, 2]).unwrap(),
            Partition::from_labels(&[1, 1, 2, 2]).unwrap(),
        ];
        let (idx, loss) = select_partition(&cands, &sim).unwrap();
        assert_eq!(idx, 1);
        assert!((loss - 0.5).abs() < 1e-15);
        assert!(select_partition(&[], &sim).is_err());
    }

    #[test]
    fn exhaustive_search_agrees_on_the_pair_structure() {
        let sim = four_unit_similarity();
        let (best, loss) = min_binder_exhaustive(&sim, 2).unwrap();
        assert_eq!(best.labels(), &[1, 1, 2, 2]);
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn restricted_growth_enumerates_bell_numbers() {
        let mut count = 0usize;
        let mut s = vec![0u32; 4];
        loop {
            count += 1;
            if !next_restricted_growth(&mut s) {
                break;
            }
        }
        assert_eq!(count, 15); // Bell(4)
    }

    #[test]
    fn adjusted_rand_known_values() {
        let a = Partition::from_labels(&[1, 1, 2, 2]).unwrap();
        let b = Partition::from_labels(&[1, 2, 1, 2]).unwrap();
        assert_eq!(adjusted_rand(&a, &a).unwrap(), 1.0);
        assert!((adjusted_rand(&a, &b).unwrap() - -0.5).abs() < 1e-12);
        // Relabelling a partition does not change the index.
        let c = Partition::from_labels(&[2, 2, 1, 1]).unwrap();
        assert_eq!(adjusted_rand(&a, &c).unwrap(), 1.0);
        // Degenerate single-group vs single-group.
        let one = Partition::from_labels(&[1, 1, 1, 1]).unwrap();
        assert_eq!(adjusted_rand(&one, &one).unwrap(), 1.0);
    }

    proptest! {
        /// Complete-linkage merge heights never decrease, and cutting at
        /// g groups yields exactly g groups.
        #[test]
        fn dendrogram_properties(
            raw in proptest::collection::vec(0.0f64..=1.0, 15), // 6 choose 2
            g in 1usize..=6,
        ) {
            let n = 6;
            let mut values = vec![0.0; n * n];
            let mut it = raw.iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = *it.next().unwrap();
                    values[i * n + j] = v;
                    values[j * n + i] = v;
                }
            }
            let dissim = Dissimilarity::from_values(n, values).unwrap();
            let dend = hclust_complete(&dissim);
            let heights = dend.heights();
            for w in heights.windows(2) {
                prop_assert!(w[0] <= w[1], "heights decreased: {:?}", heights);
            }
            let part = dend.cut(g).unwrap();
            prop_assert_eq!(part.groups(), g);
            prop_assert_eq!(part.labels()[0], 1);
        }

        /// The weighted distance is non-negative, zero only on equal
        /// partitions (when weights are positive), and swapping the
        /// arguments swaps the roles of the weights.
        #[test]
        fn distance_properties(
            la in proptest::collection::vec(1u32..=3, 8),
            lb in proptest::collection::vec(1u32..=3, 8),
        ) {
            let a = Partition::from_labels(&la).unwrap();
            let b = Partition::from_labels(&lb).unwrap();
            let d_ab = partition_distance(&a, &b, 2.0, 5.0).unwrap();
            let d_ba = partition_distance(&b, &a, 5.0, 2.0).unwrap();
            prop_assert!(d_ab >= 0.0);
            prop_assert_eq!(d_ab, d_ba);
            if a == b {
                prop_assert_eq!(d_ab, 0.0);
            }
        }
    }
}
