//! Partition schemes: the `div` objects that bin a sample set.
//!
//! Uniform-mass divisions cut a sample ordering into bins of equal total
//! weight (equal counts when nothing is aggregated; sizes differ by at most
//! one sample). Two orderings are used: sorted by a key (evaluation-style
//! binning) and randomly shuffled (the multi-view divisions).
//!
//! Shuffling is content-keyed rather than index-keyed: samples are first
//! placed in a canonical order derived from a stable digest of their content,
//! and rows sharing identical `(features, prediction)` — exactly the groups
//! that [`crate::data::aggregate_dataset`] collapses — form atomic runs that
//! move together. This makes every shuffle-based metric invariant under
//! input reordering and makes a dataset and its aggregated form produce the
//! same divisions, at the cost of treating indistinguishable rows as one
//! unit (they are interchangeable anyway).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::DetRng;
use crate::{Error, Result};

/// How a division was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivisionKind {
    /// Sorted by a key, then cut into equal-mass bins.
    SortedUniformMass,
    /// Randomly shuffled, then cut into equal-mass bins.
    ShuffledUniformMass,
    /// Key range split into equal-width intervals.
    EqualWidth,
    /// Bins are the value groups of one discrete feature.
    FeaturePartition,
}

/// A partition of a sample set into disjoint bins of dataset indices.
#[derive(Debug, Clone)]
pub struct DivisionScheme {
    pub bins: Vec<Vec<usize>>,
    pub kind: DivisionKind,
}

impl DivisionScheme {
    /// Number of bins.
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bins grouped by the values of feature `f` over `indices`.
    ///
    /// Bins come out ordered by feature value; empty value groups are
    /// omitted.
    pub fn from_feature(dataset: &Dataset, indices: &[usize], f: usize) -> Self {
        let col = dataset.feature_column(f);
        let card = dataset.feature_cardinalities()[f] as usize;
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); card];
        for &i in indices {
            bins[col[i] as usize].push(i);
        }
        bins.retain(|b| !b.is_empty());
        Self {
            bins,
            kind: DivisionKind::FeaturePartition,
        }
    }
}

/// Canonical content ordering of a sample subset.
///
/// `order` lists dataset indices sorted by `(group digest, full digest,
/// index)`; `run_starts` marks maximal runs of equal group digest; `full`
/// carries the full digests aligned with `order`.
pub(crate) struct CanonicalRuns {
    pub order: Vec<u32>,
    pub run_starts: Vec<u32>,
    pub full: Vec<u64>,
}

pub(crate) fn canonical_runs(dataset: &Dataset, indices: &[usize]) -> CanonicalRuns {
    let mut keyed: Vec<(u64, u64, u32)> = indices
        .iter()
        .map(|&i| (dataset.group_digest(i), dataset.full_digest(i), i as u32))
        .collect();
    keyed.sort_unstable();
    let mut run_starts = Vec::with_capacity(keyed.len() + 1);
    run_starts.push(0);
    for w in 1..keyed.len() {
        if keyed[w].0 != keyed[w - 1].0 {
            run_starts.push(w as u32);
        }
    }
    run_starts.push(keyed.len() as u32);
    CanonicalRuns {
        full: keyed.iter().map(|&(_, f, _)| f).collect(),
        order: keyed.into_iter().map(|(_, _, i)| i).collect(),
        run_starts,
    }
}

/// Shuffles the canonical runs with Fisher-Yates and writes the flattened
/// sample order into `out`.
///
/// Samples inside a multi-member run (rows identical up to outcome fields)
/// are ordered by a digest-and-duplicate-rank random key, so positions never
/// correlate with label values and copies of a duplicated row interleave the
/// way an index shuffle would. The keys depend only on content, keeping the
/// resulting partition invariant under input reordering.
pub(crate) fn shuffle_runs_into(runs: &CanonicalRuns, rng: &mut DetRng, out: &mut Vec<u32>) {
    use rand::RngCore;
    let salt = rng.next_u64();
    let n_runs = runs.run_starts.len() - 1;

    // multiply-shift draws (bias of order i / 2^64, far below anything
    // observable) keep this innermost loop branch-free
    if n_runs == runs.order.len() {
        // every run is a single sample: shuffle the samples directly
        out.clear();
        out.extend_from_slice(&runs.order);
        for i in (1..out.len()).rev() {
            let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
            out.swap(i, j);
        }
        return;
    }

    let mut perm: Vec<u32> = (0..n_runs as u32).collect();
    for i in (1..n_runs).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    out.clear();
    let mut scratch: Vec<(u64, u32)> = Vec::new();
    for &r in &perm {
        let lo = runs.run_starts[r as usize] as usize;
        let hi = runs.run_starts[r as usize + 1] as usize;
        if hi - lo == 1 {
            out.push(runs.order[lo]);
        } else {
            scratch.clear();
            let mut dup_rank = 0u64;
            for w in lo..hi {
                if w > lo && runs.full[w] == runs.full[w - 1] {
                    dup_rank += 1;
                } else {
                    dup_rank = 0;
                }
                let key = crate::rng::mix(crate::rng::mix(salt ^ runs.full[w]) ^ dup_rank);
                scratch.push((key, runs.order[w]));
            }
            scratch.sort_unstable();
            out.extend(scratch.iter().map(|&(_, i)| i));
        }
    }
}

/// Assigns weighted samples, walked in order, to `t` equal-mass bins.
///
/// A sample lands in the bin containing the midpoint of its weight interval,
/// which reduces to plain count-slicing for unit weights (bin sizes differ by
/// at most one, remainder spread over the trailing bins).
pub(crate) fn uniform_mass_assign(
    order: &[u32],
    weights: &[f64],
    total_weight: f64,
    t: usize,
    mut assign: impl FnMut(u32, usize),
) {
    let scale = t as f64 / total_weight;
    let mut cum = 0.0;
    for &i in order {
        let w = weights[i as usize];
        let bin = ((cum + 0.5 * w) * scale) as usize;
        assign(i, bin.min(t - 1));
        cum += w;
    }
}

/// Number of equal-mass bins for a target per-bin weight.
pub(crate) fn bin_count_for_size(total_weight: f64, bin_size: usize) -> Result<usize> {
    if bin_size < 1 {
        return Err(Error::InvalidConfig("bin size must be >= 1".into()));
    }
    let t = (total_weight / bin_size as f64).floor() as usize;
    if t < 2 {
        return Err(Error::DegenerateDivision {
            n: total_weight as usize,
            bin_size,
        });
    }
    Ok(t)
}

/// Builds a division of the whole dataset.
///
/// `sort_key` (aligned with the dataset) is required for the sorted and
/// equal-width kinds. Uniform-mass kinds produce `floor(weight / bin_size)`
/// bins; fewer than two is an error.
pub fn make_division(
    dataset: &Dataset,
    bin_size: usize,
    kind: DivisionKind,
    rng: &mut DetRng,
    sort_key: Option<&[f64]>,
) -> Result<DivisionScheme> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    make_division_on(dataset, &indices, bin_size, kind, rng, sort_key)
}

/// [`make_division`] restricted to a subset of dataset indices.
pub fn make_division_on(
    dataset: &Dataset,
    indices: &[usize],
    bin_size: usize,
    kind: DivisionKind,
    rng: &mut DetRng,
    sort_key: Option<&[f64]>,
) -> Result<DivisionScheme> {
    let weights = dataset.weights();
    let total: f64 = indices.iter().map(|&i| weights[i]).sum();
    match kind {
        DivisionKind::ShuffledUniformMass => {
            let t = bin_count_for_size(total, bin_size)?;
            let runs = canonical_runs(dataset, indices);
            let mut order = Vec::with_capacity(indices.len());
            shuffle_runs_into(&runs, rng, &mut order);
            let mut bins = vec![Vec::new(); t];
            uniform_mass_assign(&order, weights, total, t, |i, b| bins[b].push(i as usize));
            Ok(DivisionScheme { bins, kind })
        }
        DivisionKind::SortedUniformMass => {
            let key = sort_key.ok_or(Error::MissingSortKey(kind))?;
            let t = bin_count_for_size(total, bin_size)?;
            let order = sorted_order(dataset, indices, key);
            let mut bins = vec![Vec::new(); t];
            uniform_mass_assign(&order, weights, total, t, |i, b| bins[b].push(i as usize));
            Ok(DivisionScheme { bins, kind })
        }
        DivisionKind::EqualWidth => {
            let key = sort_key.ok_or(Error::MissingSortKey(kind))?;
            let t = bin_count_for_size(total, bin_size)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in indices {
                lo = lo.min(key[i]);
                hi = hi.max(key[i]);
            }
            if hi <= lo || !hi.is_finite() || !lo.is_finite() {
                return Err(Error::DegenerateDivision {
                    n: indices.len(),
                    bin_size,
                });
            }
            let scale = t as f64 / (hi - lo);
            let mut bins = vec![Vec::new(); t];
            for &i in indices {
                let b = (((key[i] - lo) * scale) as usize).min(t - 1);
                bins[b].push(i);
            }
            bins.retain(|b| !b.is_empty());
            Ok(DivisionScheme { bins, kind })
        }
        DivisionKind::FeaturePartition => Err(Error::InvalidConfig(
            "feature partitions are built with DivisionScheme::from_feature".into(),
        )),
    }
}

/// Canonical sorted order by `(key, group digest, full digest, index)`.
///
/// Digest tie-breaking keeps equal-key samples in a content-determined
/// order, so sorted divisions are invariant under input reordering and
/// consistent between raw and aggregated data.
pub(crate) fn sorted_order(dataset: &Dataset, indices: &[usize], key: &[f64]) -> Vec<u32> {
    let mut keyed: Vec<(f64, u64, u64, u32)> = indices
        .iter()
        .map(|&i| {
            (
                key[i],
                dataset.group_digest(i),
                dataset.full_digest(i),
                i as u32,
            )
        })
        .collect();
    keyed.sort_unstable_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    keyed.into_iter().map(|(_, _, _, i)| i).collect()
}

/// Splits `n` into `t` uniform-mass bins by count only (unit-weight form of
/// [`uniform_mass_assign`], used by independent test oracles).
#[cfg(test)]
pub(crate) fn count_bin_of(position: usize, n: usize, t: usize) -> usize {
    (((position as f64 + 0.5) * t as f64 / n as f64) as usize).min(t - 1)
}
