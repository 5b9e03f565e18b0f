//! Greedy merging of confident sets into primary clusters.
//!
//! Every vertex gets a ranked list of its closest neighbors under the
//! compression-ratio metric. The directed affinity `Y[a][b]` is the mean
//! number of close neighbors a member of `a` has inside `b`; the symmetric
//! score `Z = Y[a][b] * Y[b][a]` drives the merge order. Merging stops on an
//! explicit rule instead of a user interrupt: a target cluster count, a
//! relative drop of the best score, or an absolute floor.

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{Clustering, Stage};
use crate::confident::ExtractionResult;
use crate::error::{Error, Result};
use crate::pca::PairScores;

/// Ranked close-neighbor lists, one per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    delta_percent: f64,
    /// Per-vertex neighbor lists, best first, tie-broken by vertex index.
    lists: Vec<Vec<u32>>,
}

impl Neighborhoods {
    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn delta_percent(&self) -> f64 {
        self.delta_percent
    }

    /// Nominal list length (`floor(delta/100 * (n-1))`).
    pub fn list_len(&self) -> usize {
        self.lists.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn list(&self, u: usize) -> &[u32] {
        &self.lists[u]
    }

    /// Test-support constructor for hand-built lists.
    pub fn from_lists(lists: Vec<Vec<u32>>, delta_percent: f64) -> Self {
        Neighborhoods {
            delta_percent,
            lists,
        }
    }
}

/// Builds the per-vertex top-`floor(delta/100 * (n-1))` neighbor lists,
/// ordered by score descending with ties broken by vertex index.
pub fn delta_neighborhoods(scores: &PairScores, delta_percent: f64) -> Result<Neighborhoods> {
    if !(delta_percent > 0.0 && delta_percent <= 100.0) {
        return Err(Error::invalid_parameter(format!(
            "delta_percent must be in (0, 100], got {delta_percent}"
        )));
    }
    let n = scores.n();
    let len = ((delta_percent / 100.0) * (n.saturating_sub(1)) as f64).floor() as usize;
    let len = len.min(n.saturating_sub(1));
    let order = |u: usize, a: u32, b: u32| -> std::cmp::Ordering {
        let sa = scores.get(u, a as usize);
        let sb = scores.get(u, b as usize);
        match sb.partial_cmp(&sa) {
            Some(std::cmp::Ordering::Equal) | None => a.cmp(&b),
            Some(o) => o,
        }
    };
    let lists: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut cand: Vec<u32> = (0..n as u32).filter(|&v| v as usize != u).collect();
            if len == 0 {
                return Vec::new();
            }
            if len < cand.len() {
                cand.select_nth_unstable_by(len - 1, |&a, &b| order(u, a, b));
                cand.truncate(len);
            }
            cand.sort_unstable_by(|&a, &b| order(u, a, b));
            cand
        })
        .collect();
    Ok(Neighborhoods {
        delta_percent,
        lists,
    })
}

/// Mean close-neighbor overlap of `a`'s members inside `b` (asymmetric).
pub fn pair_affinity(a: &[u32], b: &[u32], nb: &Neighborhoods) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid_parameter(
            "affinity requires non-empty sets",
        ));
    }
    let mut in_b = vec![false; nb.n()];
    for &v in b {
        if in_b[v as usize] {
            return Err(Error::invalid_parameter("duplicate vertex in set"));
        }
        in_b[v as usize] = true;
    }
    if a.iter().any(|&v| in_b[v as usize]) {
        return Err(Error::invalid_parameter("affinity sets must be disjoint"));
    }
    let total: usize = a
        .iter()
        .map(|&u| {
            nb.list(u as usize)
                .iter()
                .filter(|&&v| in_b[v as usize])
                .count()
        })
        .sum();
    Ok(total as f64 / a.len() as f64)
}

/// When the merge loop hands control back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Stop when this many clusters remain.
    TargetCount { target: usize },
    /// Stop before a merge whose best score falls under `ratio` times the
    /// previous accepted merge's score.
    Gap { ratio: f64 },
    /// Stop before a merge whose best score falls under this floor.
    ZFloor { floor: f64 },
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule::Gap { ratio: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStatus {
    RuleFired,
    /// No live pair had a positive score left.
    ExhaustedScores,
    /// Merged all the way down to one set.
    SingleSet,
}

/// One accepted merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZRecord {
    pub round: usize,
    /// Lowest original set index on each side, for stable reporting.
    pub set_a: usize,
    pub set_b: usize,
    pub z_max: f64,
    pub size_a: usize,
    pub size_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub clustering: Clustering,
    pub z_history: Vec<ZRecord>,
    pub status: MergeStatus,
}

struct LiveSet {
    members: Vec<u32>,
    /// Original extraction indices folded into this set.
    lineage: Vec<usize>,
}

impl LiveSet {
    fn key(&self) -> usize {
        *self.lineage.iter().min().unwrap()
    }
}

/// Greedily merges the confident sets until the stopping rule fires.
pub fn form_primary_clusters(
    extraction: &ExtractionResult,
    nb: &Neighborhoods,
    stop: StoppingRule,
) -> Result<MergeOutcome> {
    if extraction.sets.is_empty() {
        return Err(Error::invalid_parameter(
            "merging requires at least one confident set",
        ));
    }
    if let StoppingRule::TargetCount { target } = stop {
        if target < 1 {
            return Err(Error::invalid_parameter("target count must be >= 1"));
        }
    }
    let n = nb.n();
    let mut live: Vec<LiveSet> = extraction
        .sets
        .iter()
        .enumerate()
        .map(|(i, s)| LiveSet {
            members: s.members.clone(),
            lineage: vec![i],
        })
        .collect();
    let mut z_history = Vec::new();
    let mut prev_accepted: Option<f64> = None;
    let mut status = MergeStatus::SingleSet;
    let mut round = 0usize;

    loop {
        if let StoppingRule::TargetCount { target } = stop {
            if live.len() <= target {
                status = MergeStatus::RuleFired;
                break;
            }
        }
        if live.len() <= 1 {
            status = MergeStatus::SingleSet;
            break;
        }
        let r = live.len();
        // Y over all ordered live pairs, recomputed from scratch
        let pairs: Vec<(usize, usize)> = (0..r)
            .flat_map(|i| (0..r).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let y: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| pair_affinity(&live[i].members, &live[j].members, nb).unwrap_or(0.0))
            .collect();
        let mut ymat = vec![vec![0.0f64; r]; r];
        for (&(i, j), &v) in pairs.iter().zip(&y) {
            ymat[i][j] = v;
        }
        // best Z with deterministic tie-breaking on the lineage keys
        let mut best: Option<(f64, (usize, usize), (usize, usize))> = None;
        for i in 0..r {
            for j in (i + 1)..r {
                let z = ymat[i][j] * ymat[j][i];
                let ka = live[i].key().min(live[j].key());
                let kb = live[i].key().max(live[j].key());
                let cand = (z, (ka, kb), (i, j));
                best = match best {
                    None => Some(cand),
                    Some(cur) => {
                        if z > cur.0 || (z == cur.0 && (ka, kb) < cur.1) {
                            Some(cand)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
        }
        let (z_max, (key_a, key_b), (i, j)) = best.unwrap();
        if z_max <= 0.0 {
            status = MergeStatus::ExhaustedScores;
            break;
        }
        match stop {
            StoppingRule::Gap { ratio } => {
                if let Some(prev) = prev_accepted {
                    if z_max < ratio * prev {
                        status = MergeStatus::RuleFired;
                        break;
                    }
                }
            }
            StoppingRule::ZFloor { floor } => {
                if z_max < floor {
                    status = MergeStatus::RuleFired;
                    break;
                }
            }
            StoppingRule::TargetCount { .. } => {}
        }
        z_history.push(ZRecord {
            round,
            set_a: key_a,
            set_b: key_b,
            z_max,
            size_a: live[i].members.len(),
            size_b: live[j].members.len(),
        });
        prev_accepted = Some(z_max);
        let absorbed = live.remove(j);
        live[i].members.extend(absorbed.members);
        live[i].members.sort_unstable();
        live[i].lineage.extend(absorbed.lineage);
        round += 1;
    }

    live.sort_by_key(|s| s.key());
    let clusters: Vec<Vec<u32>> = live.into_iter().map(|s| s.members).collect();
    // merging never touches the uncovered vertices
    let mut covered = vec![false; n];
    for c in &clusters {
        for &v in c {
            debug_assert!(!covered[v as usize]);
            covered[v as usize] = true;
        }
    }
    let clustering = Clustering::new(
        clusters,
        extraction.remaining.clone(),
        Stage::Primary,
        n,
    );
    Ok(MergeOutcome {
        clustering,
        z_history,
        status,
    })
}

/// CSV export of the merge trajectory: `round,set_a,set_b,z_max,size_a,size_b`.
pub fn write_z_history_csv(history: &[ZRecord], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "round,set_a,set_b,z_max,size_a,size_b")?;
    for rec in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            rec.round, rec.set_a, rec.set_b, rec.z_max, rec.size_a, rec.size_b
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confident::ConfidentSet;
    use crate::ingest::DataMatrix;
    use crate::pca::{all_pair_scores, fit_pca, project};
    use ndarray::Array2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scores_for(n: usize, seed: u64) -> PairScores {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::zeros((5, n));
        for x in a.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let m = DataMatrix::from_dense(a, None, None).unwrap();
        let model = fit_pca(&m, 2, 1e-8, 500, seed).unwrap();
        let p = project(&model, &m).unwrap();
        all_pair_scores(&m, &p).unwrap()
    }

    #[test]
    fn neighborhood_lengths() {
        let s = scores_for(101, 1);
        let nb = delta_neighborhoods(&s, 2.5).unwrap();
        for u in 0..101 {
            assert_eq!(nb.list(u).len(), 2); // floor(0.025 * 100)
        }
    }

    #[test]
    fn full_delta_is_a_full_sort() {
        let s = scores_for(12, 2);
        let nb = delta_neighborhoods(&s, 100.0).unwrap();
        for u in 0..12 {
            let list = nb.list(u);
            assert_eq!(list.len(), 11);
            for w in list.windows(2) {
                let (a, b) = (w[0] as usize, w[1] as usize);
                let (sa, sb) = (s.get(u, a), s.get(u, b));
                assert!(sa > sb || (sa == sb && a < b));
            }
        }
    }

    #[test]
    fn duplicate_twin_ranks_first() {
        // two identical columns: their mutual score is +inf
        let m = DataMatrix::from_dense(
            ndarray::arr2(&[
                [1.0, 1.0, 4.0, -2.0, 0.5],
                [2.0, 2.0, -1.0, 3.0, 0.0],
                [0.0, 0.0, 1.0, 1.0, 2.0],
            ]),
            None,
            None,
        )
        .unwrap();
        let model = fit_pca(&m, 2, 1e-9, 500, 3).unwrap();
        let p = project(&model, &m).unwrap();
        let s = all_pair_scores(&m, &p).unwrap();
        let nb = delta_neighborhoods(&s, 60.0).unwrap();
        assert_eq!(nb.list(0)[0], 1);
        assert_eq!(nb.list(1)[0], 0);
    }

    #[test]
    fn delta_out_of_range() {
        let s = scores_for(10, 3);
        assert!(delta_neighborhoods(&s, 0.0).is_err());
        assert!(delta_neighborhoods(&s, 101.0).is_err());
    }

    #[test]
    fn affinity_examples() {
        let n = 12usize;
        let mut lists = vec![vec![]; n];
        // A = {0,1}, B = {6,7,8}
        lists[0] = vec![6, 7, 8, 2];
        lists[1] = vec![6, 7, 8, 3];
        let nb = Neighborhoods::from_lists(lists, 40.0);
        let y = pair_affinity(&[0, 1], &[6, 7, 8], &nb).unwrap();
        assert_eq!(y, 3.0);

        let mut lists = vec![vec![]; n];
        lists[0] = vec![2, 3, 4];
        lists[1] = vec![5, 9, 10];
        let nb = Neighborhoods::from_lists(lists, 25.0);
        let y = pair_affinity(&[0, 1], &[6, 7, 8], &nb).unwrap();
        assert_eq!(y, 0.0);

        let mut lists = vec![vec![]; n];
        lists[0] = vec![6, 7, 2];
        lists[1] = vec![2, 3, 4];
        let nb = Neighborhoods::from_lists(lists, 25.0);
        let y = pair_affinity(&[0, 1], &[6, 7, 8], &nb).unwrap();
        assert_eq!(y, 1.0); // a sees 2, b sees 0, mean 1
    }

    #[test]
    fn affinity_validates_sets() {
        let nb = Neighborhoods::from_lists(vec![vec![]; 4], 50.0);
        assert!(pair_affinity(&[], &[1], &nb).is_err());
        assert!(pair_affinity(&[0], &[0, 1], &nb).is_err());
    }

    fn extraction_from(sets: Vec<Vec<u32>>, remaining: Vec<u32>) -> ExtractionResult {
        let sets = sets
            .into_iter()
            .enumerate()
            .map(|(i, members)| ConfidentSet {
                prefix: members.clone(),
                prefix_size_c: members.len(),
                mean_degree_filter: members.len() as f64 / 2.0,
                members,
                order_found: i,
            })
            .collect();
        ExtractionResult {
            sets,
            remaining,
            eigen_history: vec![],
            stop_threshold: 3,
        }
    }

    /// Neighborhoods where members of paired sets point at each other.
    /// Pair (0,1) has Z = 4, pair (2,3) has Z = 1, cross Z is tiny.
    fn planted_pairs() -> (ExtractionResult, Neighborhoods) {
        let n = 40usize;
        let sets: Vec<Vec<u32>> = vec![
            (0..10).collect(),
            (10..20).collect(),
            (20..30).collect(),
            (30..40).collect(),
        ];
        let mut lists = vec![vec![]; n];
        for i in 0..10u32 {
            // sets 0 and 1: two hits in the partner each way -> Y = 2, Z = 4
            lists[i as usize] = vec![10 + i, 10 + (i + 1) % 10, (i + 1) % 10];
            lists[(10 + i) as usize] = vec![i, (i + 1) % 10, 10 + (i + 1) % 10];
            // sets 2 and 3: one hit in the partner each way -> Y = 1, Z = 1
            lists[(20 + i) as usize] = vec![30 + i, 20 + (i + 1) % 10, 20 + (i + 2) % 10];
            lists[(30 + i) as usize] = vec![20 + i, 30 + (i + 1) % 10, 30 + (i + 2) % 10];
        }
        // faint cross-affinity so the gap rule (not exhaustion) stops the loop
        lists[20].push(0);
        lists[0].push(20);
        (
            extraction_from(sets, vec![]),
            Neighborhoods::from_lists(lists, 10.0),
        )
    }

    #[test]
    fn two_pairs_merge_under_gap_rule() {
        let (ext, nb) = planted_pairs();
        let out = form_primary_clusters(&ext, &nb, StoppingRule::default()).unwrap();
        assert_eq!(out.clustering.clusters.len(), 2);
        assert_eq!(out.z_history.len(), 2);
        assert_eq!(out.status, MergeStatus::RuleFired);
        let mut c0 = out.clustering.clusters[0].clone();
        c0.sort_unstable();
        assert_eq!(c0, (0..20).collect::<Vec<u32>>());
    }

    #[test]
    fn zero_affinity_means_no_merge() {
        let ext = extraction_from(vec![vec![0, 1], vec![2, 3]], vec![4]);
        let nb = Neighborhoods::from_lists(vec![vec![]; 5], 20.0);
        let out = form_primary_clusters(&ext, &nb, StoppingRule::default()).unwrap();
        assert_eq!(out.clustering.clusters.len(), 2);
        assert!(out.z_history.is_empty());
        assert_eq!(out.status, MergeStatus::ExhaustedScores);
        assert_eq!(out.clustering.unassigned, vec![4]);
    }

    #[test]
    fn target_count_stops_exactly() {
        let (ext, nb) = planted_pairs();
        let out = form_primary_clusters(&ext, &nb, StoppingRule::TargetCount { target: 3 })
            .unwrap();
        assert_eq!(out.clustering.clusters.len(), 3);
    }

    #[test]
    fn z_floor_stops() {
        let (ext, nb) = planted_pairs();
        let out = form_primary_clusters(&ext, &nb, StoppingRule::ZFloor { floor: 0.5 }).unwrap();
        assert_eq!(out.clustering.clusters.len(), 2);
    }

    #[test]
    fn z_symmetry_and_bound() {
        let (ext, nb) = planted_pairs();
        // Y values are bounded by the list length
        let len = nb.list_len();
        for i in 0..ext.sets.len() {
            for j in 0..ext.sets.len() {
                if i == j {
                    continue;
                }
                let y = pair_affinity(&ext.sets[i].members, &ext.sets[j].members, &nb).unwrap();
                assert!(y >= 0.0 && y <= len as f64);
            }
        }
    }

    #[test]
    fn union_preserved_across_merges() {
        let (ext, nb) = planted_pairs();
        let before: usize = ext.sets.iter().map(|s| s.members.len()).sum();
        let out = form_primary_clusters(&ext, &nb, StoppingRule::default()).unwrap();
        let after: usize = out.clustering.clusters.iter().map(Vec::len).sum();
        assert_eq!(before, after);
        let mut seen = vec![false; 40];
        for c in &out.clustering.clusters {
            for &v in c {
                assert!(!seen[v as usize]);
                seen[v as usize] = true;
            }
        }
    }

    #[test]
    fn history_csv_shape() {
        let (ext, nb) = planted_pairs();
        let out = form_primary_clusters(&ext, &nb, StoppingRule::default()).unwrap();
        let mut buf = Vec::new();
        write_z_history_csv(&out.z_history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("round,set_a,set_b,z_max,size_a,size_b\n"));
        assert_eq!(text.lines().count(), 1 + out.z_history.len());
    }
}
