//! Majority-vote assignment of the vertices left over by the primary
//! clustering, plus the final leftover policy.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::merge::Neighborhoods;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Primary,
    PostMajority,
    Final,
}

/// A labeled partition-with-remainder of the vertex set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    /// Disjoint clusters; vertex ids ascending within each.
    pub clusters: Vec<Vec<u32>>,
    /// Vertices in no cluster, ascending.
    pub unassigned: Vec<u32>,
    pub stage: Stage,
    /// Total number of vertices in the universe.
    pub n: usize,
    /// The `t` used by the majority pass, carried so the finalize step votes
    /// over the same prefix.
    pub majority_t: Option<usize>,
}

impl Clustering {
    pub fn new(clusters: Vec<Vec<u32>>, unassigned: Vec<u32>, stage: Stage, n: usize) -> Self {
        Clustering {
            clusters,
            unassigned,
            stage,
            n,
            majority_t: None,
        }
    }

    pub fn assigned_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster index (0-based) per vertex; `None` for unassigned.
    pub fn membership(&self) -> Vec<Option<u32>> {
        let mut member = vec![None; self.n];
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for &v in cluster {
                member[v as usize] = Some(ci as u32);
            }
        }
        member
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalizePolicy {
    /// Keep leftovers unassigned.
    Leave,
    /// Give every leftover to the cluster with the largest neighborhood
    /// overlap (ties: lower cluster index).
    Plurality,
    /// Export leftovers as a sub-dataset descriptor for a recursive run.
    RecurseReport,
}

impl std::str::FromStr for FinalizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leave" => Ok(FinalizePolicy::Leave),
            "plurality" => Ok(FinalizePolicy::Plurality),
            "recurse_report" | "recurse-report" => Ok(FinalizePolicy::RecurseReport),
            other => Err(Error::invalid_input(format!(
                "unknown finalize policy {other:?}"
            ))),
        }
    }
}

/// Leftover vertices packaged for a recursive pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurseDescriptor {
    pub vertex_indices: Vec<u32>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finalized {
    pub clustering: Clustering,
    pub recurse: Option<RecurseDescriptor>,
}

/// Counts how many of the first `take` neighbors of `u` sit in each cluster.
fn overlap_counts(
    u: u32,
    take: usize,
    nb: &Neighborhoods,
    member: &[Option<u32>],
    k: usize,
) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &v in nb.list(u as usize).iter().take(take) {
        if let Some(ci) = member[v as usize] {
            counts[ci as usize] += 1;
        }
    }
    counts
}

/// Assigns every unassigned vertex whose top-`t` neighborhood holds a strict
/// majority for one primary cluster. All votes are counted against the
/// primary clusters simultaneously: vertices assigned in this pass do not
/// vote for each other.
pub fn majority_assign(
    pc: &Clustering,
    nb: &Neighborhoods,
    delta_percent: f64,
) -> Result<Clustering> {
    if pc.stage != Stage::Primary {
        return Err(Error::invalid_parameter(
            "majority assignment expects a primary clustering",
        ));
    }
    if nb.n() != pc.n {
        return Err(Error::DimensionMismatch {
            what: "neighborhood universe".into(),
            expected: pc.n,
            found: nb.n(),
        });
    }
    let t = (delta_percent / 100.0 * pc.n as f64).floor() as usize;
    if t == 0 {
        return Err(Error::invalid_parameter(format!(
            "majority vote needs t >= 1 (delta={delta_percent}%, n={})",
            pc.n
        )));
    }
    let member = pc.membership();
    let k = pc.clusters.len();
    let verdicts: Vec<(u32, Option<u32>)> = pc
        .unassigned
        .par_iter()
        .map(|&u| {
            let counts = overlap_counts(u, t, nb, &member, k);
            // strict majority: more than t/2 of the top-t neighbors
            let winners: Vec<u32> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| 2 * c > t)
                .map(|(i, _)| i as u32)
                .collect();
            assert!(
                winners.len() <= 1,
                "disjoint clusters cannot both hold a strict majority"
            );
            (u, winners.first().copied())
        })
        .collect();

    let mut clusters = pc.clusters.clone();
    let mut unassigned = Vec::new();
    for (u, verdict) in verdicts {
        match verdict {
            Some(ci) => clusters[ci as usize].push(u),
            None => unassigned.push(u),
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(Clustering {
        clusters,
        unassigned,
        stage: Stage::PostMajority,
        n: pc.n,
        majority_t: Some(t),
    })
}

/// Applies the leftover policy after the majority pass.
pub fn finalize(c: &Clustering, nb: &Neighborhoods, policy: FinalizePolicy) -> Result<Finalized> {
    if c.stage != Stage::PostMajority {
        return Err(Error::invalid_parameter(
            "finalize expects a post-majority clustering",
        ));
    }
    let mut out = c.clone();
    out.stage = Stage::Final;
    match policy {
        FinalizePolicy::Leave => Ok(Finalized {
            clustering: out,
            recurse: None,
        }),
        FinalizePolicy::Plurality => {
            let t = c.majority_t.unwrap_or_else(|| nb.list_len().max(1));
            let member = c.membership();
            let k = c.clusters.len();
            for &u in &c.unassigned {
                let counts = overlap_counts(u, t, nb, &member, k);
                // argmax with ties to the lower cluster index
                let mut best = 0usize;
                for (i, &cnt) in counts.iter().enumerate() {
                    if cnt > counts[best] {
                        best = i;
                    }
                }
                out.clusters[best].push(u);
            }
            for cl in &mut out.clusters {
                cl.sort_unstable();
            }
            out.unassigned.clear();
            Ok(Finalized {
                clustering: out,
                recurse: None,
            })
        }
        FinalizePolicy::RecurseReport => {
            let desc = RecurseDescriptor {
                vertex_indices: c.unassigned.clone(),
                count: c.unassigned.len(),
            };
            Ok(Finalized {
                clustering: out,
                recurse: Some(desc),
            })
        }
    }
}

/// Two-column CSV of final labels: `point_id,cluster_index` (1-based) or
/// `UNASSIGNED`.
pub fn write_labels_csv(
    c: &Clustering,
    point_ids: &[String],
    w: &mut impl Write,
) -> Result<()> {
    if point_ids.len() != c.n {
        return Err(Error::DimensionMismatch {
            what: "point ids".into(),
            expected: c.n,
            found: point_ids.len(),
        });
    }
    let member = c.membership();
    for (v, id) in point_ids.iter().enumerate() {
        match member[v] {
            Some(ci) => writeln!(w, "{id},{}", ci + 1)?,
            None => writeln!(w, "{id},UNASSIGNED")?,
        }
    }
    Ok(())
}
