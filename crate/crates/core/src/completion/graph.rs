use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GloveEmbeddings;
use crate::data::{Dataset, Session, SessionSequence};
use crate::error::{Error, Result};
use crate::numkernel::dot;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Real,
    Virtual,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Real => "real",
            Relation::Virtual => "virtual",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompletionConfig {
    pub k_real: usize,
    pub k_virtual: usize,
    /// Draw a new real-friend sample every epoch instead of one fixed sample
    /// per (user, session).
    pub resample_real_per_epoch: bool,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig { k_real: 10, k_virtual: 10, resample_real_per_epoch: false }
    }
}

/// Raw inner product `⟨g_p, g_q⟩`. Any global softmax over pair scores is
/// monotone in this value, so it ranks identically.
pub fn score_virtual(g: &GloveEmbeddings, p: u32, q: u32) -> Result<f64> {
    if p == q {
        return Err(Error::Argument(format!("virtual score of user {p} with itself")));
    }
    Ok(dot(g.row(p), g.row(q)))
}

/// The `k` best-scoring users outside `exclusions` (which must contain
/// `user`), ties broken by ascending index. Weights are the raw scores.
pub fn select_virtual_friends(g: &GloveEmbeddings, user: u32, k: usize, exclusions: &[u32]) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let anchor = g.row(user);
    let mut scored: Vec<(u32, f64)> = (0..g.num_users() as u32)
        .filter(|q| *q != user && !exclusions.contains(q))
        .map(|q| (q, dot(anchor, g.row(q))))
        .collect();
    let better = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, better);
        scored.truncate(k);
    }
    scored.sort_by(better);
    scored
}

/// Static top-k virtual friend lists for every user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualFriends {
    lists: Vec<Vec<(u32, f64)>>,
}

impl VirtualFriends {
    /// Selects for every user, excluding the user's real friends when `real`
    /// is given.
    pub fn select_all(g: &GloveEmbeddings, k: usize, real: Option<&[Vec<u32>]>) -> Self {
        let lists = (0..g.num_users() as u32)
            .into_par_iter()
            .map(|u| {
                let excl: &[u32] = real.map(|r| r[u as usize].as_slice()).unwrap_or(&[]);
                select_virtual_friends(g, u, k, excl)
            })
            .collect();
        VirtualFriends { lists }
    }

    pub fn from_lists(lists: Vec<Vec<(u32, f64)>>) -> Self {
        VirtualFriends { lists }
    }

    pub fn get(&self, u: u32) -> &[(u32, f64)] {
        &self.lists[u as usize]
    }

    pub fn num_users(&self) -> usize {
        self.lists.len()
    }
}

/// A neighbor in a completed ego graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub user: u32,
    pub relation: Relation,
    pub weight: f64,
    /// Position in the neighbor's session sequence of her latest session
    /// strictly before the center's session; `None` means the model falls
    /// back to her latent embedding.
    pub prior_session: Option<usize>,
}

/// Ego network of one user for one of her sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedGraph {
    pub center: u32,
    /// 1-based session index of the center.
    pub session: usize,
    pub window: i64,
    pub neighbors: Vec<Neighbor>,
}

/// Assembles a completed graph: a seeded uniform sample of at most `k_real`
/// real friends plus the given virtual friends (truncated to `k_virtual`).
/// A user present in both lists is kept once, as real.
pub fn complete_graph(
    user: u32,
    session: &Session,
    real_friends: &[u32],
    virtual_friends: &[(u32, f64)],
    sessions: &[SessionSequence],
    config: &CompletionConfig,
    seed: u64,
    epoch: Option<u64>,
) -> CompletedGraph {
    if session.index == 0 {
        panic!("session indices are 1-based");
    }
    let candidates: Vec<u32> = real_friends.iter().copied().filter(|f| *f != user).collect();
    let take = config.k_real.min(candidates.len());
    let mut parts = vec![rng::TAG_REAL_FRIENDS, user as u64, session.window as u64];
    if let Some(e) = epoch.filter(|_| config.resample_real_per_epoch) {
        parts.push(e);
    }
    let mut picked: Vec<u32> = if take == candidates.len() {
        candidates.clone()
    } else {
        let mut r = rng::stream(seed, &parts);
        index::sample(&mut r, candidates.len(), take).into_iter().map(|i| candidates[i]).collect()
    };
    picked.sort_unstable();
    picked.dedup();

    let prior = |f: u32| {
        let seq = &sessions[f as usize];
        let k = seq.count_before(session.window);
        k.checked_sub(1)
    };
    let mut neighbors: Vec<Neighbor> = picked
        .iter()
        .map(|&f| Neighbor { user: f, relation: Relation::Real, weight: 1.0, prior_session: prior(f) })
        .collect();
    for &(f, w) in virtual_friends.iter().take(config.k_virtual) {
        if f == user || real_friends.contains(&f) || neighbors.iter().any(|n| n.user == f) {
            continue;
        }
        neighbors.push(Neighbor { user: f, relation: Relation::Virtual, weight: w, prior_session: prior(f) });
    }
    CompletedGraph { center: user, session: session.index, window: session.window, neighbors }
}

/// Friend sources available to the model, with read counters so ablations
/// can prove which sources they touch.
#[derive(Debug)]
pub struct SocialContext {
    real: Option<Vec<Vec<u32>>>,
    virtual_friends: Option<VirtualFriends>,
    config: CompletionConfig,
    seed: u64,
    real_reads: AtomicU64,
    virtual_reads: AtomicU64,
}

impl SocialContext {
    pub fn new(
        real: Option<Vec<Vec<u32>>>,
        virtual_friends: Option<VirtualFriends>,
        config: CompletionConfig,
        seed: u64,
    ) -> Self {
        SocialContext {
            real,
            virtual_friends,
            config,
            seed,
            real_reads: AtomicU64::new(0),
            virtual_reads: AtomicU64::new(0),
        }
    }

    /// Copies the dataset's outgoing edge lists.
    pub fn real_lists(ds: &Dataset) -> Vec<Vec<u32>> {
        (0..ds.num_users() as u32).map(|u| ds.friends(u).to_vec()).collect()
    }

    pub fn config(&self) -> &CompletionConfig {
        &self.config
    }

    pub fn virtual_friends(&self) -> Option<&VirtualFriends> {
        self.virtual_friends.as_ref()
    }

    pub fn real_reads(&self) -> u64 {
        self.real_reads.load(Ordering::Relaxed)
    }

    pub fn virtual_reads(&self) -> u64 {
        self.virtual_reads.load(Ordering::Relaxed)
    }

    /// Completed graph of `user` for `session`.
    pub fn graph(&self, user: u32, session: &Session, sessions: &[SessionSequence], epoch: Option<u64>) -> CompletedGraph {
        let real: &[u32] = match &self.real {
            Some(lists) => {
                self.real_reads.fetch_add(1, Ordering::Relaxed);
                &lists[user as usize]
            }
            None => &[],
        };
        let virt: &[(u32, f64)] = match &self.virtual_friends {
            Some(v) => {
                self.virtual_reads.fetch_add(1, Ordering::Relaxed);
                v.get(user)
            }
            None => &[],
        };
        complete_graph(user, session, real, virt, sessions, &self.config, self.seed, epoch)
    }
}

/// `ln Σ_{p≠q} exp⟨g_p, g_q⟩`, the normalizer of the global softmax over
/// user pairs.
pub fn pair_log_partition(g: &GloveEmbeddings) -> f64 {
    let n = g.num_users() as u32;
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let gp = g.row(p);
            let scores: Vec<f64> = (0..n).filter(|q| *q != p).map(|q| dot(gp, g.row(q))).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>();
            (max, sum)
        })
        .collect();
    let max = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    max + rows.iter().map(|(m, s)| s * (m - max).exp()).sum::<f64>().ln()
}

/// Writes completed edges as `user, friend, relation, weight, session` TSV.
/// Virtual weights are exported as the globally normalized connection
/// strength when `log_partition` is provided.
pub fn write_edges_tsv<W: Write>(
    mut out: W,
    ds: &Dataset,
    graphs: &[CompletedGraph],
    log_partition: Option<f64>,
) -> Result<()> {
    let io = |e| Error::io("edges.tsv", e);
    writeln!(out, "user\tfriend\trelation\tweight\tsession").map_err(io)?;
    for g in graphs {
        for nb in &g.neighbors {
            let weight = match (nb.relation, log_partition) {
                (Relation::Virtual, Some(z)) => (nb.weight - z).exp(),
                _ => nb.weight,
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{:e}\t{}",
                ds.user_id(g.center),
                ds.user_id(nb.user),
                nb.relation.as_str(),
                weight,
                g.session
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
