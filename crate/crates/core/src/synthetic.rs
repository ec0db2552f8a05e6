//! Seeded synthetic datasets with planted structure, for tests, examples and
//! quick experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Event};
use crate::error::{Error, Result};
use crate::rng;

/// 2020-01-01T00:00:00Z.
const START: i64 = 1_577_836_800;
const DAY: i64 = 86_400;

/// Users and items split into clusters; users mostly consume items of their
/// own cluster, one sub-topic per session, and mostly befriend users of their
/// own cluster. Sessions are one calendar month apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Sub-topics per cluster; each session draws from one of them.
    pub topics_per_cluster: usize,
    pub sessions_per_user: usize,
    pub items_per_session: usize,
    /// Probability that a session keeps the previous session's sub-topic.
    pub topic_persistence: f64,
    /// Probability that an interaction ignores the user's cluster.
    pub noise: f64,
    pub friends_per_user: usize,
    /// Probability that a friend comes from the user's own cluster.
    pub homophily: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 40,
            items: 60,
            clusters: 4,
            topics_per_cluster: 3,
            sessions_per_user: 6,
            items_per_session: 4,
            topic_persistence: 0.7,
            noise: 0.05,
            friends_per_user: 3,
            homophily: 0.9,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.users >= 2
            && self.clusters >= 1
            && self.topics_per_cluster >= 1
            && self.items >= self.clusters * self.topics_per_cluster
            && self.sessions_per_user >= 1
            && self.items_per_session >= 1
            && (0.0..=1.0).contains(&self.topic_persistence)
            && (0.0..=1.0).contains(&self.noise)
            && (0.0..=1.0).contains(&self.homophily)
            && self.friends_per_user < self.users;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic config {self:?}")))
        }
    }

    pub fn user_cluster(&self, u: usize) -> usize {
        u % self.clusters
    }

    pub fn item_cluster(&self, i: usize) -> usize {
        i % self.clusters
    }

    /// Sub-topic of an item within its cluster.
    pub fn item_topic(&self, i: usize) -> usize {
        (i / self.clusters) % self.topics_per_cluster
    }
}

/// Generates a dataset from `cfg`, deterministic in `seed`.
pub fn planted(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut events = Vec::new();
    let mut edges = Vec::new();
    for u in 0..cfg.users {
        let mut r = rng::stream(seed, &[0x5359_4e54, u as u64]);
        let c = cfg.user_cluster(u);
        let own: Vec<usize> = (0..cfg.items).filter(|&i| cfg.item_cluster(i) == c).collect();
        let mut topic = r.gen_range(0..cfg.topics_per_cluster);
        for s in 0..cfg.sessions_per_user {
            if s > 0 && !r.gen_bool(cfg.topic_persistence) {
                topic = r.gen_range(0..cfg.topics_per_cluster);
            }
            let pool: Vec<usize> = own.iter().copied().filter(|&i| cfg.item_topic(i) == topic).collect();
            let month_start = START + (s as i64) * 30 * DAY + (s as i64 / 2) * DAY;
            for k in 0..cfg.items_per_session {
                let item = if r.gen_bool(cfg.noise) {
                    r.gen_range(0..cfg.items)
                } else {
                    *pool.choose(&mut r).expect("topic pool non-empty")
                };
                let ts = month_start + 2 * DAY + (k as i64) * 3_600 + r.gen_range(0..3_600);
                events.push(Event { user: u as u32, item: item as u32, timestamp: ts });
            }
        }
        let same: Vec<usize> = (0..cfg.users).filter(|&v| v != u && cfg.user_cluster(v) == c).collect();
        let other: Vec<usize> = (0..cfg.users).filter(|&v| cfg.user_cluster(v) != c).collect();
        for _ in 0..cfg.friends_per_user {
            let from_same = r.gen_bool(cfg.homophily) || other.is_empty();
            let pool = if from_same && !same.is_empty() { &same } else { &other };
            if let Some(&v) = pool.choose(&mut r) {
                edges.push((u as u32, v as u32));
            }
        }
    }
    Dataset::from_parts(
        (0..cfg.users).map(|u| format!("u{u}")).collect(),
        (0..cfg.items).map(|i| format!("i{i}")).collect(),
        events,
        edges,
    )
}

/// Large-catalog dataset where every user leaves more than a thousand items
/// unrated, for checking the full negative-sampling protocol.
pub fn sparse_catalog(users: usize, items: usize, events_per_user: usize, seed: u64) -> Result<Dataset> {
    if items < events_per_user + 1001 {
        return Err(Error::Config(format!("{items} items cannot leave 1000 negatives per user")));
    }
    let mut events = Vec::new();
    let mut edges = Vec::new();
    for u in 0..users {
        let mut r = rng::stream(seed, &[0x5350_5253, u as u64]);
        for k in 0..events_per_user {
            let ts = START + (k as i64) * 40 * DAY + r.gen_range(0..DAY);
            events.push(Event { user: u as u32, item: r.gen_range(0..items) as u32, timestamp: ts });
        }
        let v = (u + 1 + r.gen_range(0..users - 1)) % users;
        if v != u {
            edges.push((u as u32, v as u32));
        }
    }
    Dataset::from_parts(
        (0..users).map(|u| format!("u{u}")).collect(),
        (0..items).map(|i| format!("i{i}")).collect(),
        events,
        edges,
    )
}
