use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One implicit-feedback interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub user: u32,
    pub item: u32,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
}

/// Users, items, time-stamped interactions and directed social edges, with
/// opaque external ids mapped to dense indices.
///
/// Events are sorted by `(user, timestamp)`; ties keep input order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    events: Vec<Event>,
    social_edges: Vec<(u32, u32)>,
    #[serde(skip)]
    index: Index,
}

#[derive(Clone, Debug, Default)]
struct Index {
    /// Distinct items per user, ascending.
    user_items: Vec<Vec<u32>>,
    /// Outgoing social neighbors per user, ascending.
    friends: Vec<Vec<u32>>,
    /// Range of `events` belonging to each user.
    user_events: Vec<std::ops::Range<usize>>,
}

#[derive(Default)]
struct Registry {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Registry {
    fn get_or_insert(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len() as u32;
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Dataset {
    /// Reads `user<TAB>item<TAB>timestamp[<TAB>rating]` events and optional
    /// `user<TAB>friend` edges. Ratings are dropped; any event counts as
    /// positive feedback. Unknown ids are registered on first sight.
    pub fn ingest(events_path: &Path, social_path: Option<&Path>) -> Result<Dataset> {
        let mut users = Registry::default();
        let mut items = Registry::default();
        let mut events = Vec::new();
        let text = read(events_path)?;
        for (line, raw) in data_lines(&text) {
            let fields: Vec<&str> = raw.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::Parse {
                    path: events_path.into(),
                    line,
                    msg: format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let timestamp: i64 = fields[2].trim().parse().map_err(|_| Error::Parse {
                path: events_path.into(),
                line,
                msg: format!("timestamp {:?} is not an integer", fields[2]),
            })?;
            if timestamp < 0 {
                return Err(Error::Parse {
                    path: events_path.into(),
                    line,
                    msg: "negative timestamp".into(),
                });
            }
            let user = users.get_or_insert(fields[0].trim());
            let item = items.get_or_insert(fields[1].trim());
            events.push(Event { user, item, timestamp });
        }

        let mut edges = Vec::new();
        if let Some(path) = social_path {
            let text = read(path)?;
            for (line, raw) in data_lines(&text) {
                let fields: Vec<&str> = raw.split('\t').collect();
                if fields.len() != 2 {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        msg: format!("expected 2 tab-separated fields, found {}", fields.len()),
                    });
                }
                let a = users.get_or_insert(fields[0].trim());
                let b = users.get_or_insert(fields[1].trim());
                edges.push((a, b));
            }
        }
        Dataset::from_parts(users.ids, items.ids, events, edges)
    }

    /// Builds a dataset from already-indexed parts. Duplicate `(u, i, t)`
    /// events, duplicate edges and self loops are dropped.
    pub fn from_parts(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        mut events: Vec<Event>,
        social_edges: Vec<(u32, u32)>,
    ) -> Result<Dataset> {
        let (n, m) = (user_ids.len(), item_ids.len());
        if n == 0 || m == 0 {
            return Err(Error::Argument(format!("dataset needs users and items (n={n}, m={m})")));
        }
        for e in &events {
            if e.user as usize >= n || e.item as usize >= m {
                return Err(Error::Argument(format!("event {e:?} out of range")));
            }
            if e.timestamp < 0 {
                return Err(Error::Argument(format!("event {e:?} has a negative timestamp")));
            }
        }
        let mut seen = HashSet::new();
        events.retain(|e| seen.insert(*e));
        events.sort_by_key(|e| (e.user, e.timestamp));

        let mut edge_set = BTreeSet::new();
        let mut edges = Vec::new();
        for (a, b) in social_edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Argument(format!("social edge ({a}, {b}) out of range")));
            }
            if a != b && edge_set.insert((a, b)) {
                edges.push((a, b));
            }
        }
        let mut ds = Dataset { user_ids, item_ids, events, social_edges: edges, index: Index::default() };
        ds.reindex();
        Ok(ds)
    }

    fn reindex(&mut self) {
        let n = self.user_ids.len();
        let mut user_items: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
        let mut user_events = vec![0..0; n];
        let mut start = 0;
        while start < self.events.len() {
            let u = self.events[start].user;
            let mut end = start;
            while end < self.events.len() && self.events[end].user == u {
                user_items[u as usize].insert(self.events[end].item);
                end += 1;
            }
            user_events[u as usize] = start..end;
            start = end;
        }
        let mut friends = vec![Vec::new(); n];
        for &(a, b) in &self.social_edges {
            friends[a as usize].push(b);
        }
        friends.iter_mut().for_each(|f| f.sort_unstable());
        self.index = Index {
            user_items: user_items.into_iter().map(|s| s.into_iter().collect()).collect(),
            friends,
            user_events,
        };
    }

    /// Restores derived indices after deserialization.
    pub fn rebuild_index(mut self) -> Self {
        self.reindex();
        self
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn social_edges(&self) -> &[(u32, u32)] {
        &self.social_edges
    }

    pub fn user_id(&self, u: u32) -> &str {
        &self.user_ids[u as usize]
    }

    pub fn item_id(&self, i: u32) -> &str {
        &self.item_ids[i as usize]
    }

    /// Event indices of one user, in chronological order.
    pub fn user_event_range(&self, u: u32) -> std::ops::Range<usize> {
        self.index.user_events[u as usize].clone()
    }

    /// Distinct items the user interacted with in any split, ascending.
    pub fn interacted(&self, u: u32) -> &[u32] {
        &self.index.user_items[u as usize]
    }

    /// Outgoing social neighbors, ascending.
    pub fn friends(&self, u: u32) -> &[u32] {
        &self.index.friends[u as usize]
    }
}
