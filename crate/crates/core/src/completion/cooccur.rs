use std::collections::BTreeMap;

use crate::data::{Dataset, Split, SplitAssignment};

/// Symmetric user-user co-occurrence counts: `X[p][q]` is the number of
/// distinct items both users consumed. The diagonal is never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    num_users: usize,
    counts: BTreeMap<(u32, u32), u32>,
}

impl CooccurrenceMatrix {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn get(&self, p: u32, q: u32) -> u32 {
        self.counts.get(&(p, q)).copied().unwrap_or(0)
    }

    /// Stored `(p, q, count)` entries in both orientations, sorted.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.counts.iter().map(|(&(p, q), &c)| (p, q, c))
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn from_counts(num_users: usize, pairs: impl IntoIterator<Item = (u32, u32, u32)>) -> Self {
        let mut counts = BTreeMap::new();
        for (p, q, c) in pairs {
            if p != q && c > 0 {
                counts.insert((p, q), c);
                counts.insert((q, p), c);
            }
        }
        CooccurrenceMatrix { num_users, counts }
    }
}

/// Counts shared items per user pair by inverting the item → users index.
/// With a split, only training events contribute.
pub fn build_cooccurrence(ds: &Dataset, split: Option<&SplitAssignment>) -> CooccurrenceMatrix {
    let mut item_users: Vec<Vec<u32>> = vec![Vec::new(); ds.num_items()];
    for (idx, e) in ds.events().iter().enumerate() {
        if split.is_some_and(|s| s.label(idx) != Split::Train) {
            continue;
        }
        item_users[e.item as usize].push(e.user);
    }
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for users in &mut item_users {
        users.sort_unstable();
        users.dedup();
        for (a, &p) in users.iter().enumerate() {
            for &q in &users[a + 1..] {
                *counts.entry((p, q)).or_default() += 1;
                *counts.entry((q, p)).or_default() += 1;
            }
        }
    }
    CooccurrenceMatrix { num_users: ds.num_users(), counts }
}
