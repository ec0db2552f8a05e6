use std::collections::HashSet;

use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Draws `count` distinct items the user never interacted with (in any
/// split), uniformly without replacement. Deterministic in `(user, seed)`.
pub fn sample_negatives(ds: &Dataset, user: u32, count: usize, seed: u64) -> Result<Vec<u32>> {
    let interacted = ds.interacted(user);
    let available = ds.num_items() - interacted.len();
    if count > available {
        return Err(Error::Sampling(format!(
            "user {} has {available} unrated items, {count} requested",
            ds.user_id(user)
        )));
    }
    let mut rng = rng::stream(seed, &[user as u64]);
    // Floyd's algorithm over ranks in the complement of the interacted set.
    let mut chosen = HashSet::with_capacity(count);
    let mut order = Vec::with_capacity(count);
    for j in (available - count)..available {
        let t = rng.gen_range(0..=j);
        let pick = if chosen.insert(t) { t } else {
            chosen.insert(j);
            j
        };
        order.push(pick);
    }
    Ok(order.into_iter().map(|rank| nth_unrated(interacted, rank)).collect())
}

/// The `rank`-th (0-based) item index absent from the sorted `interacted`.
fn nth_unrated(interacted: &[u32], rank: usize) -> u32 {
    let mut v = rank as u32;
    for &x in interacted {
        if x <= v {
            v += 1;
        } else {
            break;
        }
    }
    v
}
