use serde::{Deserialize, Serialize};

use super::{segment_sessions, Dataset, Granularity};

/// The descriptive statistics reported for a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub social_links: usize,
    /// Mean session count over users with at least one event.
    pub avg_sessions_per_user: f64,
    /// Directed social links divided by the number of users.
    pub avg_real_friends_per_user: f64,
}

pub fn stats(ds: &Dataset, granularity: Granularity) -> DatasetStats {
    let seqs = segment_sessions(ds, granularity);
    let active: Vec<usize> = seqs.iter().map(|s| s.sessions.len()).filter(|&c| c > 0).collect();
    let avg_sessions = if active.is_empty() {
        0.0
    } else {
        active.iter().sum::<usize>() as f64 / active.len() as f64
    };
    DatasetStats {
        users: ds.num_users(),
        items: ds.num_items(),
        events: ds.events().len(),
        social_links: ds.social_edges().len(),
        avg_sessions_per_user: avg_sessions,
        avg_real_friends_per_user: ds.social_edges().len() as f64 / ds.num_users() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Event;

    #[test]
    fn single_user_single_session() {
        let ds = Dataset::from_parts(
            vec!["u".into()],
            vec!["a".into(), "b".into()],
            vec![Event { user: 0, item: 0, timestamp: 10 }, Event { user: 0, item: 1, timestamp: 20 }],
            vec![],
        )
        .unwrap();
        let s = stats(&ds, Granularity::Month);
        assert_eq!(s.avg_sessions_per_user, 1.0);
        assert_eq!(s.events, 2);
    }

    #[test]
    fn serializes_as_flat_object() {
        let ds = Dataset::from_parts(
            vec!["u".into(), "v".into()],
            vec!["a".into()],
            vec![Event { user: 0, item: 0, timestamp: 10 }],
            vec![(0, 1)],
        )
        .unwrap();
        let json = serde_json::to_value(stats(&ds, Granularity::Week)).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 6);
        assert!(obj.values().all(|v| v.is_number()));
        assert_eq!(obj["avg_real_friends_per_user"], 0.5);
    }
}
