use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Calendar window used to cut a user's history into sessions. Windows are
/// fixed in UTC, not sliding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// ISO week (Monday to Sunday).
    Week,
    /// Calendar month.
    Month,
}

impl Granularity {
    /// Ordinal of the window containing `timestamp`. Consecutive windows have
    /// consecutive ordinals.
    pub fn window(self, timestamp: i64) -> i64 {
        match self {
            // 1970-01-01 was a Thursday; shifting by three days aligns
            // buckets on Mondays.
            Granularity::Week => (timestamp.div_euclid(86_400) + 3).div_euclid(7),
            Granularity::Month => {
                let dt = DateTime::from_timestamp(timestamp, 0).expect("timestamp in chrono range");
                dt.year() as i64 * 12 + dt.month0() as i64
            }
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "week" => Ok(Granularity::Week),
            "month" => Ok(Granularity::Month),
            other => Err(Error::Config(format!("unknown granularity {other:?} (week|month)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    /// 1-based chronological rank within the user's history.
    pub index: usize,
    pub window: i64,
    pub start_time: i64,
    /// Items in interaction order.
    pub items: Vec<u32>,
    /// Dataset event indices, parallel to `items`.
    pub events: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSequence {
    pub user: u32,
    pub sessions: Vec<Session>,
}

impl SessionSequence {
    /// Latest session whose window lies strictly before `window`.
    pub fn latest_before(&self, window: i64) -> Option<&Session> {
        let k = self.sessions.partition_point(|s| s.window < window);
        k.checked_sub(1).map(|i| &self.sessions[i])
    }

    /// Position of the first session not strictly before `window`.
    pub fn count_before(&self, window: i64) -> usize {
        self.sessions.partition_point(|s| s.window < window)
    }
}

/// Buckets every event of every user into calendar sessions. Returns one
/// sequence per user (empty for users without events).
pub fn segment_sessions(ds: &Dataset, granularity: Granularity) -> Vec<SessionSequence> {
    segment_where(ds, granularity, |_| true)
}

/// Like [`segment_sessions`] but only over events accepted by `keep`.
pub fn segment_where<F>(ds: &Dataset, granularity: Granularity, keep: F) -> Vec<SessionSequence>
where
    F: Fn(usize) -> bool,
{
    let events = ds.events();
    (0..ds.num_users() as u32)
        .map(|user| {
            let mut sessions: Vec<Session> = Vec::new();
            for idx in ds.user_event_range(user).filter(|&i| keep(i)) {
                let e = events[idx];
                let window = granularity.window(e.timestamp);
                match sessions.last_mut() {
                    Some(s) if s.window == window => {
                        s.items.push(e.item);
                        s.events.push(idx);
                    }
                    _ => sessions.push(Session {
                        index: sessions.len() + 1,
                        window,
                        start_time: e.timestamp,
                        items: vec![e.item],
                        events: vec![idx],
                    }),
                }
            }
            SessionSequence { user, sessions }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Event;
    use std::collections::HashSet;

    const DAY: i64 = 86_400;

    fn dataset(events: Vec<Event>, users: usize, items: usize) -> Dataset {
        Dataset::from_parts(
            (0..users).map(|u| format!("u{u}")).collect(),
            (0..items).map(|i| format!("i{i}")).collect(),
            events,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn days_one_and_forty_fall_in_two_months() {
        let ds = dataset(
            vec![Event { user: 0, item: 0, timestamp: DAY }, Event { user: 0, item: 1, timestamp: 40 * DAY }],
            1,
            2,
        );
        let seqs = segment_sessions(&ds, Granularity::Month);
        assert_eq!(seqs[0].sessions.len(), 2);
        assert_eq!(seqs[0].sessions[1].index, 2);
    }

    #[test]
    fn one_week_one_session_in_time_order() {
        // 1970-01-05 is a Monday; all three events sit in that ISO week.
        let monday = 4 * DAY;
        let ds = dataset(
            vec![
                Event { user: 0, item: 2, timestamp: monday + 5 * DAY },
                Event { user: 0, item: 0, timestamp: monday },
                Event { user: 0, item: 1, timestamp: monday + 3 * DAY },
            ],
            1,
            3,
        );
        let seqs = segment_sessions(&ds, Granularity::Week);
        assert_eq!(seqs[0].sessions.len(), 1);
        assert_eq!(seqs[0].sessions[0].items, vec![0, 1, 2]);
        // Sunday before is a different week.
        assert_ne!(Granularity::Week.window(monday - 1), Granularity::Week.window(monday));
    }

    /// Civil date from days since epoch (H. Hinnant's algorithm), used as an
    /// independent month oracle.
    fn civil(days: i64) -> (i64, i64) {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let m = if mp < 10 { mp + 3 } else { mp - 9 };
        let y = yoe + era * 400 + if m <= 2 { 1 } else { 0 };
        (y, m)
    }

    #[test]
    fn average_sessions_match_rebucketing_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, &[]);
        let mut events = Vec::new();
        for user in 0..100u32 {
            for _ in 0..rng.gen_range(1..15) {
                events.push(Event {
                    user,
                    item: rng.gen_range(0..50),
                    timestamp: rng.gen_range(1_200_000_000..1_300_000_000),
                });
            }
        }
        let ds = dataset(events, 100, 50);
        for g in [Granularity::Month, Granularity::Week] {
            let seqs = segment_sessions(&ds, g);
            let got: usize = seqs.iter().map(|s| s.sessions.len()).sum();
            let oracle: HashSet<(u32, (i64, i64))> = ds
                .events()
                .iter()
                .map(|e| {
                    let key = match g {
                        Granularity::Month => civil(e.timestamp.div_euclid(DAY)),
                        Granularity::Week => {
                            let iw = DateTime::from_timestamp(e.timestamp, 0).unwrap().iso_week();
                            (iw.year() as i64, iw.week() as i64)
                        }
                    };
                    (e.user, key)
                })
                .collect();
            assert_eq!(got, oracle.len(), "{g:?}");
        }
    }

    #[test]
    fn sessions_reconstruct_the_event_sequence() {
        use rand::Rng;
        let mut rng = crate::rng::stream(9, &[]);
        let events: Vec<Event> = (0..300)
            .map(|_| Event {
                user: rng.gen_range(0..10),
                item: rng.gen_range(0..30),
                timestamp: rng.gen_range(0..200_000_000),
            })
            .collect();
        let ds = dataset(events, 10, 30);
        for seq in segment_sessions(&ds, Granularity::Month) {
            let flat: Vec<usize> = seq.sessions.iter().flat_map(|s| s.events.clone()).collect();
            let expected: Vec<usize> = ds.user_event_range(seq.user).collect();
            assert_eq!(flat, expected);
            assert!(seq.sessions.windows(2).all(|w| w[0].start_time < w[1].start_time));
            assert!(seq.sessions.iter().all(|s| !s.items.is_empty()));
        }
    }

    #[test]
    fn latest_before_is_strict() {
        let ds = dataset(
            vec![Event { user: 0, item: 0, timestamp: DAY }, Event { user: 0, item: 1, timestamp: 40 * DAY }],
            1,
            2,
        );
        let seq = &segment_sessions(&ds, Granularity::Month)[0];
        let w0 = seq.sessions[0].window;
        assert!(seq.latest_before(w0).is_none());
        assert_eq!(seq.latest_before(w0 + 1).unwrap().index, 1);
        assert_eq!(seq.latest_before(w0 + 10).unwrap().index, 2);
    }
}
