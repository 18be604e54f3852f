//! The three in-memory stores: user sessions, per-query statistics, and
//! directional query co-occurrence statistics, all with time-decayed
//! weights and threshold pruning.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::association::decay_factor;
use crate::model::{DecayFn, EngineConfig, Query, QueryEvent, QuerySource};

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("self-pair rejected: {0}")]
    SelfPair(Query),
}

/// A weight with lazy exponential decay: the stored value is implicitly
/// multiplied by the decay factor for the time elapsed since `touched_ts`.
/// Step and linear decay do not compose, so for those families reads
/// return the last materialized value and decay cycles materialize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayedWeight {
    value: f64,
    touched_ts: i64,
}

impl DecayedWeight {
    pub fn new(value: f64, now: i64) -> Self {
        DecayedWeight { value, touched_ts: now }
    }

    pub fn read(&self, now: i64, cfg: &EngineConfig) -> f64 {
        match cfg.decay_fn {
            DecayFn::Exponential => {
                self.value * decay_factor((now - self.touched_ts).max(0), cfg)
            }
            DecayFn::Step | DecayFn::Linear => self.value,
        }
    }

    /// Decay to `now`, then add `increment`.
    pub fn bump(&mut self, increment: f64, now: i64, cfg: &EngineConfig) {
        self.materialize(now, cfg);
        self.value += increment;
    }

    /// Apply the decay factor for the elapsed time and reset the touch
    /// point. Exact for exponential; the materialization step for the
    /// non-composing families.
    pub fn materialize(&mut self, now: i64, cfg: &EngineConfig) {
        self.value *= decay_factor((now - self.touched_ts).max(0), cfg);
        self.touched_ts = self.touched_ts.max(now);
    }

    pub fn touched_ts(&self) -> i64 {
        self.touched_ts
    }
}

/// One user session: a sliding window of recent queries plus dedup
/// metadata that outlives window eviction.
#[derive(Clone, Debug)]
pub struct SessionRecord {
    pub window: VecDeque<(Query, i64, QuerySource)>,
    pub seen_queries: HashSet<Query>,
    pub seen_pairs: HashSet<(Query, Query)>,
    pub last_activity_ts: i64,
    /// Recent raw observations for the per-session rate-limit hook.
    recent: VecDeque<(Query, i64)>,
}

impl SessionRecord {
    fn new(now: i64) -> Self {
        SessionRecord {
            window: VecDeque::new(),
            seen_queries: HashSet::new(),
            seen_pairs: HashSet::new(),
            last_activity_ts: now,
            recent: VecDeque::new(),
        }
    }
}

/// A co-occurrence pair emitted by the sessions store: `next` followed
/// `prev` in the same session window.
#[derive(Clone, Debug, PartialEq)]
pub struct PairObservation {
    pub prev: Query,
    pub next: Query,
    pub increment: f64,
}

#[derive(Default)]
pub struct SessionStore {
    sessions: HashMap<String, SessionRecord>,
}

const RATE_LIMIT_WINDOW_MS: i64 = 60_000;

impl SessionStore {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn get(&self, session_id: &str) -> Option<&SessionRecord> {
        self.sessions.get(session_id)
    }

    /// Rate-limit hook: true if this session already issued the same query
    /// `rate_limit_per_minute` times in the trailing minute. Limited events
    /// are dropped by the caller before touching any statistics.
    pub fn is_rate_limited(&mut self, ev: &QueryEvent, cfg: &EngineConfig) -> bool {
        if cfg.rate_limit_per_minute == 0 {
            return false;
        }
        let Some(rec) = self.sessions.get_mut(&ev.session_id) else {
            return false;
        };
        while let Some((_, ts)) = rec.recent.front() {
            if *ts < ev.ts - RATE_LIMIT_WINDOW_MS {
                rec.recent.pop_front();
            } else {
                break;
            }
        }
        rec.recent.iter().filter(|(q, _)| *q == ev.query).count() >= cfg.rate_limit_per_minute
    }

    /// Append the event to its session (creating it if absent), slide the
    /// window, and return one pair per distinct previous window query not
    /// yet recorded for this session. The pair increment is the geometric
    /// mean of the two source weights; self-pairs are excluded.
    pub fn observe(&mut self, ev: &QueryEvent, cfg: &EngineConfig) -> Vec<PairObservation> {
        let rec = self
            .sessions
            .entry(ev.session_id.clone())
            .or_insert_with(|| SessionRecord::new(ev.ts));

        // Slide by age first, then enforce the size bound after insertion.
        while let Some((_, ts, _)) = rec.window.front() {
            if *ts < ev.ts - cfg.session_window_age_ms {
                rec.window.pop_front();
            } else {
                break;
            }
        }

        // Most recent source per distinct previous query.
        let mut prev_sources: HashMap<&Query, QuerySource> = HashMap::new();
        for (q, _, src) in rec.window.iter() {
            prev_sources.insert(q, *src);
        }

        let new_weight = cfg.source_weight(ev.source);
        let mut pairs = Vec::new();
        let mut prev_queries: Vec<&Query> = prev_sources.keys().copied().collect();
        prev_queries.sort();
        for prev in prev_queries {
            if *prev == ev.query {
                continue;
            }
            let key = (prev.clone(), ev.query.clone());
            if rec.seen_pairs.contains(&key) {
                continue;
            }
            let prev_weight = cfg.source_weight(prev_sources[prev]);
            let increment = (prev_weight * new_weight).sqrt();
            rec.seen_pairs.insert(key);
            pairs.push(PairObservation {
                prev: prev.clone(),
                next: ev.query.clone(),
                increment,
            });
        }

        rec.window.push_back((ev.query.clone(), ev.ts, ev.source));
        while rec.window.len() > cfg.session_window_size {
            rec.window.pop_front();
        }
        rec.seen_queries.insert(ev.query.clone());
        rec.recent.push_back((ev.query.clone(), ev.ts));
        rec.last_activity_ts = ev.ts;
        pairs
    }

    /// Remove sessions with no activity within the idle expiry.
    pub fn prune(&mut self, now: i64, cfg: &EngineConfig) -> usize {
        let before = self.sessions.len();
        self.sessions
            .retain(|_, rec| rec.last_activity_ts >= now - cfg.session_idle_expiry_ms);
        before - self.sessions.len()
    }
}

#[derive(Clone, Debug)]
pub struct QueryStatsEntry {
    pub raw_count: u64,
    pub weight: DecayedWeight,
    pub lang_counts: HashMap<String, u64>,
}

/// Per-query statistics plus a global weight-mass accumulator used as the
/// contingency-table total.
pub struct QueryStatsStore {
    entries: HashMap<Query, QueryStatsEntry>,
    total_mass: DecayedWeight,
}

impl Default for QueryStatsStore {
    fn default() -> Self {
        QueryStatsStore {
            entries: HashMap::new(),
            total_mass: DecayedWeight::new(0.0, 0),
        }
    }
}

impl QueryStatsStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Full update from the query path: weight, raw count, language tally.
    pub fn update(&mut self, q: &Query, increment: f64, lang: &str, now: i64, cfg: &EngineConfig) {
        debug_assert!(increment >= 0.0);
        let entry = self.entries.entry(q.clone()).or_insert_with(|| QueryStatsEntry {
            raw_count: 0,
            weight: DecayedWeight::new(0.0, now),
            lang_counts: HashMap::new(),
        });
        entry.weight.bump(increment, now, cfg);
        entry.raw_count += 1;
        *entry.lang_counts.entry(lang.to_string()).or_insert(0) += 1;
        self.total_mass.bump(increment, now, cfg);
    }

    /// Tweet-path update: adds weight only. Raw counts define
    /// query-likeness and must come from the query hose alone.
    pub fn add_weight(&mut self, q: &Query, increment: f64, now: i64, cfg: &EngineConfig) {
        if let Some(entry) = self.entries.get_mut(q) {
            entry.weight.bump(increment, now, cfg);
            self.total_mass.bump(increment, now, cfg);
        }
    }

    pub fn weight(&self, q: &Query, now: i64, cfg: &EngineConfig) -> f64 {
        self.entries
            .get(q)
            .map_or(0.0, |e| e.weight.read(now, cfg))
    }

    pub fn raw_count(&self, q: &Query) -> u64 {
        self.entries.get(q).map_or(0, |e| e.raw_count)
    }

    pub fn contains(&self, q: &Query) -> bool {
        self.entries.contains_key(q)
    }

    pub fn get(&self, q: &Query) -> Option<&QueryStatsEntry> {
        self.entries.get(q)
    }

    pub fn total_mass(&self, now: i64, cfg: &EngineConfig) -> f64 {
        self.total_mass.read(now, cfg)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Query, &QueryStatsEntry)> {
        self.entries.iter()
    }

    fn prune(&mut self, now: i64, cfg: &EngineConfig) -> usize {
        let before = self.entries.len();
        let mut removed_mass = 0.0;
        self.entries.retain(|_, e| {
            e.weight.materialize(now, cfg);
            let keep = e.weight.read(now, cfg) >= cfg.prune_threshold;
            if !keep {
                removed_mass += e.weight.read(now, cfg);
            }
            keep
        });
        self.total_mass.materialize(now, cfg);
        self.total_mass.bump(-removed_mass, now, cfg);
        before - self.entries.len()
    }
}

/// Sparse directional co-occurrence weights with follower and predecessor
/// adjacency.
#[derive(Default)]
pub struct CoocStore {
    followers: HashMap<Query, HashMap<Query, DecayedWeight>>,
    predecessors: HashMap<Query, HashSet<Query>>,
}

impl CoocStore {
    pub fn pair_count(&self) -> usize {
        self.followers.values().map(|m| m.len()).sum()
    }

    pub fn update(
        &mut self,
        prev: &Query,
        next: &Query,
        increment: f64,
        now: i64,
        cfg: &EngineConfig,
    ) -> Result<(), StoreError> {
        if prev == next {
            return Err(StoreError::SelfPair(prev.clone()));
        }
        debug_assert!(increment >= 0.0);
        self.followers
            .entry(prev.clone())
            .or_default()
            .entry(next.clone())
            .or_insert_with(|| DecayedWeight::new(0.0, now))
            .bump(increment, now, cfg);
        self.predecessors
            .entry(next.clone())
            .or_default()
            .insert(prev.clone());
        Ok(())
    }

    pub fn weight(&self, prev: &Query, next: &Query, now: i64, cfg: &EngineConfig) -> f64 {
        self.followers
            .get(prev)
            .and_then(|m| m.get(next))
            .map_or(0.0, |w| w.read(now, cfg))
    }

    pub fn followers(&self, q: &Query, now: i64, cfg: &EngineConfig) -> HashMap<Query, f64> {
        self.followers
            .get(q)
            .map(|m| {
                m.iter()
                    .map(|(next, w)| (next.clone(), w.read(now, cfg)))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn predecessors(&self, q: &Query, now: i64, cfg: &EngineConfig) -> HashMap<Query, f64> {
        self.predecessors
            .get(q)
            .map(|set| {
                set.iter()
                    .map(|prev| (prev.clone(), self.weight(prev, q, now, cfg)))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Remove pairs below the prune threshold, plus pairs whose endpoints
    /// have both dropped out of the query statistics store (tweets alone
    /// must not keep a pair alive). Adjacency stays consistent.
    fn prune(&mut self, now: i64, cfg: &EngineConfig, qstats: &QueryStatsStore) -> usize {
        let mut removed = 0;
        self.followers.retain(|prev, m| {
            m.retain(|next, w| {
                w.materialize(now, cfg);
                let keep = w.read(now, cfg) >= cfg.prune_threshold
                    && (qstats.contains(prev) || qstats.contains(next));
                if !keep {
                    removed += 1;
                }
                keep
            });
            !m.is_empty()
        });
        let followers = &self.followers;
        self.predecessors.retain(|next, set| {
            set.retain(|prev| {
                followers
                    .get(prev)
                    .is_some_and(|m| m.contains_key(next))
            });
            !set.is_empty()
        });
        removed
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneReport {
    pub queries_removed: usize,
    pub pairs_removed: usize,
    pub sessions_removed: usize,
}

/// The three stores bundled behind the single-writer ingestion boundary.
#[derive(Default)]
pub struct Stores {
    pub sessions: SessionStore,
    pub qstats: QueryStatsStore,
    pub cooc: CoocStore,
}

impl Stores {
    /// Materialize every weight to `now` and drop everything below the
    /// configured thresholds, including idle sessions.
    pub fn prune_all(&mut self, now: i64, cfg: &EngineConfig) -> PruneReport {
        let queries_removed = self.qstats.prune(now, cfg);
        let pairs_removed = self.cooc.prune(now, cfg, &self.qstats);
        let sessions_removed = self.sessions.prune(now, cfg);
        PruneReport {
            queries_removed,
            pairs_removed,
            sessions_removed,
        }
    }
}
