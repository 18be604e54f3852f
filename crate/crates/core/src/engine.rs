//! The backend data flow: the query path, the tweet path, decay/prune
//! cycles, and the periodic ranking cycle that assembles snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::association::{
    self, build_table, conditional_relative_frequency, log_likelihood_ratio,
};
use crate::model::{EngineConfig, Query, QueryEvent, TweetEvent};
use crate::snapshot::{
    write_snapshot, Profile, Snapshot, SnapshotEntry, SnapshotError, SpellRecord, Suggestion,
};
use crate::spelling::{spelling_candidate, EditCosts};
use crate::stores::{PruneReport, Stores};

/// Ingestion and cycle counters, reported at the end of a replay.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineMetrics {
    pub queries_ingested: u64,
    pub tweets_ingested: u64,
    pub rate_limited: u64,
    pub pairs_recorded: u64,
}

/// One search-assistance backend instance: the three stores plus the
/// configuration and snapshot generation counter.
pub struct Engine {
    pub cfg: EngineConfig,
    pub stores: Stores,
    pub costs: EditCosts,
    pub metrics: EngineMetrics,
    profile: Profile,
    next_generation_id: u64,
}

impl Engine {
    pub fn new(cfg: EngineConfig, profile: Profile) -> Self {
        Engine {
            cfg,
            stores: Stores::default(),
            costs: EditCosts::default(),
            metrics: EngineMetrics::default(),
            profile,
            next_generation_id: 1,
        }
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// The query path: update query statistics, slide the session window,
    /// and record one co-occurrence per new (previous, current) pair.
    pub fn on_query(&mut self, ev: &QueryEvent) {
        if self.stores.sessions.is_rate_limited(ev, &self.cfg) {
            self.metrics.rate_limited += 1;
            return;
        }
        let increment = self.cfg.source_weight(ev.source);
        self.stores
            .qstats
            .update(&ev.query, increment, &ev.lang, ev.ts, &self.cfg);
        let pairs = self.stores.sessions.observe(ev, &self.cfg);
        for pair in pairs {
            // Self-pairs are already excluded by the sessions store.
            self.stores
                .cooc
                .update(&pair.prev, &pair.next, pair.increment, ev.ts, &self.cfg)
                .expect("sessions store emitted a self-pair");
            self.metrics.pairs_recorded += 1;
        }
        self.metrics.queries_ingested += 1;
    }

    /// All n-grams (n up to `max_ngram`) of the text whose normalized form
    /// has been observed as a standalone query often enough. Deduplicated;
    /// overlaps allowed.
    pub fn extract_query_like_ngrams(&self, text: &str) -> Vec<Query> {
        let Ok(normalized) = Query::normalize(text) else {
            return Vec::new();
        };
        let tokens: Vec<&str> = normalized.tokens().collect();
        let mut out = BTreeSet::new();
        for n in 1..=self.cfg.max_ngram {
            if n > tokens.len() {
                break;
            }
            for window in tokens.windows(n) {
                let candidate = Query::normalize(&window.join(" "))
                    .expect("joined tokens are non-empty");
                if out.contains(&candidate) {
                    continue;
                }
                if self.stores.qstats.raw_count(&candidate) as f64
                    >= self.cfg.querylike_min_count
                {
                    out.insert(candidate);
                }
            }
        }
        out.into_iter().collect()
    }

    /// The tweet path: the tweet itself is the "session". Matched n-grams
    /// gain tweet weight (not raw counts), and every unordered pair of
    /// matches updates both directions, deduplicated within the tweet.
    pub fn on_tweet(&mut self, ev: &TweetEvent) {
        let matches = self.extract_query_like_ngrams(&ev.text);
        for q in &matches {
            self.stores
                .qstats
                .add_weight(q, self.cfg.tweet_weight, ev.ts, &self.cfg);
        }
        for i in 0..matches.len() {
            for j in (i + 1)..matches.len() {
                let (a, b) = (&matches[i], &matches[j]);
                self.stores
                    .cooc
                    .update(a, b, self.cfg.tweet_weight, ev.ts, &self.cfg)
                    .expect("dedup left a self-pair");
                self.stores
                    .cooc
                    .update(b, a, self.cfg.tweet_weight, ev.ts, &self.cfg)
                    .expect("dedup left a self-pair");
            }
        }
        self.metrics.tweets_ingested += 1;
    }

    /// Materialize decay everywhere and drop entries below the thresholds.
    pub fn run_decay_prune_cycle(&mut self, now: i64) -> PruneReport {
        self.stores.prune_all(now, &self.cfg)
    }

    /// Ranked suggestions for one query: followers with enough support,
    /// scored by the linear combination of CRF and normalized PMI / LLR.
    pub fn rank_query(&self, a: &Query, now: i64) -> Vec<Suggestion> {
        let followers = self.stores.cooc.followers(a, now, &self.cfg);
        let mut suggestions: Vec<Suggestion> = Vec::new();
        for (b, weight) in followers {
            if weight < self.cfg.min_pair_support || &b == a {
                continue;
            }
            let Ok(tbl) = build_table(a, &b, now, &self.stores, &self.cfg) else {
                continue;
            };
            let crf = conditional_relative_frequency(&tbl);
            let pmi = association::pmi(&tbl).unwrap_or(0.0);
            let llr = log_likelihood_ratio(&tbl);
            let pmi_norm = pmi.clamp(0.0, self.cfg.pmi_cap) / self.cfg.pmi_cap;
            let llr_norm = llr / (llr + self.cfg.llr_scale);
            let w = self.cfg.rank_weights;
            let score = w.crf * crf + w.pmi * pmi_norm + w.llr * llr_norm;
            if !score.is_finite() {
                continue;
            }
            suggestions.push(Suggestion {
                q: b,
                score,
                crf,
                pmi,
                llr,
            });
        }
        suggestions.sort_by(|x, y| {
            y.score
                .partial_cmp(&x.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| x.q.cmp(&y.q))
        });
        suggestions.truncate(self.cfg.top_k);
        suggestions
    }

    /// Traverse the query statistics store and assemble the next snapshot:
    /// suggestions plus a spelling candidate for every query above the
    /// ranking floor.
    pub fn run_ranking_cycle(&mut self, now: i64) -> Snapshot {
        let floor = self.cfg.effective_rank_floor();
        let mut queries: Vec<Query> = self
            .stores
            .qstats
            .iter()
            .filter(|(_, e)| e.weight.read(now, &self.cfg) >= floor)
            .map(|(q, _)| q.clone())
            .collect();
        queries.sort();

        let mut entries = BTreeMap::new();
        for q in queries {
            let suggestions = self.rank_query(&q, now);
            let spell = spelling_candidate(&q, now, &self.stores.qstats, &self.cfg, &self.costs)
                .map(|c| SpellRecord {
                    q: c.query,
                    dist: c.distance,
                    ratio: c.ratio,
                });
            entries.insert(q, SnapshotEntry { suggestions, spell });
        }
        let generation_id = self.next_generation_id;
        self.next_generation_id += 1;
        Snapshot {
            generation_id,
            event_ts: now,
            profile: self.profile,
            entries,
        }
    }

    /// Ranking cycle followed by an atomic snapshot publish.
    pub fn run_ranking_cycle_to(
        &mut self,
        now: i64,
        dir: &Path,
    ) -> Result<Snapshot, SnapshotError> {
        let snap = self.run_ranking_cycle(now);
        write_snapshot(&snap, dir, self.cfg.retain_n)?;
        Ok(snap)
    }
}
