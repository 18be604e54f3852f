//! Core domain types: normalized queries, input events, and engine
//! configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("query is empty after normalization")]
    EmptyQuery,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Leading-character class of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigil {
    None,
    Hashtag,
    Mention,
}

/// A normalized query string: lowercased, whitespace-collapsed, with any
/// leading `#`/`@` sigil preserved.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Query {
    text: String,
}

impl Query {
    /// Normalize raw input into a query. Lowercases, collapses Unicode
    /// whitespace runs to single spaces, and trims. No stemming and no
    /// punctuation stripping: aggressive normalization would merge
    /// distinct hashtags.
    pub fn normalize(raw: &str) -> Result<Self, ModelError> {
        let mut text = String::with_capacity(raw.len());
        let mut pending_space = false;
        for ch in raw.trim().chars() {
            if ch.is_whitespace() {
                pending_space = true;
                continue;
            }
            if pending_space && !text.is_empty() {
                text.push(' ');
            }
            pending_space = false;
            for lc in ch.to_lowercase() {
                text.push(lc);
            }
        }
        if text.is_empty() {
            return Err(ModelError::EmptyQuery);
        }
        Ok(Query { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn sigil(&self) -> Sigil {
        match self.text.chars().next() {
            Some('#') => Sigil::Hashtag,
            Some('@') => Sigil::Mention,
            _ => Sigil::None,
        }
    }

    /// Query text with any leading sigil character removed.
    pub fn stripped(&self) -> &str {
        match self.sigil() {
            Sigil::None => &self.text,
            _ => &self.text[1..],
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ')
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// How a query instance reached the query hose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    Typed,
    HashtagClick,
    TrendClick,
    RelatedClick,
}

impl QuerySource {
    pub const ALL: [QuerySource; 4] = [
        QuerySource::Typed,
        QuerySource::HashtagClick,
        QuerySource::TrendClick,
        QuerySource::RelatedClick,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "typed" => Some(QuerySource::Typed),
            "hashtag_click" => Some(QuerySource::HashtagClick),
            "trend_click" => Some(QuerySource::TrendClick),
            "related_click" => Some(QuerySource::RelatedClick),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QuerySource::Typed => "typed",
            QuerySource::HashtagClick => "hashtag_click",
            QuerySource::TrendClick => "trend_click",
            QuerySource::RelatedClick => "related_click",
        }
    }
}

/// One sessionized query observation from the query hose.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEvent {
    pub session_id: String,
    pub query: Query,
    pub source: QuerySource,
    pub lang: String,
    pub ts: i64,
}

/// One document from the firehose.
#[derive(Clone, Debug, PartialEq)]
pub struct TweetEvent {
    pub tweet_id: String,
    pub text: String,
    pub lang: String,
    pub ts: i64,
}

/// Decay function families for time-discounting observed weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayFn {
    /// Halves every `halflife_ms`; composes, so lazy evaluation is exact.
    Exponential,
    /// Full weight until `step_age_ms`, then multiplied by `step_floor`.
    Step,
    /// Linear ramp from 1 to 0 over `linear_span_ms`.
    Linear,
}

/// Full engine configuration. All values are overridable from a flat
/// `key = value` config file; defaults are engineering choices.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub max_ngram: usize,
    pub session_window_size: usize,
    pub session_window_age_ms: i64,
    pub session_idle_expiry_ms: i64,
    pub source_weights: HashMap<QuerySource, f64>,
    pub tweet_weight: f64,
    pub halflife_ms: i64,
    pub decay_fn: DecayFn,
    pub step_age_ms: i64,
    pub step_floor: f64,
    pub linear_span_ms: i64,
    pub prune_threshold: f64,
    pub querylike_min_count: f64,
    pub rank_weights: RankWeights,
    pub pmi_cap: f64,
    pub llr_scale: f64,
    pub min_pair_support: f64,
    pub top_k: usize,
    pub snapshot_interval_ms: i64,
    pub decay_cycle_interval_ms: i64,
    pub spell_ratio_min: f64,
    pub spell_distance_max: f64,
    pub interpolation_mu: f64,
    pub retain_n: usize,
    /// Minimum decayed query weight for the ranking cycle to consider a
    /// query; `None` falls back to `prune_threshold`.
    pub rank_floor: Option<f64>,
    /// Rate-limit hook: identical queries beyond this count per session
    /// per minute are dropped.
    pub rate_limit_per_minute: usize,
    /// Tolerance for out-of-order timestamps in each input hose.
    pub out_of_order_tolerance_ms: i64,
}

/// Linear-combination weights over the three ranking features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankWeights {
    pub crf: f64,
    pub pmi: f64,
    pub llr: f64,
}

const MINUTE_MS: i64 = 60_000;

impl Default for EngineConfig {
    fn default() -> Self {
        let mut source_weights = HashMap::new();
        source_weights.insert(QuerySource::Typed, 1.0);
        source_weights.insert(QuerySource::HashtagClick, 0.5);
        source_weights.insert(QuerySource::TrendClick, 0.5);
        source_weights.insert(QuerySource::RelatedClick, 0.3);
        EngineConfig {
            max_ngram: 3,
            session_window_size: 10,
            session_window_age_ms: 15 * MINUTE_MS,
            session_idle_expiry_ms: 60 * MINUTE_MS,
            source_weights,
            tweet_weight: 0.2,
            halflife_ms: 60 * MINUTE_MS,
            decay_fn: DecayFn::Exponential,
            step_age_ms: 60 * MINUTE_MS,
            step_floor: 0.0,
            linear_span_ms: 60 * MINUTE_MS,
            prune_threshold: 0.05,
            querylike_min_count: 10.0,
            rank_weights: RankWeights {
                crf: 0.6,
                pmi: 0.2,
                llr: 0.2,
            },
            pmi_cap: 10.0,
            llr_scale: 20.0,
            min_pair_support: 1.0,
            top_k: 10,
            snapshot_interval_ms: 5 * MINUTE_MS,
            decay_cycle_interval_ms: 5 * MINUTE_MS,
            spell_ratio_min: 10.0,
            spell_distance_max: 2.0,
            interpolation_mu: 0.7,
            retain_n: 12,
            rank_floor: None,
            rate_limit_per_minute: 5,
            out_of_order_tolerance_ms: 0,
        }
    }
}

impl EngineConfig {
    /// Slow-decay profile for long-horizon background runs.
    pub fn background() -> Self {
        EngineConfig {
            halflife_ms: 7 * 24 * 60 * MINUTE_MS,
            snapshot_interval_ms: 6 * 60 * MINUTE_MS,
            decay_cycle_interval_ms: 6 * 60 * MINUTE_MS,
            ..EngineConfig::default()
        }
    }

    pub fn source_weight(&self, s: QuerySource) -> f64 {
        self.source_weights.get(&s).copied().unwrap_or(0.0)
    }

    pub fn effective_rank_floor(&self) -> f64 {
        self.rank_floor.unwrap_or(self.prune_threshold)
    }

    /// Check every invariant; returns all violations, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.max_ngram < 1 {
            errs.push("max_ngram must be at least 1".to_string());
        }
        if self.halflife_ms <= 0 {
            errs.push("halflife must be positive".to_string());
        }
        if self.top_k < 1 {
            errs.push("top_k must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.interpolation_mu) {
            errs.push("interpolation_mu must be in [0, 1]".to_string());
        }
        for src in QuerySource::ALL {
            if self.source_weight(src) < 0.0 {
                errs.push(format!("source weight for {} must be >= 0", src.as_str()));
            }
        }
        if self.source_weight(QuerySource::Typed) < self.source_weight(QuerySource::HashtagClick) {
            errs.push(
                "source weight for typed must be >= weight for hashtag_click".to_string(),
            );
        }
        for (name, v) in [
            ("tweet_weight", self.tweet_weight),
            ("prune_threshold", self.prune_threshold),
            ("querylike_min_count", self.querylike_min_count),
            ("rank_weight_crf", self.rank_weights.crf),
            ("rank_weight_pmi", self.rank_weights.pmi),
            ("rank_weight_llr", self.rank_weights.llr),
            ("min_pair_support", self.min_pair_support),
            ("spell_ratio_min", self.spell_ratio_min),
            ("spell_distance_max", self.spell_distance_max),
        ] {
            if v < 0.0 {
                errs.push(format!("{name} must be >= 0"));
            }
        }
        if self.pmi_cap <= 0.0 {
            errs.push("pmi_cap must be positive".to_string());
        }
        if self.llr_scale <= 0.0 {
            errs.push("llr_scale must be positive".to_string());
        }
        if self.snapshot_interval_ms <= 0 {
            errs.push("snapshot_interval_ms must be positive".to_string());
        }
        if self.decay_cycle_interval_ms <= 0 {
            errs.push("decay_cycle_interval_ms must be positive".to_string());
        }
        if self.step_age_ms <= 0 {
            errs.push("step_age_ms must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.step_floor) {
            errs.push("step_floor must be in [0, 1]".to_string());
        }
        if self.linear_span_ms <= 0 {
            errs.push("linear_span_ms must be positive".to_string());
        }
        errs
    }

    /// Load overrides from a flat `key = value` file. Lines starting with
    /// `#` and blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = EngineConfig::default();
        cfg.apply_overrides(&text)?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, text: &str) -> Result<(), ModelError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ModelError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| ModelError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn int(v: &str) -> Result<i64, String> {
            v.parse().map_err(|_| format!("`{v}` is not an integer"))
        }
        fn num(v: &str) -> Result<f64, String> {
            v.parse().map_err(|_| format!("`{v}` is not a number"))
        }
        fn uint(v: &str) -> Result<usize, String> {
            v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
        }
        match key {
            "max_ngram" => self.max_ngram = uint(value)?,
            "session_window_size" => self.session_window_size = uint(value)?,
            "session_window_age_ms" => self.session_window_age_ms = int(value)?,
            "session_idle_expiry_ms" => self.session_idle_expiry_ms = int(value)?,
            "source_weight_typed" => {
                self.source_weights.insert(QuerySource::Typed, num(value)?);
            }
            "source_weight_hashtag_click" => {
                self.source_weights.insert(QuerySource::HashtagClick, num(value)?);
            }
            "source_weight_trend_click" => {
                self.source_weights.insert(QuerySource::TrendClick, num(value)?);
            }
            "source_weight_related_click" => {
                self.source_weights.insert(QuerySource::RelatedClick, num(value)?);
            }
            "tweet_weight" => self.tweet_weight = num(value)?,
            "halflife_ms" => self.halflife_ms = int(value)?,
            "decay_fn" => {
                self.decay_fn = match value {
                    "exponential" => DecayFn::Exponential,
                    "step" => DecayFn::Step,
                    "linear" => DecayFn::Linear,
                    other => return Err(format!("unknown decay_fn `{other}`")),
                }
            }
            "step_age_ms" => self.step_age_ms = int(value)?,
            "step_floor" => self.step_floor = num(value)?,
            "linear_span_ms" => self.linear_span_ms = int(value)?,
            "prune_threshold" => self.prune_threshold = num(value)?,
            "querylike_min_count" => self.querylike_min_count = num(value)?,
            "rank_weight_crf" => self.rank_weights.crf = num(value)?,
            "rank_weight_pmi" => self.rank_weights.pmi = num(value)?,
            "rank_weight_llr" => self.rank_weights.llr = num(value)?,
            "pmi_cap" => self.pmi_cap = num(value)?,
            "llr_scale" => self.llr_scale = num(value)?,
            "min_pair_support" => self.min_pair_support = num(value)?,
            "top_k" => self.top_k = uint(value)?,
            "snapshot_interval_ms" => self.snapshot_interval_ms = int(value)?,
            "decay_cycle_interval_ms" => self.decay_cycle_interval_ms = int(value)?,
            "spell_ratio_min" => self.spell_ratio_min = num(value)?,
            "spell_distance_max" => self.spell_distance_max = num(value)?,
            "interpolation_mu" => self.interpolation_mu = num(value)?,
            "retain_n" => self.retain_n = uint(value)?,
            "rank_floor" => self.rank_floor = Some(num(value)?),
            "rate_limit_per_minute" => self.rate_limit_per_minute = uint(value)?,
            "out_of_order_tolerance_ms" => self.out_of_order_tolerance_ms = int(value)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }
}
