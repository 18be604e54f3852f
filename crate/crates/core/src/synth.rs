//! Deterministic synthetic data generation: steady background query
//! traffic plus breaking-news bursts with correlated follow-up queries,
//! and a firehose whose tweets embed query-like n-grams.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Query;

const MINUTE_MS: i64 = 60_000;

/// One query in the steady-state vocabulary with its popularity weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VocabEntry {
    pub q: String,
    pub weight: f64,
}

/// A query that tends to follow a burst query within the same session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FollowUp {
    pub q: String,
    pub p_follow: f64,
    /// How long after the triggering query the follow-up is issued.
    #[serde(default = "default_follow_delay")]
    pub delay_ms: i64,
}

fn default_follow_delay() -> i64 {
    MINUTE_MS
}

/// A hockey-puck burst: ramp up to `peak_fraction` of the query stream,
/// hold, then ramp down. Every burst query gets its own fresh session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Burst {
    pub t0_ms: i64,
    pub ramp_ms: i64,
    #[serde(default)]
    pub hold_ms: i64,
    #[serde(default)]
    pub decay_ms: i64,
    pub peak_fraction: f64,
    pub query: String,
    #[serde(default)]
    pub followups: Vec<FollowUp>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthScenario {
    pub seed: u64,
    pub duration_ms: i64,
    pub base_rate_per_min: u64,
    #[serde(default = "default_session_pool")]
    pub session_pool: usize,
    pub vocab: Vec<VocabEntry>,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    #[serde(default)]
    pub tweet_rate_per_min: u64,
    #[serde(default)]
    pub tweet_match_fraction: f64,
}

fn default_session_pool() -> usize {
    200
}

impl SynthScenario {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.duration_ms <= 0 {
            errs.push("duration_ms must be positive".to_string());
        }
        if self.base_rate_per_min == 0 {
            errs.push("base_rate_per_min must be positive".to_string());
        }
        if self.vocab.is_empty() {
            errs.push("vocab must be non-empty".to_string());
        }
        for (i, v) in self.vocab.iter().enumerate() {
            if v.weight < 0.0 {
                errs.push(format!("vocab[{i}] weight must be >= 0"));
            }
            if Query::normalize(&v.q).is_err() {
                errs.push(format!("vocab[{i}] query is empty"));
            }
        }
        for (i, b) in self.bursts.iter().enumerate() {
            if !(b.peak_fraction > 0.0 && b.peak_fraction <= 1.0) {
                errs.push(format!("bursts[{i}] peak_fraction must be in (0, 1]"));
            }
            if b.ramp_ms < 0 || b.hold_ms < 0 || b.decay_ms < 0 || b.t0_ms < 0 {
                errs.push(format!("bursts[{i}] time fields must be >= 0"));
            }
            for (j, f) in b.followups.iter().enumerate() {
                if !(0.0..=1.0).contains(&f.p_follow) {
                    errs.push(format!("bursts[{i}].followups[{j}] p_follow must be in [0, 1]"));
                }
                if f.delay_ms < 0 {
                    errs.push(format!("bursts[{i}].followups[{j}] delay_ms must be >= 0"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.tweet_match_fraction) {
            errs.push("tweet_match_fraction must be in [0, 1]".to_string());
        }
        errs
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let scenario: SynthScenario = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let errs = scenario.validate();
        if errs.is_empty() {
            Ok(scenario)
        } else {
            Err(errs.join("; "))
        }
    }
}

struct PendingEvent {
    ts: i64,
    sid: String,
    q: String,
    src: &'static str,
}

fn envelope(burst: &Burst, t: i64) -> f64 {
    let dt = t - burst.t0_ms;
    if dt < 0 {
        0.0
    } else if dt < burst.ramp_ms {
        dt as f64 / burst.ramp_ms as f64
    } else if dt < burst.ramp_ms + burst.hold_ms {
        1.0
    } else if dt < burst.ramp_ms + burst.hold_ms + burst.decay_ms {
        1.0 - (dt - burst.ramp_ms - burst.hold_ms) as f64 / burst.decay_ms as f64
    } else {
        0.0
    }
}

/// Generated hose files as raw lines, already event-time ordered.
pub struct SynthOutput {
    pub query_lines: Vec<String>,
    pub tweet_lines: Vec<String>,
}

/// Generate both hoses. Pure function of the scenario (seed included):
/// identical scenarios produce byte-identical output.
///
/// Per-minute accounting keeps measured burst fractions on target: the
/// number of burst queries in minute m is chosen so that, including
/// already-scheduled follow-ups landing in m, the burst query is exactly
/// its envelope fraction of the minute's query events.
pub fn gen_synth(scenario: &SynthScenario) -> SynthOutput {
    let errs = scenario.validate();
    assert!(errs.is_empty(), "invalid scenario: {}", errs.join("; "));
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let vocab_total: f64 = scenario.vocab.iter().map(|v| v.weight).sum();
    let pick_vocab = |rng: &mut ChaCha8Rng| -> &str {
        let mut roll = rng.gen::<f64>() * vocab_total;
        for v in &scenario.vocab {
            roll -= v.weight;
            if roll <= 0.0 {
                return &v.q;
            }
        }
        &scenario.vocab[scenario.vocab.len() - 1].q
    };

    let minutes = (scenario.duration_ms + MINUTE_MS - 1) / MINUTE_MS;
    let mut queries: Vec<PendingEvent> = Vec::new();
    let mut tweets: Vec<PendingEvent> = Vec::new();
    // Follow-ups scheduled into future minutes: minute -> (sid, query).
    let mut scheduled: HashMap<i64, Vec<(String, String)>> = HashMap::new();
    let mut burst_session_counter: u64 = 0;

    for minute in 0..minutes {
        let minute_start = minute * MINUTE_MS;
        let ts_in_minute =
            |rng: &mut ChaCha8Rng| minute_start + 1 + rng.gen_range(0..MINUTE_MS - 1);

        // Base traffic from the rotating session pool.
        for _ in 0..scenario.base_rate_per_min {
            let sid = format!("s{}", rng.gen_range(0..scenario.session_pool));
            let q = pick_vocab(&mut rng).to_string();
            let ts = ts_in_minute(&mut rng);
            queries.push(PendingEvent {
                ts,
                sid,
                q,
                src: "typed",
            });
        }

        // Follow-ups that were scheduled into this minute.
        let followups = scheduled.remove(&minute).unwrap_or_default();
        let followup_count = followups.len() as u64;
        for (sid, q) in followups {
            let ts = ts_in_minute(&mut rng);
            queries.push(PendingEvent {
                ts,
                sid,
                q,
                src: "typed",
            });
        }

        // Burst traffic, sized against this minute's realized volume.
        for burst in &scenario.bursts {
            let frac = burst.peak_fraction * envelope(burst, minute_start);
            if frac <= 0.0 {
                continue;
            }
            let others = scenario.base_rate_per_min + followup_count;
            let count = (frac * others as f64 / (1.0 - frac)).round() as u64;
            for _ in 0..count {
                burst_session_counter += 1;
                let sid = format!("b{burst_session_counter}");
                let ts = ts_in_minute(&mut rng);
                queries.push(PendingEvent {
                    ts,
                    sid: sid.clone(),
                    q: burst.query.clone(),
                    src: "typed",
                });
                for f in &burst.followups {
                    if rng.gen::<f64>() < f.p_follow {
                        let target_minute = (minute_start + f.delay_ms) / MINUTE_MS;
                        if target_minute < minutes {
                            scheduled
                                .entry(target_minute)
                                .or_default()
                                .push((sid.clone(), f.q.clone()));
                        }
                    }
                }
            }
        }

        // Firehose.
        for t in 0..scenario.tweet_rate_per_min {
            let ts = ts_in_minute(&mut rng);
            let text = if rng.gen::<f64>() < scenario.tweet_match_fraction {
                let a = pick_vocab(&mut rng);
                let b = pick_vocab(&mut rng);
                format!("w{} {a} w{} {b}", rng.gen_range(0..10_000u32), rng.gen_range(0..10_000u32))
            } else {
                format!(
                    "w{} w{} w{}",
                    rng.gen_range(0..10_000u32),
                    rng.gen_range(0..10_000u32),
                    rng.gen_range(0..10_000u32)
                )
            };
            tweets.push(PendingEvent {
                ts,
                sid: format!("t{minute}-{t}"),
                q: text,
                src: "",
            });
        }
    }

    queries.sort_by_key(|e| e.ts);
    tweets.sort_by_key(|e| e.ts);
    let query_lines = queries
        .iter()
        .map(|e| {
            format!(
                r#"{{"sid":{},"q":{},"src":"{}","lang":"en","ts":{}}}"#,
                serde_json::to_string(&e.sid).unwrap(),
                serde_json::to_string(&e.q).unwrap(),
                e.src,
                e.ts
            )
        })
        .collect();
    let tweet_lines = tweets
        .iter()
        .map(|e| {
            format!(
                r#"{{"tid":{},"text":{},"lang":"en","ts":{}}}"#,
                serde_json::to_string(&e.sid).unwrap(),
                serde_json::to_string(&e.q).unwrap(),
                e.ts
            )
        })
        .collect();
    SynthOutput {
        query_lines,
        tweet_lines,
    }
}

/// Write `<prefix>.queries.jsonl` and `<prefix>.tweets.jsonl`.
pub fn write_synth(out: &SynthOutput, prefix: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let qpath = prefix.with_extension("queries.jsonl");
    let tpath = prefix.with_extension("tweets.jsonl");
    let mut qf = std::fs::File::create(&qpath)?;
    for line in &out.query_lines {
        writeln!(qf, "{line}")?;
    }
    let mut tf = std::fs::File::create(&tpath)?;
    for line in &out.tweet_lines {
        writeln!(tf, "{line}")?;
    }
    Ok((qpath, tpath))
}

/// The Supreme Court healthcare-ruling scenario used throughout the test
/// suite: a burst where "healthcare" follows "#scotus" in 60% of the
/// affected sessions.
pub fn scotus_scenario(seed: u64) -> SynthScenario {
    SynthScenario {
        seed,
        duration_ms: 40 * MINUTE_MS,
        base_rate_per_min: 300,
        session_pool: 200,
        vocab: vec![
            VocabEntry { q: "obama".into(), weight: 5.0 },
            VocabEntry { q: "white house".into(), weight: 3.0 },
            VocabEntry { q: "weather".into(), weight: 2.0 },
            VocabEntry { q: "football".into(), weight: 2.0 },
            VocabEntry { q: "music".into(), weight: 1.0 },
        ],
        bursts: vec![Burst {
            t0_ms: 10 * MINUTE_MS,
            ramp_ms: 2 * MINUTE_MS,
            hold_ms: 20 * MINUTE_MS,
            decay_ms: 5 * MINUTE_MS,
            peak_fraction: 0.15,
            query: "#scotus".into(),
            followups: vec![
                FollowUp { q: "healthcare".into(), p_follow: 0.6, delay_ms: MINUTE_MS },
                FollowUp { q: "#aca".into(), p_follow: 0.3, delay_ms: 2 * MINUTE_MS },
            ],
        }],
        tweet_rate_per_min: 60,
        tweet_match_fraction: 0.3,
    }
}
