//! Input hoses: newline-delimited query and tweet files, a stable
//! event-time merge, and the deterministic replay loop that drives the
//! engine and its periodic cycles.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

use crate::engine::Engine;
use crate::model::{Query, QueryEvent, QuerySource, TweetEvent};
use crate::snapshot::SnapshotError;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("field `{field}`: {msg}")]
    Parse { field: &'static str, msg: String },
    #[error("{path}:{line}: {source}")]
    ParseAt {
        path: String,
        line: usize,
        #[source]
        source: Box<StreamError>,
    },
    #[error("out-of-order input: ts {ts} after {prev} (tolerance {tolerance})")]
    OutOfOrderInput { ts: i64, prev: i64, tolerance: i64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot error: {0}")]
    Snapshot(#[from] SnapshotError),
}

fn parse_err(field: &'static str, msg: impl Into<String>) -> StreamError {
    StreamError::Parse {
        field,
        msg: msg.into(),
    }
}

fn obj_str<'a>(obj: &'a Value, field: &'static str) -> Result<&'a str, StreamError> {
    obj.get(field)
        .ok_or_else(|| parse_err(field, "missing"))?
        .as_str()
        .ok_or_else(|| parse_err(field, "not a string"))
}

fn obj_ts(obj: &Value, field: &'static str) -> Result<i64, StreamError> {
    let ts = obj
        .get(field)
        .ok_or_else(|| parse_err(field, "missing"))?
        .as_i64()
        .ok_or_else(|| parse_err(field, "not an integer"))?;
    if ts <= 0 {
        return Err(parse_err(field, "must be positive"));
    }
    Ok(ts)
}

/// Parse one query-hose record:
/// `{"sid":"s1","q":"obama","src":"typed","lang":"en","ts":1000}`.
pub fn parse_query_event(line: &str) -> Result<QueryEvent, StreamError> {
    let obj: Value =
        serde_json::from_str(line).map_err(|e| parse_err("record", e.to_string()))?;
    let session_id = obj_str(&obj, "sid")?.to_string();
    if session_id.is_empty() {
        return Err(parse_err("sid", "must be non-empty"));
    }
    let query = Query::normalize(obj_str(&obj, "q")?)
        .map_err(|e| parse_err("q", e.to_string()))?;
    let src = obj_str(&obj, "src")?;
    let source =
        QuerySource::parse(src).ok_or_else(|| parse_err("src", format!("unknown `{src}`")))?;
    let lang = obj_str(&obj, "lang")?.to_string();
    let ts = obj_ts(&obj, "ts")?;
    Ok(QueryEvent {
        session_id,
        query,
        source,
        lang,
        ts,
    })
}

/// Parse one firehose record:
/// `{"tid":"t1","text":"stay foolish steve jobs","lang":"en","ts":2000}`.
pub fn parse_tweet_event(line: &str) -> Result<TweetEvent, StreamError> {
    let obj: Value =
        serde_json::from_str(line).map_err(|e| parse_err("record", e.to_string()))?;
    let tweet_id = obj_str(&obj, "tid")?.to_string();
    let text = obj_str(&obj, "text")?.to_string();
    if text.is_empty() {
        return Err(parse_err("text", "must be non-empty"));
    }
    let lang = obj_str(&obj, "lang")?.to_string();
    let ts = obj_ts(&obj, "ts")?;
    Ok(TweetEvent {
        tweet_id,
        text,
        lang,
        ts,
    })
}

fn open_maybe_gz(path: &Path) -> std::io::Result<Box<dyn Read>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::read::GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Load a hose file, skipping (and counting) malformed lines.
fn load_lines<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, StreamError>,
) -> Result<(Vec<T>, usize), StreamError> {
    let reader = BufReader::new(open_maybe_gz(path)?);
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(ev) => out.push(ev),
            Err(e) => {
                eprintln!("warning: {}:{}: skipping line: {e}", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok((out, skipped))
}

pub fn load_query_hose(path: &Path) -> Result<(Vec<QueryEvent>, usize), StreamError> {
    load_lines(path, parse_query_event)
}

pub fn load_firehose(path: &Path) -> Result<(Vec<TweetEvent>, usize), StreamError> {
    load_lines(path, parse_tweet_event)
}

/// A single item from either hose, ordered by event time.
#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Query(QueryEvent),
    Tweet(TweetEvent),
}

impl Event {
    pub fn ts(&self) -> i64 {
        match self {
            Event::Query(e) => e.ts,
            Event::Tweet(e) => e.ts,
        }
    }
}

fn check_ordered(ts_list: impl Iterator<Item = i64>, tolerance: i64) -> Result<(), StreamError> {
    let mut max_ts = i64::MIN;
    for ts in ts_list {
        if ts < max_ts.saturating_sub(tolerance) {
            return Err(StreamError::OutOfOrderInput {
                ts,
                prev: max_ts,
                tolerance,
            });
        }
        max_ts = max_ts.max(ts);
    }
    Ok(())
}

/// Stable merge of the two hoses into one event-time-ordered stream. Ties
/// are broken query-before-tweet, then input order.
pub fn merge_streams(
    queries: Vec<QueryEvent>,
    tweets: Vec<TweetEvent>,
    tolerance: i64,
) -> Result<Vec<Event>, StreamError> {
    check_ordered(queries.iter().map(|e| e.ts), tolerance)?;
    check_ordered(tweets.iter().map(|e| e.ts), tolerance)?;
    let mut out = Vec::with_capacity(queries.len() + tweets.len());
    let mut qi = queries.into_iter().peekable();
    let mut ti = tweets.into_iter().peekable();
    loop {
        match (qi.peek(), ti.peek()) {
            (Some(q), Some(t)) => {
                if q.ts <= t.ts {
                    out.push(Event::Query(qi.next().unwrap()));
                } else {
                    out.push(Event::Tweet(ti.next().unwrap()));
                }
            }
            (Some(_), None) => out.push(Event::Query(qi.next().unwrap())),
            (None, Some(_)) => out.push(Event::Tweet(ti.next().unwrap())),
            (None, None) => break,
        }
    }
    Ok(out)
}

/// Maps event time onto wall time for paced replays. `f64::INFINITY`
/// replays as fast as possible.
#[derive(Clone, Copy, Debug)]
pub struct ReplayClock {
    pub speedup: f64,
}

impl ReplayClock {
    pub fn fast() -> Self {
        ReplayClock {
            speedup: f64::INFINITY,
        }
    }

    pub fn paced(speedup: f64) -> Self {
        assert!(speedup > 0.0);
        ReplayClock { speedup }
    }

    fn wait_until(&self, start_wall: Instant, start_event_ts: i64, event_ts: i64) {
        if !self.speedup.is_finite() {
            return;
        }
        let offset_ms = (event_ts - start_event_ts).max(0) as f64 / self.speedup;
        let target = start_wall + Duration::from_millis(offset_ms as u64);
        let now = Instant::now();
        if target > now {
            std::thread::sleep(target - now);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayReport {
    pub delivered: u64,
    pub queries: u64,
    pub tweets: u64,
    pub rate_limited: u64,
    pub skipped_lines: u64,
    pub decay_cycles: u64,
    pub ranking_cycles: u64,
    pub snapshots_written: u64,
    pub wall_ms: u64,
}

/// Deliver an ordered event stream to the engine, firing decay/prune and
/// ranking cycles on event-time interval boundaries. All cycles due at or
/// before an event's timestamp run before that event is delivered, so
/// snapshot contents are a pure function of events with strictly earlier
/// timestamps. Snapshots are published to `out_dir` when given.
pub fn replay(
    events: &[Event],
    clock: ReplayClock,
    engine: &mut Engine,
    out_dir: Option<&Path>,
) -> Result<ReplayReport, StreamError> {
    let started = Instant::now();
    let mut report = ReplayReport::default();
    let Some(first) = events.first() else {
        return Ok(report);
    };
    let start_event_ts = first.ts();
    let mut next_decay = start_event_ts + engine.cfg.decay_cycle_interval_ms;
    let mut next_rank = start_event_ts + engine.cfg.snapshot_interval_ms;

    for ev in events {
        let ts = ev.ts();
        loop {
            let due = next_decay.min(next_rank);
            if due > ts {
                break;
            }
            clock.wait_until(started, start_event_ts, due);
            // Decay runs before ranking when both are due at the same time.
            if next_decay <= next_rank {
                engine.run_decay_prune_cycle(next_decay);
                report.decay_cycles += 1;
                next_decay += engine.cfg.decay_cycle_interval_ms;
            } else {
                run_rank(engine, next_rank, out_dir, &mut report)?;
                next_rank += engine.cfg.snapshot_interval_ms;
            }
        }
        clock.wait_until(started, start_event_ts, ts);
        match ev {
            Event::Query(e) => {
                engine.on_query(e);
                report.queries += 1;
            }
            Event::Tweet(e) => {
                engine.on_tweet(e);
                report.tweets += 1;
            }
        }
        report.delivered += 1;
    }
    report.rate_limited = engine.metrics.rate_limited;
    report.wall_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

fn run_rank(
    engine: &mut Engine,
    now: i64,
    out_dir: Option<&Path>,
    report: &mut ReplayReport,
) -> Result<(), StreamError> {
    if let Some(dir) = out_dir {
        engine.run_ranking_cycle_to(now, dir)?;
        report.snapshots_written += 1;
    } else {
        engine.run_ranking_cycle(now);
    }
    report.ranking_cycles += 1;
    Ok(())
}
