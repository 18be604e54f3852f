//! Churn analytics over query-hose files: per-interval top-k term
//! rankings, churn rates between adjacent intervals, and normalized
//! per-query frequency time series, emitted as CSV.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::model::{Query, QueryEvent};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("k mismatch: {0} vs {1}")]
    KMismatch(usize, usize),
}

/// Counting granularity: individual whitespace tokens of queries, or whole
/// query strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    Term,
    WholeQuery,
}

/// Exact top-k ranking of one tumbling interval.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalTopK {
    pub interval_start: i64,
    pub interval_len: i64,
    pub k: usize,
    /// Ranked (term, count), counts non-increasing, ties lexicographic.
    pub entries: Vec<(String, u64)>,
}

impl IntervalTopK {
    pub fn terms(&self) -> HashSet<&str> {
        self.entries.iter().map(|(t, _)| t.as_str()).collect()
    }
}

fn interval_of(ts: i64, interval_len: i64) -> i64 {
    ts.div_euclid(interval_len) * interval_len
}

/// Exact top-k counting per tumbling interval. With `dedupe_session`, a
/// term counts at most once per session per interval.
pub fn topk_per_interval(
    events: &[QueryEvent],
    k: usize,
    interval_len: i64,
    granularity: Granularity,
    dedupe_session: bool,
) -> Vec<IntervalTopK> {
    assert!(k >= 1 && interval_len > 0);
    let mut counts: BTreeMap<i64, HashMap<String, u64>> = BTreeMap::new();
    let mut seen: HashSet<(i64, String, String)> = HashSet::new();
    for ev in events {
        let start = interval_of(ev.ts, interval_len);
        let bucket = counts.entry(start).or_default();
        let mut add = |term: &str| {
            if dedupe_session
                && !seen.insert((start, ev.session_id.clone(), term.to_string()))
            {
                return;
            }
            *bucket.entry(term.to_string()).or_insert(0) += 1;
        };
        match granularity {
            Granularity::Term => {
                for tok in ev.query.tokens() {
                    add(tok);
                }
            }
            Granularity::WholeQuery => add(ev.query.text()),
        }
    }
    counts
        .into_iter()
        .map(|(interval_start, bucket)| {
            let mut entries: Vec<(String, u64)> = bucket.into_iter().collect();
            entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            entries.truncate(k);
            IntervalTopK {
                interval_start,
                interval_len,
                k,
                entries,
            }
        })
        .collect()
}

/// Fraction of interval `a`'s top-k absent from interval `b`'s top-k.
pub fn churn_rate(a: &IntervalTopK, b: &IntervalTopK) -> Result<f64, AnalyticsError> {
    if a.k != b.k {
        return Err(AnalyticsError::KMismatch(a.k, b.k));
    }
    let overlap = a.terms().intersection(&b.terms()).count();
    Ok(1.0 - overlap as f64 / a.k as f64)
}

/// One row of the normalized frequency table.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyRow {
    pub interval_start: i64,
    pub query: Query,
    pub freq: f64,
}

/// Per-interval frequency of each tracked query, normalized to the total
/// number of query events in the interval. Emits a row (possibly 0.0) for
/// every tracked query in every non-empty interval.
pub fn frequency_timeseries(
    events: &[QueryEvent],
    queries: &[Query],
    interval_len: i64,
) -> Vec<FrequencyRow> {
    assert!(interval_len > 0);
    let tracked: HashSet<&Query> = queries.iter().collect();
    let mut totals: BTreeMap<i64, u64> = BTreeMap::new();
    let mut matches: HashMap<(i64, &Query), u64> = HashMap::new();
    for ev in events {
        let start = interval_of(ev.ts, interval_len);
        *totals.entry(start).or_insert(0) += 1;
        if let Some(q) = tracked.get(&ev.query) {
            *matches.entry((start, q)).or_insert(0) += 1;
        }
    }
    let mut rows = Vec::new();
    for (start, total) in &totals {
        for q in queries {
            let count = matches.get(&(*start, q)).copied().unwrap_or(0);
            rows.push(FrequencyRow {
                interval_start: *start,
                query: q.clone(),
                freq: count as f64 / *total as f64,
            });
        }
    }
    rows
}

/// `churn.csv`: one row per adjacent interval pair, keyed by the later
/// interval's start.
pub fn write_churn_csv(intervals: &[IntervalTopK], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "interval_start,churn")?;
    for pair in intervals.windows(2) {
        let churn = churn_rate(&pair[0], &pair[1]).map_err(std::io::Error::other)?;
        writeln!(out, "{},{}", pair[1].interval_start, churn)?;
    }
    Ok(())
}

/// `freq.csv`: interval_start, query, freq.
pub fn write_freq_csv(rows: &[FrequencyRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "interval_start,query,freq")?;
    for row in rows {
        let quoted = if row.query.text().contains(',') || row.query.text().contains('"') {
            format!("\"{}\"", row.query.text().replace('"', "\"\""))
        } else {
            row.query.text().to_string()
        };
        writeln!(out, "{},{},{}", row.interval_start, quoted, row.freq)?;
    }
    Ok(())
}
