//! Spelling correction: a positional-cost Damerau-Levenshtein variant and
//! candidate selection over the query statistics store, plus the
//! long-horizon pairwise job.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{EngineConfig, Query};
use crate::stores::QueryStatsStore;

#[derive(Debug, Error, PartialEq)]
pub enum SpellError {
    #[error("sigil mismatch: `{0}` vs `{1}`")]
    SigilMismatch(Query, Query),
}

/// Edit operation costs. Substitutions at the first or last character
/// position of either string cost `boundary_sub`: misspellings are more
/// often internal, so boundary changes are penalized harder.
#[derive(Clone, Copy, Debug)]
pub struct EditCosts {
    pub internal_sub: f64,
    pub boundary_sub: f64,
    pub insert: f64,
    pub delete: f64,
    pub transpose: f64,
}

impl Default for EditCosts {
    fn default() -> Self {
        EditCosts {
            internal_sub: 1.0,
            boundary_sub: 1.5,
            insert: 1.0,
            delete: 1.0,
            transpose: 1.0,
        }
    }
}

/// Damerau-Levenshtein (optimal string alignment) with positional
/// substitution costs. Sigil characters are stripped before the DP; a
/// hashtag can only be compared with a hashtag, a mention with a mention.
/// Symmetric in its arguments whenever `insert == delete`.
pub fn weighted_edit_distance(a: &Query, b: &Query, costs: &EditCosts) -> Result<f64, SpellError> {
    if a.sigil() != b.sigil() {
        return Err(SpellError::SigilMismatch(a.clone(), b.clone()));
    }
    Ok(weighted_edit_distance_raw(a.stripped(), b.stripped(), costs))
}

pub fn weighted_edit_distance_raw(a: &str, b: &str, costs: &EditCosts) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (m, n) = (a.len(), b.len());
    if m == 0 {
        return n as f64 * costs.insert;
    }
    if n == 0 {
        return m as f64 * costs.delete;
    }

    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut d = vec![0.0f64; (m + 1) * (n + 1)];
    for i in 1..=m {
        d[idx(i, 0)] = i as f64 * costs.delete;
    }
    for j in 1..=n {
        d[idx(0, j)] = j as f64 * costs.insert;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub_cost = if a[i - 1] == b[j - 1] {
                0.0
            } else if i == 1 || i == m || j == 1 || j == n {
                costs.boundary_sub
            } else {
                costs.internal_sub
            };
            let mut best = (d[idx(i - 1, j - 1)] + sub_cost)
                .min(d[idx(i - 1, j)] + costs.delete)
                .min(d[idx(i, j - 1)] + costs.insert);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[idx(i - 2, j - 2)] + costs.transpose);
            }
            d[idx(i, j)] = best;
        }
    }
    d[idx(m, n)]
}

/// A spelling correction: the suggested form, its edit distance from the
/// original, and the weight ratio that justified it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpellCorrection {
    pub query: Query,
    pub distance: f64,
    pub ratio: f64,
}

const WEIGHT_EPSILON: f64 = 1e-6;

fn best_candidate<'a>(
    a: &Query,
    weight_a: f64,
    candidates: impl Iterator<Item = (&'a Query, f64)>,
    cfg: &EngineConfig,
    costs: &EditCosts,
) -> Option<SpellCorrection> {
    let a_len = a.stripped().chars().count() as f64;
    let mut best: Option<SpellCorrection> = None;
    let mut best_weight = f64::NEG_INFINITY;
    for (b, weight_b) in candidates {
        if b == a || b.sigil() != a.sigil() {
            continue;
        }
        // Distance is at least the length difference; skip the DP when the
        // lengths alone rule the pair out.
        let b_len = b.stripped().chars().count() as f64;
        if (a_len - b_len).abs() > cfg.spell_distance_max {
            continue;
        }
        let ratio = weight_b / weight_a.max(WEIGHT_EPSILON);
        if ratio < cfg.spell_ratio_min {
            continue;
        }
        let distance = weighted_edit_distance_raw(a.stripped(), b.stripped(), costs);
        if distance > cfg.spell_distance_max {
            continue;
        }
        let better = match &best {
            None => true,
            Some(cur) => {
                weight_b > best_weight
                    || (weight_b == best_weight
                        && (distance < cur.distance
                            || (distance == cur.distance && b < &cur.query)))
            }
        };
        if better {
            best_weight = weight_b;
            best = Some(SpellCorrection {
                query: b.clone(),
                distance,
                ratio,
            });
        }
    }
    best
}

/// Best correction for `a` among known queries: within the distance bound,
/// at least `spell_ratio_min` times heavier, same sigil class. Ties go to
/// the smaller distance, then lexicographic order.
pub fn spelling_candidate(
    a: &Query,
    now: i64,
    qstats: &QueryStatsStore,
    cfg: &EngineConfig,
    costs: &EditCosts,
) -> Option<SpellCorrection> {
    let weight_a = qstats.weight(a, now, cfg);
    best_candidate(
        a,
        weight_a,
        qstats.iter().map(|(q, e)| (q, e.weight.read(now, cfg))),
        cfg,
        costs,
    )
}

/// Long-span pairwise job: corrections for every query in the list against
/// every other. Length-bucketed so each query only scans buckets within
/// the distance bound.
pub fn background_pairwise_job(
    queries: &[(Query, f64)],
    cfg: &EngineConfig,
    costs: &EditCosts,
) -> HashMap<Query, SpellCorrection> {
    let mut buckets: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, (q, _)) in queries.iter().enumerate() {
        buckets.entry(q.stripped().chars().count()).or_default().push(i);
    }
    let max_delta = cfg.spell_distance_max.floor() as usize;
    let mut out = HashMap::new();
    for (a, weight_a) in queries {
        let a_len = a.stripped().chars().count();
        let lo = a_len.saturating_sub(max_delta);
        let hi = a_len + max_delta;
        let candidates = (lo..=hi)
            .filter_map(|len| buckets.get(&len))
            .flatten()
            .map(|&i| (&queries[i].0, queries[i].1));
        if let Some(corr) = best_candidate(a, *weight_a, candidates, cfg, costs) {
            out.insert(a.clone(), corr);
        }
    }
    out
}
