//! Background model runs: the same engine code path replayed over
//! long-horizon input with a slow-decay profile, plus the pairwise
//! spelling job over every retained query.

use std::path::{Path, PathBuf};

use crate::engine::Engine;
use crate::model::{EngineConfig, Query};
use crate::snapshot::{write_snapshot, Profile, SpellRecord};
use crate::spelling::{background_pairwise_job, EditCosts};
use crate::streams::{replay, Event, ReplayClock, ReplayReport, StreamError};

/// Replay the events under the given (typically slow-decay) config, then
/// write one final Background snapshot whose spell entries come from the
/// pairwise edit-distance job over the whole retained query list.
pub fn run_background(
    events: &[Event],
    cfg: EngineConfig,
    out_dir: &Path,
) -> Result<(PathBuf, ReplayReport), StreamError> {
    let mut engine = Engine::new(cfg, Profile::Background);
    // Interval snapshots during the replay land in the same directory;
    // the final one below supersedes them through the manifest.
    let report = replay(events, ReplayClock::fast(), &mut engine, Some(out_dir))?;

    let now = events.last().map_or(0, Event::ts);
    let mut snap = engine.run_ranking_cycle(now);

    let costs = EditCosts::default();
    let queries: Vec<(Query, f64)> = engine
        .stores
        .qstats
        .iter()
        .map(|(q, e)| (q.clone(), e.weight.read(now, &engine.cfg)))
        .collect();
    for (q, corr) in background_pairwise_job(&queries, &engine.cfg, &costs) {
        let record = SpellRecord {
            q: corr.query,
            dist: corr.distance,
            ratio: corr.ratio,
        };
        snap.entries
            .entry(q)
            .or_default()
            .spell = Some(record);
    }

    let manifest = write_snapshot(&snap, out_dir, engine.cfg.retain_n)?;
    Ok((manifest, report))
}
