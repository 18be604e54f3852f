//! The frontend cache: polls snapshot manifests, keeps the latest
//! realtime and background snapshots in memory, interpolates the two, and
//! answers suggestion requests over a small HTTP endpoint.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::model::Query;
use crate::snapshot::{
    read_manifest, read_snapshot, Profile, Snapshot, SnapshotEntry, SpellRecord, Suggestion,
};

/// Immutable serving state; refresh builds a new one and swaps it in, so
/// requests in flight keep reading a complete snapshot.
#[derive(Clone, Debug, Default)]
pub struct ServingState {
    pub realtime: Option<Snapshot>,
    pub background: Option<Snapshot>,
    pub last_poll_ts: i64,
}

#[derive(Clone, Debug, Default)]
pub struct RefreshOutcome {
    pub changed: bool,
    pub errors: Vec<String>,
}

/// Load any snapshot whose generation id is newer than the loaded one.
/// IO or parse failures leave the prior state serving.
pub fn refresh(dir: &Path, state: &mut ServingState) -> RefreshOutcome {
    let mut outcome = RefreshOutcome::default();
    for profile in [Profile::Realtime, Profile::Background] {
        let slot = match profile {
            Profile::Realtime => &mut state.realtime,
            Profile::Background => &mut state.background,
        };
        let manifest = match read_manifest(dir, profile) {
            Ok(Some(m)) => m,
            Ok(None) => continue,
            Err(e) => {
                outcome.errors.push(format!("{}: {e}", profile.as_str()));
                continue;
            }
        };
        let loaded = slot.as_ref().map(|s| s.generation_id);
        if loaded.is_some_and(|g| manifest.generation_id <= g) {
            continue;
        }
        match read_snapshot(dir, &manifest, profile) {
            Ok(snap) => {
                *slot = Some(snap);
                outcome.changed = true;
            }
            Err(e) => outcome.errors.push(format!("{}: {e}", profile.as_str())),
        }
    }
    state.last_poll_ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0);
    outcome
}

/// Linear blend of realtime and background suggestion lists:
/// `mu * rt + (1 - mu) * bg` over the candidate union, a missing side
/// contributing zero. The realtime spelling correction wins if present.
pub fn interpolate(
    rt: Option<&SnapshotEntry>,
    bg: Option<&SnapshotEntry>,
    mu: f64,
    top_k: usize,
) -> (Vec<Suggestion>, Option<SpellRecord>) {
    debug_assert!((0.0..=1.0).contains(&mu));
    let mut merged: BTreeMap<Query, Suggestion> = BTreeMap::new();
    if let Some(entry) = rt {
        for s in &entry.suggestions {
            merged.insert(
                s.q.clone(),
                Suggestion {
                    score: mu * s.score,
                    ..s.clone()
                },
            );
        }
    }
    if let Some(entry) = bg {
        for s in &entry.suggestions {
            merged
                .entry(s.q.clone())
                .and_modify(|m| m.score += (1.0 - mu) * s.score)
                .or_insert_with(|| Suggestion {
                    score: (1.0 - mu) * s.score,
                    ..s.clone()
                });
        }
    }
    let mut out: Vec<Suggestion> = merged.into_values().collect();
    out.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.q.cmp(&y.q))
    });
    out.truncate(top_k);
    let spell = rt
        .and_then(|e| e.spell.clone())
        .or_else(|| bg.and_then(|e| e.spell.clone()));
    (out, spell)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GenerationIds {
    pub realtime: Option<u64>,
    pub background: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuggestResponse {
    pub query: Query,
    pub suggestions: Vec<Suggestion>,
    pub spell: Option<SpellRecord>,
    pub generation_ids: GenerationIds,
}

#[derive(Debug)]
pub struct BadRequest(pub String);

/// Normalize the raw query, look it up in both profiles, interpolate.
/// Unknown queries get empty lists, not errors.
pub fn serve_suggestions(
    raw: &str,
    state: &ServingState,
    mu: f64,
    top_k: usize,
) -> Result<SuggestResponse, BadRequest> {
    let query = Query::normalize(raw).map_err(|e| BadRequest(e.to_string()))?;
    let rt = state
        .realtime
        .as_ref()
        .and_then(|s| s.entries.get(&query));
    let bg = state
        .background
        .as_ref()
        .and_then(|s| s.entries.get(&query));
    let (suggestions, spell) = interpolate(rt, bg, mu, top_k);
    Ok(SuggestResponse {
        query,
        suggestions,
        spell,
        generation_ids: GenerationIds {
            realtime: state.realtime.as_ref().map(|s| s.generation_id),
            background: state.background.as_ref().map(|s| s.generation_id),
        },
    })
}

pub struct ServerConfig {
    pub dir: PathBuf,
    pub port: u16,
    pub mu: f64,
    pub top_k: usize,
    pub poll_interval: Duration,
}

/// A running suggestion server; drop or call `shutdown` to stop.
pub struct Server {
    pub addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Start the endpoint: `GET /suggest?q=<urlencoded>` and `GET /healthz`.
/// A poller thread refreshes from the snapshot directory; request handlers
/// read an immutable state reference and never block on refresh IO.
pub fn start_server(cfg: ServerConfig) -> std::io::Result<Server> {
    let listener = TcpListener::bind(("127.0.0.1", cfg.port))?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));

    let mut initial = ServingState::default();
    let outcome = refresh(&cfg.dir, &mut initial);
    for err in &outcome.errors {
        eprintln!("warning: refresh: {err}");
    }
    let shared: Arc<RwLock<Arc<ServingState>>> = Arc::new(RwLock::new(Arc::new(initial)));

    {
        let shared = Arc::clone(&shared);
        let stop = Arc::clone(&stop);
        let dir = cfg.dir.clone();
        let interval = cfg.poll_interval;
        std::thread::spawn(move || {
            let mut last_refresh = std::time::Instant::now();
            while !stop.load(Ordering::SeqCst) {
                // Short sleeps keep shutdown responsive regardless of the
                // poll interval.
                std::thread::sleep(interval.min(Duration::from_millis(100)));
                if last_refresh.elapsed() < interval {
                    continue;
                }
                last_refresh = std::time::Instant::now();
                let mut next = (**shared.read().unwrap()).clone();
                let outcome = refresh(&dir, &mut next);
                for err in &outcome.errors {
                    eprintln!("warning: refresh: {err}");
                }
                *shared.write().unwrap() = Arc::new(next);
            }
        });
    }

    let mu = cfg.mu;
    let top_k = cfg.top_k;
    let accept_stop = Arc::clone(&stop);
    let accept_shared = Arc::clone(&shared);
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let state = Arc::clone(&*accept_shared.read().unwrap());
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &state, mu, top_k);
            });
        }
    });

    Ok(Server {
        addr,
        stop,
        handle: Some(handle),
    })
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
                if let Some(v) = hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    out.push(v);
                    i += 3;
                } else {
                    out.push(b'%');
                    i += 1;
                }
            }
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

fn handle_connection(
    mut stream: TcpStream,
    state: &ServingState,
    mu: f64,
    top_k: usize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let (method, target) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    if method != "GET" {
        return respond(&mut stream, "405 Method Not Allowed", "{\"error\":\"GET only\"}");
    }
    let (path, rawquery) = target.split_once('?').unwrap_or((target, ""));
    match path {
        "/suggest" => {
            let q = rawquery
                .split('&')
                .find_map(|kv| kv.strip_prefix("q="))
                .map(percent_decode);
            let Some(q) = q else {
                return respond(
                    &mut stream,
                    "400 Bad Request",
                    "{\"error\":\"missing q parameter\"}",
                );
            };
            match serve_suggestions(&q, state, mu, top_k) {
                Ok(resp) => {
                    let body = serde_json::to_string(&resp).unwrap_or_default();
                    respond(&mut stream, "200 OK", &body)
                }
                Err(BadRequest(msg)) => respond(
                    &mut stream,
                    "400 Bad Request",
                    &format!("{{\"error\":{}}}", serde_json::to_string(&msg).unwrap()),
                ),
            }
        }
        "/healthz" => {
            let ids = GenerationIds {
                realtime: state.realtime.as_ref().map(|s| s.generation_id),
                background: state.background.as_ref().map(|s| s.generation_id),
            };
            let body = serde_json::json!({
                "generation_ids": ids,
                "last_poll_ts": state.last_poll_ts,
            });
            respond(&mut stream, "200 OK", &body.to_string())
        }
        _ => respond(&mut stream, "404 Not Found", "{\"error\":\"not found\"}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::write_snapshot;
    use std::collections::BTreeMap;

    fn q(s: &str) -> Query {
        Query::normalize(s).unwrap()
    }

    fn sug(text: &str, score: f64) -> Suggestion {
        Suggestion {
            q: q(text),
            score,
            crf: 0.0,
            pmi: 0.0,
            llr: 0.0,
        }
    }

    fn entry(suggestions: Vec<Suggestion>) -> SnapshotEntry {
        SnapshotEntry {
            suggestions,
            spell: None,
        }
    }

    #[test]
    fn interpolate_with_missing_background_scales_by_mu() {
        let rt = entry(vec![sug("b", 0.8), sug("c", 0.4)]);
        let (merged, _) = interpolate(Some(&rt), None, 0.7, 10);
        assert_eq!(merged[0].q, q("b"));
        assert!((merged[0].score - 0.56).abs() < 1e-12);
        assert!((merged[1].score - 0.28).abs() < 1e-12);
    }

    #[test]
    fn interpolate_blends_both_sides() {
        let rt = entry(vec![sug("b", 0.8)]);
        let bg = entry(vec![sug("c", 0.9)]);
        let (merged, _) = interpolate(Some(&rt), Some(&bg), 0.7, 10);
        assert_eq!(merged[0].q, q("b"));
        assert!((merged[0].score - 0.56).abs() < 1e-12);
        assert_eq!(merged[1].q, q("c"));
        assert!((merged[1].score - 0.27).abs() < 1e-12);
    }

    #[test]
    fn interpolate_mu_one_is_realtime_order() {
        let rt = entry(vec![sug("b", 0.8), sug("c", 0.4)]);
        let bg = entry(vec![sug("c", 0.9), sug("b", 0.1)]);
        let (merged, _) = interpolate(Some(&rt), Some(&bg), 1.0, 10);
        let order: Vec<&str> = merged.iter().map(|s| s.q.text()).collect();
        assert_eq!(order, vec!["b", "c"]);
    }

    #[test]
    fn realtime_spell_wins_over_background() {
        let mut rt = entry(vec![]);
        rt.spell = Some(SpellRecord {
            q: q("fresh"),
            dist: 1.0,
            ratio: 20.0,
        });
        let mut bg = entry(vec![]);
        bg.spell = Some(SpellRecord {
            q: q("stale"),
            dist: 1.0,
            ratio: 30.0,
        });
        let (_, spell) = interpolate(Some(&rt), Some(&bg), 0.5, 10);
        assert_eq!(spell.unwrap().q, q("fresh"));
        let (_, spell) = interpolate(None, Some(&bg), 0.5, 10);
        assert_eq!(spell.unwrap().q, q("stale"));
    }

    #[test]
    fn refresh_empty_dir_serves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut state = ServingState::default();
        let outcome = refresh(dir.path(), &mut state);
        assert!(!outcome.changed);
        assert!(outcome.errors.is_empty());
        let resp = serve_suggestions("anything", &state, 0.7, 10).unwrap();
        assert!(resp.suggestions.is_empty());
        assert!(resp.spell.is_none());
    }

    #[test]
    fn refresh_loads_new_generations_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(q("a"), entry(vec![sug("b", 0.5)]));
        let snap = Snapshot {
            generation_id: 1,
            event_ts: 100,
            profile: Profile::Realtime,
            entries: entries.clone(),
        };
        write_snapshot(&snap, dir.path(), 12).unwrap();

        let mut state = ServingState::default();
        assert!(refresh(dir.path(), &mut state).changed);
        assert!(!refresh(dir.path(), &mut state).changed);

        let newer = Snapshot {
            generation_id: 2,
            event_ts: 200,
            profile: Profile::Realtime,
            entries,
        };
        write_snapshot(&newer, dir.path(), 12).unwrap();
        assert!(refresh(dir.path(), &mut state).changed);
        assert_eq!(state.realtime.as_ref().unwrap().generation_id, 2);
    }

    #[test]
    fn corrupted_snapshot_keeps_prior_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = BTreeMap::new();
        entries.insert(q("a"), entry(vec![sug("b", 0.5)]));
        let snap = Snapshot {
            generation_id: 1,
            event_ts: 100,
            profile: Profile::Realtime,
            entries,
        };
        write_snapshot(&snap, dir.path(), 12).unwrap();
        let mut state = ServingState::default();
        refresh(dir.path(), &mut state);

        // A corrupt newer generation: manifest names a garbage file.
        std::fs::write(dir.path().join("snapshot-2.Realtime.jsonl"), "garbage\n").unwrap();
        std::fs::write(
            dir.path().join("MANIFEST.Realtime"),
            "{\"file\":\"snapshot-2.Realtime.jsonl\",\"generation_id\":2,\"event_ts\":200}\n",
        )
        .unwrap();
        let outcome = refresh(dir.path(), &mut state);
        assert!(!outcome.changed);
        assert!(!outcome.errors.is_empty());
        assert_eq!(state.realtime.as_ref().unwrap().generation_id, 1);
        let resp = serve_suggestions("a", &state, 1.0, 10).unwrap();
        assert_eq!(resp.suggestions.len(), 1);
    }

    #[test]
    fn serve_rejects_unparseable_query() {
        let state = ServingState::default();
        assert!(serve_suggestions("   ", &state, 0.7, 10).is_err());
    }
}
