//! Snapshot persistence: ranked suggestions and spelling corrections are
//! written to a temporary file, renamed into place, and only then named by
//! an atomically rewritten manifest. Readers that load whatever the
//! manifest names never observe a partial file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Query;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot record at line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("malformed manifest: {0}")]
    MalformedManifest(serde_json::Error),
}

/// Which engine profile produced a snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Realtime,
    Background,
}

impl Profile {
    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Realtime => "Realtime",
            Profile::Background => "Background",
        }
    }
}

/// One ranked suggestion with its raw feature values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub q: Query,
    pub score: f64,
    pub crf: f64,
    pub pmi: f64,
    pub llr: f64,
}

/// Spelling correction as persisted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpellRecord {
    pub q: Query,
    pub dist: f64,
    pub ratio: f64,
}

/// Suggestions and optional correction for one query.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub suggestions: Vec<Suggestion>,
    pub spell: Option<SpellRecord>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    q: Query,
    suggestions: Vec<Suggestion>,
    spell: Option<SpellRecord>,
}

/// An atomically published mapping from query to ranked suggestions.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub generation_id: u64,
    pub event_ts: i64,
    pub profile: Profile,
    pub entries: BTreeMap<Query, SnapshotEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub file: String,
    pub generation_id: u64,
    pub event_ts: i64,
}

fn manifest_path(dir: &Path, profile: Profile) -> PathBuf {
    dir.join(format!("MANIFEST.{}", profile.as_str()))
}

/// Write the snapshot and republish the manifest. The entries file is
/// fully written and renamed before the manifest points at it; an IO
/// failure leaves the previous manifest intact.
pub fn write_snapshot(s: &Snapshot, dir: &Path, retain_n: usize) -> Result<PathBuf, SnapshotError> {
    fs::create_dir_all(dir)?;
    let file_name = format!("snapshot-{}.{}.jsonl", s.generation_id, s.profile.as_str());
    let tmp_path = dir.join(format!(".tmp-{file_name}"));
    let final_path = dir.join(&file_name);
    {
        let file = fs::File::create(&tmp_path)?;
        let mut w = BufWriter::new(file);
        for (q, entry) in &s.entries {
            let line = SnapshotLine {
                q: q.clone(),
                suggestions: entry.suggestions.clone(),
                spell: entry.spell.clone(),
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp_path, &final_path)?;

    let manifest = Manifest {
        file: file_name,
        generation_id: s.generation_id,
        event_ts: s.event_ts,
    };
    let manifest_tmp = dir.join(format!(".tmp-MANIFEST.{}", s.profile.as_str()));
    {
        let file = fs::File::create(&manifest_tmp)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &manifest).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    let mpath = manifest_path(dir, s.profile);
    fs::rename(&manifest_tmp, &mpath)?;

    retire_old_snapshots(dir, s.profile, retain_n)?;
    Ok(mpath)
}

fn retire_old_snapshots(dir: &Path, profile: Profile, retain_n: usize) -> std::io::Result<()> {
    let suffix = format!(".{}.jsonl", profile.as_str());
    let mut generations: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(rest) = name.strip_prefix("snapshot-").and_then(|r| r.strip_suffix(&suffix)) {
            if let Ok(generation) = rest.parse::<u64>() {
                generations.push((generation, entry.path()));
            }
        }
    }
    generations.sort_by_key(|(generation, _)| std::cmp::Reverse(*generation));
    for (_, path) in generations.into_iter().skip(retain_n.max(1)) {
        fs::remove_file(path)?;
    }
    Ok(())
}

/// Read the manifest for a profile, if one has been published.
pub fn read_manifest(dir: &Path, profile: Profile) -> Result<Option<Manifest>, SnapshotError> {
    let path = manifest_path(dir, profile);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let manifest = serde_json::from_str(text.trim()).map_err(SnapshotError::MalformedManifest)?;
    Ok(Some(manifest))
}

/// Load the snapshot a manifest names.
pub fn read_snapshot(
    dir: &Path,
    manifest: &Manifest,
    profile: Profile,
) -> Result<Snapshot, SnapshotError> {
    let file = fs::File::open(dir.join(&manifest.file))?;
    let reader = BufReader::new(file);
    let mut entries = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parsed: SnapshotLine =
            serde_json::from_str(&line).map_err(|source| SnapshotError::Malformed {
                line: i + 1,
                source,
            })?;
        entries.insert(
            parsed.q,
            SnapshotEntry {
                suggestions: parsed.suggestions,
                spell: parsed.spell,
            },
        );
    }
    Ok(Snapshot {
        generation_id: manifest.generation_id,
        event_ts: manifest.event_ts,
        profile,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        Query::normalize(s).unwrap()
    }

    fn sample(generation_id: u64) -> Snapshot {
        let mut entries = BTreeMap::new();
        entries.insert(
            q("#scotus"),
            SnapshotEntry {
                suggestions: vec![Suggestion {
                    q: q("healthcare"),
                    score: 0.61,
                    crf: 0.8,
                    pmi: 2.0,
                    llr: 12.0,
                }],
                spell: None,
            },
        );
        Snapshot {
            generation_id,
            event_ts: 1000 * generation_id as i64,
            profile: Profile::Realtime,
            entries,
        }
    }

    #[test]
    fn round_trip_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let snap = sample(1);
        write_snapshot(&snap, dir.path(), 12).unwrap();
        let manifest = read_manifest(dir.path(), Profile::Realtime).unwrap().unwrap();
        assert_eq!(manifest.generation_id, 1);
        let loaded = read_snapshot(dir.path(), &manifest, Profile::Realtime).unwrap();
        assert_eq!(loaded, snap);
    }

    #[test]
    fn missing_manifest_is_none() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_manifest(dir.path(), Profile::Realtime).unwrap().is_none());
        assert!(read_manifest(dir.path(), Profile::Background).unwrap().is_none());
    }

    #[test]
    fn field_names_are_pinned() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&sample(3), dir.path(), 12).unwrap();
        let body = std::fs::read_to_string(dir.path().join("snapshot-3.Realtime.jsonl")).unwrap();
        assert!(body.contains("\"q\":\"#scotus\""));
        assert!(body.contains("\"suggestions\":[{\"q\":\"healthcare\""));
        assert!(body.contains("\"score\":"));
        assert!(body.contains("\"crf\":"));
        assert!(body.contains("\"pmi\":"));
        assert!(body.contains("\"llr\":"));
        assert!(body.contains("\"spell\":null"));
        let manifest = std::fs::read_to_string(dir.path().join("MANIFEST.Realtime")).unwrap();
        assert!(manifest.contains("\"file\":\"snapshot-3.Realtime.jsonl\""));
        assert!(manifest.contains("\"generation_id\":3"));
        assert!(manifest.contains("\"event_ts\":3000"));
    }

    #[test]
    fn retain_limit_deletes_oldest() {
        let dir = tempfile::tempdir().unwrap();
        for generation in 1..=3 {
            write_snapshot(&sample(generation), dir.path(), 2).unwrap();
        }
        assert!(!dir.path().join("snapshot-1.Realtime.jsonl").exists());
        assert!(dir.path().join("snapshot-2.Realtime.jsonl").exists());
        assert!(dir.path().join("snapshot-3.Realtime.jsonl").exists());
        let manifest = read_manifest(dir.path(), Profile::Realtime).unwrap().unwrap();
        assert_eq!(manifest.file, "snapshot-3.Realtime.jsonl");
    }

    #[test]
    fn profiles_use_separate_manifests() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&sample(1), dir.path(), 12).unwrap();
        let mut bg = sample(7);
        bg.profile = Profile::Background;
        write_snapshot(&bg, dir.path(), 12).unwrap();
        assert_eq!(
            read_manifest(dir.path(), Profile::Realtime).unwrap().unwrap().generation_id,
            1
        );
        assert_eq!(
            read_manifest(dir.path(), Profile::Background).unwrap().unwrap().generation_id,
            7
        );
    }
}
