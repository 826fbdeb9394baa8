//! Dataset parsers for the three source formats, the canonical interchange
//! format, and train/test dataset assembly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{make_labeled, Cascade, LabeledCascade, Virality, ViralityConfig};
use crate::cascade::label_cascade;
use crate::error::{Result, VedsaError};

/// Canonical interchange format header. Line-delimited: this header, then
/// one JSON record per cascade.
pub const CANONICAL_HEADER: &str = "#vedsa-canonical v1";

/// Retweet times beyond this horizon are dropped (Twitter cascades are
/// tracked for 7 days).
pub const TWITTER_TRACK_HOURS: f64 = 168.0;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Deterministic train/test split description.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    #[serde(default)]
    pub balance: Balance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    #[default]
    None,
    /// Undersample the majority class in the training split.
    Undersample,
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.trim_matches('"').parse().map_err(|_| VedsaError::Parse {
        line,
        message: format!("cannot parse number from {tok:?}"),
    })
}

/// Parses the SNAP seismic Twitter layout: per tweet, a header line
/// `<tweet_id> <num_events>` followed by `num_events` lines of
/// `<relative_time_seconds> <follower_count>`; the first event is the
/// original tweet at time 0. Follower counts are parsed past, never stored.
pub fn parse_twitter(path: &Path) -> Result<Vec<Cascade>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut cascades = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id = toks
            .next()
            .ok_or_else(|| VedsaError::Parse { line: ln + 1, message: "missing tweet id".into() })?
            .to_string();
        let count: usize = parse_num(
            toks.next().ok_or_else(|| VedsaError::Parse {
                line: ln + 1,
                message: "missing event count".into(),
            })?,
            ln + 1,
        )?;
        if count == 0 {
            return Err(VedsaError::Parse { line: ln + 1, message: "event count must be >= 1".into() });
        }
        let mut events = Vec::with_capacity(count);
        for _ in 0..count {
            let (eln, eline) = lines.next().ok_or_else(|| VedsaError::Parse {
                line: ln + 1,
                message: format!("record {id} truncated"),
            })?;
            let eline = eline?;
            let mut etoks = eline.split_whitespace();
            let secs: f64 = parse_num(
                etoks.next().ok_or_else(|| VedsaError::Parse {
                    line: eln + 1,
                    message: "missing event time".into(),
                })?,
                eln + 1,
            )?;
            let hours = secs / SECONDS_PER_HOUR;
            if hours <= TWITTER_TRACK_HOURS {
                events.push(hours);
            }
        }
        cascades.push(Cascade::from_raw(id, events)?);
    }
    Ok(cascades)
}

/// Parses Digg votes: one row per vote, `timestamp,voter_id,story_id`
/// (comma or whitespace separated, optionally quoted). One cascade per
/// story; rows may arrive out of order.
pub fn parse_digg(path: &Path) -> Result<Vec<Cascade>> {
    let reader = BufReader::new(File::open(path)?);
    let mut by_story: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if toks.len() < 3 {
            return Err(VedsaError::Parse {
                line: ln + 1,
                message: format!("expected 3 fields, got {}", toks.len()),
            });
        }
        let ts: f64 = parse_num(toks[0], ln + 1)?;
        let story = toks[2].trim_matches('"').to_string();
        by_story.entry(story).or_default().push(ts / SECONDS_PER_HOUR);
    }
    by_story
        .into_iter()
        .map(|(story, times)| Cascade::from_raw(story, times))
        .collect()
}

/// Parses the Weibo repost-chain layout: per original post, a header line
/// `<post_id> <timestamp> <num_reposts>` followed by `num_reposts` lines of
/// `<repost_timestamp> <uid>`. When `sample_to` is given, a seeded uniform
/// sample of that many cascades is returned.
pub fn parse_weibo(path: &Path, sample_to: Option<(usize, u64)>) -> Result<Vec<Cascade>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut cascades = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id = toks
            .next()
            .ok_or_else(|| VedsaError::Parse { line: ln + 1, message: "missing post id".into() })?
            .to_string();
        let origin: f64 = parse_num(
            toks.next().ok_or_else(|| VedsaError::Parse {
                line: ln + 1,
                message: "missing post timestamp".into(),
            })?,
            ln + 1,
        )?;
        let count: usize = parse_num(
            toks.next().ok_or_else(|| VedsaError::Parse {
                line: ln + 1,
                message: "missing repost count".into(),
            })?,
            ln + 1,
        )?;
        let mut events = vec![origin / SECONDS_PER_HOUR];
        for _ in 0..count {
            let (eln, eline) = lines.next().ok_or_else(|| VedsaError::Parse {
                line: ln + 1,
                message: format!("record {id} truncated"),
            })?;
            let eline = eline?;
            let ts: f64 = parse_num(
                eline.split_whitespace().next().ok_or_else(|| VedsaError::Parse {
                    line: eln + 1,
                    message: "missing repost timestamp".into(),
                })?,
                eln + 1,
            )?;
            events.push(ts / SECONDS_PER_HOUR);
        }
        cascades.push(Cascade::from_raw(id, events)?);
    }
    if let Some((k, seed)) = sample_to {
        if cascades.len() > k {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            cascades.shuffle(&mut rng);
            cascades.truncate(k);
            cascades.sort_by(|a, b| a.id.cmp(&b.id));
        }
    }
    Ok(cascades)
}

/// Writes cascades to the canonical line-delimited interchange format.
pub fn write_canonical(cascades: &[Cascade], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CANONICAL_HEADER}")?;
    for c in cascades {
        writeln!(w, "{}", serde_json::to_string(c)?)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the canonical interchange format; rejects unknown versions.
pub fn read_canonical(path: &Path) -> Result<Vec<Cascade>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| VedsaError::Parse { line: 1, message: "empty canonical file".into() })??;
    if header != CANONICAL_HEADER {
        return Err(VedsaError::SchemaVersion {
            expected: CANONICAL_HEADER.into(),
            found: header,
        });
    }
    let mut cascades = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Cascade = serde_json::from_str(&line).map_err(|e| VedsaError::Parse {
            line: ln + 2,
            message: e.to_string(),
        })?;
        cascades.push(c);
    }
    Ok(cascades)
}

/// Total reshare count over a corpus (events excluding nothing; every event
/// including the source counts toward the dataset tables).
pub fn total_events(cascades: &[Cascade]) -> u64 {
    cascades.iter().map(|c| c.n() as u64).sum()
}

/// Chooses zeta2 as the smallest event count for which the fraction of
/// cascades with n >= zeta2 is at most `target_ratio`, with zeta1 = zeta2/2.
pub fn calibrate_thresholds(
    cascades: &[Cascade],
    target_ratio: f64,
    max_len: usize,
) -> Result<ViralityConfig> {
    if cascades.is_empty() {
        return Err(VedsaError::Config("cannot calibrate thresholds on empty corpus".into()));
    }
    let mut counts: Vec<u64> = cascades.iter().map(|c| c.n() as u64).collect();
    counts.sort_unstable();
    let n = counts.len();
    // fraction with count >= counts[i] is (n - i) / n
    let mut zeta2 = counts[n - 1] + 1;
    for i in 0..n {
        let ratio = (n - i) as f64 / n as f64;
        if ratio <= target_ratio {
            zeta2 = counts[i];
            break;
        }
    }
    let zeta1 = (zeta2 / 2).max(1);
    let cfg = ViralityConfig { zeta1, zeta2, max_len };
    cfg.validate()?;
    Ok(cfg)
}

/// A labeled train/test split ready for model training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<LabeledCascade>,
    pub test: Vec<LabeledCascade>,
    /// Fraction of viral cascades among all labeled (non-intermediate) ones.
    pub viral_ratio: f64,
}

/// Filters intermediate cascades, labels and bins the rest over
/// `num_bins` bins, and splits deterministically by seed.
pub fn build_dataset(
    cascades: &[Cascade],
    cfg: &ViralityConfig,
    split: &SplitSpec,
    bin_length: f64,
    num_bins: usize,
) -> Result<Dataset> {
    cfg.validate()?;
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        return Err(VedsaError::Config("train_fraction must be in (0,1)".into()));
    }
    let mut labeled = Vec::new();
    for c in cascades {
        if let Some(lc) = make_labeled(c, cfg, bin_length, num_bins)? {
            labeled.push(lc);
        }
    }
    let viral = labeled.iter().filter(|l| l.label == 1).count();
    let nonviral = labeled.len() - viral;
    if viral == 0 || nonviral == 0 {
        return Err(VedsaError::Config(format!(
            "need both classes after filtering, got {viral} viral / {nonviral} non-viral"
        )));
    }
    let viral_ratio = viral as f64 / labeled.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    labeled.shuffle(&mut rng);
    let cut = ((labeled.len() as f64 * split.train_fraction).round() as usize)
        .clamp(1, labeled.len() - 1);
    let test = labeled.split_off(cut);
    let mut train = labeled;

    if split.balance == Balance::Undersample {
        let (mut viral_tr, mut nonviral_tr): (Vec<_>, Vec<_>) =
            train.into_iter().partition(|l| l.label == 1);
        let k = viral_tr.len().min(nonviral_tr.len());
        if k == 0 {
            return Err(VedsaError::Config("training split lost a class; adjust seed or fraction".into()));
        }
        viral_tr.truncate(k);
        nonviral_tr.truncate(k);
        train = viral_tr;
        train.append(&mut nonviral_tr);
        train.shuffle(&mut rng);
    }

    Ok(Dataset { train, test, viral_ratio })
}

/// Ratio of viral cascades under a config, across a whole corpus.
pub fn viral_ratio(cascades: &[Cascade], cfg: &ViralityConfig) -> f64 {
    let mut viral = 0usize;
    let mut labeled = 0usize;
    for c in cascades {
        match label_cascade(c, cfg) {
            Virality::Viral => {
                viral += 1;
                labeled += 1;
            }
            Virality::NonViral => labeled += 1,
            Virality::Intermediate => {}
        }
    }
    if labeled == 0 {
        0.0
    } else {
        viral as f64 / labeled as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn twitter_unit_conversion() {
        // original tweet at t0, one retweet 60 seconds later
        let f = write_tmp("42 2\n0 150\n60 10\n");
        let cs = parse_twitter(f.path()).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].events.len(), 2);
        assert!((cs[0].events[1] - 1.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn twitter_caps_at_seven_days() {
        let late = (TWITTER_TRACK_HOURS + 1.0) * 3600.0;
        let f = write_tmp(&format!("7 3\n0 1\n3600 2\n{late} 3\n"));
        let cs = parse_twitter(f.path()).unwrap();
        assert_eq!(cs[0].events.len(), 2);
    }

    #[test]
    fn twitter_malformed_record_reports_line() {
        let f = write_tmp("42 2\n0 150\nnot_a_number 10\n");
        match parse_twitter(f.path()) {
            Err(VedsaError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn digg_two_row_fixture() {
        let f = write_tmp("100,7,story1\n160,9,story1\n");
        let cs = parse_digg(f.path()).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].events[0], 0.0);
        assert!((cs[0].events[1] - 1.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn digg_order_independent() {
        let a = parse_digg(write_tmp("300,1,s\n100,2,s\n200,3,s\n").path()).unwrap();
        let b = parse_digg(write_tmp("100,2,s\n200,3,s\n300,1,s\n").path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weibo_source_only_cascade() {
        let f = write_tmp("p1 1000000 0\n");
        let cs = parse_weibo(f.path(), None).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].events, vec![0.0]);
    }

    #[test]
    fn weibo_sampling_is_deterministic() {
        let mut content = String::new();
        for i in 0..20 {
            content.push_str(&format!("p{i} {} 1\n{}\n", 1000 + i, 1000 + i + 5));
        }
        let f = write_tmp(&content);
        let a = parse_weibo(f.path(), Some((5, 9))).unwrap();
        let b = parse_weibo(f.path(), Some((5, 9))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn canonical_round_trip() {
        let cs = vec![
            Cascade::from_raw("a", vec![0.0, 1.5, 2.25]).unwrap(),
            Cascade::from_raw("b", vec![0.0]).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_canonical(&cs, &path).unwrap();
        let back = read_canonical(&path).unwrap();
        assert_eq!(cs, back);
    }

    #[test]
    fn canonical_empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_canonical(&[], &path).unwrap();
        assert_eq!(read_canonical(&path).unwrap(), vec![]);
    }

    #[test]
    fn canonical_rejects_wrong_version() {
        let f = write_tmp("#vedsa-canonical v9\n");
        assert!(matches!(read_canonical(f.path()), Err(VedsaError::SchemaVersion { .. })));
    }

    #[test]
    fn canonical_is_byte_stable() {
        let cs = vec![
            Cascade::from_raw("x", vec![0.0, 0.5]).unwrap(),
            Cascade::from_raw("y", vec![0.0, 1.0, 3.0]).unwrap(),
            Cascade::from_raw("z", vec![0.0]).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a");
        let p2 = dir.path().join("b");
        write_canonical(&cs, &p1).unwrap();
        write_canonical(&cs, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let expected = "#vedsa-canonical v1\n{\"id\":\"x\",\"events\":[0.0,0.5]}\n{\"id\":\"y\",\"events\":[0.0,1.0,3.0]}\n{\"id\":\"z\",\"events\":[0.0]}\n";
        assert_eq!(std::fs::read_to_string(&p1).unwrap(), expected);
    }

    fn corpus(viral: usize, nonviral: usize) -> Vec<Cascade> {
        let mut cs = Vec::new();
        for i in 0..viral {
            let events: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
            cs.push(Cascade::from_raw(format!("v{i}"), events).unwrap());
        }
        for i in 0..nonviral {
            cs.push(Cascade::from_raw(format!("n{i}"), vec![0.0, 1.0]).unwrap());
        }
        cs
    }

    #[test]
    fn build_dataset_excludes_intermediate_and_splits() {
        let mut cs = corpus(10, 40);
        // intermediate: 50 events
        cs.push(Cascade::from_raw("mid", (0..50).map(|k| k as f64 * 0.1).collect()).unwrap());
        let cfg = ViralityConfig { zeta1: 10, zeta2: 100, max_len: 24 };
        let split = SplitSpec { seed: 3, train_fraction: 0.8, balance: Balance::None };
        let ds = build_dataset(&cs, &cfg, &split, 1.0, 24).unwrap();
        assert_eq!(ds.train.len() + ds.test.len(), 50);
        assert!((ds.viral_ratio - 0.2).abs() < 1e-12);
        assert!(!ds.train.iter().chain(&ds.test).any(|l| l.id == "mid"));
    }

    #[test]
    fn build_dataset_is_seed_reproducible() {
        let cs = corpus(10, 40);
        let cfg = ViralityConfig { zeta1: 10, zeta2: 100, max_len: 24 };
        let split = SplitSpec { seed: 17, train_fraction: 0.7, balance: Balance::Undersample };
        let a = build_dataset(&cs, &cfg, &split, 1.0, 24).unwrap();
        let b = build_dataset(&cs, &cfg, &split, 1.0, 24).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn build_dataset_rejects_single_class() {
        let cs = corpus(0, 20);
        let cfg = ViralityConfig { zeta1: 10, zeta2: 100, max_len: 24 };
        let split = SplitSpec { seed: 1, train_fraction: 0.8, balance: Balance::None };
        assert!(build_dataset(&cs, &cfg, &split, 1.0, 24).is_err());
    }

    #[test]
    fn threshold_calibration_hits_target_ratio() {
        let cs = corpus(8, 92);
        let cfg = calibrate_thresholds(&cs, 0.08, 24).unwrap();
        let ratio = viral_ratio(&cs, &cfg);
        assert!(ratio <= 0.08 + 1e-12);
        assert_eq!(cfg.zeta2, 200);
        assert_eq!(cfg.zeta1, 100);
    }
}
