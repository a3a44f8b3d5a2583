//! Trial manifests: a JSON array of
//! `{"recognizing": [ids], "candidates": [ids], "answer_index": i}`.
//!
//! Ids are dataset sample ids (paths relative to the dataset root) or, for
//! manifests derived from Lake's run folders, paths relative to the
//! manifest's own directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LclError, Result};

pub const BPL_TRIALS: usize = 400;
pub const BPL_WAY: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub recognizing: Vec<String>,
    pub candidates: Vec<String>,
    pub answer_index: usize,
}

pub fn read_manifest(path: &Path) -> Result<Vec<TrialEntry>> {
    let text = fs::read_to_string(path).map_err(|e| LclError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| LclError::Json {
        context: path.display().to_string(),
        source: e,
    })
}

/// Pretty-printed with a trailing newline; identical entries give identical bytes.
pub fn write_manifest(path: &Path, entries: &[TrialEntry]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(entries).map_err(|e| LclError::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LclError::io(format!("writing {}", path.display()), e))
}

/// Converts Lake's `runNN/class_labels.txt` layout into manifest entries.
///
/// Each line of `class_labels.txt` is `test/<file> train/<file>`: a
/// one-shot trial whose recognizing image is the test file and whose
/// candidates are all `train/*.png` files of the run, sorted by name.
pub fn manifest_from_lake_runs(dir: &Path) -> Result<Vec<TrialEntry>> {
    let mut runs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| LclError::io(format!("reading {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("class_labels.txt").is_file())
        .collect();
    runs.sort();
    if runs.is_empty() {
        return Err(LclError::Protocol(format!(
            "{} contains no run folders with class_labels.txt",
            dir.display()
        )));
    }
    let mut entries = Vec::new();
    for run in runs {
        let run_name = run
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut train: Vec<String> = fs::read_dir(run.join("training").as_path())
            .or_else(|_| fs::read_dir(run.join("train")))
            .map_err(|e| LclError::io(format!("listing training images of {}", run.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .filter_map(|p| p.strip_prefix(&run).ok().map(|r| r.to_string_lossy().replace('\\', "/")))
            .collect();
        train.sort();
        let labels = fs::read_to_string(run.join("class_labels.txt"))
            .map_err(|e| LclError::io(format!("reading labels of {}", run.display()), e))?;
        for line in labels.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let mut parts = line.split_whitespace();
            let (Some(test), Some(answer)) = (parts.next(), parts.next()) else {
                return Err(LclError::Protocol(format!("malformed label line `{line}` in {run_name}")));
            };
            let answer_index = train.iter().position(|t| t == answer).ok_or_else(|| {
                LclError::Protocol(format!("{run_name}: answer `{answer}` is not among the training images"))
            })?;
            entries.push(TrialEntry {
                recognizing: vec![format!("{run_name}/{test}")],
                candidates: train.iter().map(|t| format!("{run_name}/{t}")).collect(),
                answer_index,
            });
        }
    }
    Ok(entries)
}

/// The fixed one-shot benchmark: exactly 400 trials, each 20-way with one
/// recognizing image. `path` is a manifest file or a directory of Lake's run folders.
pub fn load_bpl_trials(path: &Path) -> Result<Vec<TrialEntry>> {
    let entries = if path.is_dir() {
        manifest_from_lake_runs(path)?
    } else {
        read_manifest(path)?
    };
    validate_bpl(&entries)?;
    Ok(entries)
}

pub fn validate_bpl(entries: &[TrialEntry]) -> Result<()> {
    if entries.len() != BPL_TRIALS {
        return Err(LclError::Protocol(format!(
            "expected {BPL_TRIALS} trials, found {}",
            entries.len()
        )));
    }
    for (i, e) in entries.iter().enumerate() {
        if e.candidates.len() != BPL_WAY {
            return Err(LclError::Protocol(format!(
                "trial {i} is {}-way, expected {BPL_WAY}-way",
                e.candidates.len()
            )));
        }
        if e.recognizing.len() != 1 {
            return Err(LclError::Protocol(format!(
                "trial {i} has {} recognizing images, expected 1",
                e.recognizing.len()
            )));
        }
        validate_entry(i, e)?;
    }
    Ok(())
}

pub fn validate_entry(i: usize, e: &TrialEntry) -> Result<()> {
    if e.recognizing.is_empty() {
        return Err(LclError::Protocol(format!("trial {i} has no recognizing image")));
    }
    if e.answer_index >= e.candidates.len() {
        return Err(LclError::Protocol(format!(
            "trial {i}: answer_index {} out of range for {} candidates",
            e.answer_index,
            e.candidates.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(answer: usize) -> TrialEntry {
        TrialEntry {
            recognizing: vec!["r".into()],
            candidates: (0..20).map(|i| format!("c{i}")).collect(),
            answer_index: answer,
        }
    }

    #[test]
    fn bpl_counts_enforced() {
        let good: Vec<_> = (0..400).map(|i| entry(i % 20)).collect();
        validate_bpl(&good).unwrap();
        assert!(matches!(validate_bpl(&good[..399]), Err(LclError::Protocol(_))));
        let mut narrow = good.clone();
        narrow[3].candidates.pop();
        assert!(validate_bpl(&narrow).is_err());
        let mut bad_answer = good;
        bad_answer[0].answer_index = 20;
        assert!(validate_bpl(&bad_answer).is_err());
    }

    #[test]
    fn manifest_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let entries = vec![entry(3), entry(0)];
        write_manifest(&p, &entries).unwrap();
        let first = fs::read(&p).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
        write_manifest(&p, &read_manifest(&p).unwrap()).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
    }

    #[test]
    fn lake_runs_adapter() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run01");
        fs::create_dir_all(run.join("training")).unwrap();
        fs::create_dir_all(run.join("test")).unwrap();
        for i in 1..=3 {
            fs::write(run.join(format!("training/class{i:02}.png")), b"").unwrap();
        }
        fs::write(
            run.join("class_labels.txt"),
            "test/item01.png training/class02.png\ntest/item02.png training/class03.png\n",
        )
        .unwrap();
        let m = manifest_from_lake_runs(dir.path()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].answer_index, 1);
        assert_eq!(m[1].answer_index, 2);
        assert_eq!(m[0].recognizing, vec!["run01/test/item01.png".to_string()]);
        assert_eq!(m[0].candidates[0], "run01/training/class01.png");
    }
}
