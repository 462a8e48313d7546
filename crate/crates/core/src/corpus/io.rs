//! Corpus persistence: JSON-Lines splits plus a hash-carrying manifest.
//!
//! Regenerating with the same config produces byte-identical files; the
//! manifest records a sha256 per split so tampering is detectable.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{gen_example, CorpusConfig, CorpusError, Example};
use crate::rng::{stream, sub_seed};
use crate::vocab::build_vocab;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: CorpusConfig,
    pub seed: u64,
    pub sha256: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Generate all three splits under `out_dir` and write `manifest.json`.
///
/// Example sub-seeds derive from the corpus seed and the example's global
/// index (train first, then val, then test), so generation order and any
/// future parallel schedule cannot change the output.
pub fn write_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let vocab = build_vocab();

    let sizes = [config.n_train, config.n_val, config.n_test];
    let mut sha256 = BTreeMap::new();
    let mut global = 0u64;
    for (split, &count) in SPLITS.iter().zip(&sizes) {
        let path = out_dir.join(format!("{split}.jsonl"));
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut writer = BufWriter::new(file);
        let mut hasher = Sha256::new();
        for local in 0..count {
            let seed = sub_seed(config.seed, "example", global);
            let id = format!("{split}-{local:05}");
            let example = gen_example(&mut stream(seed), id, config, &vocab)?;
            let mut line = serde_json::to_string(&example).map_err(|source| {
                CorpusError::Json {
                    path: path.clone(),
                    source,
                }
            })?;
            line.push('\n');
            hasher.update(line.as_bytes());
            writer.write_all(line.as_bytes()).map_err(io_err(&path))?;
            global += 1;
        }
        writer.flush().map_err(io_err(&path))?;
        sha256.insert((*split).to_string(), hex_digest(hasher));
    }

    let manifest = CorpusManifest {
        config: config.clone(),
        seed: config.seed,
        sha256,
    };
    let manifest_path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).map_err(|source| CorpusError::Json {
        path: manifest_path.clone(),
        source,
    })?;
    fs::write(&manifest_path, body).map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// sha256 of a file's bytes, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_digest(hasher))
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|source| CorpusError::Json { path, source })
}

/// Load one split as a vector of examples.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<Example>, CorpusError> {
    let path = dir.join(format!("{split}.jsonl"));
    let file = File::open(&path).map_err(io_err(&path))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(io_err(&path))?;
        if line.is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            path: path.clone(),
            source,
        })?;
        out.push(example);
    }
    Ok(out)
}

/// Recompute split hashes and compare against the manifest.
pub fn verify(dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let manifest = read_manifest(dir)?;
    for split in SPLITS {
        let path = dir.join(format!("{split}.jsonl"));
        let actual = file_sha256(&path)?;
        let expected = manifest
            .sha256
            .get(split)
            .cloned()
            .unwrap_or_default();
        if actual != expected {
            return Err(CorpusError::HashMismatch {
                split: split.to_string(),
                expected,
                actual,
            });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            n_train: 12,
            n_val: 4,
            n_test: 4,
            seed: 7,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let ma = write_corpus(&cfg, dir_a.path()).unwrap();
        let mb = write_corpus(&cfg, dir_b.path()).unwrap();
        assert_eq!(ma.sha256, mb.sha256);
        for split in SPLITS {
            let a = fs::read(dir_a.path().join(format!("{split}.jsonl"))).unwrap();
            let b = fs::read(dir_b.path().join(format!("{split}.jsonl"))).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn split_sizes_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        write_corpus(&cfg, dir.path()).unwrap();
        let train = load_split(dir.path(), "train").unwrap();
        assert_eq!(train.len(), cfg.n_train);
        assert_eq!(load_split(dir.path(), "val").unwrap().len(), cfg.n_val);
        assert_eq!(train[0].id, "train-00000");
        verify(dir.path()).unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&small_config(), dir.path()).unwrap();
        let path = dir.path().join("val.jsonl");
        let mut body = fs::read_to_string(&path).unwrap();
        body.push_str("\n");
        fs::write(&path, body).unwrap();
        assert!(matches!(
            verify(dir.path()),
            Err(CorpusError::HashMismatch { .. })
        ));
    }
}
