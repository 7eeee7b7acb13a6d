//! The UCI regression datasets of the standard uncertainty benchmark and their
//! per-dataset protocol settings.
//!
//! Raw files are not shipped; `scripts/fetch_uci.py` downloads them, converts each to a
//! comma-separated file with a header row under `data/<name>/`, and writes a
//! `SHA256SUMS` manifest next to it.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::dataset::{load_csv_excluding, Dataset};
use crate::error::{Error, Result};

/// Environment variable overriding the data directory (default `./data`).
pub const DATA_DIR_ENV: &str = "DEEPBLR_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub name: &'static str,
    pub file: &'static str,
    /// Candidate target columns; the first is the default. The others are dropped
    /// from the features.
    pub targets: &'static [&'static str],
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub n_splits: usize,
    /// Known digest of the converted CSV, when the conversion is pinned.
    pub sha256: Option<&'static str>,
}

pub const DATASETS: &[DatasetSpec] = &[
    DatasetSpec {
        name: "boston",
        file: "housing.csv",
        targets: &["MEDV"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: Some("79ac716620024011b03c0c44d2bf99069b8173649181926d9109c25475a3804c"),
    },
    DatasetSpec {
        name: "concrete",
        file: "concrete.csv",
        targets: &["strength"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "energy",
        file: "energy.csv",
        targets: &["Y1", "Y2"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "kin8nm",
        file: "kin8nm.csv",
        targets: &["y"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "naval",
        file: "naval.csv",
        targets: &["compressor_decay", "turbine_decay"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "power",
        file: "power.csv",
        targets: &["PE"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "protein",
        file: "protein.csv",
        targets: &["RMSD"],
        hidden_units: 100,
        learning_rate: 0.001,
        n_splits: 5,
        sha256: None,
    },
    DatasetSpec {
        name: "wine",
        file: "wine.csv",
        targets: &["quality"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "yacht",
        file: "yacht.csv",
        targets: &["resistance"],
        hidden_units: 50,
        learning_rate: 0.01,
        n_splits: 20,
        sha256: None,
    },
    DatasetSpec {
        name: "year",
        file: "year.csv",
        targets: &["year"],
        hidden_units: 100,
        learning_rate: 0.0001,
        n_splits: 1,
        sha256: None,
    },
];

impl DatasetSpec {
    pub fn lookup(name: &str) -> Option<&'static DatasetSpec> {
        DATASETS.iter().find(|d| d.name == name)
    }

    pub fn path(&self, data_dir: &Path) -> PathBuf {
        data_dir.join(self.name).join(self.file)
    }

    /// Loads the dataset with the given target (default: the first candidate), after
    /// checking the file against the pinned digest and the directory manifest.
    pub fn load(&self, data_dir: &Path, target: Option<&str>) -> Result<Dataset> {
        let path = self.path(data_dir);
        if !path.exists() {
            return Err(Error::Data {
                path,
                message: format!("dataset {} not found; run scripts/fetch_uci.py {}", self.name, self.name),
            });
        }
        verify_checksums(&path, self.sha256)?;
        let target = target.unwrap_or(self.targets[0]);
        if !self.targets.contains(&target) {
            return Err(Error::InvalidConfig(format!(
                "{} has targets {:?}, not {target:?}",
                self.name, self.targets
            )));
        }
        let exclude: Vec<&str> = self.targets.iter().copied().filter(|t| *t != target).collect();
        let mut ds = load_csv_excluding(&path, &[target], &exclude)?;
        ds.name = self.name.to_owned();
        Ok(ds)
    }
}

/// Data directory from the environment, defaulting to `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Checks `path` against `pinned` and against a `SHA256SUMS` file in the same
/// directory, when either is present.
pub fn verify_checksums(path: &Path, pinned: Option<&str>) -> Result<()> {
    let manifest = path.with_file_name("SHA256SUMS");
    let from_manifest = if manifest.exists() {
        let fname = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        std::fs::read_to_string(&manifest)?.lines().find_map(|line| {
            let mut parts = line.split_whitespace();
            let digest = parts.next()?;
            let name = parts.next()?.trim_start_matches('*');
            (name == fname).then(|| digest.to_owned())
        })
    } else {
        None
    };
    if pinned.is_none() && from_manifest.is_none() {
        return Ok(());
    }
    let actual = sha256_file(path)?;
    for expected in pinned.map(str::to_owned).into_iter().chain(from_manifest) {
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_table() {
        let lr = |n| DatasetSpec::lookup(n).unwrap().learning_rate;
        assert_eq!(lr("boston"), 0.01);
        assert_eq!(lr("protein"), 0.001);
        assert_eq!(lr("year"), 0.0001);
        assert_eq!(DatasetSpec::lookup("protein").unwrap().hidden_units, 100);
        assert_eq!(DatasetSpec::lookup("year").unwrap().n_splits, 1);
        assert_eq!(DatasetSpec::lookup("protein").unwrap().n_splits, 5);
        assert_eq!(DATASETS.len(), 10);
        assert!(DatasetSpec::lookup("mnist").is_none());
    }

    #[test]
    fn manifest_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("toy.csv");
        std::fs::write(&file, "a,y\n1,2\n").unwrap();
        verify_checksums(&file, None).unwrap();
        let digest = sha256_file(&file).unwrap();
        std::fs::write(dir.path().join("SHA256SUMS"), format!("{digest}  toy.csv\n")).unwrap();
        verify_checksums(&file, Some(&digest)).unwrap();
        std::fs::write(&file, "a,y\n1,3\n").unwrap();
        assert!(matches!(verify_checksums(&file, None), Err(Error::Checksum { .. })));
    }

    #[test]
    fn multi_target_dataset_drops_other_target() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("energy")).unwrap();
        let mut csv = String::from("X1,X2,Y1,Y2\n");
        for i in 0..12 {
            csv.push_str(&format!("{i},{},{},{}\n", i * 2, i + 1, i * 3));
        }
        std::fs::write(dir.path().join("energy/energy.csv"), csv).unwrap();
        let spec = DatasetSpec::lookup("energy").unwrap();
        let ds = spec.load(dir.path(), None).unwrap();
        assert_eq!(ds.feature_names, vec!["X1", "X2"]);
        assert_eq!(ds.target_names, vec!["Y1"]);
        let ds = spec.load(dir.path(), Some("Y2")).unwrap();
        assert_eq!(ds.target_names, vec!["Y2"]);
        assert!(spec.load(dir.path(), Some("X1")).is_err());
    }
}
