//! On-disk artifacts: atomic writes, `.meta` lineage sidecars, the
//! work-directory lock, and the two-coordinate SVR model file.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::CliError;
use crate::corpus::Coordinate;
use crate::error::GeoError;
use crate::nu_svr::SvrModel;
use crate::PerCoordinate;

/// Bumped whenever a stage changes its output for identical inputs.
pub const STAGE_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| GeoError::from(e).in_file(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Provenance written next to every artifact as `<artifact>.meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub stage: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    /// Input role → SHA-256 of the input file.
    pub inputs: BTreeMap<String, String>,
}

impl Meta {
    pub fn new(stage: &str, seed: Option<u64>, config_hash: String) -> Self {
        Self {
            stage: stage.to_string(),
            seed,
            config_hash,
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(role.to_string(), digest.clone());
        Ok(digest)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "stage={}\nstage_version={STAGE_VERSION}\ntool=geostack {}\nseed={}\nconfig_hash={}\n",
            self.stage,
            env!("CARGO_PKG_VERSION"),
            self.seed
                .map_or_else(|| "none".to_string(), |v| v.to_string()),
            self.config_hash
        );
        for (k, v) in &self.inputs {
            s.push_str(&format!("input.{k}={v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut meta = Meta::new("", None, String::new());
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else {
                return Err(
                    GeoError::InvalidData(format!("malformed metadata line '{line}'")).into(),
                );
            };
            match k {
                "stage" => meta.stage = v.to_string(),
                "seed" => meta.seed = v.parse().ok(),
                "config_hash" => meta.config_hash = v.to_string(),
                _ => {
                    if let Some(role) = k.strip_prefix("input.") {
                        meta.inputs.insert(role.to_string(), v.to_string());
                    }
                }
            }
        }
        Ok(meta)
    }

    /// Sidecar of `artifact`, if present.
    pub fn read_for(artifact: &Path) -> Result<Option<Self>, CliError> {
        let path = meta_path(artifact);
        match fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GeoError::from(e).in_file(path).into()),
        }
    }
}

/// Fails when `artifact` records a different digest for input `role` than
/// the file actually supplied.
pub fn check_lineage(artifact: &Path, role: &str, supplied_digest: &str) -> Result<(), CliError> {
    if let Some(meta) = Meta::read_for(artifact)? {
        if let Some(recorded) = meta.inputs.get(role) {
            if recorded != supplied_digest {
                return Err(GeoError::FingerprintMismatch {
                    what: format!("{} input '{role}'", artifact.display()),
                    expected: recorded.clone(),
                    found: supplied_digest.to_string(),
                }
                .into());
            }
        }
    }
    Ok(())
}

/// Writes `bytes` to a temporary sibling, renames it into place, then
/// writes the sidecar.
pub fn write_artifact(path: &Path, bytes: &[u8], meta: &Meta) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| GeoError::from(e).in_file(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| GeoError::from(e).in_file(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| GeoError::from(e).in_file(path))?;
    let mp = meta_path(path);
    fs::write(&mp, meta.to_text()).map_err(|e| GeoError::from(e).in_file(&mp))?;
    Ok(())
}

pub const LOCK_FILE: &str = ".geostack.lock";

/// Advisory lock on a work directory, released on drop.
#[derive(Debug)]
pub struct WorkLock {
    path: PathBuf,
}

impl WorkLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| GeoError::from(e).in_file(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(
                GeoError::InvalidData(format!(
                    "{} exists: another geostack run is using this directory (delete the file if that run is gone)",
                    path.display()
                )),
            )),
            Err(e) => Err(GeoError::from(e).in_file(&path).into()),
        }
    }

    /// Lock on the directory that will receive `output`.
    pub fn for_output(output: &Path) -> Result<Self, CliError> {
        let dir = output
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        Self::acquire(dir)
    }
}

impl Drop for WorkLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Latitude and longitude models in one file.
pub fn svr_pair_to_text(models: &PerCoordinate<SvrModel>) -> String {
    let mut s = String::from("svr-pair v1\n");
    for coord in Coordinate::BOTH {
        s.push_str(&format!("begin {coord}\n"));
        s.push_str(&models.get(coord).to_text());
        s.push_str(&format!("end {coord}\n"));
    }
    s
}

pub fn svr_pair_from_text(text: &str) -> Result<PerCoordinate<SvrModel>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some("svr-pair v1") {
        return Err(GeoError::InvalidData("not an svr-pair v1 file".into()).into());
    }
    let mut read = |coord: Coordinate| -> Result<SvrModel, CliError> {
        if lines.next() != Some(format!("begin {coord}").as_str()) {
            return Err(GeoError::InvalidData(format!("missing '{coord}' model")).into());
        }
        let end = format!("end {coord}");
        let mut body = String::new();
        for line in lines.by_ref() {
            if line == end {
                let model = SvrModel::from_text(&body)?;
                if model.target != coord {
                    return Err(GeoError::InvalidData(format!(
                        "'{coord}' section holds a {} model",
                        model.target
                    ))
                    .into());
                }
                return Ok(model);
            }
            body.push_str(line);
            body.push('\n');
        }
        Err(GeoError::InvalidData(format!("unterminated '{coord}' model")).into())
    };
    let lat = read(Coordinate::Lat)?;
    let lon = read(Coordinate::Lon)?;
    Ok(PerCoordinate { lat, lon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip() {
        let mut m = Meta::new("kernel", Some(3), "abc".into());
        m.inputs.insert("train".into(), "ff".into());
        let back = Meta::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_text().contains("seed=3\n"));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = WorkLock::acquire(dir.path()).unwrap();
        assert!(WorkLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(WorkLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn lineage_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let art = dir.path().join("k.gkm");
        let mut m = Meta::new("kernel", None, "h".into());
        m.inputs.insert("train".into(), "aaaa".into());
        write_artifact(&art, b"x", &m).unwrap();
        assert!(check_lineage(&art, "train", "aaaa").is_ok());
        assert!(check_lineage(&art, "test", "bbbb").is_ok());
        let err = check_lineage(&art, "train", "bbbb").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
