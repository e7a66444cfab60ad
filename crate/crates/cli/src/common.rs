use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hyperlaw::data::{load_csv, Dataset};
use hyperlaw::skills::{bundled_skill_json, load_skill, Skill};

use crate::manifest::{sha256_hex, DatasetHash, NamedHash};

/// A bundled skill name or a path to a skill JSON file.
pub fn resolve_skill(spec: &str) -> Result<Skill> {
    match bundled_skill_json(spec) {
        Some(json) => Skill::from_json(json).context("bundled skill"),
        None => {
            let path = Path::new(spec);
            if !path.exists() {
                bail!("unknown skill `{spec}`: not a bundled skill (isotropic, anisotropic) and no such file");
            }
            load_skill(path).with_context(|| format!("loading skill {spec}"))
        }
    }
}

pub fn skill_hash(skill: &Skill) -> NamedHash {
    NamedHash {
        name: skill.name.clone(),
        sha256: sha256_hex(skill.to_json().as_bytes()),
    }
}

/// Datasets from a directory with the hashes of their source files.
pub struct LoadedData {
    pub datasets: Vec<Dataset>,
    pub hashes: Vec<DatasetHash>,
}

/// Loads every `*.csv` in `dir`, in file-name order.
pub fn load_data(dir: &Path) -> Result<LoadedData> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading data directory {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no CSV datasets in {}", dir.display());
    }
    let mut datasets = Vec::new();
    let mut hashes = Vec::new();
    for f in files {
        let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        let d = load_csv(&f).with_context(|| format!("loading {}", f.display()))?;
        hashes.push(DatasetHash {
            file: f.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            mode: d.mode.as_str().into(),
            sha256: sha256_hex(&bytes),
        });
        datasets.push(d);
    }
    Ok(LoadedData { datasets, hashes })
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("`{}` is not a number", s.trim())))
        .collect()
}
