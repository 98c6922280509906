//! `segplan run`: fingerprint, plan, preprocess and split in one go, with a
//! content-hashed manifest that turns unchanged reruns into no-ops.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use segplan_core::planner::PlanKind;
use segplan_core::rng::RngStream;
use segplan_core::volume_io::{read_document, write_document, Versioned};
use segplan_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{discover_manifests, load_cases, manifest_groups, manifest_inputs};
use crate::splits::{make_cv_splits, SplitAssignment};
use crate::steps::{fingerprint_cases, plan_dataset, preprocess_cases, BudgetArgs};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub budget: BudgetArgs,
    pub seed: u64,
    /// Empty means every configuration the planner produces.
    pub configs: Vec<PlanKind>,
    pub folds: usize,
    pub split_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Settings that, together with the input digests, determine every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub tool_version: String,
    pub seed: u64,
    pub preset: Option<String>,
    pub budget_3d: f64,
    pub budget_2d: f64,
    pub configs: Vec<PlanKind>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u64,
    pub settings: RunSettings,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Versioned for RunManifest {
    const SCHEMA_VERSION: u64 = 1;
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(RunManifest),
    UpToDate(RunManifest),
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn relative(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn digests(files: &[PathBuf], base: &Path) -> Result<Vec<FileDigest>> {
    let mut out = files
        .iter()
        .map(|p| Ok(FileDigest { path: relative(p, base), sha256: sha256_file(p)? }))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out.dedup();
    Ok(out)
}

fn input_digests(cfg: &RunConfig) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    for m in discover_manifests(&cfg.dataset)? {
        files.extend(manifest_inputs(&m)?);
    }
    let mut out = digests(&files, &cfg.dataset)?;
    if let Some(split) = &cfg.split_file {
        let name = split.file_name().map_or_else(|| split.display().to_string(), |n| n.to_string_lossy().into_owned());
        out.push(FileDigest { path: format!("split:{name}"), sha256: sha256_file(split)? });
    }
    Ok(out)
}

fn outputs_intact(manifest: &RunManifest, output: &Path) -> bool {
    manifest.outputs.iter().all(|d| sha256_file(&output.join(&d.path)).is_ok_and(|h| h == d.sha256))
}

fn settings(cfg: &RunConfig) -> Result<RunSettings> {
    let (budget, preset) = cfg.budget.resolve()?;
    Ok(RunSettings {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        preset,
        budget_3d: budget.budget_3d,
        budget_2d: budget.budget_2d,
        configs: cfg.configs.clone(),
        folds: cfg.folds,
    })
}

fn splits(cfg: &RunConfig, case_ids: &[String]) -> Result<SplitAssignment> {
    if let Some(path) = &cfg.split_file {
        let s: SplitAssignment = read_document(path)?;
        s.validate(case_ids)?;
        return Ok(s);
    }
    let groups: BTreeMap<String, String> =
        manifest_groups(&cfg.dataset)?.into_iter().filter_map(|(id, g)| g.map(|g| (id, g))).collect();
    let groups = (!groups.is_empty()).then_some(&groups);
    make_cv_splits(case_ids, cfg.folds, groups, &mut RngStream::new(cfg.seed))
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    let settings = settings(cfg)?;
    let inputs = input_digests(cfg)?;
    let manifest_path = cfg.output.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        if let Ok(prev) = read_document::<RunManifest>(&manifest_path) {
            if prev.settings == settings && prev.inputs == inputs && outputs_intact(&prev, &cfg.output) {
                return Ok(RunOutcome::UpToDate(prev));
            }
        }
    }

    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let cases = load_cases(&cfg.dataset)?;
    let fp = fingerprint_cases(&cases, cfg.seed)?;
    let fp_path = cfg.output.join("fingerprint.json");
    write_document(&fp, &fp_path)?;

    let plan = plan_dataset(&fp, &cfg.budget, &cfg.configs)?;
    let plan_path = cfg.output.join("plan.json");
    write_document(&plan, &plan_path)?;

    let mut written = vec![fp_path, plan_path];
    written.extend(preprocess_cases(&cases, &plan, &cfg.output.join("preprocessed"))?);

    let split = splits(cfg, &fp.case_ids)?;
    let split_path = cfg.output.join("splits.json");
    write_document(&split, &split_path)?;
    written.push(split_path);

    let manifest = RunManifest {
        schema_version: RunManifest::SCHEMA_VERSION,
        settings,
        inputs,
        outputs: digests(&written, &cfg.output)?,
    };
    write_document(&manifest, &manifest_path)?;
    Ok(RunOutcome::Completed(manifest))
}
