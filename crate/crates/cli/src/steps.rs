//! The planning stages shared by the individual subcommands and `run`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segplan_core::fingerprint::{
    aggregate_dataset_fingerprint, extract_case_fingerprint, DatasetFingerprint, FingerprintOptions,
};
use segplan_core::planner::{
    assemble_pipeline_fingerprint, MemoryBudget, PipelineFingerprint, PlanKind, REFERENCE_PRESET,
};
use segplan_core::preprocess::{preprocess_case, PreprocessRecord};
use segplan_core::volume_io::{
    write_case_manifest, write_document, write_native, Case, CaseManifest, ChannelEntry, NativeData, Versioned,
};
use segplan_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::dataset::{load_cases, MANIFEST_SUFFIX};

pub fn fingerprint_cases(cases: &[Case], seed: u64) -> Result<DatasetFingerprint> {
    let opts = FingerprintOptions { seed, ..FingerprintOptions::default() };
    let per_case = cases.par_iter().map(|c| extract_case_fingerprint(c, &opts)).collect::<Result<Vec<_>>>()?;
    aggregate_dataset_fingerprint(&per_case)
}

pub fn fingerprint_dataset(dataset: &Path, seed: u64) -> Result<DatasetFingerprint> {
    fingerprint_cases(&load_cases(dataset)?, seed)
}

/// Budget selection: a named preset, optionally overridden per dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BudgetArgs {
    pub preset: Option<String>,
    pub budget_3d: Option<f64>,
    pub budget_2d: Option<f64>,
}

impl BudgetArgs {
    /// The budget and the preset name to record (dropped once overridden).
    pub fn resolve(&self) -> Result<(MemoryBudget, Option<String>)> {
        let name = self.preset.as_deref().unwrap_or(REFERENCE_PRESET);
        if name != REFERENCE_PRESET {
            return Err(Error::Invalid(format!("unknown budget preset '{name}' (available: {REFERENCE_PRESET})")));
        }
        let base = MemoryBudget::reference();
        let budget =
            MemoryBudget::new(self.budget_3d.unwrap_or(base.budget_3d), self.budget_2d.unwrap_or(base.budget_2d))?;
        let overridden = self.budget_3d.is_some() || self.budget_2d.is_some();
        Ok((budget, (!overridden).then(|| name.to_string())))
    }
}

/// Requested configurations; the cascade's second stage pulls in its first.
pub fn resolve_configs(requested: &[PlanKind]) -> Vec<PlanKind> {
    let mut kinds = requested.to_vec();
    if kinds.contains(&PlanKind::U3DCascadeFullres) && !kinds.contains(&PlanKind::U3DLowres) {
        kinds.push(PlanKind::U3DLowres);
    }
    kinds.sort();
    kinds.dedup();
    kinds
}

pub fn plan_dataset(fp: &DatasetFingerprint, budget: &BudgetArgs, configs: &[PlanKind]) -> Result<PipelineFingerprint> {
    let (b, preset) = budget.resolve()?;
    let mut plan = assemble_pipeline_fingerprint(fp, &b, preset.as_deref())?;
    if !configs.is_empty() {
        plan.retain_kinds(&resolve_configs(configs));
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub schema_version: u64,
    pub plan_kind: PlanKind,
    pub records: Vec<PreprocessRecord>,
}

impl Versioned for PreprocessSummary {
    const SCHEMA_VERSION: u64 = 1;
}

fn write_preprocessed(case: &Case, dir: &Path) -> Result<Vec<PathBuf>> {
    let case_dir = dir.join(&case.id);
    std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (c, vol) in case.channels().iter().enumerate() {
        let name = format!("image_{c:04}.json");
        let p = case_dir.join(&name);
        write_native(&p, &NativeData::Image(vol.clone()))?;
        written.extend([p.with_extension("raw"), p]);
        entries.push(ChannelEntry { path: format!("{}/{name}", case.id), modality: vol.modality().to_string() });
    }
    let label = match case.label() {
        Some(l) => {
            let p = case_dir.join("label.json");
            write_native(&p, &NativeData::Label(l.clone()))?;
            written.extend([p.with_extension("raw"), p]);
            Some(format!("{}/label.json", case.id))
        }
        None => None,
    };
    let manifest = dir.join(format!("{}{MANIFEST_SUFFIX}", case.id));
    write_case_manifest(&CaseManifest::new(case.id.clone(), entries, label), &manifest)?;
    written.push(manifest);
    Ok(written)
}

/// Preprocess every case for every plan into `out/<kind>/`. Each kind's
/// directory is itself a dataset directory. Returns the files written.
pub fn preprocess_cases(cases: &[Case], plan: &PipelineFingerprint, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for unet in &plan.plans {
        let dir = out.join(unet.kind.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let results = cases
            .par_iter()
            .map(|case| {
                let (pre, record) = preprocess_case(case, unet)?;
                Ok((write_preprocessed(&pre, &dir)?, record))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut records = Vec::with_capacity(results.len());
        for (files, record) in results {
            written.extend(files);
            records.push(record);
        }
        let summary_path = dir.join("records.json");
        let summary =
            PreprocessSummary { schema_version: PreprocessSummary::SCHEMA_VERSION, plan_kind: unet.kind, records };
        write_document(&summary, &summary_path)?;
        written.push(summary_path);
    }
    Ok(written)
}
