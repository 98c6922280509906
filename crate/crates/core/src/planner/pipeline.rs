use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::blueprint::BlueprintParams;
use super::memory::MemoryBudget;
use super::plan::{cascade_required, plan_lowres, plan_unet, MIN_BATCH};
use super::spacing::{
    median_resampled_shape, select_normalization, target_spacing_2d, target_spacing_fullres, NormalizationScheme,
};
use super::topology::{pad_for_pooling, TopologySpec};
use crate::error::{Error, Result};
use crate::fingerprint::DatasetFingerprint;
use crate::volume_io::Versioned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanKind {
    #[serde(rename = "2d")]
    U2D,
    #[serde(rename = "3d_fullres")]
    U3DFullres,
    #[serde(rename = "3d_lowres")]
    U3DLowres,
    #[serde(rename = "3d_cascade_fullres")]
    U3DCascadeFullres,
}

impl PlanKind {
    pub const ALL: [PlanKind; 4] = [Self::U2D, Self::U3DFullres, Self::U3DLowres, Self::U3DCascadeFullres];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::U2D => "2d",
            Self::U3DFullres => "3d_fullres",
            Self::U3DLowres => "3d_lowres",
            Self::U3DCascadeFullres => "3d_cascade_fullres",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Invalid(format!(
                "unknown configuration '{s}' (expected 2d, 3d_fullres, 3d_lowres, 3d_cascade_fullres)"
            ))
        })
    }
}

/// One trainable configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetPlan {
    pub kind: PlanKind,
    /// Volume axes the network sees; 2D plans list the two in-plane axes.
    pub spatial_axes: Vec<usize>,
    /// Target spacing for each entry of `spatial_axes`.
    pub target_spacing: Vec<f64>,
    pub median_shape: Vec<usize>,
    pub patch_size: Vec<usize>,
    pub batch_size: usize,
    pub topology: TopologySpec,
    pub normalization: Vec<NormalizationScheme>,
    /// Image channels, plus one per foreground class for the cascade's second stage.
    pub input_channels: usize,
    pub num_classes: u16,
}

impl UNetPlan {
    pub fn dim(&self) -> usize {
        self.spatial_axes.len()
    }

    /// Full 3-axis target for an image with spacing `source`; axes outside
    /// the plan keep their own spacing.
    pub fn resample_target(&self, source: [f64; 3]) -> [f64; 3] {
        let mut t = source;
        for (&a, &s) in self.spatial_axes.iter().zip(&self.target_spacing) {
            t[a] = s;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let bad = |m: String| Err(Error::Invalid(format!("{} plan: {m}", self.kind)));
        if self.target_spacing.len() != d || self.patch_size.len() != d || self.median_shape.len() != d {
            return bad("axis counts disagree".into());
        }
        if self.batch_size < MIN_BATCH {
            return bad(format!("batch {} below {MIN_BATCH}", self.batch_size));
        }
        if self.topology.kernel_sizes.len() != self.topology.strides.len() + 1 {
            return bad("kernel list must be one longer than stride list".into());
        }
        let median: Vec<f64> = self.median_shape.iter().map(|&m| m as f64).collect();
        let padded = pad_for_pooling(&median, &self.topology.pools_per_axis);
        for a in 0..d {
            if !self.patch_size[a].is_multiple_of(self.topology.divisor(a)) {
                return bad(format!("patch axis {a} not divisible by {}", self.topology.divisor(a)));
            }
            if self.patch_size[a] > padded[a] {
                return bad(format!("patch axis {a} exceeds padded median {}", padded[a]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSummary {
    pub n_cases: usize,
    pub case_ids: Vec<String>,
    pub median_shape: [usize; 3],
    pub modalities: Vec<String>,
    pub n_classes: u16,
    pub total_voxels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub budget_3d: f64,
    pub budget_2d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFingerprint {
    pub schema_version: u64,
    pub fingerprint: FingerprintSummary,
    pub blueprint: BlueprintParams,
    pub plans: Vec<UNetPlan>,
    pub cascade_enabled: bool,
    pub provenance: Provenance,
}

impl Versioned for PipelineFingerprint {
    const SCHEMA_VERSION: u64 = 1;
}

impl PipelineFingerprint {
    pub fn plan(&self, kind: PlanKind) -> Option<&UNetPlan> {
        self.plans.iter().find(|p| p.kind == kind)
    }

    /// Keep only the requested configurations.
    pub fn retain_kinds(&mut self, kinds: &[PlanKind]) {
        self.plans.retain(|p| kinds.contains(&p.kind));
    }
}

/// Run every planning rule on a dataset fingerprint.
pub fn assemble_pipeline_fingerprint(
    fp: &DatasetFingerprint,
    budget: &MemoryBudget,
    preset: Option<&str>,
) -> Result<PipelineFingerprint> {
    if fp.n_cases == 0 {
        return Err(Error::EmptyInput("fingerprint describes no cases"));
    }
    let normalization = (0..fp.modalities.len()).map(|c| select_normalization(fp, c)).collect::<Result<Vec<_>>>()?;
    let n_mod = fp.modalities.len();
    let io = n_mod + fp.n_classes as usize + 1;

    let full_sp = target_spacing_fullres(fp)?;
    let full_median = median_resampled_shape(fp, &[0, 1, 2], &full_sp)?;
    let full = plan_unet(&full_median, &full_sp, budget.budget_3d, io, fp.total_voxels)?;
    let fullres = UNetPlan {
        kind: PlanKind::U3DFullres,
        spatial_axes: vec![0, 1, 2],
        target_spacing: full_sp.to_vec(),
        median_shape: full_median.clone(),
        patch_size: full.patch.clone(),
        batch_size: full.batch,
        topology: full.topology,
        normalization: normalization.clone(),
        input_channels: n_mod,
        num_classes: fp.n_classes,
    };

    let (axes, sp2) = target_spacing_2d(fp)?;
    let median2 = median_resampled_shape(fp, &axes, &sp2)?;
    let p2 = plan_unet(&median2, &sp2, budget.budget_2d, io, fp.total_voxels)?;
    let plan2d = UNetPlan {
        kind: PlanKind::U2D,
        spatial_axes: axes.to_vec(),
        target_spacing: sp2.to_vec(),
        median_shape: median2,
        patch_size: p2.patch,
        batch_size: p2.batch,
        topology: p2.topology,
        normalization: normalization.clone(),
        input_channels: n_mod,
        num_classes: fp.n_classes,
    };

    let cascade_enabled = cascade_required(&fullres.patch_size, &full_median);
    let mut plans = vec![plan2d, fullres.clone()];
    if cascade_enabled {
        let low = plan_lowres(&full_sp, &full_median, budget.budget_3d, io, fp.total_voxels)?;
        plans.push(UNetPlan {
            kind: PlanKind::U3DLowres,
            spatial_axes: vec![0, 1, 2],
            target_spacing: low.spacing,
            median_shape: low.median_shape,
            patch_size: low.plan.patch,
            batch_size: low.plan.batch,
            topology: low.plan.topology,
            normalization: normalization.clone(),
            input_channels: n_mod,
            num_classes: fp.n_classes,
        });
        plans.push(UNetPlan {
            kind: PlanKind::U3DCascadeFullres,
            input_channels: n_mod + fp.n_classes as usize,
            ..fullres
        });
    }
    for p in &plans {
        p.validate()?;
    }
    Ok(PipelineFingerprint {
        schema_version: PipelineFingerprint::SCHEMA_VERSION,
        fingerprint: FingerprintSummary {
            n_cases: fp.n_cases,
            case_ids: fp.case_ids.clone(),
            median_shape: fp.median_shape,
            modalities: fp.modalities.clone(),
            n_classes: fp.n_classes,
            total_voxels: fp.total_voxels,
        },
        blueprint: BlueprintParams::default(),
        plans,
        cascade_enabled,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            preset: preset.map(str::to_string),
            budget_3d: budget.budget_3d,
            budget_2d: budget.budget_2d,
        },
    })
}
