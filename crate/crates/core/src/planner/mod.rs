//! Rule-based configuration: turns a [`DatasetFingerprint`](crate::fingerprint::DatasetFingerprint)
//! and a memory budget into a [`PipelineFingerprint`] holding one
//! [`UNetPlan`] per configuration.
//!
//! ```
//! use segplan_core::planner::{configure_topology, pad_for_pooling};
//!
//! let topo = configure_topology(&[18.0, 237.0, 208.0], &[5.0, 1.56, 1.56]).unwrap();
//! assert_eq!(topo.pools_per_axis, vec![2, 5, 5]);
//! assert_eq!(pad_for_pooling(&[18.0, 237.0, 208.0], &topo.pools_per_axis), vec![20, 256, 224]);
//! ```

mod blueprint;
mod memory;
mod pipeline;
mod plan;
mod spacing;
mod topology;

pub use blueprint::{deep_supervision_weights, poly_lr, BlueprintParams};
pub use memory::{estimate_memory, MemoryBudget, REFERENCE_3D_HEADROOM, REFERENCE_PRESET};
pub use pipeline::{
    assemble_pipeline_fingerprint, FingerprintSummary, PipelineFingerprint, PlanKind, Provenance, UNetPlan,
};
pub use plan::{
    batch_cap, cascade_required, fit_patch, plan_lowres, plan_unet, LowresPlan, PatchPlan, CASCADE_COVERAGE,
    LOWRES_COVERAGE, MAX_LOWRES_ITERATIONS, MIN_BATCH,
};
pub use spacing::{
    is_ct, median_resampled_shape, plane_axes, select_normalization, target_spacing_2d, target_spacing_fullres,
    NormalizationScheme, ANISOTROPY_THRESHOLD,
};
pub use topology::{configure_topology, features_at, pad_for_pooling, TopologySpec, MIN_POOL_SIZE};
