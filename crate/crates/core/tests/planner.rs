use proptest::prelude::*;
use segplan_core::fingerprint::{DatasetFingerprint, ForegroundStats};
use segplan_core::planner::*;
use segplan_core::volume_io::{read_document, write_document};
use segplan_core::Error;

fn fingerprint(shapes: Vec<[usize; 3]>, spacings: Vec<[f64; 3]>, modality: &str, n_classes: u16) -> DatasetFingerprint {
    let n = shapes.len();
    let mut median_shape = [0; 3];
    for a in 0..3 {
        let mut v: Vec<usize> = shapes.iter().map(|s| s[a]).collect();
        v.sort();
        median_shape[a] = v[(n - 1) / 2];
    }
    DatasetFingerprint {
        schema_version: 1,
        n_cases: n,
        case_ids: (0..n).map(|i| format!("case_{i:03}")).collect(),
        median_shape,
        total_voxels: shapes.iter().map(|s| s.iter().product::<usize>() as u64).sum(),
        shapes,
        spacings,
        modalities: vec![modality.into()],
        n_classes,
        foreground: vec![Some(ForegroundStats { mean: 99.40, std: 39.36, p0_5: -17.0, p99_5: 201.0 })],
        crop_reduction: 0.05,
    }
}

#[test]
fn acdc_topology() {
    let t = configure_topology(&[18.0, 237.0, 208.0], &[5.0, 1.56, 1.56]).unwrap();
    assert_eq!(t.strides, vec![vec![1, 2, 2], vec![2, 2, 2], vec![2, 2, 2], vec![1, 2, 2], vec![1, 2, 2]]);
    assert_eq!(
        t.kernel_sizes,
        vec![vec![1, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3]]
    );
    assert_eq!(t.features_per_stage, vec![32, 64, 128, 256, 320, 320]);
}

#[test]
fn prostate_topology() {
    let t = configure_topology(&[20.0, 320.0, 319.0], &[3.6, 0.62, 0.62]).unwrap();
    assert_eq!(
        t.strides,
        vec![vec![1, 2, 2], vec![1, 2, 2], vec![2, 2, 2], vec![2, 2, 2], vec![1, 2, 2], vec![1, 2, 2]]
    );
    assert_eq!(
        t.kernel_sizes,
        vec![vec![1, 3, 3], vec![1, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3], vec![3, 3, 3]]
    );
}

#[test]
fn acdc_patch_and_batch() {
    // one MRI channel, three foreground classes
    let p = plan_unet(&[18, 237, 208], &[5.0, 1.56, 1.56], MemoryBudget::reference().budget_3d, 5, 200 * 9 * 256 * 216)
        .unwrap();
    assert_eq!(p.patch, vec![20, 256, 224]);
    assert_eq!(p.batch, 3);
    assert!(!p.reduced);
}

#[test]
fn hippocampus_batches_follow_voxel_cap() {
    let total = 260 * 36 * 50 * 35;
    let b = MemoryBudget::reference();
    let p3 = plan_unet(&[36, 50, 35], &[1.0; 3], b.budget_3d, 4, total).unwrap();
    assert_eq!(p3.patch, vec![40, 56, 40]);
    assert_eq!(batch_cap(total, &p3.patch), 9);
    assert_eq!(p3.batch, 9);
    let p2 = plan_unet(&[50, 35], &[1.0; 2], b.budget_2d, 4, total).unwrap();
    assert_eq!(p2.patch, vec![56, 40]);
    assert_eq!(p2.batch, 366);
}

#[test]
fn liver_anchors() {
    let b = MemoryBudget::reference();
    let total = 131 * 432 * 512 * 512;
    let p3 = plan_unet(&[482, 512, 512], &[1.0, 0.7676, 0.7676], b.budget_3d, 4, total).unwrap();
    assert_eq!((p3.patch.clone(), p3.batch), (vec![128, 128, 128], 2));
    assert!(cascade_required(&p3.patch, &[482, 512, 512]));
    let p2 = plan_unet(&[512, 512], &[0.7676, 0.7676], b.budget_2d, 4, total).unwrap();
    assert_eq!((p2.patch, p2.batch), (vec![512, 512], 12));
}

#[test]
fn lowres_spacings_near_published() {
    let b = MemoryBudget::reference().budget_3d;
    let cases: [([f64; 3], [usize; 3], usize, [f64; 3]); 3] = [
        ([2.5, 0.8, 0.8], [96, 512, 512], 4, [2.58, 1.29, 1.29]),
        ([3.0, 0.78, 0.78], [150, 512, 512], 4, [3.09, 1.55, 1.55]),
        ([1.0, 0.7676, 0.7676], [482, 512, 512], 4, [2.47, 1.90, 1.90]),
    ];
    for (sp, med, io, want) in cases {
        let low = plan_lowres(&sp, &med, b, io, 1 << 40).unwrap();
        for a in 0..3 {
            let rel = (low.spacing[a] - want[a]).abs() / want[a];
            assert!(rel < 0.02, "{sp:?}: axis {a} got {} want {}", low.spacing[a], want[a]);
        }
    }
}

#[test]
fn target_spacing_examples() {
    let fp = fingerprint(vec![[100, 100, 100]; 3], vec![[1.0, 0.77, 0.77]; 3], "CT", 2);
    assert_eq!(target_spacing_fullres(&fp).unwrap(), [1.0, 0.77, 0.77]);
    let iso = fingerprint(vec![[40, 40, 40]; 2], vec![[0.9; 3]; 2], "MRI", 1);
    assert_eq!(target_spacing_fullres(&iso).unwrap(), [0.9; 3]);
    assert_eq!(target_spacing_2d(&iso).unwrap(), ([1, 2], [0.9, 0.9]));

    let mut spacings = vec![[10.0, 1.56, 1.56]; 9];
    spacings.push([5.0, 1.56, 1.56]);
    spacings.push([4.0, 1.56, 1.56]);
    let acdc = fingerprint(vec![[9, 256, 216]; 11], spacings, "MRI", 3);
    let t = target_spacing_fullres(&acdc).unwrap();
    // sorted axis-0 spacings [4, 5, 10, ...]: rank 0.1·10 = 1
    assert_eq!(t, [5.0, 1.56, 1.56]);
    assert_eq!(target_spacing_2d(&acdc).unwrap(), ([1, 2], [1.56, 1.56]));

    let flat = fingerprint(vec![[100, 100, 100]; 3], vec![[0.5, 2.0, 0.5]; 3], "MRI", 1);
    assert_eq!(target_spacing_2d(&flat).unwrap().0, [0, 2]);
}

#[test]
fn anisotropic_spacing_alone_keeps_median() {
    // spacing anisotropy 6.4 but a near-cubic shape: no override
    let mut spacings = vec![[10.0, 1.56, 1.56]; 9];
    spacings.push([4.0, 1.56, 1.56]);
    let fp = fingerprint(vec![[60, 64, 64]; 10], spacings, "MRI", 1);
    assert_eq!(target_spacing_fullres(&fp).unwrap()[0], 10.0);
}

#[test]
fn normalization_examples() {
    let ct = fingerprint(vec![[10, 10, 10]], vec![[1.0; 3]], "CT", 2);
    match select_normalization(&ct, 0).unwrap() {
        NormalizationScheme::CtGlobal { clip_low, clip_high, global_mean, global_std } => {
            assert_eq!((clip_low, clip_high, global_mean, global_std), (-17.0, 201.0, 99.40, 39.36));
        }
        other => panic!("{other:?}"),
    }
    let mut mri = fingerprint(vec![[10, 10, 10]], vec![[1.0; 3]], "MRI", 2);
    assert_eq!(select_normalization(&mri, 0).unwrap(), NormalizationScheme::ZScorePerImage);
    mri.crop_reduction = 0.40;
    assert_eq!(select_normalization(&mri, 0).unwrap(), NormalizationScheme::MaskedZScorePerImage);
    let mut missing = fingerprint(vec![[10, 10, 10]], vec![[1.0; 3]], "ct", 2);
    missing.foreground = vec![None];
    assert!(matches!(select_normalization(&missing, 0), Err(Error::MissingStats { channel: 0 })));
}

#[test]
fn acdc_like_pipeline_has_two_plans() {
    let mut spacings = vec![[10.0, 1.56, 1.56]; 9];
    spacings.push([5.0, 1.56, 1.56]);
    spacings.push([4.0, 1.56, 1.56]);
    let fp = fingerprint(vec![[9, 256, 216]; 11], spacings, "MRI", 3);
    let pf = assemble_pipeline_fingerprint(&fp, &MemoryBudget::reference(), Some(REFERENCE_PRESET)).unwrap();
    assert!(!pf.cascade_enabled);
    let kinds: Vec<_> = pf.plans.iter().map(|p| p.kind).collect();
    assert_eq!(kinds, vec![PlanKind::U2D, PlanKind::U3DFullres]);
    for p in &pf.plans {
        p.validate().unwrap();
    }
}

#[test]
fn liver_like_pipeline_has_four_plans_and_round_trips() {
    let fp = fingerprint(vec![[432, 512, 512]; 3], vec![[1.0, 0.77, 0.77]; 3], "CT", 2);
    let mut pf = assemble_pipeline_fingerprint(&fp, &MemoryBudget::reference(), Some(REFERENCE_PRESET)).unwrap();
    assert!(pf.cascade_enabled);
    assert_eq!(pf.plans.len(), 4);
    let full = pf.plan(PlanKind::U3DFullres).unwrap();
    let cascade = pf.plan(PlanKind::U3DCascadeFullres).unwrap();
    assert_eq!(cascade.patch_size, full.patch_size);
    assert_eq!(cascade.input_channels, full.input_channels + 2);
    let low = pf.plan(PlanKind::U3DLowres).unwrap();
    let pv: usize = low.patch_size.iter().product();
    let mv: usize = low.median_shape.iter().product();
    assert!(pv as f64 >= 0.25 * mv as f64);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    write_document(&pf, &path).unwrap();
    let back: PipelineFingerprint = read_document(&path).unwrap();
    assert_eq!(back, pf);

    pf.retain_kinds(&[PlanKind::U3DFullres]);
    assert_eq!(pf.plans.len(), 1);
}

#[test]
fn plan_kind_names() {
    for k in PlanKind::ALL {
        assert_eq!(k.as_str().parse::<PlanKind>().unwrap(), k);
        assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
    }
    assert!("4d".parse::<PlanKind>().is_err());
}

#[test]
fn poly_midpoint_and_weights() {
    let mid = poly_lr(500, 1000, 0.01).unwrap();
    assert!((mid - 0.01 * 0.5f64.powf(0.9)).abs() < 1e-12);
    assert!((mid - 0.005359).abs() < 1e-6);
    for n in 3..=8 {
        let w = deep_supervision_weights(n).unwrap();
        assert_eq!(w.len(), n - 2);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for pair in w.windows(2) {
            assert!((pair[1] / pair[0] - 0.5).abs() < 1e-12);
        }
    }
}

#[test]
fn removing_deepest_stage_lowers_cost() {
    let mut t = configure_topology(&[128.0, 128.0, 128.0], &[1.0; 3]).unwrap();
    let before = estimate_memory(&t, &[128, 128, 128], 2, 4);
    t.strides.pop();
    t.kernel_sizes.pop();
    t.features_per_stage.pop();
    assert!(estimate_memory(&t, &[128, 128, 128], 2, 4) < before);
}

/// Stage spacings rebuilt from the stride list; kernel 3 iff any stage so far
/// had the axis within 2× of the minimum.
fn kernel_oracle(spacing: &[f64], strides: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let d = spacing.len();
    let mut sp = spacing.to_vec();
    let mut seen = vec![false; d];
    let mut out = Vec::new();
    for s in 0..=strides.len() {
        let mn = sp.iter().copied().fold(f64::INFINITY, f64::min);
        for a in 0..d {
            seen[a] |= sp[a] / mn <= 2.0;
        }
        out.push(seen.iter().map(|&k| if k { 3 } else { 1 }).collect());
        if s < strides.len() {
            for a in 0..d {
                sp[a] *= strides[s][a] as f64;
            }
        }
    }
    out
}

fn arb_geometry() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=3)
        .prop_flat_map(|d| (proptest::collection::vec(1.0f64..600.0, d), proptest::collection::vec(0.3f64..12.0, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn topology_structure((patch, spacing) in arb_geometry(), scale in 0.1f64..10.0) {
        let t = configure_topology(&patch, &spacing).unwrap();
        prop_assert_eq!(t.kernel_sizes.len(), t.strides.len() + 1);
        prop_assert!(t.strides.iter().flatten().all(|&s| s == 1 || s == 2));
        prop_assert!(t.kernel_sizes.iter().flatten().all(|&k| k == 1 || k == 3));
        prop_assert_eq!(t.features_per_stage[0], 32);
        for a in 0..patch.len() {
            let pooled = t.strides.iter().filter(|s| s[a] == 2).count() as u32;
            prop_assert_eq!(pooled, t.pools_per_axis[a]);
            // every pooled step saw a size of at least 8
            prop_assert!(patch[a] / f64::from(1u32 << pooled.saturating_sub(1)) >= 8.0 || pooled == 0);
            for w in t.kernel_sizes.windows(2) {
                prop_assert!(w[1][a] >= w[0][a]);
            }
        }
        prop_assert_eq!(&t.kernel_sizes, &kernel_oracle(&spacing, &t.strides));
        let scaled: Vec<f64> = spacing.iter().map(|s| s * scale).collect();
        let t2 = configure_topology(&patch, &scaled).unwrap();
        prop_assert_eq!(&t.strides, &t2.strides);
        prop_assert_eq!(&t.kernel_sizes, &t2.kernel_sizes);
    }

    #[test]
    fn memory_monotone(extra in 1usize..64, axis in 0usize..3, batch in 1usize..8) {
        let base = [64usize, 96, 80];
        let t = configure_topology(&[64.0, 96.0, 80.0], &[1.0; 3]).unwrap();
        let mut bigger = base;
        bigger[axis] += extra;
        prop_assert!(estimate_memory(&t, &bigger, batch, 3) > estimate_memory(&t, &base, batch, 3));
        prop_assert!(estimate_memory(&t, &base, batch + 1, 3) > estimate_memory(&t, &base, batch, 3));
    }

    #[test]
    fn plan_respects_budget(
        median in proptest::collection::vec(8usize..400, 3),
        spacing in proptest::collection::vec(0.5f64..6.0, 3),
        frac in 0.02f64..1.5,
        total in 1u64..100_000_000_000,
    ) {
        let budget = MemoryBudget::reference().budget_3d * frac;
        let p = plan_unet(&median, &spacing, budget, 4, total).unwrap();
        prop_assert!(estimate_memory(&p.topology, &p.patch, p.batch, 4) <= budget);
        prop_assert!(p.batch >= 2);
        let mf: Vec<f64> = median.iter().map(|&m| m as f64).collect();
        let t0 = configure_topology(&mf, &spacing).unwrap();
        let padded = pad_for_pooling(&mf, &t0.pools_per_axis);
        prop_assert!(p.patch == padded || p.batch == 2);
        for a in 0..3 {
            prop_assert_eq!(p.patch[a] % p.topology.divisor(a), 0);
            prop_assert!(p.patch[a] <= padded[a]);
        }
    }

    #[test]
    fn lowres_covers_a_quarter(
        median in proptest::collection::vec(64usize..600, 3),
        spacing in proptest::collection::vec(0.5f64..5.0, 3),
    ) {
        let budget = MemoryBudget::reference().budget_3d;
        let low = plan_lowres(&spacing, &median, budget, 4, 1 << 36).unwrap();
        let pv: f64 = low.plan.patch.iter().map(|&x| x as f64).product();
        let mv: f64 = low.median_shape.iter().map(|&x| x as f64).product();
        prop_assert!(pv >= 0.25 * mv);
        prop_assert!((0..3).all(|a| low.spacing[a] >= spacing[a]));
        prop_assert!((0..3).any(|a| low.spacing[a] > spacing[a]));
    }
}
