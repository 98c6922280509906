//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use segplan_core::augment::{
    intensity_transform, mirror, sample_cascade_params, sample_params, AugmentationParams, PatchGeometry,
};
use segplan_core::evalselect::{
    apply_postprocessing, bootstrap_ranking, decide_postprocessing, dice, exact_rank_distribution,
    mean_foreground_dice, select_configuration, Candidate,
};
use segplan_core::fingerprint::{DatasetFingerprint, ForegroundStats};
use segplan_core::grid::Grid;
use segplan_core::planner::{
    assemble_pipeline_fingerprint, cascade_required, configure_topology, deep_supervision_weights, plan_lowres,
    plan_unet, poly_lr, MemoryBudget, PlanKind,
};
use segplan_core::preprocess::{resample_labels, resample_volume};
use segplan_core::rng::RngStream;
use segplan_core::tiling::{aggregate_tiles, compute_tile_origins, gaussian_importance_map, mirror_tta_average};
use segplan_core::volume_io::{LabelVolume, Volume};
use serde::Deserialize;

// ---------------------------------------------------------------- fixtures

#[derive(Deserialize)]
struct Published {
    datasets: Vec<Dataset>,
}

#[derive(Deserialize)]
struct Dataset {
    name: String,
    n_modalities: usize,
    n_classes: usize,
    n_cases: u64,
    median_shape: [usize; 3],
    configs: Vec<Config>,
}

#[derive(Deserialize)]
struct Config {
    kind: String,
    target_spacing: Vec<f64>,
    median_shape: Vec<usize>,
    patch: Vec<usize>,
    strides: Vec<Vec<u32>>,
    kernels: Vec<Vec<u32>>,
}

impl Dataset {
    fn io_channels(&self) -> usize {
        self.n_modalities + self.n_classes + 1
    }

    fn total_voxels(&self) -> u64 {
        self.n_cases * self.median_shape.iter().map(|&s| s as u64).product::<u64>()
    }

    fn config(&self, kind: &str) -> Option<&Config> {
        self.configs.iter().find(|c| c.kind == kind)
    }
}

fn published() -> Published {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/published_configurations.json");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("published configurations parse")
}

fn synthetic_dataset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic")
}

const CASCADE_TRUE: [&str; 10] =
    ["Liver", "Lung", "Pancreas", "HepaticVessel", "Spleen", "Colon", "AbdOrgSeg", "LiTS", "KiTS", "SegTHOR"];
const CASCADE_FALSE: [&str; 8] =
    ["ACDC", "Heart", "Hippocampus", "Prostate", "BrainTumour", "Promise", "MSLesion", "CHAOS"];

/// Liver cross-validation mean foreground Dice per candidate.
const LIVER_SCORES: [(&str, f64); 5] = [
    ("2d", 0.7592),
    ("3d_fullres", 0.7971),
    ("3d_lowres", 0.7796),
    ("3d_cascade_fullres", 0.7993),
    ("3d_lowres+3d_fullres", 0.8088),
];

fn within_3_sigma(hits: usize, n: usize, p: f64) -> bool {
    let f = hits as f64 / n as f64;
    (f - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

type Check = fn() -> Result<String, String>;

fn pass_if(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criteria

fn c1_topology() -> Result<String, String> {
    let data = published();
    let start = Instant::now();
    let mut total = 0;
    let mut misses = Vec::new();
    for ds in &data.datasets {
        for cfg in &ds.configs {
            total += 1;
            let input: Vec<f64> = cfg.patch.iter().zip(&cfg.median_shape).map(|(&p, &m)| p.min(m) as f64).collect();
            let topo = configure_topology(&input, &cfg.target_spacing).map_err(|e| e.to_string())?;
            if topo.strides != cfg.strides || topo.kernel_sizes != cfg.kernels {
                misses.push(format!("{} {}", ds.name, cfg.kind));
            }
        }
    }
    let elapsed = start.elapsed();
    pass_if(
        misses.is_empty() && total >= 45 && elapsed < Duration::from_secs(1),
        format!("{} mismatches of {total} configurations in {elapsed:.2?} {misses:?}", misses.len()),
    )
}

fn c2_patch() -> Result<String, String> {
    let data = published();
    let budget = MemoryBudget::reference();
    let (mut total, mut exact) = (0, 0);
    let mut far = Vec::new();
    let mut anchors_ok = true;
    for ds in &data.datasets {
        for cfg in &ds.configs {
            total += 1;
            let plan = plan_unet(
                &cfg.median_shape,
                &cfg.target_spacing,
                budget.for_dim(cfg.patch.len()),
                ds.io_channels(),
                ds.total_voxels(),
            )
            .map_err(|e| format!("{} {}: {e}", ds.name, cfg.kind))?;
            let is_anchor = cfg.kind == "3d_fullres" && (ds.name == "ACDC" || ds.name == "Hippocampus");
            if plan.patch == cfg.patch {
                exact += 1;
                continue;
            }
            anchors_ok &= !is_anchor;
            let published_pad =
                configure_topology(&cfg.patch.iter().map(|&p| p as f64).collect::<Vec<_>>(), &cfg.target_spacing)
                    .map_err(|e| e.to_string())?;
            let diff: Vec<usize> = (0..cfg.patch.len()).filter(|&a| plan.patch[a] != cfg.patch[a]).collect();
            let one_step = diff.len() == 1 && {
                let a = diff[0];
                let d = plan.patch[a].abs_diff(cfg.patch[a]);
                d == plan.topology.divisor(a) || d == published_pad.divisor(a)
            };
            if !one_step {
                far.push(format!("{} {} {:?} vs {:?}", ds.name, cfg.kind, plan.patch, cfg.patch));
            }
        }
    }
    let frac = exact as f64 / total as f64;
    pass_if(
        frac >= 0.8 && far.is_empty() && anchors_ok,
        format!("{exact}/{total} exact ({:.0}%), anchors exact: {anchors_ok}, beyond one step: {far:?}", 100.0 * frac),
    )
}

fn hippocampus_fingerprint() -> DatasetFingerprint {
    let n = 260;
    let shape = [36, 50, 35];
    DatasetFingerprint {
        schema_version: 1,
        n_cases: n,
        case_ids: (0..n).map(|i| format!("hippocampus_{i:03}")).collect(),
        median_shape: shape,
        shapes: vec![shape; n],
        spacings: vec![[1.0; 3]; n],
        modalities: vec!["MRI".into()],
        n_classes: 2,
        foreground: vec![Some(ForegroundStats { mean: 0.0, std: 1.0, p0_5: -2.5, p99_5: 2.5 })],
        total_voxels: (n * shape.iter().product::<usize>()) as u64,
        crop_reduction: 0.0,
    }
}

fn c3_batch() -> Result<String, String> {
    let plan = assemble_pipeline_fingerprint(&hippocampus_fingerprint(), &MemoryBudget::reference(), None)
        .map_err(|e| e.to_string())?;
    let batch = |k: PlanKind| plan.plan(k).map(|p| p.batch_size);
    let hippo = (batch(PlanKind::U2D), batch(PlanKind::U3DFullres));

    let b = MemoryBudget::reference();
    let total = 131 * 432 * 512 * 512;
    let l3 = plan_unet(&[482, 512, 512], &[1.0, 0.7676, 0.7676], b.budget_3d, 4, total).map_err(|e| e.to_string())?;
    let l2 = plan_unet(&[512, 512], &[0.7676, 0.7676], b.budget_2d, 4, total).map_err(|e| e.to_string())?;
    pass_if(
        hippo == (Some(366), Some(9)) && l3.batch == 2 && l2.batch == 12,
        format!("Hippocampus 2D/3D {:?}/{:?}, Liver 3D/2D {}/{}", hippo.0, hippo.1, l3.batch, l2.batch),
    )
}

fn c4_cascade() -> Result<String, String> {
    let data = published();
    let budget = MemoryBudget::reference().budget_3d;
    let start = Instant::now();
    let mut wrong_flags = Vec::new();
    let mut spacing_misses = Vec::new();
    let mut worst: f64 = 0.0;
    let mut n_lowres = 0;
    let mut seen = HashSet::new();
    for ds in &data.datasets {
        let Some(full) = ds.config("3d_fullres") else { continue };
        let plan = plan_unet(&full.median_shape, &full.target_spacing, budget, ds.io_channels(), ds.total_voxels())
            .map_err(|e| e.to_string())?;
        let cascade = cascade_required(&plan.patch, &full.median_shape);
        let expected = if CASCADE_TRUE.contains(&ds.name.as_str()) {
            Some(true)
        } else if CASCADE_FALSE.contains(&ds.name.as_str()) {
            Some(false)
        } else {
            None
        };
        if let Some(e) = expected {
            seen.insert(ds.name.clone());
            if cascade != e {
                wrong_flags.push(ds.name.clone());
            }
        }
        if let Some(low) = ds.config("3d_lowres") {
            n_lowres += 1;
            let got =
                plan_lowres(&full.target_spacing, &full.median_shape, budget, ds.io_channels(), ds.total_voxels())
                    .map_err(|e| e.to_string())?;
            for (g, w) in got.spacing.iter().zip(&low.target_spacing) {
                let rel = (g - w).abs() / w;
                worst = worst.max(rel);
                if rel >= 0.02 {
                    spacing_misses.push(format!("{} {:?} vs {:?}", ds.name, got.spacing, low.target_spacing));
                    break;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let all_named = seen.len() == CASCADE_TRUE.len() + CASCADE_FALSE.len();
    pass_if(
        wrong_flags.is_empty()
            && spacing_misses.is_empty()
            && all_named
            && n_lowres == 10
            && elapsed < Duration::from_secs(10),
        format!(
            "wrong flags {wrong_flags:?}; {n_lowres} low-res spacings, worst {:.2}% {spacing_misses:?}; {elapsed:.2?}",
            100.0 * worst
        ),
    )
}

fn c5_blueprint() -> Result<String, String> {
    let lr0 = 0.01;
    let start = poly_lr(0, 1000, lr0).map_err(|e| e.to_string())?;
    let end = poly_lr(1000, 1000, lr0).map_err(|e| e.to_string())?;
    let mid = poly_lr(500, 1000, lr0).map_err(|e| e.to_string())?;
    let mid_err = (mid - lr0 * 0.5f64.powf(0.9)).abs();
    let mut weights_ok = true;
    for n in 3..=8 {
        let w = deep_supervision_weights(n).map_err(|e| e.to_string())?;
        weights_ok &= w.len() == n - 2 && (w.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        weights_ok &= w.windows(2).all(|p| (p[1] / p[0] - 0.5).abs() < 1e-12);
    }
    pass_if(
        start == lr0 && end == 0.0 && mid_err < 1e-9 && weights_ok,
        format!("lr(0)={start}, lr(max)={end}, midpoint error {mid_err:.1e}, weights ok for n=3..8: {weights_ok}"),
    )
}

fn volume(shape: [usize; 3], spacing: [f64; 3], f: impl Fn(usize, usize, usize) -> f32) -> Volume {
    Volume::from_grid(Grid::from_fn(shape.to_vec(), |i| f(i[0], i[1], i[2])), spacing, "MRI").unwrap()
}

fn c6_preprocess() -> Result<String, String> {
    let mut rng = RngStream::new(6);

    let mut identity_err: f64 = 0.0;
    for spacing in [[1.0, 1.0, 1.0], [5.0, 1.0, 1.0], [0.7, 0.9, 1.3]] {
        let data = (0..7 * 9 * 11).map(|_| rng.uniform(-100.0, 100.0) as f32).collect();
        let v = Volume::new([7, 9, 11], spacing, data, "MRI").map_err(|e| e.to_string())?;
        let r = resample_volume(&v, spacing).map_err(|e| e.to_string())?;
        identity_err = v.data().iter().zip(r.data()).fold(identity_err, |m, (a, b)| m.max((a - b).abs() as f64));
    }

    // output voxel j sits at source coordinate (j + 0.5)·to/from − 0.5
    let (from, to) = ([1.0; 3], [1.6, 0.8, 1.2]);
    let shape = [12, 10, 14];
    let ramp = |z: f64, y: f64, x: f64| 0.05 * z + 0.03 * y - 0.02 * x + 0.25;
    let v = volume(shape, from, |z, y, x| ramp(z as f64, y as f64, x as f64) as f32);
    let r = resample_volume(&v, to).map_err(|e| e.to_string())?;
    let out = r.shape();
    let src = |j: usize, a: usize| ((j as f64 + 0.5) * to[a] / from[a] - 0.5).clamp(-0.5, shape[a] as f64 - 0.5);
    let mut ramp_err: f64 = 0.0;
    for z in 0..out[0] {
        for y in 0..out[1] {
            for x in 0..out[2] {
                let e = ramp(src(z, 0), src(y, 1), src(x, 2));
                ramp_err = ramp_err.max((r.grid().get(&[z, y, x]) as f64 - e).abs());
            }
        }
    }

    use std::f64::consts::PI;
    let band = volume([32, 48, 64], [1.0; 3], |z, y, x| {
        ((2.0 * PI * x as f64 / 8.0).sin() + (2.0 * PI * y as f64 / 12.0).cos() + (2.0 * PI * z as f64 / 16.0).sin())
            as f32
    });
    let down = resample_volume(&band, [2.0; 3]).map_err(|e| e.to_string())?;
    let up = resample_volume(&down, [1.0; 3]).map_err(|e| e.to_string())?;
    let n = band.data().len() as f64;
    let err2: f64 = band.data().iter().zip(up.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>() / n;
    let power: f64 = band.data().iter().map(|&a| (a as f64).powi(2)).sum::<f64>() / n;
    let band_rms = (err2 / power).sqrt();

    let mut invented = 0;
    for _ in 0..1000 {
        let shape = [1 + rng.index(7), 1 + rng.index(7), 1 + rng.index(7)];
        let palette: Vec<u16> = (0..1 + rng.index(3)).map(|_| rng.index(9) as u16).collect();
        let data: Vec<u16> = (0..shape.iter().product()).map(|_| palette[rng.index(palette.len())]).collect();
        let mut spacing = || [rng.uniform(0.4, 4.0), rng.uniform(0.4, 4.0), rng.uniform(0.4, 4.0)];
        let (from, to) = (spacing(), spacing());
        let present: HashSet<u16> = data.iter().copied().collect();
        let l = LabelVolume::from_grid_inferred(Grid::new(shape.to_vec(), data).unwrap(), from)
            .map_err(|e| e.to_string())?;
        let r = resample_labels(&l, to).map_err(|e| e.to_string())?;
        invented += r.data().iter().any(|v| !present.contains(v)) as usize;
    }

    pass_if(
        identity_err < 1e-6 && ramp_err < 1e-6 && band_rms < 0.02 && invented == 0,
        format!(
            "identity {identity_err:.1e}, ramp {ramp_err:.1e}, band-limited RMS {:.2}% (bound 2%), invented labels in {invented}/1000",
            100.0 * band_rms
        ),
    )
}

fn c7_augment() -> Result<String, String> {
    let start = Instant::now();
    let n = 100_000;
    let g = PatchGeometry::new(vec![64, 64, 64]).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(7);
    let expected = [
        ("rotation", 0.2),
        ("scale", 0.2),
        ("noise", 0.15),
        ("blur", 0.2),
        ("brightness", 0.15),
        ("contrast", 0.15),
        ("lowres", 0.25),
        ("gamma", 0.15),
        ("inverted gamma", 0.15),
        ("mirror axis 0", 0.5),
        ("blur channel", 0.5),
        ("lowres channel", 0.5),
        ("cascade morphology", 0.4),
        ("cascade component removal", 0.2),
    ];
    let mut hits = vec![0usize; expected.len()];
    let mut trials = vec![n; expected.len()];
    trials[10] = 0;
    trials[11] = 0;
    for _ in 0..n {
        let p = sample_params(&mut rng, &g, 2);
        let flags = [
            p.rotation.is_some(),
            p.scale.is_some(),
            p.noise_variance.is_some(),
            p.blur_sigma.is_some(),
            p.brightness.is_some(),
            p.contrast.is_some(),
            p.lowres_factor.is_some(),
            p.gamma.is_some(),
            p.gamma_inverted.is_some(),
            p.mirror_axes.contains(&0),
        ];
        for (h, f) in hits.iter_mut().zip(flags) {
            *h += f as usize;
        }
        if let Some(b) = &p.blur_sigma {
            hits[10] += b.iter().filter(|s| s.is_some()).count();
            trials[10] += b.len();
        }
        if let Some(l) = &p.lowres_factor {
            hits[11] += l.iter().filter(|s| s.is_some()).count();
            trials[11] += l.len();
        }
        let c = sample_cascade_params(&mut rng, 3);
        hits[12] += c.morph.is_some() as usize;
        hits[13] += c.remove_components as usize;
    }
    let off: Vec<String> = expected
        .iter()
        .enumerate()
        .filter(|&(i, &(_, p))| !within_3_sigma(hits[i], trials[i], p))
        .map(|(i, (name, p))| format!("{name} {}/{} vs {p}", hits[i], trials[i]))
        .collect();

    // geometry, rotation bound
    let geometries =
        [(vec![64, 64, 64], 30.0), (vec![20, 256, 224], 180.0), (vec![128, 128], 180.0), (vec![40, 200], 15.0)];
    let inside = |v: f64, lo: f64, hi: f64| (lo..=hi).contains(&v);
    let mut violations = 0usize;
    let draws = 1_000_000;
    for i in 0..draws {
        let (patch, max_angle) = &geometries[i % geometries.len()];
        let g = PatchGeometry::new(patch.clone()).unwrap();
        let p = sample_params(&mut rng, &g, 2);
        let mut bad = 0;
        bad += p.rotation.iter().flatten().filter(|a| a.abs() > *max_angle).count();
        bad += p.scale.iter().filter(|&&s| !inside(s, 0.7, 1.4)).count();
        bad += p.noise_variance.iter().filter(|&&v| !inside(v, 0.0, 0.1)).count();
        bad += p.blur_sigma.iter().flatten().flatten().filter(|&&s| !inside(s, 0.5, 1.5)).count();
        bad += p.brightness.iter().filter(|&&v| !inside(v, 0.7, 1.3)).count();
        bad += p.contrast.iter().filter(|&&v| !inside(v, 0.65, 1.5)).count();
        bad += p.lowres_factor.iter().flatten().flatten().filter(|&&v| !inside(v, 1.0, 2.0)).count();
        bad += p.gamma.iter().chain(&p.gamma_inverted).filter(|&&v| !inside(v, 0.7, 1.5)).count();
        bad += p.mirror_axes.iter().filter(|&&a| a >= patch.len()).count();
        if i % 10 == 0 {
            bad += sample_cascade_params(&mut rng, 3).morph.iter().filter(|(_, r)| !inside(*r, 1.0, 8.0)).count();
        }
        violations += bad;
    }

    let patch = Grid::from_fn(vec![6, 5, 4], |_| rng.uniform(-3.0, 3.0) as f32);
    let g = PatchGeometry::new(vec![6, 5, 4]).map_err(|e| e.to_string())?;
    let mut gamma_err: f64 = 0.0;
    for inverted in [false, true] {
        let mut p = AugmentationParams::identity();
        if inverted {
            p.gamma_inverted = Some(1.0);
        } else {
            p.gamma = Some(1.0);
        }
        let out = intensity_transform(std::slice::from_ref(&patch), &p, &g, &mut RngStream::new(0))
            .map_err(|e| e.to_string())?;
        gamma_err = out[0].data().iter().zip(patch.data()).fold(gamma_err, |m, (a, b)| m.max((a - b).abs() as f64));
    }

    let mut involution = true;
    for mask in 0..8usize {
        let axes: Vec<usize> = (0..3).filter(|a| mask >> a & 1 == 1).collect();
        involution &= mirror(&mirror(&patch, &axes), &axes) == patch;
    }
    let elapsed = start.elapsed();
    pass_if(
        off.is_empty() && violations == 0 && gamma_err < 1e-12 && involution && elapsed < Duration::from_secs(60),
        format!(
            "{} probabilities outside 3σ {off:?}; {violations} range violations in {draws} draws; γ=1 error {gamma_err:.1e}; mirror involution {involution}; {elapsed:.2?}",
            off.len()
        ),
    )
}

fn c8_tiling() -> Result<String, String> {
    let mut rng = RngStream::new(8);
    let mut failures = 0;
    for _ in 0..1000 {
        let d = 1 + rng.index(3);
        let shape: Vec<usize> = (0..d).map(|_| 1 + rng.index(40)).collect();
        let patch: Vec<usize> = shape.iter().map(|&n| 1 + rng.index(n)).collect();
        let plan = compute_tile_origins(&shape, &patch).map_err(|e| e.to_string())?;
        let mut hits = Grid::filled(shape.clone(), 0u32);
        let mut ok = true;
        for o in &plan.origins {
            ok &= o.iter().zip(&patch).zip(&shape).all(|((&o, &p), &n)| o + p <= n);
            if !ok {
                break;
            }
            segplan_core::grid::for_each_index(&patch, |idx, _| {
                let t: Vec<usize> = idx.iter().zip(o).map(|(i, o)| i + o).collect();
                let v = hits.get(&t);
                hits.set(&t, v + 1);
            });
        }
        ok &= hits.data().iter().all(|&h| h > 0);
        for a in 0..d {
            let last = plan.origins.iter().map(|o| o[a]).max().unwrap_or(0);
            ok &= last + patch[a] == shape[a];
        }
        failures += !ok as usize;
    }

    let shape = [30, 41, 17];
    let patch = [16, 16, 16];
    let plan = compute_tile_origins(&shape, &patch).map_err(|e| e.to_string())?;
    let (c0, c1) = (0.3f32, 0.7f32);
    let blocks: Vec<Grid<f32>> =
        plan.origins.iter().map(|_| Grid::from_fn(vec![2, 16, 16, 16], |i| if i[0] == 0 { c0 } else { c1 })).collect();
    let agg = aggregate_tiles(&plan, &blocks, &gaussian_importance_map(&patch)).map_err(|e| e.to_string())?;
    let per_class: usize = shape.iter().product();
    let constant_exact = agg.data().iter().enumerate().all(|(k, &v)| v == if k < per_class { c0 } else { c1 });

    let mut tta_counts = Vec::new();
    for d in 1..=3usize {
        let mut calls = 0;
        let window = Grid::filled(std::iter::once(1).chain(std::iter::repeat_n(4, d)).collect(), 1.0f32);
        mirror_tta_average(
            |w| {
                calls += 1;
                Ok(w.clone())
            },
            &window,
        )
        .map_err(|e| e.to_string())?;
        tta_counts.push(calls);
    }

    let g = gaussian_importance_map(&[65, 65]);
    let sigma = 65.0 / 8.0;
    let closed = (32.0f64 * 32.0 / (2.0 * sigma * sigma)).exp();
    let ratio_err = (g.get(&[32, 32]) / g.get(&[32, 0]) / closed - 1.0).abs();

    pass_if(
        failures == 0 && constant_exact && tta_counts == [2, 4, 8] && ratio_err < 1e-6,
        format!(
            "{failures}/1000 tilings failed coverage or clamping; constant field exact {constant_exact}; TTA calls {tta_counts:?}; Gaussian ratio error {ratio_err:.1e}"
        ),
    )
}

fn labels(shape: [usize; 3], data: Vec<u16>) -> LabelVolume {
    LabelVolume::new(shape, [1.0; 3], data, 3).unwrap()
}

fn dice_oracle(p: &[u16], r: &[u16], c: u16) -> f64 {
    let ps: HashSet<usize> = (0..p.len()).filter(|&i| p[i] == c).collect();
    let rs: HashSet<usize> = (0..r.len()).filter(|&i| r[i] == c).collect();
    if ps.is_empty() && rs.is_empty() {
        1.0
    } else {
        2.0 * ps.intersection(&rs).count() as f64 / (ps.len() + rs.len()) as f64
    }
}

/// Rank distribution over every resample of `n` cases, slots in half-rank
/// steps from rank 1.
fn enumerate_ranks(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (k, n) = (scores.len(), scores[0].len());
    let total = n.pow(n as u32);
    let mut dist = vec![vec![0.0; 2 * k - 1]; k];
    for code in 0..total {
        let sample: Vec<usize> = (0..n).map(|i| code / n.pow(i as u32) % n).collect();
        let means: Vec<f64> = scores.iter().map(|s| sample.iter().map(|&i| s[i]).sum::<f64>()).collect();
        for a in 0..k {
            let better = means.iter().filter(|&&m| m > means[a]).count();
            let equal = means.iter().filter(|&&m| m == means[a]).count();
            let slot = 2 * better + equal - 1;
            dist[a][slot] += 1.0 / total as f64;
        }
    }
    dist
}

fn c9_evaluation() -> Result<String, String> {
    let mut rng = RngStream::new(9);
    let mut dice_mismatch = 0;
    for _ in 0..10_000 {
        let shape = [1 + rng.index(4), 1 + rng.index(4), 1 + rng.index(4)];
        let n: usize = shape.iter().product();
        let p: Vec<u16> = (0..n).map(|_| rng.index(4) as u16).collect();
        let r: Vec<u16> = (0..n).map(|_| rng.index(4) as u16).collect();
        let (pv, rv) = (labels(shape, p.clone()), labels(shape, r.clone()));
        for c in 1..=3 {
            dice_mismatch += (dice(&pv, &rv, c).map_err(|e| e.to_string())? != dice_oracle(&p, &r, c)) as usize;
        }
    }

    let scores: Vec<(Candidate, f64)> = LIVER_SCORES
        .iter()
        .map(|(name, s)| Ok((name.parse::<Candidate>().map_err(|e| e.to_string())?, *s)))
        .collect::<Result<_, String>>()?;
    let (best, best_score) = select_configuration(&scores).map_err(|e| e.to_string())?;
    let liver_ok = best == Candidate::Ensemble(PlanKind::U3DLowres, PlanKind::U3DFullres) && best_score == 0.8088;

    let mut degraded = 0;
    for _ in 0..1000 {
        let n_cases = 1 + rng.index(3);
        let draw = |rng: &mut RngStream| -> Vec<u16> {
            (0..64)
                .map(|_| match rng.index(9) {
                    0..=5 => 0,
                    6 | 7 => 1,
                    _ => 2,
                })
                .collect()
        };
        let preds: Vec<LabelVolume> = (0..n_cases).map(|_| labels([4, 4, 4], draw(&mut rng))).collect();
        let refs: Vec<LabelVolume> = (0..n_cases).map(|_| labels([4, 4, 4], draw(&mut rng))).collect();
        let decision = decide_postprocessing(&preds, &refs, 2).map_err(|e| e.to_string())?;
        let score = |ps: &[LabelVolume]| -> f64 {
            let per: Vec<Vec<f64>> =
                ps.iter().zip(&refs).map(|(p, r)| vec![dice(p, r, 1).unwrap(), dice(p, r, 2).unwrap()]).collect();
            mean_foreground_dice(&per).unwrap()
        };
        let after: Vec<LabelVolume> = preds.iter().map(|p| apply_postprocessing(p, &decision)).collect();
        degraded += (score(&after) < score(&preds)) as usize;
    }

    let two = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let oracle = enumerate_ranks(&two);
    let exact = exact_rank_distribution(&two).map_err(|e| e.to_string())?;
    let reps = 1000;
    let boot = bootstrap_ranking(&two, reps, &RngStream::new(9)).map_err(|e| e.to_string())?;
    let boot_ok = (0..2).all(|a| (0..3).all(|s| within_3_sigma(boot.histogram[a][s], reps, oracle[a][s])));
    let enum_ok = exact == oracle && oracle[0] == [0.25, 0.5, 0.25];

    pass_if(
        dice_mismatch == 0 && liver_ok && degraded == 0 && enum_ok && boot_ok,
        format!(
            "Dice mismatches {dice_mismatch}/30000; Liver pick {best} at {best_score}; degraded {degraded}/1000; 2x2 enumeration {:?}, bootstrap within 3σ {boot_ok}",
            exact[0]
        ),
    )
}

fn segplan(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segplan"))
        .args(args)
        .env_remove("SEGPLAN_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("segplan {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn pipeline_once(dir: &Path, seed: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dataset = synthetic_dataset();
    let dataset = dataset.to_str().unwrap();
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    segplan(&["--seed", seed, "fingerprint", "--dataset", dataset, "--out", &path("fingerprint.json")])?;
    segplan(&["--seed", seed, "plan", "--fingerprint", &path("fingerprint.json"), "--out", &path("plan.json")])?;
    segplan(&[
        "--seed",
        seed,
        "preprocess",
        "--dataset",
        dataset,
        "--plan",
        &path("plan.json"),
        "--out",
        &path("preprocessed"),
    ])?;
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files).map_err(|e| e.to_string())?;
    Ok(files)
}

fn c10_determinism() -> Result<String, String> {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let first = pipeline_once(a.path(), "1234")?;
    let second = pipeline_once(b.path(), "1234")?;
    let differing: Vec<&String> =
        first.keys().chain(second.keys()).filter(|k| first.get(*k) != second.get(*k)).collect();
    let bytes: usize = first.values().map(Vec::len).sum();
    pass_if(
        differing.is_empty() && first.len() > 3,
        format!(
            "{} files ({bytes} bytes) compared, {} differ {differing:?}; two pipeline runs took {:.2?}",
            first.len(),
            differing.len(),
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- runner

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("topology golden suite", c1_topology),
        ("patch golden suite", c2_patch),
        ("batch-size cap", c3_batch),
        ("cascade and low-res spacing", c4_cascade),
        ("blueprint formulas", c5_blueprint),
        ("preprocessing properties", c6_preprocess),
        ("augmentation statistics", c7_augment),
        ("tiling and aggregation", c8_tiling),
        ("evaluation and selection", c9_evaluation),
        ("end-to-end determinism", c10_determinism),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name} ({:.2?}): {detail}", i + 1, start.elapsed());
    }
    println!("acceptance: {}/{} passed in {:.2?}", criteria.len() - failed, criteria.len(), suite.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
