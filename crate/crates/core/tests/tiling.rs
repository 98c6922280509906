use std::cell::Cell;

use proptest::prelude::*;
use segplan_core::grid::Grid;
use segplan_core::tiling::*;
use segplan_core::Error;

/// Independent enumeration: k·step while it fits, then the last valid origin.
fn origins_oracle(n: usize, p: usize) -> Vec<usize> {
    let step = (p + 1) / 2;
    let mut out = Vec::new();
    let mut k = 0;
    while k * step + p <= n {
        out.push(k * step);
        k += 1;
    }
    if *out.last().unwrap() != n - p {
        out.push(n - p);
    }
    out
}

#[test]
fn origin_examples() {
    assert_eq!(compute_tile_origins(&[100], &[64]).unwrap().origins, vec![vec![0], vec![32], vec![36]]);
    assert_eq!(compute_tile_origins(&[64], &[64]).unwrap().origins, vec![vec![0]]);
    assert_eq!(compute_tile_origins(&[128], &[64]).unwrap().origins, vec![vec![0], vec![32], vec![64]]);
    for (n, p) in [(100, 64), (128, 64), (64, 64), (7, 3), (200, 37)] {
        assert_eq!(axis_origins(n, p), origins_oracle(n, p));
    }
    let plan = compute_tile_origins(&[10, 100], &[10, 64]).unwrap();
    assert_eq!(plan.origins, vec![vec![0, 0], vec![0, 32], vec![0, 36]]);
    assert!(matches!(compute_tile_origins(&[5, 5, 5], &[6, 5, 5]), Err(Error::PatchLargerThanVolume { .. })));
}

#[test]
fn importance_map_peaks_at_centre_and_is_symmetric() {
    for patch in [vec![9, 9, 9], vec![8, 12, 5], vec![64, 64]] {
        let g = gaussian_importance_map(&patch);
        let max = g.data().iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        // peak voxels are exactly the central ones on every axis
        let centre = |p: usize, i: usize| if p % 2 == 1 { i == p / 2 } else { i == p / 2 || i + 1 == p / 2 };
        let peak = Grid::from_fn(patch.clone(), |idx| idx.iter().zip(&patch).all(|(&i, &p)| centre(p, i)));
        for (v, &is_peak) in g.data().iter().zip(peak.data()) {
            assert_eq!(*v == 1.0, is_peak);
        }
        for a in 0..patch.len() {
            assert_eq!(g.flip(a), g);
        }
        assert!(g.data().iter().all(|&v| v > 0.0));
    }
}

#[test]
fn centre_to_edge_ratio_matches_closed_form() {
    // odd edge: the centre voxel sits exactly 32 voxels from the edge voxel
    let g = gaussian_importance_map(&[65, 65]);
    let sigma = 65.0 / 8.0;
    let expect = (32.0f64 * 32.0 / (2.0 * sigma * sigma)).exp();
    let ratio = g.get(&[32, 32]) / g.get(&[32, 0]);
    assert!((ratio / expect - 1.0).abs() < 1e-6, "{ratio} vs {expect}");

    // even edge 64 (σ = 8): central voxels at ±0.5, edge voxel at 31.5
    let g = gaussian_importance_map(&[64, 64]);
    let expect = ((31.5f64 * 31.5 - 0.25) / (2.0 * 64.0)).exp();
    let ratio = g.get(&[32, 32]) / g.get(&[32, 0]);
    assert!((ratio / expect - 1.0).abs() < 1e-6, "{ratio} vs {expect}");
}

#[test]
fn floor_bounds_the_weights() {
    let g = gaussian_importance_map_with(&[64, 64, 64], GaussianSettings { sigma_scale: 0.125, floor: 1e-3 });
    let min = g.data().iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(min, 1e-3);
    let g = gaussian_importance_map(&[64, 64, 64]);
    assert_eq!(g.data().iter().cloned().fold(f64::INFINITY, f64::min), GaussianSettings::default().floor);
}

fn block(classes: usize, patch: &[usize], f: impl Fn(usize, &[usize]) -> f32) -> Grid<f32> {
    let mut shape = vec![classes];
    shape.extend_from_slice(patch);
    Grid::from_fn(shape, |i| f(i[0], &i[1..]))
}

#[test]
fn single_window_passes_through() {
    let plan = compute_tile_origins(&[4, 5, 6], &[4, 5, 6]).unwrap();
    let b = block(3, &[4, 5, 6], |c, i| (c * 100 + i[0] * 30 + i[1] * 6 + i[2]) as f32 / 400.0);
    let out = aggregate_tiles(&plan, &[b.clone()], &gaussian_importance_map(&[4, 5, 6])).unwrap();
    for (a, e) in out.data().iter().zip(b.data()) {
        assert!((a - e).abs() < 1e-7);
    }
}

#[test]
fn overlapping_windows_average() {
    let plan = TilingPlan { shape: vec![4, 4], patch: vec![4, 4], origins: vec![vec![0, 0], vec![0, 0]] };
    let p = block(2, &[4, 4], |c, _| if c == 0 { 0.2 } else { 0.8 });
    let q = block(2, &[4, 4], |c, _| if c == 0 { 0.6 } else { 0.4 });
    let out = aggregate_tiles(&plan, &[p, q], &Grid::filled(vec![4, 4], 1.0)).unwrap();
    for (k, v) in out.data().iter().enumerate() {
        let e = if k < 16 { 0.4 } else { 0.6 };
        assert!((v - e).abs() < 1e-7);
    }
}

#[test]
fn staggered_constant_field_stays_constant() {
    let plan = compute_tile_origins(&[30, 41, 17], &[16, 16, 16]).unwrap();
    let blocks: Vec<_> =
        plan.origins.iter().map(|_| block(2, &[16, 16, 16], |c, _| if c == 0 { 0.3 } else { 0.7 })).collect();
    let out = aggregate_tiles(&plan, &blocks, &gaussian_importance_map(&[16, 16, 16])).unwrap();
    let n = 30 * 41 * 17;
    for (k, v) in out.data().iter().enumerate() {
        let e = if k < n { 0.3 } else { 0.7 };
        assert!((v - e).abs() < 1e-6);
    }
}

#[test]
fn voxels_seen_by_one_window_keep_its_values() {
    let plan = compute_tile_origins(&[1, 100], &[1, 64]).unwrap();
    let blocks: Vec<_> =
        (0..plan.len()).map(|w| block(2, &[1, 64], |c, i| (w * 1000 + c * 100 + i[1]) as f32)).collect();
    let out = aggregate_tiles(&plan, &blocks, &gaussian_importance_map(&[1, 64])).unwrap();
    // voxels 0..32 are seen only by the first window, 96..100 only by the last
    for x in 0..32 {
        assert_eq!(out.get(&[1, 0, x]), blocks[0].get(&[1, 0, x]));
    }
    for x in 96..100 {
        assert_eq!(out.get(&[0, 0, x]), blocks[2].get(&[0, 0, x - 36]));
    }
}

#[test]
fn mirror_tta_calls_every_variant() {
    let calls = Cell::new(0);
    let window = Grid::filled(vec![1, 4, 4, 4], 1.0f32);
    mirror_tta_average(
        |w| {
            calls.set(calls.get() + 1);
            Ok(w.clone())
        },
        &window,
    )
    .unwrap();
    assert_eq!(calls.get(), 8);
    calls.set(0);
    mirror_tta_average(
        |w| {
            calls.set(calls.get() + 1);
            Ok(w.clone())
        },
        &Grid::filled(vec![2, 3, 3], 0.0f32),
    )
    .unwrap();
    assert_eq!(calls.get(), 4);
}

#[test]
fn equivariant_predictor_unchanged_by_tta() {
    let window = Grid::from_fn(vec![1, 5, 6, 7], |i| ((i[1] * 13 + i[2] * 7 + i[3] * 3) % 11) as f32 / 10.0);
    let sigmoid = |w: &Grid<f32>| -> segplan_core::Result<Grid<f32>> {
        let fg = w.map(|v| 1.0 / (1.0 + (-v).exp()));
        Grid::stack(&[fg.map(|v| 1.0 - v).slab(0), fg.slab(0)])
    };
    let plain = sigmoid(&window).unwrap();
    let tta = mirror_tta_average(sigmoid, &window).unwrap();
    for (a, b) in plain.data().iter().zip(tta.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn position_linear_predictor_is_symmetrized() {
    // predicts a + Σ b_k·i_k regardless of input; averaging over mirrors maps
    // each i_k to (n_k − 1)/2
    let shape = [5usize, 6, 7];
    let (a, b) = (0.5f64, [0.01f64, -0.02, 0.03]);
    let window = Grid::filled(vec![1, 5, 6, 7], 0.0f32);
    let predict = |w: &Grid<f32>| -> segplan_core::Result<Grid<f32>> {
        Ok(Grid::from_fn(w.shape().to_vec(), |i| {
            (a + b[0] * i[1] as f64 + b[1] * i[2] as f64 + b[2] * i[3] as f64) as f32
        }))
    };
    let out = mirror_tta_average(predict, &window).unwrap();
    let expect = a + (0..3).map(|k| b[k] * (shape[k] as f64 - 1.0) / 2.0).sum::<f64>();
    assert!(out.data().iter().all(|&v| (v as f64 - expect).abs() < 1e-6));
}

fn prob(probs: Vec<f32>, shape: [usize; 4]) -> ProbabilityVolume {
    ProbabilityVolume::new(Grid::new(shape.to_vec(), probs).unwrap(), [1.0; 3]).unwrap()
}

#[test]
fn ensemble_examples() {
    let a = prob(vec![0.1, 0.7, 0.9, 0.3], [2, 1, 1, 2]);
    assert_eq!(ensemble_average(&[a.clone(), a.clone()]).unwrap(), a);

    let x = prob(vec![1.0, 0.0], [2, 1, 1, 1]);
    let y = prob(vec![0.0, 1.0], [2, 1, 1, 1]);
    let m = ensemble_average(&[x, y]).unwrap();
    assert_eq!(m.probs().data(), &[0.5, 0.5]);
    assert_eq!(argmax_labels(&m).unwrap().data(), &[0]);
    assert!(m.max_sum_error() < 1e-6);

    let other = ProbabilityVolume::new(Grid::filled(vec![2, 1, 1, 2], 0.5), [2.0, 1.0, 1.0]).unwrap();
    assert!(matches!(ensemble_average(&[a.clone(), other]), Err(Error::GeometryMismatch(_))));
    let three = prob(vec![0.2; 6], [3, 1, 1, 2]);
    assert!(matches!(ensemble_average(&[a, three]), Err(Error::GeometryMismatch(_))));
}

#[test]
fn sliding_window_with_constant_predictor() {
    let image = Grid::from_fn(vec![1, 20, 23, 9], |i| (i[1] + i[2]) as f32);
    let out = sliding_window_predict(&image, &[8, 8, 8], 2, true, |w| {
        let s = w.shape();
        Ok(Grid::from_fn(vec![2, s[1], s[2], s[3]], |i| if i[0] == 0 { 0.25 } else { 0.75 }))
    })
    .unwrap();
    let v = ProbabilityVolume::new(out, [1.0; 3]).unwrap();
    assert_eq!(v.shape(), [20, 23, 9]);
    assert!(v.max_sum_error() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn windows_cover_every_voxel(
        shape in proptest::collection::vec(1usize..40, 1..4),
        frac in proptest::collection::vec(0.0f64..1.0, 3),
    ) {
        let patch: Vec<usize> = shape.iter().zip(&frac).map(|(&n, f)| 1 + (f * n as f64) as usize % n).collect();
        let plan = compute_tile_origins(&shape, &patch).unwrap();
        let mut hits = Grid::filled(shape.clone(), 0u32);
        for o in &plan.origins {
            let hi: Vec<usize> = o.iter().zip(&patch).map(|(a, b)| a + b).collect();
            prop_assert!(hi.iter().zip(&shape).all(|(h, n)| h <= n));
            let lo = o.clone();
            segplan_core::grid::for_each_index(&patch, |idx, _| {
                let t: Vec<usize> = idx.iter().zip(&lo).map(|(i, l)| i + l).collect();
                let v = hits.get(&t);
                hits.set(&t, v + 1);
            });
        }
        prop_assert!(hits.data().iter().all(|&h| h >= 1));
        for (a, (&n, &p)) in shape.iter().zip(&patch).enumerate() {
            let axis = axis_origins(n, p);
            prop_assert!(axis.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= p.div_ceil(2)));
            let distinct: std::collections::BTreeSet<usize> = plan.origins.iter().map(|o| o[a]).collect();
            prop_assert_eq!(distinct.into_iter().collect::<Vec<_>>(), axis);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_ignores_window_order(seed in any::<u64>(), shape in (4usize..14, 4usize..14)) {
        let patch = [4usize, 4];
        let plan = compute_tile_origins(&[shape.0, shape.1], &patch).unwrap();
        let blocks: Vec<Grid<f32>> = (0..plan.len())
            .map(|w| block(2, &patch, |c, i| ((seed as usize ^ (w * 31 + c * 7 + i[0] * 3 + i[1])) % 97) as f32 / 97.0))
            .collect();
        let weights = gaussian_importance_map(&patch);
        let forward = aggregate_tiles(&plan, &blocks, &weights).unwrap();
        let mut rev = plan.clone();
        rev.origins.reverse();
        let rev_blocks: Vec<Grid<f32>> = blocks.iter().rev().cloned().collect();
        let backward = aggregate_tiles(&rev, &rev_blocks, &weights).unwrap();
        for (a, b) in forward.data().iter().zip(backward.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tta_is_mirror_equivariant(axes in 0usize..8, data in proptest::collection::vec(-2.0f32..2.0, 60)) {
        let window = Grid::new(vec![1, 3, 4, 5], data).unwrap();
        // deliberately not equivariant: depends on absolute position
        let predict = |w: &Grid<f32>| -> segplan_core::Result<Grid<f32>> {
            Ok(Grid::from_fn(w.shape().to_vec(), |i| w.get(i) * (1.0 + i[1] as f32) + (i[3] as f32).sqrt()))
        };
        let flip = |g: &Grid<f32>| (0..3).filter(|a| axes >> a & 1 == 1).fold(g.clone(), |acc, a| acc.flip(a + 1));
        let lhs = mirror_tta_average(predict, &flip(&window)).unwrap();
        let rhs = flip(&mirror_tta_average(predict, &window).unwrap());
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn ensemble_preserves_unit_sums(vals in proptest::collection::vec(0.0f32..1.0, 24)) {
        let make = |off: usize| {
            let mut d = vec![0.0f32; 16];
            for v in 0..8 {
                let p = vals[(v + off) % 24];
                d[v] = p;
                d[8 + v] = 1.0 - p;
            }
            prob(d, [2, 2, 2, 2])
        };
        let m = ensemble_average(&[make(0), make(5), make(11)]).unwrap();
        prop_assert!(m.max_sum_error() < 1e-5);
    }
}
