//! 1-D interpolation kernels applied line by line.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    /// Cubic B-spline with prefiltering.
    Spline3,
    Linear,
    Nearest,
}

/// Samples added on each side before prefiltering. The boundary transient of
/// the recursive filter decays as 0.268^k, so it is below 1e-13 at the data.
const SPLINE_PAD: usize = 24;
const POLE: f64 = -0.267_949_192_431_122_7; // √3 − 2

/// Source coordinate of output sample `j` when the spacing grows by `scale`
/// (voxel centres aligned), clamped to the outermost sample centres.
pub fn source_coord(j: usize, scale: f64, n: usize) -> f64 {
    (((j as f64) + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64)
}

/// Like [`source_coord`] but clamped to the image's physical extent
/// `[−0.5, n − 0.5]`, for interpolators that can evaluate past the last centre.
pub fn source_coord_extent(j: usize, scale: f64, n: usize) -> f64 {
    (((j as f64) + 0.5) * scale - 0.5).clamp(-0.5, n as f64 - 0.5)
}

pub fn resample_line(input: &[f64], out: &mut [f64], scale: f64, kind: Interp) {
    let n = input.len();
    match kind {
        Interp::Nearest => {
            for (j, o) in out.iter_mut().enumerate() {
                let x = source_coord(j, scale, n);
                *o = input[((x + 0.5).floor() as usize).min(n - 1)];
            }
        }
        Interp::Linear => {
            for (j, o) in out.iter_mut().enumerate() {
                let x = source_coord(j, scale, n);
                let i = (x.floor() as usize).min(n - 1);
                let t = x - i as f64;
                *o = if i + 1 < n { input[i] * (1.0 - t) + input[i + 1] * t } else { input[i] };
            }
        }
        Interp::Spline3 => {
            if n == 1 {
                out.fill(input[0]);
                return;
            }
            let coeffs = spline_coefficients(&extend(input, SPLINE_PAD));
            for (j, o) in out.iter_mut().enumerate() {
                *o = spline_eval(&coeffs, source_coord_extent(j, scale, n) + SPLINE_PAD as f64);
            }
        }
    }
}

/// Point-symmetric extension about both end samples: `f(−k) = 2f(0) − f(k)`.
/// Affine data stays affine, so the spline reproduces it up to the edges.
fn extend(input: &[f64], pad: usize) -> Vec<f64> {
    let n = input.len() as i64;
    let last = n - 1;
    let at = |mut i: i64| -> f64 {
        // accumulate reflections as an affine map v ↦ sign·v + offset
        let mut sign = 1.0;
        let mut offset = 0.0;
        loop {
            if i < 0 {
                offset += sign * 2.0 * input[0];
                sign = -sign;
                i = -i;
            } else if i > last {
                offset += sign * 2.0 * input[last as usize];
                sign = -sign;
                i = 2 * last - i;
            } else {
                return offset + sign * input[i as usize];
            }
        }
    };
    (-(pad as i64)..n + pad as i64).map(at).collect()
}

/// Interpolating cubic B-spline coefficients (mirror-initialized recursive filter).
fn spline_coefficients(s: &[f64]) -> Vec<f64> {
    let z = POLE;
    let len = s.len();
    let mut c: Vec<f64> = s.iter().map(|v| v * 6.0).collect();
    let horizon = len.min(64);
    let mut zk = 1.0;
    let mut sum = 0.0;
    for v in c.iter().take(horizon) {
        sum += v * zk;
        zk *= z;
    }
    c[0] = sum;
    for k in 1..len {
        c[k] += z * c[k - 1];
    }
    c[len - 1] = (z / (z * z - 1.0)) * (c[len - 1] + z * c[len - 2]);
    for k in (0..len - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
    c
}

fn bspline3(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + a * a * a / 2.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

fn spline_eval(c: &[f64], x: f64) -> f64 {
    let base = x.floor() as i64;
    (base - 1..=base + 2)
        .filter(|&k| k >= 0 && (k as usize) < c.len())
        .map(|k| c[k as usize] * bspline3(x - k as f64))
        .sum()
}
