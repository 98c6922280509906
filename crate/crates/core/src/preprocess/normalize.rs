use crate::error::{Error, Result};
use crate::planner::NormalizationScheme;
use crate::volume_io::Volume;

/// Standard deviations below this mark a constant image.
pub const MIN_STD: f64 = 1e-8;

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

/// Apply a normalization scheme. The masked variant needs `mask` (same
/// length as the data) and zeroes everything outside it.
pub fn normalize(vol: &Volume, scheme: &NormalizationScheme, mask: Option<&[bool]>) -> Result<Volume> {
    let x = vol.data();
    let data: Vec<f32> = match *scheme {
        NormalizationScheme::ZScorePerImage => {
            let (mean, std) = mean_std(x.iter().map(|&v| v as f64)).ok_or(Error::EmptyInput("empty image"))?;
            if std < MIN_STD {
                return Err(Error::ZeroVariance(std));
            }
            x.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect()
        }
        NormalizationScheme::MaskedZScorePerImage => {
            let mask = mask.ok_or_else(|| Error::Invalid("masked normalization needs a mask".into()))?;
            if mask.len() != x.len() {
                return Err(Error::ShapeMismatch(format!("mask has {} voxels, image {}", mask.len(), x.len())));
            }
            let inside = x.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v as f64);
            let (mean, std) = mean_std(inside).ok_or(Error::EmptyInput("normalization mask is empty"))?;
            if std < MIN_STD {
                return Err(Error::ZeroVariance(std));
            }
            x.iter().zip(mask).map(|(&v, &m)| if m { ((v as f64 - mean) / std) as f32 } else { 0.0 }).collect()
        }
        NormalizationScheme::CtGlobal { clip_low, clip_high, global_mean, global_std } => {
            if global_std < MIN_STD {
                return Err(Error::ZeroVariance(global_std));
            }
            x.iter().map(|&v| (((v as f64).clamp(clip_low, clip_high) - global_mean) / global_std) as f32).collect()
        }
    };
    vol.with_data(data)
}
