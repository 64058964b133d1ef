use crate::error::{Error, Result};
use crate::image::Image;

/// Nearest-rank percentile of a non-empty sorted slice:
/// `sorted[ceil(p / 100 * n) - 1]`, with `p = 0` giving the minimum.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    let n = sorted.len();
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone)]
pub struct NormalizedBlock {
    pub frames: Vec<Image>,
    pub p2: f64,
    pub p98: f64,
}

/// Map the 2nd and 98th percentiles of all pixels in the block to 0 and 1.
/// Values outside that range are not clipped.
pub fn normalize_block(frames: &[Image]) -> Result<NormalizedBlock> {
    let first = frames.first().ok_or(Error::EmptyDataset)?;
    for f in frames {
        first.check_same_dims(f, "normalize_block")?;
    }
    let mut all: Vec<f32> = frames
        .iter()
        .flat_map(|f| f.data().iter().copied())
        .collect();
    if all.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "normalize_block".into(),
        });
    }
    all.sort_unstable_by(f32::total_cmp);
    let p2 = nearest_rank(&all, 2.0) as f64;
    let p98 = nearest_rank(&all, 98.0) as f64;
    if p98 <= p2 {
        return Err(Error::ConstantBlock(p2));
    }
    let scale = 1.0 / (p98 - p2);
    let frames = frames
        .iter()
        .map(|f| {
            let mut out = f.clone();
            for v in out.data_mut() {
                *v = ((*v as f64 - p2) * scale) as f32;
            }
            out
        })
        .collect();
    Ok(NormalizedBlock { frames, p2, p98 })
}
