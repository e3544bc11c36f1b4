//! Image quality metrics.

use crate::confidence::ssim_map;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub const PSNR_CAP: f64 = 99.0;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    Ok(psnr_from_mse(mse))
}

/// PSNR restricted to pixels where `mask` is set.
pub fn masked_psnr(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    a.check_shape(b)?;
    if mask.width() != a.width() || mask.height() != a.height() {
        return Err(Error::ShapeMismatch("mask does not match image".into()));
    }
    let c = a.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if *mask.get(x, y) {
                for k in 0..c {
                    let d = a.at(x, y, k) - b.at(x, y, k);
                    sum += d * d;
                }
                n += c;
            }
        }
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("mask selects no pixels".into()));
    }
    Ok(psnr_from_mse(sum / n as f64))
}

/// Mean SSIM of the grayscale images over pixels at least 5 px from the
/// border (the window radius).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b)?;
    let (ga, gb) = (a.to_gray(), b.to_gray());
    let map = ssim_map(&ga, &gb)?;
    let r = 5;
    let (w, h) = (map.width(), map.height());
    if w <= 2 * r || h <= 2 * r {
        return Ok(map.data().iter().sum::<f64>() / map.data().len() as f64);
    }
    let mut sum = 0.0;
    for y in r..h - r {
        for x in r..w - r {
            sum += map.at(x, y, 0);
        }
    }
    Ok(sum / ((w - 2 * r) * (h - 2 * r)) as f64)
}

/// Area under the ROC curve for separating `positive` (higher scores)
/// from `negative`; ties count one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&v| (v, true))
        .chain(negative.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney U with midranks.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = 0.5 * ((i + 1) + j) as f64;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}
