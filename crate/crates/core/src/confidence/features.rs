//! Fixed feature pyramid: gradient-orientation histograms at three octaves.

use crate::image::Image;

pub const OCTAVES: usize = 3;
pub const BINS: usize = 8;
pub const FEATURE_DIM: usize = OCTAVES * BINS;

/// Mean over a `(2r+1)²` window clipped to the image, per channel.
fn box_mean(img: &Image, r: usize) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    // Integral image with a zero border row/column.
    let stride = w + 1;
    let mut sat = vec![0.0; (w + 1) * (h + 1) * c];
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let i = ((y + 1) * stride + x + 1) * c + k;
                sat[i] = img.at(x, y, k)
                    + sat[(y * stride + x + 1) * c + k]
                    + sat[((y + 1) * stride + x) * c + k]
                    - sat[(y * stride + x) * c + k];
            }
        }
    }
    Image::from_fn(w, h, c, |x, y, k| {
        let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        let s = sat[(y1 * stride + x1) * c + k]
            - sat[(y0 * stride + x1) * c + k]
            - sat[(y1 * stride + x0) * c + k]
            + sat[(y0 * stride + x0) * c + k];
        s / ((x1 - x0) * (y1 - y0)) as f64
    })
}

/// Orientation histogram of one octave: gradient magnitude soft-binned into
/// `BINS` orientations over `[0, 2π)`.
fn orientation_maps(gray: &Image) -> Image {
    let (w, h) = (gray.width(), gray.height());
    let mut out = Image::new(w, h, BINS);
    for y in 0..h {
        for x in 0..w {
            let g = |xx: usize, yy: usize| gray.at(xx, yy, 0);
            let gx = 0.5 * (g((x + 1).min(w - 1), y) - g(x.saturating_sub(1), y));
            let gy = 0.5 * (g(x, (y + 1).min(h - 1)) - g(x, y.saturating_sub(1)));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let a = gy.atan2(gx).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
                * BINS as f64;
            let b0 = (a.floor() as usize) % BINS;
            let f = a - a.floor();
            let px = out.pixel_mut(x, y);
            px[b0] += mag * (1.0 - f);
            px[(b0 + 1) % BINS] += mag * f;
        }
    }
    out
}

/// Per-pixel `FEATURE_DIM` descriptor, L2-normalized (zero on flat regions).
/// Octave `o` smooths with a box of radius `2^o − 1` and pools
/// orientations over radius `2^(o+1)`.
pub fn feature_pyramid(img: &Image) -> Image {
    let gray = img.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let mut feat = Image::new(w, h, FEATURE_DIM);
    for o in 0..OCTAVES {
        let smooth = if o == 0 {
            gray.clone()
        } else {
            box_mean(&gray, (1 << o) - 1)
        };
        let pooled = box_mean(&orientation_maps(&smooth), 1 << (o + 1));
        for y in 0..h {
            for x in 0..w {
                feat.pixel_mut(x, y)[o * BINS..(o + 1) * BINS].copy_from_slice(pooled.pixel(x, y));
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let px = feat.pixel_mut(x, y);
            let n = px.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                px.iter_mut().for_each(|v| *v /= n);
            } else {
                px.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    feat
}
