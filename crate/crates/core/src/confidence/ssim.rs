//! Gaussian-window SSIM: 11×11 window, σ = 1.5, `C1 = 0.01²`, `C2 = 0.03²`,
//! population statistics, mirror (`dcba|abcd`) padding.

use crate::error::Result;
use crate::image::Image;

const SIGMA: f64 = 1.5;
const RADIUS: usize = 5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - RADIUS as f64;
        *v = (-0.5 * x * x / (SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Separable Gaussian blur of every channel.
pub fn gaussian_filter(img: &Image) -> Image {
    let k = kernel();
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut tmp = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let xx = reflect(x as isize + j as isize - RADIUS as isize, w);
                    s += kv * img.at(xx, y, ch);
                }
                tmp.set(x, y, ch, s);
            }
        }
    }
    let mut out = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let yy = reflect(y as isize + j as isize - RADIUS as isize, h);
                    s += kv * tmp.at(x, yy, ch);
                }
                out.set(x, y, ch, s);
            }
        }
    }
    out
}

/// Per-pixel SSIM of two single-channel images.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Image> {
    a.check_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let stack = Image::from_fn(w, h, 5, |x, y, c| {
        let (p, q) = (a.at(x, y, 0), b.at(x, y, 0));
        match c {
            0 => p,
            1 => q,
            2 => p * p,
            3 => q * q,
            _ => p * q,
        }
    });
    let m = gaussian_filter(&stack);
    Ok(Image::from_fn(w, h, 1, |x, y, _| {
        let px = m.pixel(x, y);
        let (ma, mb) = (px[0], px[1]);
        let va = px[2] - ma * ma;
        let vb = px[3] - mb * mb;
        let cov = px[4] - ma * mb;
        ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
    }))
}
