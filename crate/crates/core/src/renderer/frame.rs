//! Full-frame rendering.

use rayon::prelude::*;

use super::scene::{RenderOutput, SceneModel, TraceMode};
use crate::field::MAX_CLASSES;
use crate::geometry::CameraModel;
use crate::image::{Image, LabelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub rgb: Image,
    pub disparity: Image,
    /// `z`-depth derived from the rendered disparity.
    pub depth: Image,
    pub semantics: Image,
    pub labels: LabelMap,
    pub opacity: Image,
    /// One mask per object slot.
    pub masks: Vec<Image>,
}

/// Render every pixel of `cam` at scene time `time`. Deterministic: no
/// jitter, rows evaluated independently and gathered in order.
pub fn render_image(
    scene: &SceneModel,
    params: &[f64],
    cam: &CameraModel,
    time: f64,
) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let (near, far) = (scene.config.near, scene.config.far);
    let rows: Vec<Vec<RenderOutput>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut s = scene.scratch();
            (0..w)
                .map(|x| {
                    let ray = cam.ray(x as f64, y as f64, near, far);
                    scene
                        .trace(
                            params,
                            &ray,
                            time,
                            TraceMode::Fresh { jitter: None },
                            &mut s,
                        )
                        .output
                })
                .collect()
        })
        .collect();
    let k = scene.config.classes;
    let n_obj = scene.objects.len();
    let mut rgb = Image::new(w, h, 3);
    let mut disparity = Image::new(w, h, 1);
    let mut depth = Image::new(w, h, 1);
    let mut semantics = Image::new(w, h, k);
    let mut labels = LabelMap::filled(w, h, 0);
    let mut opacity = Image::new(w, h, 1);
    let mut masks = vec![Image::new(w, h, 1); n_obj];
    for (y, row) in rows.iter().enumerate() {
        for (x, o) in row.iter().enumerate() {
            rgb.pixel_mut(x, y).copy_from_slice(&o.color);
            disparity.set(x, y, 0, o.disparity);
            let zpd = cam.z_per_distance(x as f64, y as f64);
            depth.set(
                x,
                y,
                0,
                if o.disparity > 0.0 {
                    zpd / o.disparity
                } else {
                    f64::INFINITY
                },
            );
            semantics.pixel_mut(x, y).copy_from_slice(&o.semantics[..k]);
            labels.set(x, y, argmax(&o.semantics[..k.min(MAX_CLASSES)]) as u16);
            opacity.set(x, y, 0, o.opacity);
            for (j, m) in masks.iter_mut().enumerate() {
                m.set(x, y, 0, o.object_mask[j].clamp(0.0, 1.0));
            }
        }
    }
    RenderedFrame {
        rgb,
        disparity,
        depth,
        semantics,
        labels,
        opacity,
        masks,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
