//! Foreground insertion: ground plans, placement, rasterization,
//! occlusion-aware compositing, shadows and environment-map relighting.

mod compose;
mod envmap;
mod ground;
mod lighting;
mod mesh;
mod optimize;
mod placement;
mod raster;
mod shadow;

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use compose::{compose_frame, occlusion_mask, BoxAnnotation, ComposedFrame, Foreground};
pub use envmap::{eval_sum, from_lat_long, lat_long, EnvMap, Gaussian, DEFAULT_LOBES, LOBE_PARAMS};
pub use ground::{
    bin_points, build_ground_plan, semantic_point_cloud, GroundConfig, GroundPlan, SemanticPoint,
    SemanticView, UNKNOWN,
};
pub use lighting::{
    composed_pbr, facing_normal, hemisphere_samples, intensity_map, lambert_irradiance,
    oriented_samples, relight_object, shadow_intensity, Relit, DEFAULT_RAYS,
};
pub use mesh::TriangleMesh;
pub use optimize::{
    ground_points, optimize_lighting, LightingConfig, LightingFit, LightingProblem,
};
pub use placement::{sample_placement, Footprint, Placement, PlacementConfig, TracePose};
pub use raster::{rasterize_depth, rasterize_world, Fragment, Raster, NEAR_PLANE};
pub use shadow::{
    closing, coarse_shadow_mask, gaussian_blur, naive_shadow, naive_shadow_mask, project_to_ground,
    NaiveShadowConfig,
};

use crate::error::Result;
use crate::geometry::CameraModel;
use crate::harness::io::{save_labels_png, save_png, save_raw};
use crate::image::{Image, LabelMap};

/// One object to insert: object-frame mesh, pose and class.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    pub mesh: TriangleMesh,
    pub placement: Placement,
    pub class: u16,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NaiveConfig {
    /// Direction light travels (pointing down).
    pub light: Vector3<f64>,
    pub ambient: f64,
    pub shadow: NaiveShadowConfig,
    pub feather: bool,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        Self {
            light: Vector3::new(0.4, 0.3, -1.0).normalize(),
            ambient: 0.4,
            shadow: NaiveShadowConfig::default(),
            feather: true,
        }
    }
}

/// Albedo under `ambient + (1 − ambient)·max(0, n·(−light))`.
pub fn shade_directional(
    mesh_world: &TriangleMesh,
    cam: &CameraModel,
    light: &Vector3<f64>,
    ambient: f64,
) -> Foreground {
    let raster = rasterize_world(mesh_world, cam);
    let eye = cam.center();
    let l = -light.normalize();
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            if let Some(f) = raster.fragments.get(x, y) {
                let t = f.triangle as usize;
                let k =
                    ambient + (1.0 - ambient) * facing_normal(mesh_world, t, &eye).dot(&l).max(0.0);
                let a = mesh_world.albedo_at(t, f.u, f.v);
                for c in 0..3 {
                    rgb.set(x, y, c, a[c] * k);
                }
            }
        }
    }
    Foreground {
        rgb,
        mask: raster.mask,
        depth: raster.depth,
    }
}

/// Non-learned insertion of every object into one background view:
/// projected shadows on the background, then depth-tested pastes.
pub fn compose_naive(
    bg_rgb: &Image,
    bg_depth: &Image,
    bg_labels: &LabelMap,
    cam: &CameraModel,
    objects: &[Insertion],
    cfg: &NaiveConfig,
) -> Result<ComposedFrame> {
    let mut rgb = bg_rgb.clone();
    let world: Vec<TriangleMesh> = objects
        .iter()
        .map(|o| o.mesh.transformed(&o.placement.pose()))
        .collect();
    for (o, m) in objects.iter().zip(&world) {
        rgb = naive_shadow(
            &rgb,
            m,
            &cfg.light,
            o.placement.position.z,
            cam,
            &cfg.shadow,
        )?;
    }
    let mut frame = ComposedFrame::from_background(rgb, bg_depth.clone(), bg_labels.clone())?;
    for (o, m) in objects.iter().zip(&world) {
        let fg = shade_directional(m, cam, &cfg.light, cfg.ambient);
        frame.insert(&fg, &o.mesh, &o.placement, o.class, cfg.feather)?;
    }
    Ok(frame)
}

/// Per-frame annotation file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub boxes: Vec<BoxAnnotation>,
    pub masks: Vec<String>,
}

/// Write `{stem}_rgb.png`, `{stem}_depth.raw`, `{stem}_labels.png`, one
/// `{stem}_mask{k}.png` per instance and `{stem}.json`.
pub fn save_composed(dir: &Path, stem: &str, frame: &ComposedFrame) -> Result<FrameAnnotation> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    save_png(&dir.join(format!("{stem}_rgb.png")), &frame.rgb)?;
    save_raw(&dir.join(format!("{stem}_depth.raw")), &frame.depth)?;
    save_labels_png(&dir.join(format!("{stem}_labels.png")), &frame.labels)?;
    let mut masks = Vec::new();
    for (k, m) in frame.instances.iter().enumerate() {
        let name = format!("{stem}_mask{k}.png");
        let img = Image::from_fn(m.width(), m.height(), 1, |x, y, _| {
            if *m.get(x, y) {
                1.0
            } else {
                0.0
            }
        });
        save_png(&dir.join(&name), &img)?;
        masks.push(name);
    }
    let ann = FrameAnnotation {
        boxes: frame.boxes.clone(),
        masks,
    };
    crate::harness::io::save_json(&dir.join(format!("{stem}.json")), &ann)?;
    Ok(ann)
}
