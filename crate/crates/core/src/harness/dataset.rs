//! Dataset directory layout:
//!
//! ```text
//! manifest.json
//! images/cam{c}_f{f:03}.png     8-bit RGB
//! depth/cam{c}_f{f:03}.f32      z-depth in meters, 0 on sky (+ .json sidecar)
//! semantic/cam{c}_f{f:03}.png   class ids
//! flow/cam{c}_f{f:03}.f32       2-channel pixel flow to frame f+1
//! lidar/f{f:03}.f32             N×4: sensor-frame xyz, outlier flag
//! ```

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{
    load_json, load_labels_png, load_png, load_raw, save_json, save_labels_png, save_png, save_raw,
};
use super::synth::{Dataset, FrameView, LidarFrame, SynthSpec, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Rigid, TrackedBox};
use crate::image::Image;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub time: String,
    pub depth: String,
    pub flow: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "meters".into(),
            time: "seconds".into(),
            depth: "camera z in meters, 0 where no surface".into(),
            flow: "pixels from frame f to frame f+1, same camera".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub camera: CameraModel,
    pub image: String,
    pub depth: String,
    pub semantic: String,
    pub flow: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarEntry {
    pub pose: Rigid,
    pub points: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub spec: SynthSpec,
    pub seed: u64,
    pub units: Units,
    pub classes: Vec<String>,
    pub times: Vec<f64>,
    /// `views[frame][camera]`.
    pub views: Vec<Vec<ViewEntry>>,
    pub lidar: Vec<LidarEntry>,
    pub boxes: Vec<TrackedBox>,
}

fn view_stem(c: usize, f: usize) -> String {
    format!("cam{c}_f{f:03}")
}

/// Write `data` under `dir`. Every file is written atomically.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<Manifest> {
    let mut views = Vec::with_capacity(data.frames());
    for (f, row) in data.views.iter().enumerate() {
        views.push(
            row.iter()
                .enumerate()
                .map(|(c, v)| {
                    let s = view_stem(c, f);
                    ViewEntry {
                        camera: v.camera.clone(),
                        image: format!("images/{s}.png"),
                        depth: format!("depth/{s}.f32"),
                        semantic: format!("semantic/{s}.png"),
                        flow: v.flow.as_ref().map(|_| format!("flow/{s}.f32")),
                    }
                })
                .collect::<Vec<_>>(),
        );
    }
    let jobs: Vec<(&FrameView, &ViewEntry)> = data
        .views
        .iter()
        .zip(&views)
        .flat_map(|(a, b)| a.iter().zip(b.iter()))
        .collect();
    jobs.par_iter().try_for_each(|(v, e)| -> Result<()> {
        save_png(&dir.join(&e.image), &v.rgb)?;
        save_raw(&dir.join(&e.depth), &v.depth)?;
        save_labels_png(&dir.join(&e.semantic), &v.labels)?;
        if let (Some(flow), Some(p)) = (&v.flow, &e.flow) {
            save_raw(&dir.join(p), flow)?;
        }
        Ok(())
    })?;
    let mut lidar = Vec::with_capacity(data.lidar.len());
    for (f, l) in data.lidar.iter().enumerate() {
        let path = format!("lidar/f{f:03}.f32");
        let mut buf = Vec::with_capacity(4 * l.points.len());
        for (p, &o) in l.points.iter().zip(&l.outlier) {
            buf.extend_from_slice(&[p.x, p.y, p.z, if o { 1.0 } else { 0.0 }]);
        }
        save_raw(
            &dir.join(&path),
            &Image::from_vec(4, l.points.len(), 1, buf)?,
        )?;
        lidar.push(LidarEntry {
            pose: l.pose,
            points: path,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        spec: data.spec.clone(),
        seed: data.seed,
        units: Units::default(),
        classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        times: data.times.clone(),
        views,
        lidar,
        boxes: data.boxes.clone(),
    };
    save_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let m: Manifest = load_json(&path)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported manifest version {}", m.version),
        ));
    }
    if m.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::format(&path, "timestamps must be increasing"));
    }
    if m.views.len() != m.times.len() || m.lidar.len() != m.times.len() {
        return Err(Error::format(
            &path,
            "views and lidar must have one entry per timestamp",
        ));
    }
    Ok(m)
}

/// Read a dataset written by [`write_dataset`]. Images come back quantized
/// to 8 bits.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = load_manifest(dir)?;
    let mut views = Vec::with_capacity(m.views.len());
    for row in &m.views {
        let mut out = Vec::with_capacity(row.len());
        for e in row {
            let rgb = load_png(&dir.join(&e.image))?;
            let depth = load_raw(&dir.join(&e.depth))?;
            let labels = load_labels_png(&dir.join(&e.semantic))?;
            let flow = e
                .flow
                .as_ref()
                .map(|p| load_raw(&dir.join(p)))
                .transpose()?;
            if rgb.channels() != 3
                || rgb.width() != e.camera.width
                || rgb.height() != e.camera.height
            {
                return Err(Error::format(
                    dir.join(&e.image),
                    "image does not match camera",
                ));
            }
            out.push(FrameView {
                camera: e.camera.clone(),
                rgb,
                depth,
                labels,
                flow,
            });
        }
        views.push(out);
    }
    let mut lidar = Vec::with_capacity(m.lidar.len());
    for e in &m.lidar {
        let path = dir.join(&e.points);
        let raw = load_raw(&path)?;
        if raw.width() != 4 || raw.channels() != 1 {
            return Err(Error::format(&path, "lidar buffer must be N×4"));
        }
        let mut points = Vec::with_capacity(raw.height());
        let mut outlier = Vec::with_capacity(raw.height());
        for r in raw.data().chunks_exact(4) {
            points.push(Vector3::new(r[0], r[1], r[2]));
            outlier.push(r[3] > 0.5);
        }
        lidar.push(LidarFrame {
            pose: e.pose,
            points,
            outlier,
        });
    }
    Ok(Dataset {
        spec: m.spec,
        seed: m.seed,
        times: m.times,
        views,
        lidar,
        boxes: m.boxes,
    })
}
