use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use super::placement::Placement;
use crate::error::Result;
use crate::image::{Image, LabelMap, Mask};

/// Oriented 3D box: world center, `(length, width, height)` and yaw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub class: u16,
    pub center: [f64; 3],
    pub dim: [f64; 3],
    pub yaw: f64,
}

impl BoxAnnotation {
    /// Box of the mesh's object-frame AABB, placed at `placement`.
    pub fn from_mesh(mesh: &TriangleMesh, placement: &Placement, class: u16) -> Self {
        let (lo, hi) = mesh.aabb();
        let c = placement.pose().apply(&(0.5 * (lo + hi)));
        let d = hi - lo;
        Self {
            class,
            center: [c.x, c.y, c.z],
            dim: [d.x, d.y, d.z],
            yaw: placement.yaw,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let d = p - Vector3::from(self.center);
        let local = [c * d.x + s * d.y, -s * d.x + c * d.y, d.z];
        (0..3).all(|k| local[k].abs() <= 0.5 * self.dim[k] + tol)
    }
}

/// Rendered foreground layer: color, coverage and `z`-depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Foreground {
    pub rgb: Image,
    pub mask: Mask,
    pub depth: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComposedFrame {
    pub rgb: Image,
    pub depth: Image,
    pub labels: LabelMap,
    /// One visible-pixel mask per inserted object.
    pub instances: Vec<Mask>,
    pub boxes: Vec<BoxAnnotation>,
}

impl ComposedFrame {
    /// Start from background renders; `depth` must be dense.
    pub fn from_background(rgb: Image, depth: Image, labels: LabelMap) -> Result<Self> {
        rgb.check_shape(&Image::new(depth.width(), depth.height(), 3))?;
        labels_match(&labels, &depth)?;
        Ok(Self {
            rgb,
            depth,
            labels,
            instances: Vec::new(),
            boxes: Vec::new(),
        })
    }

    /// Paste `fg` where it is nearer than the current depth and record its
    /// instance mask and box. With `feather`, boundary pixels of the pasted
    /// region blend half foreground, half background. Returns `M̂`.
    pub fn insert(
        &mut self,
        fg: &Foreground,
        mesh: &TriangleMesh,
        placement: &Placement,
        class: u16,
        feather: bool,
    ) -> Result<Mask> {
        fg.rgb.check_shape(&self.rgb)?;
        fg.depth.check_shape(&self.depth)?;
        let m_hat = occlusion_mask(&fg.mask, &fg.depth, &self.depth);
        let (w, h) = (self.rgb.width(), self.rgb.height());
        for y in 0..h {
            for x in 0..w {
                if !*m_hat.get(x, y) {
                    continue;
                }
                let alpha = if feather && is_boundary(&m_hat, x, y) {
                    0.5
                } else {
                    1.0
                };
                for c in 0..3 {
                    let b = self.rgb.at(x, y, c);
                    self.rgb
                        .set(x, y, c, alpha * fg.rgb.at(x, y, c) + (1.0 - alpha) * b);
                }
                self.depth.set(x, y, 0, fg.depth.at(x, y, 0));
                self.labels.set(x, y, class);
                for m in &mut self.instances {
                    m.set(x, y, false);
                }
            }
        }
        self.instances.push(m_hat.clone());
        self.boxes
            .push(BoxAnnotation::from_mesh(mesh, placement, class));
        Ok(m_hat)
    }
}

fn labels_match(labels: &LabelMap, depth: &Image) -> Result<()> {
    if labels.width() != depth.width() || labels.height() != depth.height() {
        return Err(crate::Error::ShapeMismatch(format!(
            "labels {}x{} vs depth {}x{}",
            labels.width(),
            labels.height(),
            depth.width(),
            depth.height()
        )));
    }
    Ok(())
}

fn is_boundary(m: &Mask, x: usize, y: usize) -> bool {
    let (w, h) = (m.width(), m.height());
    (x > 0 && !*m.get(x - 1, y))
        || (x + 1 < w && !*m.get(x + 1, y))
        || (y > 0 && !*m.get(x, y - 1))
        || (y + 1 < h && !*m.get(x, y + 1))
}

/// `M̂ = M · (D_f < D_g)`.
pub fn occlusion_mask(mask: &Mask, fg_depth: &Image, bg_depth: &Image) -> Mask {
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        *mask.get(x, y) && fg_depth.at(x, y, 0) < bg_depth.at(x, y, 0)
    })
}

/// Single-object composition without feathering.
pub fn compose_frame(
    bg_rgb: &Image,
    bg_depth: &Image,
    bg_labels: &LabelMap,
    fg: &Foreground,
    mesh: &TriangleMesh,
    placement: &Placement,
    class: u16,
) -> Result<ComposedFrame> {
    let mut f =
        ComposedFrame::from_background(bg_rgb.clone(), bg_depth.clone(), bg_labels.clone())?;
    f.insert(fg, mesh, placement, class, false)?;
    Ok(f)
}
