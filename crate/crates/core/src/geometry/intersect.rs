use nalgebra::Vector3;

use super::ray::Ray;
use super::track::TrackedBox;
use super::transform::Rigid;

/// Portion of a ray inside one object box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxSegment {
    pub t_enter: f64,
    pub t_exit: f64,
    pub box_id: u32,
}

/// Slab test against the axis-aligned box `[lo, hi]`. Returns the parametric
/// interval (unclipped) when the line hits the box.
#[inline]
pub fn ray_aabb(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if dir[k].abs() < 1e-300 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let (a, b) = ((lo[k] - origin[k]) * inv, (hi[k] - origin[k]) * inv);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Intersections of a ray with every box present at time `t`, clipped to
/// `[t_near, t_far]` and sorted by entry distance. Boxes whose track does not
/// cover `t` are absent from the scene at that time.
pub fn ray_box_segments(ray: &Ray, boxes: &[TrackedBox], t: f64) -> Vec<BoxSegment> {
    let posed: Vec<(u32, Rigid, Vector3<f64>)> = boxes
        .iter()
        .filter_map(|b| b.interpolate_pose(t).ok().map(|bp| (b.id, bp.pose, b.dim)))
        .collect();
    segments_for_poses(ray, &posed)
}

/// [`ray_box_segments`] for boxes already posed as `(id, object→world, dim)`.
pub fn segments_for_poses(ray: &Ray, boxes: &[(u32, Rigid, Vector3<f64>)]) -> Vec<BoxSegment> {
    let mut out = Vec::new();
    let half = Vector3::repeat(0.5);
    for (id, pose, dim) in boxes {
        // Object frame scaled to the unit box; the ray parameter is unchanged.
        let o = pose.apply_inverse(&ray.origin).component_div(dim);
        let d = pose.rot.tr_mul(&ray.dir).component_div(dim);
        if let Some((a, e)) = ray_aabb(&o, &d, &-half, &half) {
            let a = a.max(ray.t_near);
            let e = e.min(ray.t_far);
            if a < e {
                out.push(BoxSegment {
                    t_enter: a,
                    t_exit: e,
                    box_id: *id,
                });
            }
        }
    }
    out.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter));
    out
}

/// Möller–Trumbore. Returns `(t, u, v)` with barycentrics of `v1`, `v2`.
#[inline]
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    Some((t, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::track::{box_to_object, Keyframe};
    use crate::geometry::transform::rot_z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(yaw: f64, center: Vector3<f64>, dim: Vector3<f64>) -> TrackedBox {
        TrackedBox::new(
            0,
            0,
            vec![
                Keyframe {
                    time: 0.0,
                    rot: rot_z(yaw),
                    trans: center,
                },
                Keyframe {
                    time: 1.0,
                    rot: rot_z(yaw),
                    trans: center,
                },
            ],
            dim,
        )
        .unwrap()
    }

    #[test]
    fn axis_aligned_slab_arithmetic() {
        let b = unit_box(0.0, Vector3::zeros(), Vector3::repeat(1.0));
        let ray = Ray::new(Vector3::new(-2.0, 0.0, 0.0), Vector3::x(), 0.0, 100.0);
        let segs = ray_box_segments(&ray, std::slice::from_ref(&b), 0.5);
        assert_eq!(segs.len(), 1);
        assert!((segs[0].t_enter - 1.5).abs() < 1e-12 && (segs[0].t_exit - 2.5).abs() < 1e-12);

        let miss = Ray::new(Vector3::new(-2.0, 2.0, 0.0), Vector3::x(), 0.0, 100.0);
        assert!(ray_box_segments(&miss, std::slice::from_ref(&b), 0.5).is_empty());
        // Track does not cover t = 3.
        assert!(ray_box_segments(&ray, &[b], 3.0).is_empty());
    }

    #[test]
    fn clipping_to_ray_bounds() {
        let b = unit_box(0.0, Vector3::zeros(), Vector3::repeat(1.0));
        let ray = Ray::new(Vector3::new(-2.0, 0.0, 0.0), Vector3::x(), 2.0, 2.2);
        let segs = ray_box_segments(&ray, &[b], 0.0);
        assert_eq!(segs[0].t_enter, 2.0);
        assert_eq!(segs[0].t_exit, 2.2);
    }

    #[test]
    fn rotated_boxes_match_dense_marching() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-3;
        for _ in 0..200 {
            let dim = Vector3::new(
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
            );
            let b = unit_box(
                rng.gen_range(0.0..std::f64::consts::TAU),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
                dim,
            );
            let origin = Vector3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-1.0..1.0),
            );
            let target = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.5..0.5),
            );
            let ray = Ray::new(origin, target - origin, 0.0, 10.0);
            let segs = ray_box_segments(&ray, std::slice::from_ref(&b), 0.5);
            let pose = b.interpolate_pose(0.5).unwrap().pose;
            let mut t = 0.5 * step;
            while t < 10.0 {
                let inside = box_to_object(&ray.at(t), &ray.dir, 0.0, &pose, &b.dim).inside();
                let in_seg = segs.iter().any(|s| t >= s.t_enter && t <= s.t_exit);
                if inside != in_seg {
                    // Only tolerated within one marching step of a boundary.
                    let near = segs
                        .iter()
                        .any(|s| (t - s.t_enter).abs() < step || (t - s.t_exit).abs() < step);
                    assert!(near, "membership mismatch at t={t}");
                }
                t += step;
            }
        }
    }

    #[test]
    fn triangle_hit_and_miss() {
        let v0 = Vector3::new(0.0, 0.0, 2.0);
        let v1 = Vector3::new(1.0, 0.0, 2.0);
        let v2 = Vector3::new(0.0, 1.0, 2.0);
        let (t, u, v) =
            ray_triangle(&Vector3::new(0.2, 0.2, 0.0), &Vector3::z(), &v0, &v1, &v2).unwrap();
        assert!((t - 2.0).abs() < 1e-12 && (u - 0.2).abs() < 1e-12 && (v - 0.2).abs() < 1e-12);
        assert!(ray_triangle(&Vector3::new(0.8, 0.8, 0.0), &Vector3::z(), &v0, &v1, &v2).is_none());
    }
}
