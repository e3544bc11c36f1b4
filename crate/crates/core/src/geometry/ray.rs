use nalgebra::Vector3;

/// Ray `origin + t·dir` with a conical footprint of radius `cone_radius_rate·t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
    pub cone_radius_rate: f64,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, dir: Vector3<f64>, t_near: f64, t_far: f64) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
            cone_radius_rate: 0.0,
            t_near,
            t_far,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.dir * t
    }

    #[inline]
    pub fn radius_at(&self, t: f64) -> f64 {
        self.cone_radius_rate * t
    }
}
