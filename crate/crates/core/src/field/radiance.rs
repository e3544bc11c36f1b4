//! Grid-plus-MLP radiance fields for the background, dynamic objects and
//! proposal stages.

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contract::{contract_with_jacobian, contraction_scale};
use super::grid::{GridConfig, GridEncoding};
use super::mlp::Mlp;
use super::tape::ParamTape;

pub const MAX_CLASSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRole {
    Background,
    Object(u32),
    Proposal(usize),
}

/// How query positions reach the unit cube of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// World points normalised by `(x − center)/scale`, contracted into the
    /// radius-2 ball and mapped to `[0,1]³`.
    Contracted { center: Vector3<f64>, scale: f64 },
    /// Box-normalised object coordinates in `[−0.5,0.5]³`.
    ObjectBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub grid: GridConfig,
    pub hidden: usize,
    pub layers: usize,
    /// Semantic classes; 0 for σ-only (proposal) fields.
    pub classes: usize,
    /// Average features over 4 tetrahedral offsets of the cone radius.
    pub multisample: bool,
    pub zero_init: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            hidden: 64,
            layers: 2,
            classes: 5,
            multisample: true,
            zero_init: false,
        }
    }
}

impl FieldConfig {
    pub fn proposal() -> Self {
        Self {
            grid: GridConfig {
                levels: 5,
                base_resolution: 16,
                growth: 1.6,
                features: 1,
                log2_table_size: 17,
            },
            hidden: 32,
            layers: 1,
            classes: 0,
            multisample: false,
            zero_init: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldQuery {
    pub pos: Vector3<f64>,
    pub dir: Vector3<f64>,
    /// Cone radius at the sample, in the units of `pos`.
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldOutput {
    pub sigma: f64,
    pub color: [f64; 3],
    pub logits: [f64; MAX_CLASSES],
    /// Object query fell outside the box and was clamped.
    pub clamped: bool,
}

/// Upstream gradients for [`RadianceField::backward`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldGrad {
    pub sigma: f64,
    pub color: [f64; 3],
    pub logits: [f64; MAX_CLASSES],
}

/// Per-thread buffers sized for one field.
#[derive(Clone, Debug)]
pub struct FieldScratch {
    trunk: Vec<f64>,
    density: Vec<f64>,
    color: Vec<f64>,
    semantic: Vec<f64>,
    d_feat: Vec<f64>,
    d_h: Vec<f64>,
    d_color_in: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadianceField {
    pub role: FieldRole,
    pub domain: Domain,
    pub config: FieldConfig,
    grid: GridEncoding,
    trunk: Mlp,
    density: Mlp,
    color: Option<Mlp>,
    semantic: Option<Mlp>,
}

const SH_DIM: usize = 9;

/// Unit vectors to the vertices of a regular tetrahedron.
const TETRA: [[f64; 3]; 4] = [
    [
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
    ],
    [
        0.577_350_269_189_625_8,
        -0.577_350_269_189_625_8,
        -0.577_350_269_189_625_8,
    ],
    [
        -0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
        -0.577_350_269_189_625_8,
    ],
    [
        -0.577_350_269_189_625_8,
        -0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
    ],
];

/// Real spherical harmonics up to degree 2.
pub fn sh_encode(d: &Vector3<f64>, out: &mut [f64]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = 0.282_094_791_773_878_1;
    out[1] = -0.488_602_511_902_919_9 * y;
    out[2] = 0.488_602_511_902_919_9 * z;
    out[3] = -0.488_602_511_902_919_9 * x;
    out[4] = 1.092_548_430_592_079_2 * x * y;
    out[5] = -1.092_548_430_592_079_2 * y * z;
    out[6] = 0.315_391_565_252_520_05 * (3.0 * z * z - 1.0);
    out[7] = -1.092_548_430_592_079_2 * x * z;
    out[8] = 0.546_274_215_296_039_6 * (x * x - y * y);
}

fn sh_backward(d: &Vector3<f64>, g: &[f64]) -> Vector3<f64> {
    let (x, y, z) = (d.x, d.y, d.z);
    let a = 0.488_602_511_902_919_9;
    let b = 1.092_548_430_592_079_2;
    let c = 0.315_391_565_252_520_05;
    let e = 0.546_274_215_296_039_6;
    Vector3::new(
        -a * g[3] + b * y * g[4] - b * z * g[7] + 2.0 * e * x * g[8],
        -a * g[1] + b * x * g[4] - b * z * g[5] - 2.0 * e * y * g[8],
        a * g[2] - b * y * g[5] + 6.0 * c * z * g[6] - b * x * g[7],
    )
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A grid lookup point with the map back to the query position.
#[derive(Clone, Copy)]
struct Tap {
    u: Vector3<f64>,
    scale: f64,
    weight: f64,
    /// `∂u/∂pos` is `du_dpos` (row-major 3×3), `∂scale/∂pos` is `ds_dpos`.
    du_dpos: nalgebra::Matrix3<f64>,
    ds_dpos: Vector3<f64>,
}

impl RadianceField {
    pub fn new(
        role: FieldRole,
        domain: Domain,
        config: FieldConfig,
        tape: &mut ParamTape,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(config.classes <= MAX_CLASSES);
        let name = match role {
            FieldRole::Background => "background".to_string(),
            FieldRole::Object(id) => format!("object{id}"),
            FieldRole::Proposal(k) => format!("proposal{k}"),
        };
        let grid = GridEncoding::new(config.grid.clone(), &name, tape, rng);
        let mut dims = vec![grid.output_dim()];
        dims.extend(std::iter::repeat_n(config.hidden, config.layers));
        let zero = config.zero_init;
        let trunk = Mlp::new(&dims, true, zero, &format!("{name}.trunk"), tape, rng);
        let density = Mlp::new(
            &[config.hidden, 1],
            false,
            zero,
            &format!("{name}.density"),
            tape,
            rng,
        );
        let proposal = matches!(role, FieldRole::Proposal(_));
        let color = (!proposal).then(|| {
            Mlp::new(
                &[config.hidden + SH_DIM, 3],
                false,
                zero,
                &format!("{name}.color"),
                tape,
                rng,
            )
        });
        let semantic = (!proposal && config.classes > 0).then(|| {
            Mlp::new(
                &[config.hidden, config.classes],
                false,
                zero,
                &format!("{name}.semantic"),
                tape,
                rng,
            )
        });
        Self {
            role,
            domain,
            config,
            grid,
            trunk,
            density,
            color,
            semantic,
        }
    }

    pub fn grid(&self) -> &GridEncoding {
        &self.grid
    }

    pub fn classes(&self) -> usize {
        self.semantic.as_ref().map_or(0, |m| m.output_dim())
    }

    pub fn has_color(&self) -> bool {
        self.color.is_some()
    }

    /// Parameter ranges whose values influence σ.
    pub fn density_param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        vec![
            self.grid.param_range(),
            self.trunk.param_range(),
            self.density.param_range(),
        ]
    }

    pub fn semantic_param_range(&self) -> Option<std::ops::Range<usize>> {
        self.semantic.as_ref().map(|m| m.param_range())
    }

    pub fn color_param_range(&self) -> Option<std::ops::Range<usize>> {
        self.color.as_ref().map(|m| m.param_range())
    }

    pub fn scratch(&self) -> FieldScratch {
        let h = self.config.hidden;
        FieldScratch {
            trunk: vec![0.0; self.trunk.acts_len()],
            density: vec![0.0; self.density.acts_len()],
            color: vec![0.0; self.color.as_ref().map_or(0, |m| m.acts_len())],
            semantic: vec![0.0; self.semantic.as_ref().map_or(0, |m| m.acts_len())],
            d_feat: vec![0.0; self.grid.output_dim()],
            d_h: vec![0.0; h],
            d_color_in: vec![0.0; h + SH_DIM],
        }
    }

    fn taps(&self, q: &FieldQuery, out: &mut [Tap; 4]) -> (usize, bool) {
        match self.domain {
            Domain::Contracted { center, scale } => {
                let count = if self.config.multisample { 4 } else { 1 };
                for (k, tap) in out.iter_mut().take(count).enumerate() {
                    let off = if count == 1 {
                        Vector3::zeros()
                    } else {
                        Vector3::from(TETRA[k]) * q.radius
                    };
                    let xn = (q.pos + off - center) / scale;
                    let (c, j) = contract_with_jacobian(&xn);
                    let (iso, d_iso) = contraction_scale(&xn);
                    let r = q.radius / scale;
                    *tap = Tap {
                        u: (c + Vector3::repeat(2.0)) / 4.0,
                        scale: r * iso / 4.0,
                        weight: 1.0 / count as f64,
                        du_dpos: j / (4.0 * scale),
                        ds_dpos: d_iso * (r / (4.0 * scale)),
                    };
                }
                (count, false)
            }
            Domain::ObjectBox => {
                let u = q.pos + Vector3::repeat(0.5);
                let clamped = u.iter().any(|v| !(0.0..=1.0).contains(v));
                out[0] = Tap {
                    u,
                    scale: q.radius,
                    weight: 1.0,
                    du_dpos: nalgebra::Matrix3::identity(),
                    ds_dpos: Vector3::zeros(),
                };
                (1, clamped)
            }
        }
    }

    fn encode(&self, params: &[f64], taps: &[Tap], feat: &mut [f64]) {
        feat.iter_mut().for_each(|v| *v = 0.0);
        for t in taps {
            self.grid.encode_add(params, &t.u, t.scale, t.weight, feat);
        }
    }

    /// Evaluate σ only (and colour/semantics when `full`).
    pub fn query(
        &self,
        params: &[f64],
        q: &FieldQuery,
        full: bool,
        s: &mut FieldScratch,
    ) -> FieldOutput {
        let mut taps = [Tap {
            u: Vector3::zeros(),
            scale: 0.0,
            weight: 0.0,
            du_dpos: nalgebra::Matrix3::zeros(),
            ds_dpos: Vector3::zeros(),
        }; 4];
        let (n, clamped) = self.taps(q, &mut taps);
        let fd = self.grid.output_dim();
        self.encode(params, &taps[..n], &mut s.trunk[..fd]);
        let h_at = self.trunk.forward(params, &mut s.trunk);
        let hidden = self.config.hidden;
        s.density[..hidden].copy_from_slice(&s.trunk[h_at..h_at + hidden]);
        let d_at = self.density.forward(params, &mut s.density);
        let mut out = FieldOutput {
            sigma: softplus(s.density[d_at]),
            clamped,
            ..Default::default()
        };
        if !full {
            return out;
        }
        if let Some(color) = &self.color {
            s.color[..hidden].copy_from_slice(&s.trunk[h_at..h_at + hidden]);
            sh_encode(&q.dir, &mut s.color[hidden..hidden + SH_DIM]);
            let c_at = color.forward(params, &mut s.color);
            for k in 0..3 {
                out.color[k] = sigmoid(s.color[c_at + k]);
            }
        }
        if let Some(sem) = &self.semantic {
            s.semantic[..hidden].copy_from_slice(&s.trunk[h_at..h_at + hidden]);
            let at = sem.forward(params, &mut s.semantic);
            let k = sem.output_dim();
            out.logits[..k].copy_from_slice(&s.semantic[at..at + k]);
        }
        out
    }

    /// Reverse pass of a full query. The semantic head sees a detached copy
    /// of the trunk features, so `g.logits` only reaches semantic-head
    /// parameters. Returns `(∂/∂pos, ∂/∂dir)`.
    pub fn backward(
        &self,
        params: &[f64],
        q: &FieldQuery,
        g: &FieldGrad,
        grads: &mut [f64],
        s: &mut FieldScratch,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let out = self.query(params, q, true, s);
        let hidden = self.config.hidden;
        s.d_h.iter_mut().for_each(|v| *v = 0.0);
        let mut d_dir = Vector3::zeros();

        let raw = s.density[s.density.len() - 1];
        let d_raw = [g.sigma * sigmoid(raw)];
        let mut d_h_dens = vec![0.0; hidden];
        self.density
            .backward(params, &s.density, &d_raw, grads, Some(&mut d_h_dens));
        for (a, b) in s.d_h.iter_mut().zip(&d_h_dens) {
            *a += b;
        }

        if let Some(color) = &self.color {
            if g.color.iter().any(|&v| v != 0.0) {
                let d_pre: Vec<f64> = (0..3)
                    .map(|k| g.color[k] * out.color[k] * (1.0 - out.color[k]))
                    .collect();
                color.backward(params, &s.color, &d_pre, grads, Some(&mut s.d_color_in));
                for (a, b) in s.d_h.iter_mut().zip(&s.d_color_in[..hidden]) {
                    *a += b;
                }
                d_dir = sh_backward(&q.dir, &s.d_color_in[hidden..]);
            }
        }
        if let Some(sem) = &self.semantic {
            let k = sem.output_dim();
            if g.logits[..k].iter().any(|&v| v != 0.0) {
                sem.backward(params, &s.semantic, &g.logits[..k], grads, None);
            }
        }

        let d_pos = self.backward_trunk(params, q, grads, s);
        (d_pos, d_dir)
    }

    /// Reverse pass of a σ-only query.
    pub fn backward_density(
        &self,
        params: &[f64],
        q: &FieldQuery,
        d_sigma: f64,
        grads: &mut [f64],
        s: &mut FieldScratch,
    ) -> Vector3<f64> {
        self.query(params, q, false, s);
        let raw = s.density[s.density.len() - 1];
        let d_raw = [d_sigma * sigmoid(raw)];
        let mut d_h = std::mem::take(&mut s.d_h);
        self.density
            .backward(params, &s.density, &d_raw, grads, Some(&mut d_h));
        s.d_h = d_h;
        self.backward_trunk(params, q, grads, s)
    }

    fn backward_trunk(
        &self,
        params: &[f64],
        q: &FieldQuery,
        grads: &mut [f64],
        s: &mut FieldScratch,
    ) -> Vector3<f64> {
        let d_h = s.d_h.clone();
        self.trunk
            .backward(params, &s.trunk, &d_h, grads, Some(&mut s.d_feat));
        let mut taps = [Tap {
            u: Vector3::zeros(),
            scale: 0.0,
            weight: 0.0,
            du_dpos: nalgebra::Matrix3::zeros(),
            ds_dpos: Vector3::zeros(),
        }; 4];
        let (n, _) = self.taps(q, &mut taps);
        let mut d_pos = Vector3::zeros();
        for t in &taps[..n] {
            let (d_u, d_scale) = self
                .grid
                .backward(params, &t.u, t.scale, t.weight, &s.d_feat, grads);
            d_pos += t.du_dpos.tr_mul(&d_u) + t.ds_dpos * d_scale;
        }
        d_pos
    }
}
