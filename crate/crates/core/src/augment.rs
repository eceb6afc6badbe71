//! Non-leaky geometric augmentation: random parameters, the homogeneous
//! transform they define, the 9-D conditioning label, and bilinear affine
//! resampling of `H × W × C` images.

use std::f64::consts::PI;
use std::ops::Mul;

use crate::error::{arg_err, Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const LABEL_DIM: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConstants {
    pub a_prob: f64,
    pub a_scale: f64,
    pub a_aniso: f64,
    pub a_trans: f64,
}

impl Default for AugmentConstants {
    fn default() -> Self {
        let s = 2f64.powf(0.2);
        Self { a_prob: 0.12, a_scale: s, a_aniso: s, a_trans: 0.125 }
    }
}

impl AugmentConstants {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a_prob) {
            return arg_err(format!("A_prob must lie in [0, 1], got {}", self.a_prob));
        }
        if !(self.a_scale > 0.0 && self.a_aniso > 0.0 && self.a_trans.is_finite()) {
            return arg_err(format!("need A_scale > 0, A_aniso > 0, finite A_trans; got {self:?}"));
        }
        Ok(())
    }
}

/// The six augmentations, in pipeline order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Augmentation {
    XFlip,
    YFlip,
    Scale,
    Rotate,
    Aniso,
    Translate,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Augmentation::XFlip,
        Augmentation::YFlip,
        Augmentation::Scale,
        Augmentation::Rotate,
        Augmentation::Aniso,
        Augmentation::Translate,
    ];

    /// Indices into `a0…a7` owned by this augmentation.
    pub fn params(self) -> &'static [usize] {
        match self {
            Augmentation::XFlip => &[0],
            Augmentation::YFlip => &[1],
            Augmentation::Scale => &[2],
            Augmentation::Rotate => &[3],
            Augmentation::Aniso => &[4, 5],
            Augmentation::Translate => &[6, 7],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub a: [f64; 8],
    /// Coin outcome per entry of [`Augmentation::ALL`].
    pub enabled: [bool; 6],
    pub constants: AugmentConstants,
}

impl AugmentParams {
    /// Nothing applied.
    pub fn identity(constants: AugmentConstants) -> Self {
        Self { a: [0.0; 8], enabled: [false; 6], constants }
    }
}

/// `(a0, a1, a2, cos a3 − 1, sin a3, a5 cos a4, a5 sin a4, a6, a7)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentLabel(pub [f64; LABEL_DIM]);

impl AugmentLabel {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Homogeneous 2-D transform; the bottom row is always `(0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn scale2d(sx: f64, sy: f64) -> Self {
        Mat3([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn rotate2d(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn translate2d(tx: f64, ty: f64) -> Self {
        Mat3([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    pub fn inverse(&self) -> Result<Mat3> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Domain(format!("singular transform {m:?}")));
        }
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        let (tx, ty) = (m[0][2], m[1][2]);
        Ok(Mat3([[a, b, -(a * tx + b * ty)], [c, d, -(c * tx + d * ty)], [0.0, 0.0, 1.0]]))
    }
}

impl Mul for Mat3 {
    type Output = Mat3;

    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

/// One coin per augmentation (x-flip always on), then all eight parameters;
/// parameters of disabled augmentations are overwritten with zero.
pub fn draw_augment(rng: &mut RngStream, constants: &AugmentConstants) -> Result<AugmentParams> {
    constants.validate()?;
    let mut enabled = [false; 6];
    for (i, e) in enabled.iter_mut().enumerate() {
        *e = i == 0 || rng.bernoulli(constants.a_prob);
    }
    let mut a = [
        rng.index(2) as f64,
        rng.index(2) as f64,
        rng.standard_normal(),
        rng.uniform_range(-PI, PI),
        rng.uniform_range(-PI, PI),
        rng.standard_normal(),
        rng.standard_normal(),
        rng.standard_normal(),
    ];
    for (aug, &on) in Augmentation::ALL.iter().zip(&enabled) {
        if !on {
            for &k in aug.params() {
                a[k] = 0.0;
            }
        }
    }
    Ok(AugmentParams { a, enabled, constants: *constants })
}

/// Product of the per-augmentation matrices, left to right in pipeline order.
pub fn augment_matrix(p: &AugmentParams) -> Mat3 {
    let a = &p.a;
    let c = &p.constants;
    let xflip = Mat3::scale2d(1.0 - 2.0 * a[0], 1.0);
    let yflip = Mat3::scale2d(1.0, 1.0 - 2.0 * a[1]);
    let s = c.a_scale.powf(a[2]);
    let scale = Mat3::scale2d(s, s);
    let rotate = Mat3::rotate2d(-a[3]);
    let an = c.a_aniso.powf(a[5]);
    let aniso = Mat3::rotate2d(a[4]) * Mat3::scale2d(an, 1.0 / an) * Mat3::rotate2d(-a[4]);
    let translate = Mat3::translate2d(c.a_trans * a[6], c.a_trans * a[7]);
    xflip * yflip * scale * rotate * aniso * translate
}

pub fn augment_label(p: &AugmentParams) -> AugmentLabel {
    let a = &p.a;
    AugmentLabel([a[0], a[1], a[2], a[3].cos() - 1.0, a[3].sin(), a[5] * a[4].cos(), a[5] * a[4].sin(), a[6], a[7]])
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Output-driven resampling: pixel `p` of the result reads the input at
/// `m⁻¹ p`, in coordinates normalized to `[−1, 1]` along each axis (x along
/// width, y along height). Bilinear, clamped at the edges.
pub fn apply_affine(image: &Tensor, m: &Mat3) -> Result<Tensor> {
    let &[h, w, ch] = image.shape() else {
        return Err(Error::Shape(format!("expected an H x W x C image, got shape {:?}", image.shape())));
    };
    let inv = m.inverse()?;
    let src = image.data();
    let at = |r: usize, c: usize, k: usize| src[(r * w + c) * ch + k];
    let mut out = Vec::with_capacity(src.len());
    for row in 0..h {
        let v = (2 * row + 1) as f64 / h as f64 - 1.0;
        for col in 0..w {
            let u = (2 * col + 1) as f64 / w as f64 - 1.0;
            let (su, sv) = inv.apply(u, v);
            // back to pixel-center coordinates; snapping keeps exact flips exact
            let px = snap((su + 1.0) * w as f64 / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
            let py = snap((sv + 1.0) * h as f64 / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (px.floor() as usize, py.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (px - x0 as f64, py - y0 as f64);
            for k in 0..ch {
                let v = if fx == 0.0 && fy == 0.0 {
                    at(y0, x0, k)
                } else {
                    let top = at(y0, x0, k) * (1.0 - fx) + at(y0, x1, k) * fx;
                    let bottom = at(y1, x0, k) * (1.0 - fx) + at(y1, x1, k) * fx;
                    top * (1.0 - fy) + bottom * fy
                };
                out.push(v);
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// Draws parameters for one image, transforms it, and returns its label.
pub fn augment_image(
    image: &Tensor,
    rng: &mut RngStream,
    constants: &AugmentConstants,
) -> Result<(Tensor, AugmentLabel)> {
    let p = draw_augment(rng, constants)?;
    let out = apply_affine(image, &augment_matrix(&p))?;
    Ok((out, augment_label(&p)))
}
