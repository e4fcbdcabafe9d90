//! Similarity transforms between image, crop and heatmap frames.

use super::keypoints::{Keypoint, KeypointSet, PersonDescriptor, Space};
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `p -> A p + t` with `A` stored row-major in the first two columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    m: [[f64; 3]; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] };

    pub fn new(a: [[f64; 2]; 2], t: [f64; 2]) -> Self {
        Affine2 { m: [[a[0][0], a[0][1], t[0]], [a[1][0], a[1][1], t[1]]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine2::new([[1.0, 0.0], [0.0, 1.0]], [tx, ty])
    }

    pub fn scaling(s: f64) -> Self {
        Affine2::new([[s, 0.0], [0.0, s]], [0.0, 0.0])
    }

    /// Rotation by `deg` degrees in pixel coordinates (x right, y down).
    pub fn rotation(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Affine2::new([[c, -s], [s, c]], [0.0, 0.0])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn after(&self, first: &Affine2) -> Affine2 {
        let (a, b) = (&self.m, &first.m);
        let mut m = [[0.0; 3]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
            row[2] += a[i][2];
        }
        Affine2 { m }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Result<Affine2> {
        let d = self.det();
        contract!(d.abs() > 1e-300 && d.is_finite(), "transform is singular");
        let m = &self.m;
        let a = [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]];
        let t = [-(a[0][0] * m[0][2] + a[0][1] * m[1][2]), -(a[1][0] * m[0][2] + a[1][1] * m[1][2])];
        Ok(Affine2::new(a, t))
    }
}

/// Maps a rotated, scaled square around a person onto an `out_res` crop and
/// on to the `heatmap_res` grid, optionally mirrored horizontally.
#[derive(Clone, Debug, PartialEq)]
pub struct CropTransform {
    image_to_crop: Affine2,
    crop_to_image: Affine2,
    out_res: usize,
    heatmap_res: usize,
    image_size: (usize, usize),
    flipped: bool,
}

impl CropTransform {
    /// A square of side `200 * person.scale * scale_jitter` centered on the
    /// person, rotated by `rotation_deg`, fills the `out_res` crop.
    pub fn new(
        person: &PersonDescriptor,
        image_size: (usize, usize),
        out_res: usize,
        heatmap_res: usize,
        rotation_deg: f64,
        scale_jitter: f64,
        flip: bool,
    ) -> Result<Self> {
        contract!(out_res > 0 && heatmap_res > 0, "crop resolutions must be positive");
        contract!(scale_jitter > 0.0 && scale_jitter.is_finite(), "scale jitter must be positive, got {scale_jitter}");
        let side = PersonDescriptor::REFERENCE_PX * person.scale * scale_jitter;
        contract!(side > 1e-9 && side.is_finite(), "degenerate crop side {side}");
        contract!(rotation_deg.is_finite(), "rotation must be finite");
        let mid = (out_res as f64 - 1.0) / 2.0;
        let mut t = Affine2::translation(mid, mid)
            .after(&Affine2::scaling(out_res as f64 / side))
            .after(&Affine2::rotation(rotation_deg))
            .after(&Affine2::translation(-person.center[0], -person.center[1]));
        if flip {
            t = Affine2::new([[-1.0, 0.0], [0.0, 1.0]], [out_res as f64 - 1.0, 0.0]).after(&t);
        }
        let inv = t.inverse()?;
        Ok(CropTransform { image_to_crop: t, crop_to_image: inv, out_res, heatmap_res, image_size, flipped: flip })
    }

    pub fn out_res(&self) -> usize {
        self.out_res
    }

    pub fn heatmap_res(&self) -> usize {
        self.heatmap_res
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    pub fn image_to_crop(&self) -> &Affine2 {
        &self.image_to_crop
    }

    fn cell(&self) -> f64 {
        self.out_res as f64 / self.heatmap_res as f64
    }

    pub fn image_to_heatmap(&self, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = self.image_to_crop.apply(x, y);
        let f = self.cell();
        ((cx + 0.5) / f - 0.5, (cy + 0.5) / f - 0.5)
    }

    pub fn heatmap_to_image(&self, u: f64, v: f64) -> (f64, f64) {
        let f = self.cell();
        self.crop_to_image.apply((u + 0.5) * f - 0.5, (v + 0.5) * f - 0.5)
    }

    /// Image-space joints to heatmap space; joints leaving the grid become
    /// invisible. Mirroring does not reorder joints here.
    pub fn keypoints_to_heatmap(&self, kps: &KeypointSet) -> KeypointSet {
        let joints = kps
            .joints()
            .iter()
            .map(|k| {
                let (u, v) = self.image_to_heatmap(k.x, k.y);
                Keypoint::new(u, v, k.visible)
            })
            .collect();
        KeypointSet::new_hiding_outside(joints, Space::Heatmap { res: self.heatmap_res })
    }

    /// Samples the crop from a `[3,H,W]` image; pixels outside read as 0.
    pub fn crop<T: Scalar>(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let s = image.shape();
        contract!(s.len() == 3 && s[0] == 3, "image must be [3,H,W], got {s:?}");
        let (h, w) = (s[1], s[2]);
        let r = self.out_res;
        let mut out = vec![T::zero(); 3 * r * r];
        let src = image.values();
        let read = |c: usize, y: isize, x: isize| -> f64 {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                src[(c * h + y as usize) * w + x as usize].to_f64_lossy()
            }
        };
        for i in 0..r {
            for j in 0..r {
                let (x, y) = self.crop_to_image.apply(j as f64, i as f64);
                let (x0, y0) = (x.floor(), y.floor());
                let (fx, fy) = (x - x0, y - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                for c in 0..3 {
                    let v = (1.0 - fy) * ((1.0 - fx) * read(c, y0, x0) + fx * read(c, y0, x0 + 1))
                        + fy * ((1.0 - fx) * read(c, y0 + 1, x0) + fx * read(c, y0 + 1, x0 + 1));
                    out[(c * r + i) * r + j] = T::of(v);
                }
            }
        }
        Tensor::from_vec(&[3, r, r], out)
    }
}

/// Crops `image` around `person` to `[3,out_res,out_res]` and returns the
/// transform that also maps annotations (heatmaps at a quarter of `out_res`).
pub fn crop_input<T: Scalar>(
    image: &Tensor<T>,
    person: &PersonDescriptor,
    out_res: usize,
    rotation_deg: f64,
    scale_jitter: f64,
) -> Result<(Tensor<T>, CropTransform)> {
    contract!(image.shape().len() == 3, "image must be [3,H,W]");
    contract!(out_res % 4 == 0, "crop resolution {out_res} must be a multiple of 4");
    let size = (image.shape()[2], image.shape()[1]);
    let t = CropTransform::new(person, size, out_res, out_res / 4, rotation_deg, scale_jitter, false)?;
    Ok((t.crop(image)?, t))
}

/// Heatmap-space joints back to the image frame of `transform`; results are
/// clamped to the image.
pub fn heatmap_to_image_coords(kps: &KeypointSet, transform: &CropTransform) -> Result<KeypointSet> {
    contract!(
        kps.space() == Space::Heatmap { res: transform.heatmap_res() },
        "keypoints are not in the transform's heatmap frame"
    );
    let (w, h) = transform.image_size();
    let space = Space::Image { width: w, height: h };
    let joints = kps
        .joints()
        .iter()
        .map(|k| {
            let (x, y) = transform.heatmap_to_image(k.x, k.y);
            let (x, y) = space.clamp(x, y);
            Keypoint::new(x, y, k.visible)
        })
        .collect();
    KeypointSet::new(joints, space)
}
