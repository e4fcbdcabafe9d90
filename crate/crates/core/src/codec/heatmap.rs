use super::keypoints::{FlipPairs, Keypoint, KeypointSet, Space};
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gaussian width in heatmap pixels for a `res x res` grid: one pixel at
/// 64 and proportional above that, never below one pixel.
pub fn default_sigma(res: usize) -> f64 {
    (res as f64 / 64.0).max(1.0)
}

/// `[M,r,r]` targets: an unnormalized Gaussian of peak 1 for each visible
/// joint, an all-zero map for each invisible one.
pub fn render_targets<T: Scalar>(kps: &KeypointSet, m: usize, r: usize, sigma: f64) -> Result<Tensor<T>> {
    contract!(sigma > 0.0, "sigma must be positive, got {sigma}");
    contract!(kps.len() == m, "{} keypoints for {m} heatmaps", kps.len());
    contract!(kps.space() == Space::Heatmap { res: r }, "keypoints must be in {r}x{r} heatmap space");
    let mut out = vec![T::zero(); m * r * r];
    let denom = 2.0 * sigma * sigma;
    for (j, k) in kps.joints().iter().enumerate() {
        if !k.visible {
            continue;
        }
        let gx: Vec<f64> = (0..r).map(|x| (-(x as f64 - k.x).powi(2) / denom).exp()).collect();
        let plane = &mut out[j * r * r..(j + 1) * r * r];
        for y in 0..r {
            let gy = (-(y as f64 - k.y).powi(2) / denom).exp();
            for (x, g) in gx.iter().enumerate() {
                plane[y * r + x] = T::of(gy * g);
            }
        }
    }
    Tensor::from_vec(&[m, r, r], out)
}

fn planes<T: Scalar>(heatmaps: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = heatmaps.shape();
    contract!(s.len() == 3, "heatmaps must be [M,H,W], got {s:?}");
    Ok((s[0], s[1], s[2]))
}

/// Per joint, the location of the largest value (first in row-major order
/// on ties) and that value. All joints are reported visible.
pub fn decode_argmax<T: Scalar>(heatmaps: &Tensor<T>) -> Result<(KeypointSet, Vec<T>)> {
    let (m, h, w) = planes(heatmaps)?;
    contract!(h == w, "heatmaps must be square");
    let mut joints = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    for plane in heatmaps.values().chunks_exact(h * w) {
        let mut best = 0;
        for (i, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = i;
            }
        }
        joints.push(Keypoint::new((best % w) as f64, (best / w) as f64, true));
        scores.push(plane[best]);
    }
    Ok((KeypointSet::new(joints, Space::Heatmap { res: h })?, scores))
}

/// Moves each decoded peak a quarter pixel toward its larger horizontal and
/// vertical neighbor.
pub fn refine_quarter_offset<T: Scalar>(heatmaps: &Tensor<T>, kps: &KeypointSet) -> Result<KeypointSet> {
    let (m, h, w) = planes(heatmaps)?;
    contract!(kps.len() == m, "keypoint count does not match heatmaps");
    let v = heatmaps.values();
    let joints = kps
        .joints()
        .iter()
        .enumerate()
        .map(|(j, k)| {
            let (x, y) = (k.x.round() as usize, k.y.round() as usize);
            let at = |yy: usize, xx: usize| v[(j * h + yy) * w + xx];
            let mut out = *k;
            if x > 0 && x + 1 < w {
                let d = at(y, x + 1) - at(y, x - 1);
                out.x += 0.25 * d.signum().to_f64_lossy() * f64::from(u8::from(d != T::zero()));
            }
            if y > 0 && y + 1 < h {
                let d = at(y + 1, x) - at(y - 1, x);
                out.y += 0.25 * d.signum().to_f64_lossy() * f64::from(u8::from(d != T::zero()));
            }
            out
        })
        .collect();
    KeypointSet::new(joints, kps.space())
}

/// Horizontal mirror of every map followed by the left/right channel swap.
pub fn mirror_and_swap<T: Scalar>(heatmaps: &Tensor<T>, pairs: &FlipPairs) -> Result<Tensor<T>> {
    let (m, h, w) = planes(heatmaps)?;
    pairs.check(m)?;
    let src = heatmaps.values();
    let mut out = vec![T::zero(); src.len()];
    for j in 0..m {
        let from = pairs.partner(j);
        for y in 0..h {
            for x in 0..w {
                out[(j * h + y) * w + x] = src[(from * h + y) * w + (w - 1 - x)];
            }
        }
    }
    Tensor::from_vec(heatmaps.shape(), out)
}

/// Mean of `original` and the un-mirrored, channel-swapped `flipped_input`
/// prediction.
pub fn flip_average<T: Scalar>(original: &Tensor<T>, flipped_input: &Tensor<T>, pairs: &FlipPairs) -> Result<Tensor<T>> {
    contract!(original.shape() == flipped_input.shape(), "flip_average of {:?} and {:?}", original.shape(), flipped_input.shape());
    let back = mirror_and_swap(flipped_input, pairs)?;
    let half = T::of(0.5);
    let values = original.values().iter().zip(back.values()).map(|(&a, &b)| (a + b) * half).collect();
    Tensor::from_vec(original.shape(), values)
}
