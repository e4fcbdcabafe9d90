use crate::codec::{decode_argmax, flip_average, heatmap_to_image_coords, refine_quarter_offset, CropTransform, FlipPairs, KeypointSet, PersonDescriptor};
use crate::dataset::{pck_curve, PckResult, Reference, Sample};
use crate::error::{contract, Result};
use crate::network::HeatmapModel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How predictions are turned into keypoints.
#[derive(Clone, Debug)]
pub struct InferSettings {
    pub input_res: usize,
    pub pairs: FlipPairs,
    /// Average with the prediction on the mirrored crop.
    pub flip_average: bool,
    /// Quarter-pixel shift toward the larger neighbor after argmax.
    pub refine: bool,
    /// Crops per forward pass (each counts twice with flip averaging).
    pub chunk: usize,
}

impl InferSettings {
    pub fn new(input_res: usize, pairs: FlipPairs) -> Self {
        InferSettings { input_res, pairs, flip_average: true, refine: false, chunk: 16 }
    }
}

/// Image-space keypoints with the decoded heatmap peak of each joint.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection<T> {
    pub keypoints: KeypointSet,
    pub scores: Vec<T>,
}

pub fn infer<T: Scalar, M: HeatmapModel<T> + ?Sized>(
    model: &mut M,
    image: &Tensor<T>,
    person: &PersonDescriptor,
    settings: &InferSettings,
) -> Result<Detection<T>> {
    Ok(infer_batch(model, &[(image, *person)], settings)?.remove(0))
}

/// As [`infer`] for many people, batching forward passes.
pub fn infer_batch<T: Scalar, M: HeatmapModel<T> + ?Sized>(
    model: &mut M,
    items: &[(&Tensor<T>, PersonDescriptor)],
    settings: &InferSettings,
) -> Result<Vec<Detection<T>>> {
    let res = settings.input_res;
    contract!(res % 4 == 0 && res > 0, "input resolution {res} must be a positive multiple of 4");
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(settings.chunk.max(1)) {
        let mut crops = Vec::new();
        let mut transforms = Vec::new();
        for (image, person) in chunk {
            let s = image.shape();
            contract!(s.len() == 3 && s[0] == 3, "image must be [3,H,W], got {s:?}");
            let t = CropTransform::new(person, (s[2], s[1]), res, res / 4, 0.0, 1.0, false)?;
            crops.push(t.crop(image)?);
            if settings.flip_average {
                let mirrored = CropTransform::new(person, (s[2], s[1]), res, res / 4, 0.0, 1.0, true)?;
                crops.push(mirrored.crop(image)?);
            }
            transforms.push(t);
        }
        let heat = model.predict(&Tensor::stack(&crops)?)?;
        let hs = heat.shape();
        contract!(hs.len() == 4 && hs[0] == crops.len() && hs[2] == res / 4 && hs[3] == res / 4, "model returned heatmaps of shape {hs:?}");
        let per = if settings.flip_average { 2 } else { 1 };
        for (i, t) in transforms.iter().enumerate() {
            let mut maps = heat.index0(per * i)?;
            if settings.flip_average {
                maps = flip_average(&maps, &heat.index0(per * i + 1)?, &settings.pairs)?;
            }
            let (mut kps, scores) = decode_argmax(&maps)?;
            if settings.refine {
                kps = refine_quarter_offset(&maps, &kps)?;
            }
            out.push(Detection { keypoints: heatmap_to_image_coords(&kps, t)?, scores });
        }
    }
    Ok(out)
}

/// Predictions for every sample, at its annotated person box.
pub fn predict_samples<T: Scalar, M: HeatmapModel<T> + ?Sized>(model: &mut M, samples: &[Sample<T>], settings: &InferSettings) -> Result<Vec<KeypointSet>> {
    let items = samples.iter().map(|s| Ok((&s.image, s.record.person()?))).collect::<Result<Vec<_>>>()?;
    Ok(infer_batch(model, &items, settings)?.into_iter().map(|d| d.keypoints).collect())
}

/// PCK (or PCKh) of `model` on `samples` at every threshold of `grid`.
pub fn evaluate<T: Scalar, M: HeatmapModel<T> + ?Sized>(
    model: &mut M,
    samples: &[Sample<T>],
    settings: &InferSettings,
    grid: &[f64],
    reference: Reference,
) -> Result<Vec<PckResult>> {
    let preds = predict_samples(model, samples, settings)?;
    let gts: Vec<_> = samples.iter().map(|s| s.record.clone()).collect();
    pck_curve(&preds, &gts, grid, reference)
}
