use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::codec::{Keypoint, KeypointSet, PersonDescriptor, Space};
use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// File name of the annotation list inside a dataset directory.
pub const ANNOTATION_FILE: &str = "annotations.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ground truth for one person in one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    /// Image path relative to the annotation file.
    pub image: String,
    #[serde(with = "joint_triples")]
    pub joints: Vec<Keypoint>,
    pub center: [f64; 2],
    pub scale: f64,
    pub head_size: f64,
    pub split: Split,
}

mod joint_triples {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::codec::Keypoint;

    pub fn serialize<S: Serializer>(joints: &[Keypoint], s: S) -> Result<S::Ok, S::Error> {
        let triples: Vec<(f64, f64, u8)> = joints.iter().map(|k| (k.x, k.y, u8::from(k.visible))).collect();
        triples.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Keypoint>, D::Error> {
        let triples = Vec::<(f64, f64, u8)>::deserialize(d)?;
        Ok(triples.into_iter().map(|(x, y, v)| Keypoint::new(x, y, v != 0)).collect())
    }
}

impl AnnotationRecord {
    pub fn validate(&self, num_joints: usize) -> Result<()> {
        contract!(self.head_size > 0.0 && self.head_size.is_finite(), "head size must be positive, got {}", self.head_size);
        contract!(self.joints.len() == num_joints, "record has {} joints, expected {num_joints}", self.joints.len());
        contract!(self.joints.iter().all(|k| k.x.is_finite() && k.y.is_finite()), "joint coordinates must be finite");
        PersonDescriptor::new(self.center, self.scale)?;
        Ok(())
    }

    pub fn person(&self) -> Result<PersonDescriptor> {
        PersonDescriptor::new(self.center, self.scale)
    }

    /// Joints in the frame of a `width x height` image; visible joints off
    /// the image are hidden.
    pub fn keypoints(&self, width: usize, height: usize) -> KeypointSet {
        KeypointSet::new_hiding_outside(self.joints.clone(), Space::Image { width, height })
    }
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            what: "annotation",
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// 8-bit RGB to a `[3,H,W]` tensor in `[0,1]`.
pub fn image_to_tensor<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut v = vec![T::zero(); 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            v[(c * h + y as usize) * w + x as usize] = T::of(f64::from(px[c]) / 255.0);
        }
    }
    Tensor::from_vec(&[3, h, w], v).expect("image dimensions are positive")
}

pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    Ok(image_to_tensor(&img.to_rgb8()))
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// An image with its annotation.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub image: Tensor<T>,
    pub record: AnnotationRecord,
}

impl<T: Scalar> Sample<T> {
    pub fn image_size(&self) -> (usize, usize) {
        (self.image.shape()[2], self.image.shape()[1])
    }

    pub fn keypoints(&self) -> KeypointSet {
        let (w, h) = self.image_size();
        self.record.keypoints(w, h)
    }
}

/// Reads `annotations.jsonl` from `dir` with every referenced image.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Vec<Sample<T>>> {
    let records = read_annotations(&dir.join(ANNOTATION_FILE))?;
    records
        .into_iter()
        .map(|record| {
            let path: PathBuf = dir.join(&record.image);
            Ok(Sample { image: load_image(&path)?, record })
        })
        .collect()
}

/// Samples tagged `split`.
pub fn split_of<T: Clone>(samples: &[Sample<T>], split: Split) -> Vec<Sample<T>> {
    samples.iter().filter(|s| s.record.split == split).cloned().collect()
}
