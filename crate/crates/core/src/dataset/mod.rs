//! Synthetic stick-figure corpora, annotation files and PCK evaluation.

mod annotation;
mod metrics;
mod synth;

pub use annotation::{
    image_to_tensor, load_dataset, load_image, read_annotations, save_png, split_of, write_annotations, AnnotationRecord,
    Sample, Split, ANNOTATION_FILE,
};
pub use metrics::{default_grid, pck, pck_curve, pck_table, pckh, schema_for, PckResult, Reference, CSV_HEADER};
pub use synth::{
    generate_dataset, generate_samples, write_dataset, Background, Figure, Grating, Occluder, Pose, Scene, SceneSpec,
    SyntheticSceneConfig,
};
