use std::path::Path;

use image::{Rgb, RgbImage};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::annotation::{image_to_tensor, save_png, write_annotations, AnnotationRecord, Sample, Split, ANNOTATION_FILE};
use crate::codec::{JointSchema, Keypoint, PersonDescriptor};
use crate::error::{contract, Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Scene sampling ranges. Angles are in degrees; limb angles are measured
/// from the torso's downward axis, positive away from the body's midline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneConfig {
    pub schema: JointSchema,
    pub image_width: usize,
    pub image_height: usize,
    /// Standing height of the figure in pixels.
    pub figure_height: [f64; 2],
    /// Per-segment multiplier on the reference proportions.
    pub limb_length_jitter: [f64; 2],
    pub limb_thickness: [f64; 2],
    pub torso_lean: [f64; 2],
    pub head_tilt: [f64; 2],
    pub upper_arm_angle: [f64; 2],
    /// Forearm angle relative to the upper arm.
    pub elbow_bend: [f64; 2],
    pub thigh_angle: [f64; 2],
    /// Shin angle relative to the thigh.
    pub knee_bend: [f64; 2],
    /// Inclusive range of occluder rectangles per scene.
    pub occluders: [usize; 2],
    /// Occluder side lengths as a fraction of figure height.
    pub occluder_size: [f64; 2],
    /// Adds a second, unannotated figure next to the main one.
    pub distractor: bool,
    pub texture_seed: u64,
    /// Person box side over the figure's larger bounding-box side.
    pub crop_margin: f64,
    /// Number of trailing scenes tagged as held out.
    pub held_out: usize,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        SyntheticSceneConfig {
            schema: JointSchema::Lsp14,
            image_width: 128,
            image_height: 128,
            figure_height: [70.0, 100.0],
            limb_length_jitter: [0.9, 1.1],
            limb_thickness: [2.5, 4.5],
            torso_lean: [-10.0, 10.0],
            head_tilt: [-15.0, 15.0],
            upper_arm_angle: [15.0, 150.0],
            elbow_bend: [-45.0, 45.0],
            thigh_angle: [0.0, 35.0],
            knee_bend: [-15.0, 25.0],
            occluders: [0, 0],
            occluder_size: [0.15, 0.35],
            distractor: false,
            texture_seed: 0,
            crop_margin: 1.2,
            held_out: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(Error::Config(format!("{name} range {r:?} must be ordered within [{lo}, {hi}]")));
    }
    Ok(())
}

impl SyntheticSceneConfig {
    /// A corpus where most scenes carry one to three occluders.
    pub fn occluder_heavy() -> Self {
        SyntheticSceneConfig { occluders: [1, 3], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width < 32 || self.image_height < 32 {
            return Err(Error::Config("images must be at least 32x32".into()));
        }
        let max_h = self.image_height.min(self.image_width) as f64;
        check_range("figure_height", self.figure_height, 16.0, max_h)?;
        check_range("limb_length_jitter", self.limb_length_jitter, 0.5, 1.5)?;
        check_range("limb_thickness", self.limb_thickness, 1.0, 12.0)?;
        check_range("torso_lean", self.torso_lean, -30.0, 30.0)?;
        check_range("head_tilt", self.head_tilt, -45.0, 45.0)?;
        check_range("upper_arm_angle", self.upper_arm_angle, 0.0, 180.0)?;
        check_range("elbow_bend", self.elbow_bend, -60.0, 120.0)?;
        check_range("thigh_angle", self.thigh_angle, -10.0, 60.0)?;
        check_range("knee_bend", self.knee_bend, -30.0, 60.0)?;
        check_range("occluder_size", self.occluder_size, 0.01, 1.0)?;
        if self.occluders[0] > self.occluders[1] {
            return Err(Error::Config(format!("occluder count range {:?} is not ordered", self.occluders)));
        }
        if !(self.crop_margin >= 1.0 && self.crop_margin <= 3.0) {
            return Err(Error::Config(format!("crop_margin {} must lie in [1, 3]", self.crop_margin)));
        }
        Ok(())
    }
}

/// Joint angles of one figure, in degrees; `[right, left]` per limb.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub lean: f64,
    pub head_tilt: f64,
    pub upper_arm: [f64; 2],
    pub elbow: [f64; 2],
    pub thigh: [f64; 2],
    pub knee: [f64; 2],
}

impl Pose {
    pub fn sample(cfg: &SyntheticSceneConfig, rng: &mut RngStream) -> Self {
        let mut u = |r: [f64; 2]| rng.uniform(r[0], r[1]);
        Pose {
            lean: u(cfg.torso_lean),
            head_tilt: u(cfg.head_tilt),
            upper_arm: [u(cfg.upper_arm_angle), u(cfg.upper_arm_angle)],
            elbow: [u(cfg.elbow_bend), u(cfg.elbow_bend)],
            thigh: [u(cfg.thigh_angle), u(cfg.thigh_angle)],
            knee: [u(cfg.knee_bend), u(cfg.knee_bend)],
        }
    }
}

type P = [f64; 2];

fn add(a: P, b: P) -> P {
    [a[0] + b[0], a[1] + b[1]]
}

fn lerp(a: P, b: P, t: f64) -> P {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Named body points of a posed figure in image coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub head_top: P,
    pub neck: P,
    /// `[right, left]` below.
    pub shoulder: [P; 2],
    pub elbow: [P; 2],
    pub wrist: [P; 2],
    pub hip: [P; 2],
    pub knee: [P; 2],
    pub ankle: [P; 2],
    pub thickness: f64,
    pub color: [f64; 3],
}

impl Figure {
    /// Poses a figure of standing height `height` with its neck at the
    /// origin; `lengths` scales the head, torso, upper arm, forearm, thigh
    /// and shin of each side.
    pub fn build(pose: &Pose, height: f64, lengths: &[[f64; 2]; 6], thickness: f64, color: [f64; 3]) -> Self {
        let (s, c) = pose.lean.to_radians().sin_cos();
        let rot = |p: P| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        let dir = |side: f64, deg: f64| {
            let (si, co) = deg.to_radians().sin_cos();
            [side * si, co]
        };
        let h = height;
        let head_len = 0.13 * h * lengths[0][0];
        let torso = 0.32 * h * lengths[1][0];
        let (sh_half, drop, hip_half) = (0.12 * h, 0.03 * h, 0.08 * h);
        let (ts, tc) = pose.head_tilt.to_radians().sin_cos();
        let mut shoulder = [[0.0; 2]; 2];
        let mut elbow = [[0.0; 2]; 2];
        let mut wrist = [[0.0; 2]; 2];
        let mut hip = [[0.0; 2]; 2];
        let mut knee = [[0.0; 2]; 2];
        let mut ankle = [[0.0; 2]; 2];
        for (i, side) in [-1.0, 1.0].into_iter().enumerate() {
            let scale = |k: usize, base: f64| base * h * lengths[k][i];
            shoulder[i] = [side * sh_half, drop];
            elbow[i] = add(shoulder[i], scale_vec(dir(side, pose.upper_arm[i]), scale(2, 0.17)));
            wrist[i] = add(elbow[i], scale_vec(dir(side, pose.upper_arm[i] + pose.elbow[i]), scale(3, 0.15)));
            hip[i] = [side * hip_half, torso];
            knee[i] = add(hip[i], scale_vec(dir(side, pose.thigh[i]), scale(4, 0.25)));
            ankle[i] = add(knee[i], scale_vec(dir(side, pose.thigh[i] + pose.knee[i]), scale(5, 0.25)));
        }
        let map2 = |a: [P; 2]| [rot(a[0]), rot(a[1])];
        Figure {
            head_top: rot([ts * head_len, -tc * head_len]),
            neck: [0.0, 0.0],
            shoulder: map2(shoulder),
            elbow: map2(elbow),
            wrist: map2(wrist),
            hip: map2(hip),
            knee: map2(knee),
            ankle: map2(ankle),
            thickness,
            color,
        }
    }

    fn points_mut(&mut self) -> Vec<&mut P> {
        let mut v = vec![&mut self.head_top, &mut self.neck];
        for arr in [&mut self.shoulder, &mut self.elbow, &mut self.wrist, &mut self.hip, &mut self.knee, &mut self.ankle] {
            let [a, b] = arr;
            v.push(a);
            v.push(b);
        }
        v
    }

    pub fn translate(&mut self, d: P) {
        for p in self.points_mut() {
            *p = add(*p, d);
        }
    }

    pub fn hip_center(&self) -> P {
        lerp(self.hip[0], self.hip[1], 0.5)
    }

    fn head_disc(&self) -> (P, f64) {
        let len = (self.head_top[0] - self.neck[0]).hypot(self.head_top[1] - self.neck[1]);
        (lerp(self.neck, self.head_top, 0.6), 0.4 * len)
    }

    /// Joint coordinates in `schema` order.
    pub fn joints(&self, schema: JointSchema) -> Vec<P> {
        let [r, l] = [0, 1];
        match schema {
            JointSchema::Lsp14 => vec![
                self.ankle[r], self.knee[r], self.hip[r], self.hip[l], self.knee[l], self.ankle[l], self.wrist[r],
                self.elbow[r], self.shoulder[r], self.shoulder[l], self.elbow[l], self.wrist[l], self.neck,
                self.head_top,
            ],
            JointSchema::Mpii16 => vec![
                self.ankle[r],
                self.knee[r],
                self.hip[r],
                self.hip[l],
                self.knee[l],
                self.ankle[l],
                self.hip_center(),
                lerp(self.shoulder[r], self.shoulder[l], 0.5),
                lerp(self.neck, self.head_top, 0.25),
                self.head_top,
                self.wrist[r],
                self.elbow[r],
                self.shoulder[r],
                self.shoulder[l],
                self.elbow[l],
                self.wrist[l],
            ],
        }
    }

    /// Rendered head-segment length.
    pub fn head_size(&self) -> f64 {
        (self.head_top[0] - self.neck[0]).hypot(self.head_top[1] - self.neck[1])
    }

    /// Axis-aligned extent `(min, max)` including stroke width.
    pub fn bounds(&self) -> (P, P) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let (hc, hr) = self.head_disc();
        let pad = self.thickness;
        let mut pts: Vec<(P, f64)> = self.joints(JointSchema::Lsp14).into_iter().map(|p| (p, pad)).collect();
        pts.push((hc, hr));
        for (p, r) in pts {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a] - r);
                hi[a] = hi[a].max(p[a] + r);
            }
        }
        (lo, hi)
    }

    fn segments(&self) -> Vec<(P, P, f64)> {
        let t = self.thickness;
        let mut v = vec![
            (self.neck, self.hip_center(), 1.6 * t),
            (self.shoulder[0], self.shoulder[1], t),
            (self.hip[0], self.hip[1], t),
            (self.neck, self.head_top, 0.8 * t),
        ];
        for i in 0..2 {
            v.push((self.shoulder[i], self.elbow[i], t));
            v.push((self.elbow[i], self.wrist[i], 0.85 * t));
            v.push((self.hip[i], self.knee[i], 1.2 * t));
            v.push((self.knee[i], self.ankle[i], t));
        }
        v
    }

    /// Radius of the disc drawn at each joint.
    pub fn marker_radius(&self) -> f64 {
        self.thickness
    }
}

fn scale_vec(v: P, s: f64) -> P {
    [v[0] * s, v[1] * s]
}

/// Axis-aligned rectangle drawn over the figure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Occluder {
    pub min: P,
    pub max: P,
    pub color: [f64; 3],
}

impl Occluder {
    pub fn contains(&self, p: P) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Oriented sinusoid added to the background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grating {
    pub freq: P,
    pub phase: f64,
    pub amplitude: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Background {
    pub base: [f64; 3],
    pub gratings: Vec<Grating>,
    pub noise_seed: u64,
    pub noise: f64,
}

/// Everything needed to render one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
    pub figure: Figure,
    pub distractor: Option<Figure>,
    pub occluders: Vec<Occluder>,
    pub background: Background,
}

fn contrasting_color(base: [f64; 3], rng: &mut RngStream) -> [f64; 3] {
    let mut c = [0.0; 3];
    for _ in 0..100 {
        c = [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)];
        let diff: f64 = c.iter().zip(&base).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
        if diff >= 0.25 {
            break;
        }
    }
    c
}

fn sample_figure(cfg: &SyntheticSceneConfig, rng: &mut RngStream, height: f64, bg: [f64; 3]) -> (Pose, Figure) {
    let pose = Pose::sample(cfg, rng);
    let mut lengths = [[1.0; 2]; 6];
    for l in lengths.iter_mut() {
        *l = [rng.uniform(cfg.limb_length_jitter[0], cfg.limb_length_jitter[1]), rng.uniform(cfg.limb_length_jitter[0], cfg.limb_length_jitter[1])];
    }
    let thickness = rng.uniform(cfg.limb_thickness[0], cfg.limb_thickness[1]);
    let color = contrasting_color(bg, rng);
    (pose, Figure::build(&pose, height, &lengths, thickness, color))
}

impl SceneSpec {
    pub fn sample(cfg: &SyntheticSceneConfig, rng: &mut RngStream, texture: &mut RngStream) -> Self {
        let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
        let base = [texture.uniform(0.2, 0.7), texture.uniform(0.2, 0.7), texture.uniform(0.2, 0.7)];
        let gratings = (0..3)
            .map(|_| {
                let f = texture.uniform(0.02, 0.15);
                let th = texture.uniform(0.0, std::f64::consts::PI);
                Grating {
                    freq: [f * th.cos(), f * th.sin()],
                    phase: texture.uniform(0.0, std::f64::consts::TAU),
                    amplitude: [texture.uniform(0.0, 0.1), texture.uniform(0.0, 0.1), texture.uniform(0.0, 0.1)],
                }
            })
            .collect();
        let background = Background { base, gratings, noise_seed: texture.next_u64(), noise: 0.04 };

        let fh = rng.uniform(cfg.figure_height[0], cfg.figure_height[1]);
        let (pose, mut figure) = sample_figure(cfg, rng, fh, base);
        let (lo, hi) = figure.bounds();
        let place = |lo: f64, hi: f64, extent: f64, rng: &mut RngStream| {
            let size = hi - lo;
            if size >= extent - 1.0 {
                (extent - 1.0) / 2.0 - (lo + hi) / 2.0
            } else {
                rng.uniform(-lo, extent - 1.0 - hi)
            }
        };
        let dx = place(lo[0], hi[0], w, rng);
        let dy = place(lo[1], hi[1], h, rng);
        figure.translate([dx, dy]);

        let distractor = cfg.distractor.then(|| {
            let dh = fh * rng.uniform(0.6, 0.9);
            let (_, mut d) = sample_figure(cfg, rng, dh, base);
            let side = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            let off = [side * rng.uniform(0.35, 0.6) * fh, rng.uniform(-0.1, 0.1) * fh];
            d.translate(add(figure.neck, off));
            d
        });

        let count = cfg.occluders[0] + rng.below(cfg.occluders[1] - cfg.occluders[0] + 1);
        let joints = figure.joints(JointSchema::Lsp14);
        let occluders = (0..count)
            .map(|_| {
                let anchor = joints[rng.below(joints.len())];
                let sw = rng.uniform(cfg.occluder_size[0], cfg.occluder_size[1]) * fh;
                let sh = rng.uniform(cfg.occluder_size[0], cfg.occluder_size[1]) * fh;
                let cx = anchor[0] + rng.uniform(-0.5, 0.5) * sw;
                let cy = anchor[1] + rng.uniform(-0.5, 0.5) * sh;
                Occluder { min: [cx - sw / 2.0, cy - sh / 2.0], max: [cx + sw / 2.0, cy + sh / 2.0], color: contrasting_color(base, rng) }
            })
            .collect();
        SceneSpec { width: cfg.image_width, height: cfg.image_height, pose, figure, distractor, occluders, background }
    }

    /// Fraction of the marker disc around `p` hidden by occluders, by
    /// sampling a regular grid over the disc.
    pub fn covered_fraction(&self, p: P) -> f64 {
        const N: usize = 41;
        let r = self.figure.marker_radius();
        let (mut inside, mut covered) = (0usize, 0usize);
        for i in 0..N {
            for j in 0..N {
                let q = [p[0] - r + 2.0 * r * (j as f64 + 0.5) / N as f64, p[1] - r + 2.0 * r * (i as f64 + 0.5) / N as f64];
                if (q[0] - p[0]).hypot(q[1] - p[1]) <= r {
                    inside += 1;
                    covered += usize::from(self.occluders.iter().any(|o| o.contains(q)));
                }
            }
        }
        covered as f64 / inside as f64
    }

    pub fn render(&self) -> RgbImage {
        let (w, h) = (self.width, self.height);
        let mut px = vec![[0.0f64; 3]; w * h];
        let bg = &self.background;
        let mut noise = RngStream::new(bg.noise_seed);
        for y in 0..h {
            for x in 0..w {
                let mut c = bg.base;
                for g in &bg.gratings {
                    let s = (std::f64::consts::TAU * (g.freq[0] * x as f64 + g.freq[1] * y as f64) + g.phase).sin();
                    for k in 0..3 {
                        c[k] += g.amplitude[k] * s;
                    }
                }
                let n = noise.uniform(-bg.noise, bg.noise);
                px[y * w + x] = [c[0] + n, c[1] + n, c[2] + n];
            }
        }
        if let Some(d) = &self.distractor {
            draw_figure(&mut px, w, h, d);
        }
        draw_figure(&mut px, w, h, &self.figure);
        for o in &self.occluders {
            let x0 = o.min[0].floor().max(0.0) as usize;
            let y0 = o.min[1].floor().max(0.0) as usize;
            for y in y0..h {
                for x in x0..w {
                    if o.contains([x as f64, y as f64]) {
                        px[y * w + x] = o.color;
                    }
                }
            }
        }
        let mut img = RgbImage::new(w as u32, h as u32);
        for (i, c) in px.iter().enumerate() {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel((i % w) as u32, (i / w) as u32, Rgb([q(c[0]), q(c[1]), q(c[2])]));
        }
        img
    }

    /// Annotation of the main figure; joints are invisible when more than
    /// half of their marker is covered or they leave the image.
    pub fn annotate(&self, schema: JointSchema, image: String, margin: f64, split: Split) -> AnnotationRecord {
        let (w, h) = (self.width as f64, self.height as f64);
        let joints = self
            .figure
            .joints(schema)
            .into_iter()
            .map(|p| {
                let inside = p[0] >= -0.5 && p[0] <= w - 0.5 && p[1] >= -0.5 && p[1] <= h - 0.5;
                Keypoint::new(p[0], p[1], inside && self.covered_fraction(p) <= 0.5)
            })
            .collect();
        let (lo, hi) = self.figure.bounds();
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        AnnotationRecord {
            image,
            joints,
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            scale: margin * side / PersonDescriptor::REFERENCE_PX,
            head_size: self.figure.head_size(),
            split,
        }
    }
}

fn draw_figure(px: &mut [[f64; 3]], w: usize, h: usize, f: &Figure) {
    let mut shapes: Vec<(P, P, f64, [f64; 3])> = f.segments().into_iter().map(|(a, b, t)| (a, b, t / 2.0, f.color)).collect();
    let (hc, hr) = f.head_disc();
    shapes.push((hc, hc, hr, f.color));
    let dark = f.color.map(|c| 0.55 * c);
    for p in f.joints(JointSchema::Lsp14) {
        shapes.push((p, p, f.marker_radius(), dark));
    }
    for (a, b, r, color) in shapes {
        let x0 = (a[0].min(b[0]) - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((a[0].max(b[0]) + r + 1.0).ceil().max(0.0) as usize).min(w - 1);
        let y0 = (a[1].min(b[1]) - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((a[1].max(b[1]) + r + 1.0).ceil().max(0.0) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = segment_distance([x as f64, y as f64], a, b);
                let alpha = (r + 0.5 - d).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    let c = &mut px[y * w + x];
                    for k in 0..3 {
                        c[k] = (1.0 - alpha) * c[k] + alpha * color[k];
                    }
                }
            }
        }
    }
}

fn segment_distance(p: P, a: P, b: P) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) };
    let q = lerp(a, b, t);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// A rendered scene with its annotation.
#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SceneSpec,
    pub image: RgbImage,
    pub record: AnnotationRecord,
}

/// Renders `n` scenes; scene `i` depends only on `(seed, i)` and the
/// configuration.
pub fn generate_dataset(cfg: &SyntheticSceneConfig, n: usize, seed: u64) -> Result<Vec<Scene>> {
    cfg.validate()?;
    contract!(n >= 1, "dataset size must be at least 1");
    contract!(cfg.held_out <= n, "{} held-out scenes requested from {n}", cfg.held_out);
    let root = RngStream::new(seed);
    let texture_root = RngStream::new(cfg.texture_seed);
    Ok((0..n)
        .map(|i| {
            let mut rng = root.derive(&[i as u64]);
            let mut texture = texture_root.derive(&[seed, i as u64]);
            let spec = SceneSpec::sample(cfg, &mut rng, &mut texture);
            let split = if i >= n - cfg.held_out { Split::Test } else { Split::Train };
            let record = spec.annotate(cfg.schema, format!("img_{i:05}.png"), cfg.crop_margin, split);
            Scene { image: spec.render(), spec, record }
        })
        .collect())
}

/// Writes every scene's PNG and the annotation list into `dir`.
pub fn write_dataset(dir: &Path, scenes: &[Scene]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in scenes {
        save_png(&dir.join(&s.record.image), &s.image)?;
    }
    let records: Vec<_> = scenes.iter().map(|s| s.record.clone()).collect();
    write_annotations(&dir.join(ANNOTATION_FILE), &records)
}

/// In-memory samples, pixel-identical to writing and reloading the corpus.
pub fn generate_samples<T: Scalar>(cfg: &SyntheticSceneConfig, n: usize, seed: u64) -> Result<Vec<Sample<T>>> {
    Ok(generate_dataset(cfg, n, seed)?
        .into_iter()
        .map(|s| Sample { image: image_to_tensor(&s.image), record: s.record })
        .collect())
}
