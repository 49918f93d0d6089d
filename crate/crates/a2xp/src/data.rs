//! Multi-domain datasets: folder loading, leave-one-domain-out splits, and
//! a procedural shapes corpus with style transforms for desk-scale runs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Image, Shape3};
use crate::util::derive_seed;

/// Labeled images of one domain with a train/val partition.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    name: String,
    samples: Vec<(Image, usize)>,
    num_classes: usize,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
}

impl DomainDataset {
    /// Builds a dataset and assigns a stratified train/val split: within
    /// each class the last `round((1-ratio)*n)` samples (in stored order)
    /// become validation.
    pub fn new(
        name: impl Into<String>,
        samples: Vec<(Image, usize)>,
        num_classes: usize,
        train_ratio: f64,
    ) -> Result<Self> {
        let name = name.into();
        if samples.is_empty() {
            return Err(Error::EmptyDataset(format!("domain '{name}'")));
        }
        if !(0.0..=1.0).contains(&train_ratio) {
            return Err(Error::config("train_ratio", "must be in [0, 1]"));
        }
        let shape = samples[0].0.shape();
        for (img, label) in &samples {
            if img.shape() != shape {
                return Err(Error::shape(shape.to_string(), img.shape().to_string()));
            }
            if *label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: *label,
                    num_classes,
                });
            }
        }
        let (train_idx, val_idx) = stratified_split(&samples, num_classes, train_ratio);
        Ok(DomainDataset {
            name,
            samples,
            num_classes,
            train_idx,
            val_idx,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> Shape3 {
        self.samples[0].0.shape()
    }

    pub fn sample(&self, idx: usize) -> (&Image, usize) {
        let (img, label) = &self.samples[idx];
        (img, *label)
    }

    pub fn samples(&self) -> &[(Image, usize)] {
        &self.samples
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn val_indices(&self) -> &[usize] {
        &self.val_idx
    }

    pub fn counts_per_class(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for (_, label) in &self.samples {
            counts[*label] += 1;
        }
        counts
    }

    /// Images and labels for a list of indices, cloned into batch form.
    pub fn gather(&self, indices: &[usize]) -> (Vec<Image>, Vec<usize>) {
        let imgs = indices.iter().map(|&i| self.samples[i].0.clone()).collect();
        let labels = indices.iter().map(|&i| self.samples[i].1).collect();
        (imgs, labels)
    }

    /// Sha256 over the exact value bytes of all samples and labels.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (img, label) in &self.samples {
            for v in img.data() {
                hasher.update(v.to_le_bytes());
            }
            hasher.update((*label as u64).to_le_bytes());
        }
        hex_digest(hasher)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn stratified_split(
    samples: &[(Image, usize)],
    num_classes: usize,
    train_ratio: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, (_, label)) in samples.iter().enumerate() {
        per_class[*label].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class_idx in per_class {
        let n = class_idx.len();
        let n_val = ((1.0 - train_ratio) * n as f64).round() as usize;
        let n_train = n - n_val;
        train.extend_from_slice(&class_idx[..n_train]);
        val.extend_from_slice(&class_idx[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// One leave-one-domain-out split: a held-out target and the remaining
/// domains as sources (input order preserved).
#[derive(Debug, Clone)]
pub struct LodoSplit<'a> {
    pub target: &'a DomainDataset,
    pub sources: Vec<&'a DomainDataset>,
}

impl<'a> LodoSplit<'a> {
    pub fn source_names(&self) -> Vec<String> {
        self.sources.iter().map(|d| d.name().to_string()).collect()
    }
}

impl<'a> std::fmt::Display for LodoSplit<'a> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "target={} sources={:?}", self.target.name(), self.source_names())
    }
}

/// Every domain becomes the target exactly once; source order matches the
/// input order minus the target.
pub fn lodo_splits(domains: &[DomainDataset]) -> Vec<LodoSplit<'_>> {
    domains
        .iter()
        .enumerate()
        .map(|(t, target)| LodoSplit {
            target,
            sources: domains
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, d)| d)
                .collect(),
        })
        .collect()
}

/// Deterministic style transforms that turn one base corpus into styled
/// domains. Geometry is preserved so class identity survives every style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StyleTransform {
    /// Photo-like: pixels pass through unchanged.
    Identity,
    /// Art-like: rotate hue and rescale saturation in HSV space.
    HueShift { degrees: f64, sat_scale: f64 },
    /// Cartoon-like: quantize every channel to `levels` fixed values.
    Quantize { levels: u32 },
    /// Sketch-like: binarized gradient magnitude of the gray image.
    EdgeMap { threshold: f64 },
}

impl StyleTransform {
    pub fn apply(&self, img: &Image) -> Image {
        match self {
            StyleTransform::Identity => img.clone(),
            StyleTransform::HueShift { degrees, sat_scale } => hue_shift(img, *degrees, *sat_scale),
            StyleTransform::Quantize { levels } => quantize(img, *levels),
            StyleTransform::EdgeMap { threshold } => edge_map(img, *threshold),
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r1 + m, g1 + m, b1 + m)
}

fn hue_shift(img: &Image, degrees: f64, sat_scale: f64) -> Image {
    let s = img.shape();
    assert_eq!(s.c, 3, "hue shift needs RGB");
    let mut out = Image::zeros(s);
    for y in 0..s.h {
        for x in 0..s.w {
            let (h, sat, v) = rgb_to_hsv(img.get(0, y, x), img.get(1, y, x), img.get(2, y, x));
            let (r, g, b) = hsv_to_rgb(h + degrees, (sat * sat_scale).clamp(0.0, 1.0), v);
            out.set(0, y, x, r.clamp(0.0, 1.0));
            out.set(1, y, x, g.clamp(0.0, 1.0));
            out.set(2, y, x, b.clamp(0.0, 1.0));
        }
    }
    out
}

fn quantize(img: &Image, levels: u32) -> Image {
    let levels = levels.max(2) as f64;
    let mut out = img.clone();
    for v in out.data_mut() {
        let clamped = v.clamp(0.0, 1.0);
        *v = (clamped * (levels - 1.0)).round() / (levels - 1.0);
    }
    out
}

fn edge_map(img: &Image, threshold: f64) -> Image {
    let s = img.shape();
    let mut gray = vec![0.0; s.h * s.w];
    for y in 0..s.h {
        for x in 0..s.w {
            let mut acc = 0.0;
            for c in 0..s.c {
                acc += img.get(c, y, x);
            }
            gray[y * s.w + x] = acc / s.c as f64;
        }
    }
    let mut out = Image::zeros(s);
    for y in 0..s.h {
        for x in 0..s.w {
            let gx = if x + 1 < s.w {
                gray[y * s.w + x + 1] - gray[y * s.w + x]
            } else {
                0.0
            };
            let gy = if y + 1 < s.h {
                gray[(y + 1) * s.w + x] - gray[y * s.w + x]
            } else {
                0.0
            };
            let mag = (gx * gx + gy * gy).sqrt();
            let v = if mag > threshold { 1.0 } else { 0.0 };
            for c in 0..s.c {
                out.set(c, y, x, v);
            }
        }
    }
    out
}

/// Standard four-style recipe mirroring photo/art/cartoon/sketch axes.
pub fn standard_styles() -> Vec<(String, StyleTransform)> {
    vec![
        ("photo".into(), StyleTransform::Identity),
        (
            "art".into(),
            StyleTransform::HueShift {
                degrees: 180.0,
                sat_scale: 1.8,
            },
        ),
        ("cartoon".into(), StyleTransform::Quantize { levels: 4 }),
        ("sketch".into(), StyleTransform::EdgeMap { threshold: 0.15 }),
    ]
}

/// Stronger shifts for the harder variant: saturation collapse, binary
/// quantization, sparse edges.
pub fn hard_styles() -> Vec<(String, StyleTransform)> {
    vec![
        ("photo".into(), StyleTransform::Identity),
        (
            "art".into(),
            StyleTransform::HueShift {
                degrees: 220.0,
                sat_scale: 0.35,
            },
        ),
        ("cartoon".into(), StyleTransform::Quantize { levels: 2 }),
        ("sketch".into(), StyleTransform::EdgeMap { threshold: 0.30 }),
    ]
}

/// Applies each style to every base sample, producing one domain per style.
/// Labels are preserved. Output is a pure function of (base, styles, seed):
/// the seed only drives the per-domain sample shuffle ahead of splitting.
pub fn make_synthetic_domains(
    base: &[(Image, usize)],
    styles: &[(String, StyleTransform)],
    num_classes: usize,
    train_ratio: f64,
    seed: u64,
) -> Result<Vec<DomainDataset>> {
    if styles.len() < 2 {
        return Err(Error::config("styles", "need at least 2 styles"));
    }
    let mut out = Vec::with_capacity(styles.len());
    for (i, (name, style)) in styles.iter().enumerate() {
        let mut samples: Vec<(Image, usize)> = base
            .iter()
            .map(|(img, label)| (style.apply(img), *label))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "domain_shuffle", i as u64));
        samples.shuffle(&mut rng);
        out.push(DomainDataset::new(name.clone(), samples, num_classes, train_ratio)?);
    }
    Ok(out)
}

/// Number of distinct procedural shape classes available.
pub const SHAPE_CLASS_COUNT: usize = 7;

/// Names of the shape classes in label order.
pub fn shape_class_names() -> Vec<&'static str> {
    vec![
        "circle", "ring", "square", "triangle", "plus", "diamond", "bars",
    ]
}

/// Procedurally rasterized shapes: `per_class` images for each of
/// `classes` (at most 7) shape kinds at `size` x `size`, RGB in [0, 1].
/// Position, scale and colors jitter per image from the seeded stream.
pub fn shapes_base_set(
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<(Image, usize)>> {
    if classes < 2 || classes > SHAPE_CLASS_COUNT {
        return Err(Error::config(
            "classes",
            format!("must be in [2, {SHAPE_CLASS_COUNT}]"),
        ));
    }
    if size < 16 {
        return Err(Error::config("size", "must be >= 16"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes * per_class);
    for label in 0..classes {
        for _ in 0..per_class {
            out.push((draw_shape(label, size, &mut rng), label));
        }
    }
    Ok(out)
}

fn draw_shape(label: usize, size: usize, rng: &mut ChaCha8Rng) -> Image {
    let s = Shape3::new(3, size, size);
    let mut img = Image::zeros(s);
    let bg: [f64; 3] = [
        rng.gen_range(0.05..0.35),
        rng.gen_range(0.05..0.35),
        rng.gen_range(0.05..0.35),
    ];
    let fg: [f64; 3] = [
        rng.gen_range(0.55..1.0),
        rng.gen_range(0.55..1.0),
        rng.gen_range(0.55..1.0),
    ];
    let half = size as f64 / 2.0;
    let cx = half + rng.gen_range(-3.0..3.0);
    let cy = half + rng.gen_range(-3.0..3.0);
    let r = rng.gen_range(size as f64 * 0.22..size as f64 * 0.34);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let inside = match label {
                0 => dx * dx + dy * dy <= r * r,
                1 => {
                    let d = (dx * dx + dy * dy).sqrt();
                    (d - r).abs() <= 1.8
                }
                2 => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
                3 => dy >= -r && dy <= r && dx.abs() <= (dy + r) * 0.5,
                4 => (dx.abs() <= r * 0.3 && dy.abs() <= r) || (dy.abs() <= r * 0.3 && dx.abs() <= r),
                5 => dx.abs() + dy.abs() <= r,
                6 => {
                    dx.abs() <= r * 0.9
                        && dy.abs() <= r * 0.9
                        && (((dy + r * 0.9) / 4.0).floor() as i64) % 2 == 0
                }
                _ => unreachable!("shape label out of range"),
            };
            let color = if inside { &fg } else { &bg };
            for c in 0..3 {
                img.set(c, y, x, color[c]);
            }
        }
    }
    img
}

/// Clones the training-split samples of all given domains into one pool,
/// in domain order then index order.
pub fn pool_train_samples(domains: &[&DomainDataset]) -> Vec<(Image, usize)> {
    let mut pool = Vec::new();
    for d in domains {
        for &i in d.train_indices() {
            let (img, label) = d.sample(i);
            pool.push((img.clone(), label));
        }
    }
    pool
}

/// Mini-batch index stream: shuffled epochs over a fixed index set; the
/// final batch of an epoch may be short, then the next epoch reshuffles.
pub struct EpochSampler {
    indices: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(indices: Vec<usize>, seed: u64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset("sampler over empty index set".into()));
        }
        let mut s = EpochSampler {
            indices,
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.indices.shuffle(&mut s.rng);
        Ok(s)
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        if self.pos >= self.indices.len() {
            self.indices.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + batch_size).min(self.indices.len());
        let batch = self.indices[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// JSON manifest describing a loaded or generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub image_shape: Shape3,
    pub num_classes: usize,
    pub domains: Vec<DomainManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainManifest {
    pub name: String,
    pub counts_per_class: Vec<usize>,
    pub n_train: usize,
    pub n_val: usize,
    pub checksum: String,
}

pub fn dataset_manifest(domains: &[DomainDataset]) -> DatasetManifest {
    DatasetManifest {
        image_shape: domains[0].image_shape(),
        num_classes: domains[0].num_classes(),
        domains: domains
            .iter()
            .map(|d| DomainManifest {
                name: d.name().to_string(),
                counts_per_class: d.counts_per_class(),
                n_train: d.train_indices().len(),
                n_val: d.val_indices().len(),
                checksum: d.checksum(),
            })
            .collect(),
    }
}

/// Loads a PACS-style folder layout: `root/<domain>/<class>/<image files>`.
/// Class names sort lexicographically into label indices; every domain must
/// carry the same class set.
pub fn load_folder_dataset(root: &Path, train_ratio: f64) -> Result<Vec<DomainDataset>> {
    let mut domain_dirs = list_dirs(root)?;
    domain_dirs.sort();
    if domain_dirs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no domain directories under {}",
            root.display()
        )));
    }
    // Class set from the first domain, then verified everywhere.
    let mut reference_classes: Option<Vec<String>> = None;
    let mut domains = Vec::new();
    for domain in &domain_dirs {
        let dpath = root.join(domain);
        let mut classes = list_dirs(&dpath)?;
        classes.sort();
        match &reference_classes {
            None => reference_classes = Some(classes.clone()),
            Some(expected) => {
                if &classes != expected {
                    return Err(Error::InconsistentClasses {
                        domain: domain.clone(),
                        detail: format!("has {classes:?}, expected {expected:?}"),
                    });
                }
            }
        }
        let class_names = reference_classes.as_ref().unwrap();
        let mut samples = Vec::new();
        let mut shape: Option<Shape3> = None;
        for (label, class) in class_names.iter().enumerate() {
            let cpath = dpath.join(class);
            let mut files = list_files(&cpath)?;
            files.sort();
            for file in files {
                let fpath = cpath.join(&file);
                let img = load_image_file(&fpath)?;
                match shape {
                    None => shape = Some(img.shape()),
                    Some(s) => {
                        if img.shape() != s {
                            return Err(Error::shape(
                                s.to_string(),
                                format!("{} in {}", img.shape(), fpath.display()),
                            ));
                        }
                    }
                }
                samples.push((img, label));
            }
        }
        domains.push(DomainDataset::new(
            domain.clone(),
            samples,
            class_names.len(),
            train_ratio,
        )?);
    }
    Ok(domains)
}

fn list_dirs(path: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(out)
}

fn list_files(path: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.path().is_file() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(out)
}

fn load_image_file(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: format!("unreadable image: {e}"),
    })?;
    let rgb = dynimg.to_rgb8();
    let (w, h) = rgb.dimensions();
    let shape = Shape3::new(3, h as usize, w as usize);
    let mut img = Image::zeros(shape);
    for y in 0..h as usize {
        for x in 0..w as usize {
            let px = rgb.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                img.set(c, y, x, px.0[c] as f64 / 255.0);
            }
        }
    }
    Ok(img)
}
