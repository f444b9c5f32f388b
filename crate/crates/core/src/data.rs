//! Datasets and shard assignment.
//!
//! Sources: IDX files (big-endian, the standard digit-dataset encoding) and a
//! seeded synthetic generator for fast tests. Node shards follow the non-IID
//! recipe: one dominant "main" class per node plus uniform supplemental draws
//! from the remaining classes, all disjoint across nodes.

use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::rng::{derive_seed, seed_rng};
use crate::{Error, Result, Scalar, Tensor};

/// Magic number of IDX image files (unsigned byte, 3 dimensions).
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of IDX label files (unsigned byte, 1 dimension).
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Class count of the digit datasets this crate targets.
pub const DIGIT_CLASSES: usize = 10;

/// Image side length of the digit datasets (square images).
pub const IMAGE_SIDE: usize = 28;

/// Labeled image set. Pixels live in `[0,1]`, labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    images: Tensor<T>,
    labels: Vec<u8>,
    classes: usize,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(images: Tensor<T>, labels: Vec<u8>, classes: usize) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 4 || shape[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "labeled set",
                expected: vec![labels.len(), IMAGE_SIDE, IMAGE_SIDE, 1],
                got: shape.to_vec(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidInput {
                context: "labeled set",
                detail: format!("label {bad} out of range for {classes} classes"),
            });
        }
        Ok(Self {
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    fn row_len(&self) -> usize {
        self.images.shape()[1..].iter().product()
    }

    /// Copies the rows at `indices` into a batch tensor plus labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<u8>)> {
        let row = self.row_len();
        let shape = self.images.shape();
        let mut data = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput {
                    context: "gather",
                    detail: format!("index {i} out of range for {} samples", self.len()),
                });
            }
            data.extend_from_slice(&self.images.data()[i * row..(i + 1) * row]);
            labels.push(self.labels[i]);
        }
        let batch = Tensor::new(vec![indices.len(), shape[1], shape[2], shape[3]], data)?;
        Ok((batch, labels))
    }

    /// Keeps only the first `n` samples (no-op when `n >= len`).
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        let row = self.row_len();
        let shape = self.images.shape().to_vec();
        let mut data = std::mem::replace(&mut self.images, Tensor::zeros(vec![0, 0, 0, 0])).into_data();
        data.truncate(n * row);
        self.images = Tensor::new(vec![n, shape[1], shape[2], shape[3]], data)
            .expect("truncated buffer stays consistent");
        self.labels.truncate(n);
    }

    /// Concatenates sets with identical image shape and class count.
    pub fn concat(sets: &[&LabeledSet<T>]) -> Result<Self> {
        let first = sets.first().ok_or(Error::EmptyInput("concat"))?;
        let tail_shape = &first.images.shape()[1..];
        let classes = first.classes;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut count = 0;
        for s in sets {
            if &s.images.shape()[1..] != tail_shape || s.classes != classes {
                return Err(Error::ShapeMismatch {
                    context: "labeled set concat",
                    expected: tail_shape.to_vec(),
                    got: s.images.shape()[1..].to_vec(),
                });
            }
            data.extend_from_slice(s.images.data());
            labels.extend_from_slice(&s.labels);
            count += s.len();
        }
        let shape = vec![count, tail_shape[0], tail_shape[1], tail_shape[2]];
        Ok(Self {
            images: Tensor::new(shape, data)?,
            labels,
            classes,
        })
    }

    /// Sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::DataFormat {
            path: path.display().to_string(),
            detail: format!("truncated header: need {end} bytes, file has {}", bytes.len()),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image/label file pair into a digit [`LabeledSet`]. Pixel
/// bytes are scaled to `[0,1]`; images must be 28x28 and labels below ten.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<LabeledSet<T>> {
    let img_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let img_err = |detail: String| Error::DataFormat {
        path: images_path.display().to_string(),
        detail,
    };
    let lbl_err = |detail: String| Error::DataFormat {
        path: labels_path.display().to_string(),
        detail,
    };

    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(img_err(format!(
            "bad magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let count = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(img_err(format!(
            "expected {IMAGE_SIDE}x{IMAGE_SIDE} images, got {rows}x{cols}"
        )));
    }
    let expected = 16 + count * rows * cols;
    if img_bytes.len() != expected {
        return Err(img_err(format!(
            "truncated image data: expected {expected} bytes, file has {}",
            img_bytes.len()
        )));
    }

    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(lbl_err(format!(
            "bad magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"
        )));
    }
    let lbl_count = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(lbl_err(format!(
            "truncated label data: expected {} bytes, file has {}",
            8 + lbl_count,
            lbl_bytes.len()
        )));
    }
    if lbl_count != count {
        return Err(lbl_err(format!(
            "label count {lbl_count} does not match image count {count}"
        )));
    }

    let scale = 1.0 / 255.0;
    let pixels: Vec<T> = img_bytes[16..]
        .iter()
        .map(|&b| T::from64(b as f64 * scale))
        .collect();
    let labels = lbl_bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= DIGIT_CLASSES) {
        return Err(lbl_err(format!("label {bad} out of range for digit data")));
    }
    LabeledSet::new(
        Tensor::new(vec![count, IMAGE_SIDE, IMAGE_SIDE, 1], pixels)?,
        labels,
        DIGIT_CLASSES,
    )
}

/// Seeded synthetic digits: each class is three bright 6x6 blocks at fixed
/// positions, each sample adds per-block position jitter and uniform pixel
/// noise. Samples interleave round-robin by class, so any prefix that is a
/// multiple of `classes` is exactly balanced.
///
/// `pattern_seed` fixes the class shapes, `sample_seed` the jitter and noise.
/// Train and validation splits of the same task share `pattern_seed` and
/// differ only in `sample_seed`; giving them distinct pattern seeds would
/// produce two unrelated classification tasks.
pub fn gen_synthetic<T: Scalar>(
    classes: usize,
    per_class: usize,
    pattern_seed: u64,
    sample_seed: u64,
) -> Result<LabeledSet<T>> {
    if classes < 2 || classes > DIGIT_CLASSES {
        return Err(Error::InvalidConfig(format!(
            "synthetic classes must be in 2..=10, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidConfig("synthetic per_class must be positive".into()));
    }
    const BLOCK: usize = 6;
    const BLOCKS: usize = 3;
    const MAX_ORIGIN: usize = IMAGE_SIDE - BLOCK;
    let mut patterns = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut rng = seed_rng(derive_seed(pattern_seed, "pattern", &[c as u64]));
        let blocks: Vec<(usize, usize, f64)> = (0..BLOCKS)
            .map(|_| {
                let y = rng.gen_range(0..=MAX_ORIGIN);
                let x = rng.gen_range(0..=MAX_ORIGIN);
                let intensity = 0.7 + 0.25 * rng.gen::<f64>();
                (y, x, intensity)
            })
            .collect();
        patterns.push(blocks);
    }
    let total = classes * per_class;
    let mut pixels = vec![T::zero(); total * IMAGE_SIDE * IMAGE_SIDE];
    let mut labels = vec![0u8; total];
    for k in 0..per_class {
        for (c, blocks) in patterns.iter().enumerate() {
            let sample = k * classes + c;
            labels[sample] = c as u8;
            let mut rng = seed_rng(derive_seed(sample_seed, "sample", &[c as u64, k as u64]));
            let mut canvas = [0.0f64; IMAGE_SIDE * IMAGE_SIDE];
            for &(y, x, intensity) in blocks {
                let dy = rng.gen_range(-2i64..=2);
                let dx = rng.gen_range(-2i64..=2);
                let y = (y as i64 + dy).clamp(0, MAX_ORIGIN as i64) as usize;
                let x = (x as i64 + dx).clamp(0, MAX_ORIGIN as i64) as usize;
                for yy in y..y + BLOCK {
                    for xx in x..x + BLOCK {
                        canvas[yy * IMAGE_SIDE + xx] = intensity;
                    }
                }
            }
            let base = sample * IMAGE_SIDE * IMAGE_SIDE;
            for (i, &v) in canvas.iter().enumerate() {
                let noise = 0.35 * (2.0 * rng.gen::<f64>() - 1.0);
                pixels[base + i] = T::from64((v + noise).clamp(0.0, 1.0));
            }
        }
    }
    LabeledSet::new(
        Tensor::new(vec![total, IMAGE_SIDE, IMAGE_SIDE, 1], pixels)?,
        labels,
        classes,
    )
}

/// Non-IID shard recipe: `round(alpha * per_node)` samples of the node's main
/// class, the rest drawn uniformly from the other classes, disjoint across
/// nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub nodes: usize,
    pub per_node: usize,
    /// Main-class fraction; rounding is half away from zero.
    pub alpha: f64,
    pub seed: u64,
}

/// One node's training shard plus its provenance in the source pool.
#[derive(Debug, Clone)]
pub struct NodeShard<T> {
    pub node_id: usize,
    pub main_class: u8,
    pub set: LabeledSet<T>,
    /// Row indices into the pool this shard was drawn from.
    pub source_indices: Vec<usize>,
}

/// Main class of a node: the node index when there are at least as many
/// classes as nodes, otherwise `node * classes / nodes` (integer division),
/// which assigns consecutive node blocks to each class.
pub fn main_class_for(node: usize, nodes: usize, classes: usize) -> u8 {
    debug_assert!(node < nodes);
    if classes >= nodes {
        node as u8
    } else {
        (node * classes / nodes) as u8
    }
}

/// Splits `pool` into disjoint non-IID shards. Main samples for all nodes are
/// allocated first (ascending node id), then supplemental samples per node;
/// within a class, rows are consumed in a seed-shuffled order. Supplemental
/// class draws are uniform over the non-main classes that still have stock.
pub fn partition_non_iid<T: Scalar>(
    pool: &LabeledSet<T>,
    spec: &PartitionSpec,
) -> Result<Vec<NodeShard<T>>> {
    if spec.nodes == 0 || spec.per_node == 0 {
        return Err(Error::InvalidConfig("partition needs nodes >= 1 and per_node >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in [0,1], got {}",
            spec.alpha
        )));
    }
    let classes = pool.classes();
    let main_count = (spec.alpha * spec.per_node as f64).round() as usize;
    let supplement_count = spec.per_node - main_count;

    // Seed-shuffled row queue per class; a cursor walks each queue.
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &label) in pool.labels().iter().enumerate() {
        queues[label as usize].push(i);
    }
    for (c, q) in queues.iter_mut().enumerate() {
        let mut rng = seed_rng(derive_seed(spec.seed, "class-order", &[c as u64]));
        q.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; classes];

    let mains: Vec<u8> = (0..spec.nodes)
        .map(|i| main_class_for(i, spec.nodes, classes))
        .collect();
    let mut demand = vec![0usize; classes];
    for &m in &mains {
        demand[m as usize] += main_count;
    }
    let deficits: Vec<String> = (0..classes)
        .filter(|&c| demand[c] > queues[c].len())
        .map(|c| format!("class {c}: need {}, have {}", demand[c], queues[c].len()))
        .collect();
    if !deficits.is_empty() {
        return Err(Error::InsufficientData(format!(
            "main-class demand exceeds pool stock ({})",
            deficits.join("; ")
        )));
    }
    if spec.nodes * spec.per_node > pool.len() {
        return Err(Error::InsufficientData(format!(
            "{} nodes x {} samples exceed pool of {}",
            spec.nodes,
            spec.per_node,
            pool.len()
        )));
    }

    let mut picks: Vec<Vec<usize>> = vec![Vec::with_capacity(spec.per_node); spec.nodes];
    for node in 0..spec.nodes {
        let c = mains[node] as usize;
        for _ in 0..main_count {
            picks[node].push(queues[c][cursors[c]]);
            cursors[c] += 1;
        }
    }
    for node in 0..spec.nodes {
        let mut rng = seed_rng(derive_seed(spec.seed, "supplement", &[node as u64]));
        let main = mains[node] as usize;
        for _ in 0..supplement_count {
            let candidates: Vec<usize> = (0..classes)
                .filter(|&c| c != main && cursors[c] < queues[c].len())
                .collect();
            if candidates.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no non-main stock left for node {node} supplements"
                )));
            }
            let c = candidates[rng.gen_range(0..candidates.len())];
            picks[node].push(queues[c][cursors[c]]);
            cursors[c] += 1;
        }
    }

    let mut shards = Vec::with_capacity(spec.nodes);
    for (node, indices) in picks.into_iter().enumerate() {
        let (images, labels) = pool.gather(&indices)?;
        shards.push(NodeShard {
            node_id: node,
            main_class: mains[node],
            set: LabeledSet::new(images, labels, classes)?,
            source_indices: indices,
        });
    }
    Ok(shards)
}
