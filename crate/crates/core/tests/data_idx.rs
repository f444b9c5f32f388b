//! IDX file loading: crafted byte buffers for the format contract, plus the
//! bundled digit files.

use std::io::Write;
use std::path::PathBuf;

use hl_core::data::{load_idx, DIGIT_CLASSES, IMAGE_SIDE};

fn idx_images(count: u32, side: u32, pixels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    buf.extend_from_slice(&count.to_be_bytes());
    buf.extend_from_slice(&side.to_be_bytes());
    buf.extend_from_slice(&side.to_be_bytes());
    buf.extend_from_slice(pixels);
    buf
}

fn idx_labels(count: u32, labels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    buf.extend_from_slice(&count.to_be_bytes());
    buf.extend_from_slice(labels);
    buf
}

fn write_temp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(bytes).unwrap();
    path
}

const PIX: usize = IMAGE_SIDE * IMAGE_SIDE;

#[test]
fn loads_a_crafted_pair_and_scales_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let mut pixels = vec![0u8; 2 * PIX];
    pixels[0] = 255;
    pixels[1] = 51; // 51 / 255 = 0.2
    pixels[PIX] = 128;
    let images = write_temp(&dir, "imgs", &idx_images(2, 28, &pixels));
    let labels = write_temp(&dir, "lbls", &idx_labels(2, &[3, 9]));
    let set = load_idx::<f64>(&images, &labels).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.classes(), DIGIT_CLASSES);
    assert_eq!(set.labels(), &[3, 9]);
    assert_eq!(set.images().shape(), &[2, 28, 28, 1]);
    let d = set.images().data();
    assert_eq!(d[0], 1.0);
    assert!((d[1] - 0.2).abs() < 1e-15);
    assert_eq!(d[PIX], 128.0 / 255.0);
    assert_eq!(d[2], 0.0);
}

#[test]
fn rejects_wrong_image_magic() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = idx_images(1, 28, &vec![0; PIX]);
    bytes[3] = 0x07;
    let images = write_temp(&dir, "imgs", &bytes);
    let labels = write_temp(&dir, "lbls", &idx_labels(1, &[0]));
    let err = load_idx::<f64>(&images, &labels).unwrap_err().to_string();
    assert!(err.contains("magic"), "{err}");
    assert!(err.contains("imgs"), "error should name the file: {err}");
}

#[test]
fn rejects_wrong_label_magic() {
    let dir = tempfile::tempdir().unwrap();
    let images = write_temp(&dir, "imgs", &idx_images(1, 28, &vec![0; PIX]));
    let mut bytes = idx_labels(1, &[0]);
    bytes[3] = 0x03;
    let labels = write_temp(&dir, "lbls", &bytes);
    assert!(load_idx::<f64>(&images, &labels).is_err());
}

#[test]
fn rejects_non_28x28_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let images = write_temp(&dir, "imgs", &idx_images(1, 27, &vec![0; 27 * 27]));
    let labels = write_temp(&dir, "lbls", &idx_labels(1, &[0]));
    let err = load_idx::<f64>(&images, &labels).unwrap_err().to_string();
    assert!(err.contains("27"), "{err}");
}

#[test]
fn rejects_truncated_pixel_payload() {
    let dir = tempfile::tempdir().unwrap();
    let images = write_temp(&dir, "imgs", &idx_images(2, 28, &vec![0; 2 * PIX - 1]));
    let labels = write_temp(&dir, "lbls", &idx_labels(2, &[0, 1]));
    assert!(load_idx::<f64>(&images, &labels).is_err());
}

#[test]
fn rejects_count_mismatch_between_files() {
    let dir = tempfile::tempdir().unwrap();
    let images = write_temp(&dir, "imgs", &idx_images(2, 28, &vec![0; 2 * PIX]));
    let labels = write_temp(&dir, "lbls", &idx_labels(3, &[0, 1, 2]));
    assert!(load_idx::<f64>(&images, &labels).is_err());
}

#[test]
fn rejects_out_of_range_labels() {
    let dir = tempfile::tempdir().unwrap();
    let images = write_temp(&dir, "imgs", &idx_images(1, 28, &vec![0; PIX]));
    let labels = write_temp(&dir, "lbls", &idx_labels(1, &[10]));
    assert!(load_idx::<f64>(&images, &labels).is_err());
}

#[test]
fn missing_file_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let labels = write_temp(&dir, "lbls", &idx_labels(1, &[0]));
    assert!(load_idx::<f64>(&dir.path().join("absent"), &labels).is_err());
}

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn bundled_training_pool_is_balanced() {
    let set = load_idx::<f32>(
        &bundled("train-images-idx3-ubyte"),
        &bundled("train-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(set.len(), 6000);
    assert_eq!(set.class_counts(), vec![600; 10]);
    // Round-robin interleave: any prefix is near-balanced.
    for (i, &label) in set.labels().iter().enumerate().take(40) {
        assert_eq!(label as usize, i % 10);
    }
    let d = set.images().data();
    assert!(d.iter().all(|&p| (0.0..=1.0).contains(&p)));
    assert!(d.iter().any(|&p| p > 0.5), "images should contain ink");
}

#[test]
fn bundled_validation_set_matches_expected_counts() {
    let set = load_idx::<f32>(
        &bundled("t10k-images-idx3-ubyte"),
        &bundled("t10k-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(set.len(), 4000);
    let counts = set.class_counts();
    assert_eq!(counts.iter().sum::<usize>(), 4000);
    assert!(counts.iter().all(|&c| c >= 200), "every class represented: {counts:?}");
}
