//! IDX (MNIST) files: big-endian header, magic 0x00000803 for images and
//! 0x00000801 for labels.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numlin::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major then row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn check_magic(bytes: &[u8], expect: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expect {
        return Err(Error::Format(format!("{what}: bad magic 0x{magic:08x}, expected 0x{expect:08x}")));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("images: header sizes overflow".into()))?;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Format(format!(
            "images: truncated, {} of {need} pixel bytes present",
            body.len()
        )));
    }
    Ok(IdxImages { count, rows, cols, pixels: body[..need].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let count = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format(format!(
            "labels: truncated, {} of {count} label bytes present",
            body.len()
        )));
    }
    Ok(body[..count].to_vec())
}

/// Loads an IDX image/label pair, keeps images whose label equals
/// `class_filter` (all when `None`), scales pixels to [0, 1] and optionally
/// average-pools 2×2 blocks (`downsample = 2`).
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    class_filter: Option<u8>,
    downsample: usize,
) -> Result<Dataset> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    mnist_dataset(&images, &labels, class_filter, downsample)
}

pub(crate) fn mnist_dataset(
    images: &IdxImages,
    labels: &[u8],
    class_filter: Option<u8>,
    downsample: usize,
) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Format(format!("{} images but {} labels", images.count, labels.len())));
    }
    if downsample != 1 && downsample != 2 {
        return Err(Error::invalid(format!("downsample must be 1 or 2, got {downsample}")));
    }
    if downsample == 2 && (images.rows % 2 != 0 || images.cols % 2 != 0) {
        return Err(Error::dim("2×2 pooling needs even image sides"));
    }
    let (h, w) = (images.rows / downsample, images.cols / downsample);
    let keep: Vec<usize> =
        (0..images.count).filter(|&i| class_filter.map_or(true, |c| labels[i] == c)).collect();
    let mut data = Vec::with_capacity(keep.len() * h * w);
    let norm = 255.0 * (downsample * downsample) as f64;
    for &i in &keep {
        let img = images.image(i);
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0u32;
                for dr in 0..downsample {
                    for dc in 0..downsample {
                        acc += img[(r * downsample + dr) * images.cols + c * downsample + dc] as u32;
                    }
                }
                data.push(acc as f64 / norm);
            }
        }
    }
    let mut ds = Dataset::new("mnist", Matrix::from_vec_unchecked(keep.len(), h * w, data));
    ds.labels = Some(keep.iter().map(|&i| labels[i]).collect());
    Ok(ds)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend(pixels);
        b
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend(LABELS_MAGIC.to_be_bytes());
        b.extend((labels.len() as u32).to_be_bytes());
        b.extend(labels);
        b
    }

    #[test]
    fn parses_header_and_pixels() {
        let px: Vec<u8> = (0..32).collect();
        let imgs = parse_idx_images(&idx_images(2, 4, 4, &px)).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 4, 4));
        assert_eq!(imgs.image(1)[0], 16);
        assert_eq!(parse_idx_labels(&idx_labels(&[3, 2])).unwrap(), vec![3, 2]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut b = idx_images(1, 2, 2, &[0; 4]);
        b[3] = 0x01;
        assert!(matches!(parse_idx_images(&b), Err(Error::Format(_))));
        assert!(parse_idx_images(&idx_images(2, 2, 2, &[0; 5])).is_err());
        assert!(parse_idx_labels(&idx_labels(&[1, 2])[..9]).is_err());
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
    }

    #[test]
    fn filter_scale_and_pool() {
        let px = [0u8, 255, 255, 255, 10, 10, 10, 10, 1, 2, 3, 4];
        let imgs = parse_idx_images(&idx_images(3, 2, 2, &px)).unwrap();
        let labels = [2u8, 7, 2];
        let full = mnist_dataset(&imgs, &labels, None, 1).unwrap();
        assert_eq!(full.data.shape(), (3, 4));
        assert_eq!(full.data[(0, 1)], 1.0);
        let twos = mnist_dataset(&imgs, &labels, Some(2), 2).unwrap();
        assert_eq!(twos.data.shape(), (2, 1));
        assert!((twos.data[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((twos.data[(1, 0)] - 10.0 / 1020.0).abs() < 1e-15);
        assert_eq!(twos.labels.as_deref(), Some(&[2u8, 2][..]));
    }

    #[test]
    fn count_mismatch_is_error() {
        let imgs = parse_idx_images(&idx_images(2, 2, 2, &[0; 8])).unwrap();
        assert!(mnist_dataset(&imgs, &[1], None, 1).is_err());
        assert!(mnist_dataset(&imgs, &[1, 1], None, 3).is_err());
    }
}
