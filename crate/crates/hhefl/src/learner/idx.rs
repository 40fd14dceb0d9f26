//! IDX image and label files (big-endian headers).

use std::fs;
use std::path::Path;

use super::data::Dataset;
use crate::error::{format_err, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err("truncated IDX header"))
}

/// `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    if be_u32(bytes, 0)? != IMAGE_MAGIC {
        return Err(format_err("not an IDX image file"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if body.len() != count * rows * cols {
        return Err(format_err("IDX image data is truncated or oversized"));
    }
    Ok((count, rows, cols, body))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    if be_u32(bytes, 0)? != LABEL_MAGIC {
        return Err(format_err("not an IDX label file"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format_err("IDX label data is truncated or oversized"));
    }
    Ok(body)
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset from raw IDX bytes; pixels are scaled by 1/255.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], classes: usize) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != count {
        return Err(format_err("image and label counts differ"));
    }
    let scaled = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(rows * cols, classes, scaled, labels.to_vec())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    dataset_from_idx(&fs::read(images)?, &fs::read(labels)?, 10)
}

/// The MNIST training files in `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<Dataset> {
    load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
}

/// Sample count from a label file header, without reading the images.
pub fn label_count(path: &Path) -> Result<usize> {
    use std::io::Read;
    let mut head = [0u8; 8];
    fs::File::open(path)?.read_exact(&mut head)?;
    if be_u32(&head, 0)? != LABEL_MAGIC {
        return Err(format_err("not an IDX label file"));
    }
    Ok(be_u32(&head, 4)? as usize)
}

/// Pixels per image from an image file header.
pub fn image_features(path: &Path) -> Result<usize> {
    use std::io::Read;
    let mut head = [0u8; 16];
    fs::File::open(path)?.read_exact(&mut head)?;
    if be_u32(&head, 0)? != IMAGE_MAGIC {
        return Err(format_err("not an IDX image file"));
    }
    Ok(be_u32(&head, 8)? as usize * be_u32(&head, 12)? as usize)
}

pub fn write_idx(ds: &Dataset, rows: usize, images: &Path, labels: &Path) -> Result<()> {
    let pixels: Vec<u8> = (0..ds.len())
        .flat_map(|i| ds.sample(i).iter().map(|&x| (x * 255.0).round() as u8))
        .collect();
    fs::write(images, encode_images(rows, ds.features() / rows, &pixels))?;
    fs::write(labels, encode_labels(ds.labels()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..4 * 2 * 3).map(|i| (i * 11) as u8).collect();
        (encode_images(2, 3, &pixels), encode_labels(&[3, 1, 4, 1]))
    }

    #[test]
    fn fixture_layout() {
        let (img, lab) = fixture();
        assert_eq!(&img[..16], &[0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 3]);
        assert_eq!(&lab[..8], &[0, 0, 8, 1, 0, 0, 0, 4]);
        let ds = dataset_from_idx(&img, &lab, 10).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.features(), 6);
        assert_eq!(ds.label(2), 4);
        assert_eq!(ds.sample(1)[0], 66.0 / 255.0);
    }

    #[test]
    fn roundtrip_through_files() {
        let (img, lab) = fixture();
        let ds = dataset_from_idx(&img, &lab, 10).unwrap();
        let dir = std::env::temp_dir().join(format!("hhefl-idx-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let (pi, pl) = (dir.join("i"), dir.join("l"));
        write_idx(&ds, 2, &pi, &pl).unwrap();
        assert_eq!(fs::read(&pi).unwrap(), img);
        assert_eq!(load_idx(&pi, &pl).unwrap(), ds);
        assert_eq!(label_count(&pl).unwrap(), 4);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejects_bad_files() {
        let (img, lab) = fixture();
        assert!(parse_images(&lab).is_err());
        assert!(parse_labels(&img).is_err());
        assert!(parse_images(&img[..img.len() - 1]).is_err());
        assert!(dataset_from_idx(&img, &encode_labels(&[1, 2]), 10).is_err());
    }
}
