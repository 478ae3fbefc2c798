//! MNIST IDX binary ingestion.
//!
//! Big-endian headers: images carry magic 0x00000803 followed by count,
//! rows, cols; labels carry magic 0x00000801 followed by count. Payloads
//! are raw unsigned bytes; pixels are scaled into [0, 1].

use std::path::Path;

use super::{Dataset, TrainerError};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: String,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &Path, bytes: &'a [u8]) -> Self {
        Self {
            path: path.display().to_string(),
            bytes,
            offset: 0,
        }
    }

    fn read_u32(&mut self) -> Result<u32, TrainerError> {
        let end = self.offset + 4;
        let slice = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| TrainerError::Truncated {
                path: self.path.clone(),
                offset: self.offset,
                needed: 4,
                available: self.bytes.len().saturating_sub(self.offset),
            })?;
        self.offset = end;
        Ok(u32::from_be_bytes(slice.try_into().unwrap()))
    }

    fn read_payload(&mut self, len: usize) -> Result<&'a [u8], TrainerError> {
        let end = self.offset + len;
        let slice = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| TrainerError::Truncated {
                path: self.path.clone(),
                offset: self.offset,
                needed: len,
                available: self.bytes.len().saturating_sub(self.offset),
            })?;
        self.offset = end;
        Ok(slice)
    }

    fn expect_magic(&mut self, expected: u32) -> Result<(), TrainerError> {
        let at = self.offset;
        let found = self.read_u32()?;
        if found != expected {
            return Err(TrainerError::BadMagic {
                path: self.path.clone(),
                expected,
                found,
                offset: at,
            });
        }
        Ok(())
    }
}

/// Loads an images/labels IDX pair into a [`Dataset`].
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, TrainerError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = std::fs::read(images_path).map_err(|source| TrainerError::Io {
        path: images_path.display().to_string(),
        source,
    })?;
    let label_bytes = std::fs::read(labels_path).map_err(|source| TrainerError::Io {
        path: labels_path.display().to_string(),
        source,
    })?;

    let mut reader = Reader::new(images_path, &image_bytes);
    reader.expect_magic(IMAGES_MAGIC)?;
    let count = reader.read_u32()? as usize;
    let rows = reader.read_u32()? as usize;
    let cols = reader.read_u32()? as usize;
    let width = rows * cols;
    let pixels = reader.read_payload(count * width)?;
    let images: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();

    let mut reader = Reader::new(labels_path, &label_bytes);
    reader.expect_magic(LABELS_MAGIC)?;
    let label_count = reader.read_u32()? as usize;
    if label_count != count {
        return Err(TrainerError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let labels = reader.read_payload(count)?.to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(TrainerError::LabelOutOfRange {
            path: reader.path,
            index: pos,
            label: labels[pos],
        });
    }

    Dataset::new(images, width, labels)
}
