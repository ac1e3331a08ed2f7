//! IDX file parsing (the MNIST distribution format).
//!
//! Big-endian headers: images carry magic `0x00000803` followed by count,
//! rows, and cols; labels carry magic `0x00000801` followed by count. Pixel
//! bytes are scaled to `[0, 1]` by division by 255 and flattened row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::Real;

use super::dataset::Portion;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn truncated(&self, detail: &str) -> Error {
        Error::IdxTruncated {
            path: self.path.display().to_string(),
            detail: detail.to_string(),
        }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(self.truncated(what));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn read_payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(self.truncated(what));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an images/labels IDX pair into one dataset portion.
///
/// Fails without producing a partial dataset on bad magic numbers, truncated
/// payloads, or a count mismatch between the two files.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Portion> {
    let image_bytes = read_file(images_path)?;
    let mut r = Reader {
        bytes: &image_bytes,
        pos: 0,
        path: images_path,
    };
    let magic = r.read_u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: images_path.display().to_string(),
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = r.read_u32("image count")? as usize;
    let rows = r.read_u32("row count")? as usize;
    let cols = r.read_u32("col count")? as usize;
    let pixels = r.read_payload(count * rows * cols, "pixel payload")?;

    let label_bytes = read_file(labels_path)?;
    let mut r = Reader {
        bytes: &label_bytes,
        pos: 0,
        path: labels_path,
    };
    let magic = r.read_u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: labels_path.display().to_string(),
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let label_count = r.read_u32("label count")? as usize;
    let labels_raw = r.read_payload(label_count, "label payload")?;

    if count != label_count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let dim = rows * cols;
    let features = Array2::from_shape_fn((count, dim), |(i, j)| {
        Real::from(pixels[i * dim + j]) / 255.0
    });
    Ok(Portion {
        features,
        labels: labels_raw.iter().map(|&b| b as usize).collect(),
    })
}
