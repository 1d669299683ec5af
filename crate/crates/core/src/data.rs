//! Dataset ingestion: IDX files, directories of binary PGM images, and
//! deterministic splits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::bytes::ByteReader;
use crate::error::{Result, S4nnError};
use crate::seeds;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Images with class labels in `[0, class_count)`. All images share
/// dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Pixels per image; all images share it.
    pub fn pixel_count(&self) -> usize {
        self.images.first().map_or(0, Image::pixel_count)
    }
}

/// Loads an IDX image/label file pair (the MNIST distribution format,
/// big-endian). The class count is the highest label plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let image_buf = fs::read(images_path).map_err(|e| S4nnError::io_at(e, images_path))?;
    let mut r = ByteReader::new(&image_buf, images_path);
    let magic = r.u32_be("IDX magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(S4nnError::BadMagic {
            path: r.path_buf(),
            expected: IDX_IMAGE_MAGIC,
            got: magic,
        });
    }
    let count = r.u32_be("image count")? as usize;
    let height = r.u32_be("row count")? as usize;
    let width = r.u32_be("column count")? as usize;
    let pixels = r.take(count * height * width, "pixel data")?;
    if r.pos != image_buf.len() {
        return Err(r.malformed_here(format!(
            "{} trailing bytes after pixel data",
            image_buf.len() - r.pos
        )));
    }
    let images: Vec<Image> = pixels
        .chunks_exact(height * width)
        .map(|chunk| Image {
            width,
            height,
            pixels: chunk.to_vec(),
        })
        .collect();

    let label_buf = fs::read(labels_path).map_err(|e| S4nnError::io_at(e, labels_path))?;
    let mut r = ByteReader::new(&label_buf, labels_path);
    let magic = r.u32_be("IDX magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(S4nnError::BadMagic {
            path: r.path_buf(),
            expected: IDX_LABEL_MAGIC,
            got: magic,
        });
    }
    let label_count = r.u32_be("label count")? as usize;
    let raw_labels = r.take(label_count, "label data")?;
    if r.pos != label_buf.len() {
        return Err(r.malformed_here(format!(
            "{} trailing bytes after label data",
            label_buf.len() - r.pos
        )));
    }

    if images.len() != raw_labels.len() {
        return Err(S4nnError::Dataset {
            path: labels_path.to_path_buf(),
            reason: format!(
                "{} labels for {} images in {}",
                raw_labels.len(),
                images.len(),
                images_path.display()
            ),
        });
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(LabeledDataset {
        images,
        labels,
        class_count,
    })
}

/// Loads a directory whose immediate subdirectories each hold one class of
/// binary PGM (P5, maxval 255) images. Class indices follow the lexicographic
/// order of the subdirectory names; images must agree on dimensions.
pub fn load_pgm_dir(root: &Path) -> Result<LabeledDataset> {
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| S4nnError::io_at(e, root))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(S4nnError::Dataset {
            path: root.to_path_buf(),
            reason: "no class subdirectories found".into(),
        });
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for (class, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| S4nnError::io_at(e, dir))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(S4nnError::Dataset {
                path: dir.clone(),
                reason: "class directory holds no files".into(),
            });
        }
        for file in files {
            let image = load_pgm(&file)?;
            match dims {
                None => dims = Some((image.width, image.height)),
                Some((w, h)) if (image.width, image.height) != (w, h) => {
                    return Err(S4nnError::Dataset {
                        path: file,
                        reason: format!(
                            "is {}x{}, other images are {}x{}",
                            image.width, image.height, w, h
                        ),
                    });
                }
                Some(_) => {}
            }
            images.push(image);
            labels.push(class);
        }
    }
    Ok(LabeledDataset {
        images,
        labels,
        class_count: class_dirs.len(),
    })
}

/// Parses one binary PGM (P5) file with maxval 255. Header comments (`#` to
/// end of line) are allowed; trailing bytes after the raster must be
/// whitespace.
pub fn load_pgm(path: &Path) -> Result<Image> {
    let buf = fs::read(path).map_err(|e| S4nnError::io_at(e, path))?;
    let mut r = ByteReader::new(&buf, path);
    let magic = r.take(2, "PGM magic")?;
    if magic != b"P5" {
        return Err(S4nnError::Malformed {
            path: path.to_path_buf(),
            offset: 0,
            reason: "not a binary PGM (P5) file".into(),
        });
    }

    let width = pgm_token(&mut r, "width")?;
    let height = pgm_token(&mut r, "height")?;
    let maxval = pgm_token(&mut r, "maxval")?;
    if maxval != 255 {
        return Err(S4nnError::Dataset {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} unsupported, expected 255"),
        });
    }
    let sep = r.take(1, "raster separator")?;
    if !sep[0].is_ascii_whitespace() {
        return Err(r.malformed_here("missing whitespace before raster data"));
    }
    let pixels = r.take(width * height, "raster data")?.to_vec();
    if buf[r.pos..].iter().any(|b| !b.is_ascii_whitespace()) {
        return Err(r.malformed_here("unexpected bytes after raster data"));
    }
    Ok(Image {
        width,
        height,
        pixels,
    })
}

fn pgm_token(r: &mut ByteReader, what: &str) -> Result<usize> {
    // Skip whitespace and # comments between header fields.
    loop {
        match r.buf.get(r.pos) {
            Some(b) if b.is_ascii_whitespace() => r.pos += 1,
            Some(b'#') => {
                while r.pos < r.buf.len() && r.buf[r.pos] != b'\n' {
                    r.pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = r.pos;
    while r.pos < r.buf.len() && r.buf[r.pos].is_ascii_digit() {
        r.pos += 1;
    }
    if r.pos == start {
        return Err(r.malformed_here(format!("expected decimal {what}")));
    }
    let text = std::str::from_utf8(&r.buf[start..r.pos]).expect("digits are valid UTF-8");
    text.parse().map_err(|_| {
        S4nnError::Malformed {
            path: r.path_buf(),
            offset: start,
            reason: format!("{what} {text} out of range"),
        }
    })
}

/// Writes one binary PGM (P5, maxval 255) file.
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    if image.pixels.len() != image.pixel_count() {
        return Err(S4nnError::Shape(format!(
            "{}x{} image with {} pixel bytes",
            image.width,
            image.height,
            image.pixels.len()
        )));
    }
    let mut buf = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    buf.extend_from_slice(&image.pixels);
    fs::write(path, buf).map_err(|e| S4nnError::io_at(e, path))
}

/// Splits off `holdout` samples chosen by a seeded shuffle. Both halves keep
/// the original relative order, so a holdout of zero returns the dataset
/// unchanged. The halves are disjoint and jointly preserve the multiset.
pub fn split(
    ds: &LabeledDataset,
    holdout: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if holdout >= ds.len() {
        return Err(S4nnError::Config(format!(
            "cannot hold out {holdout} of {} samples",
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = seeds::rng_for(seed, seeds::STREAM_SPLIT);
    indices.shuffle(&mut rng);
    let mut held = vec![false; ds.len()];
    for &i in &indices[..holdout] {
        held[i] = true;
    }

    let partition = |keep_held: bool| {
        let picked: Vec<usize> = (0..ds.len()).filter(|&i| held[i] == keep_held).collect();
        LabeledDataset {
            images: picked.iter().map(|&i| ds.images[i].clone()).collect(),
            labels: picked.iter().map(|&i| ds.labels[i]).collect(),
            class_count: ds.class_count,
        }
    };
    Ok((partition(false), partition(true)))
}
