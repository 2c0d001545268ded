//! COCO-style annotation documents and the raw image container.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Image, InstanceAnnotation, SceneSample};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::types::{ClassCatalog, ClassLabel};

pub const ANNOTATION_VERSION: u32 = 1;
pub const IMAGE_MAGIC: [u8; 4] = *b"SSIM";
pub const IMAGE_VERSION: u32 = 1;

const MASK_ENCODING: &str = "dense-bits";

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationDoc {
    version: u32,
    #[serde(default = "default_encoding")]
    mask_encoding: String,
    categories: Vec<CategoryRecord>,
    images: Vec<ImageRecord>,
    annotations: Vec<AnnotationRecord>,
}

fn default_encoding() -> String {
    MASK_ENCODING.to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct CategoryRecord {
    id: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageRecord {
    id: u64,
    height: usize,
    width: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    id: u64,
    image_id: u64,
    category_id: u32,
    /// `[x, y, w, h]`
    bbox: [f64; 4],
    area: usize,
    /// One string of `0`/`1` per image row.
    mask: Vec<String>,
}

fn to_doc(catalog: &ClassCatalog, samples: &[SceneSample]) -> AnnotationDoc {
    let categories = catalog
        .foreground()
        .map(|c| CategoryRecord {
            id: c.0,
            name: catalog.name(c).to_string(),
        })
        .collect();
    let images = samples
        .iter()
        .map(|s| ImageRecord {
            id: s.sample_id,
            height: s.height(),
            width: s.width(),
        })
        .collect();
    let mut annotations = Vec::new();
    let mut next_id = 1u64;
    for s in samples {
        for a in &s.annotations {
            annotations.push(AnnotationRecord {
                id: next_id,
                image_id: s.sample_id,
                category_id: a.class.0,
                bbox: a.bbox.to_xywh(),
                area: a.area,
                mask: (0..a.mask.height()).map(|y| a.mask.row_string(y)).collect(),
            });
            next_id += 1;
        }
    }
    AnnotationDoc {
        version: ANNOTATION_VERSION,
        mask_encoding: MASK_ENCODING.to_string(),
        categories,
        images,
        annotations,
    }
}

fn annotation_bytes(catalog: &ClassCatalog, samples: &[SceneSample]) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(&to_doc(catalog, samples))?)
}

/// Writes the annotation document (pixels are stored separately).
pub fn write_annotations(catalog: &ClassCatalog, samples: &[SceneSample], path: &Path) -> Result<()> {
    let bytes = annotation_bytes(catalog, samples)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(record: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        record: record.into(),
        message: message.into(),
    }
}

fn decode_annotation(rec: &AnnotationRecord, img: &ImageRecord, num_classes: usize) -> Result<InstanceAnnotation> {
    let name = format!("annotation {}", rec.id);
    if rec.category_id == 0 || rec.category_id as usize > num_classes {
        return Err(parse_err(name, format!("unknown category {}", rec.category_id)));
    }
    if rec.mask.len() != img.height {
        return Err(parse_err(
            name,
            format!("mask has {} rows, image {} has {}", rec.mask.len(), img.id, img.height),
        ));
    }
    let mut bits = Vec::with_capacity(img.height * img.width);
    for (y, row) in rec.mask.iter().enumerate() {
        if row.len() != img.width {
            return Err(parse_err(name, format!("mask row {y} has {} columns", row.len())));
        }
        for ch in row.bytes() {
            match ch {
                b'0' => bits.push(0),
                b'1' => bits.push(1),
                other => {
                    return Err(parse_err(name, format!("mask row {y} contains {:?}", other as char)));
                }
            }
        }
    }
    let mask = BinaryMask::from_bits(img.height, img.width, bits)?;
    let ann = InstanceAnnotation::from_mask(ClassLabel(rec.category_id), mask)
        .map_err(|e| parse_err(name.clone(), e.to_string()))?;
    if ann.area != rec.area {
        return Err(parse_err(name, format!("area {} but mask has {} pixels", rec.area, ann.area)));
    }
    let stored = rec.bbox;
    let tight = ann.bbox.to_xywh();
    if stored.iter().zip(&tight).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(parse_err(name, format!("bbox {stored:?} is not the mask bound {tight:?}")));
    }
    Ok(ann)
}

/// Parses an annotation document; images come back blank at their recorded
/// size.
pub fn read_annotations(path: &Path) -> Result<(ClassCatalog, Vec<SceneSample>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let doc: AnnotationDoc = serde_json::from_slice(&bytes)
        .map_err(|e| parse_err(path.display().to_string(), e.to_string()))?;
    if doc.version != ANNOTATION_VERSION {
        return Err(parse_err("document", format!("unsupported version {}", doc.version)));
    }
    if doc.mask_encoding != MASK_ENCODING {
        return Err(parse_err("document", format!("unsupported mask encoding {}", doc.mask_encoding)));
    }
    let mut categories = doc.categories;
    categories.sort_by_key(|c| c.id);
    for (k, c) in categories.iter().enumerate() {
        if c.id as usize != k + 1 {
            return Err(parse_err(format!("category {}", c.id), "category ids must be 1..N"));
        }
    }
    let catalog = ClassCatalog::new(categories.into_iter().map(|c| c.name).collect());
    let mut samples: Vec<SceneSample> = Vec::with_capacity(doc.images.len());
    let mut index = std::collections::HashMap::new();
    for img in &doc.images {
        if index.insert(img.id, samples.len()).is_some() {
            return Err(parse_err(format!("image {}", img.id), "duplicate image id"));
        }
        samples.push(SceneSample {
            sample_id: img.id,
            image: Image::zeros(img.height, img.width, 3),
            annotations: Vec::new(),
        });
    }
    for rec in &doc.annotations {
        let Some(&slot) = index.get(&rec.image_id) else {
            return Err(parse_err(
                format!("annotation {}", rec.id),
                format!("unknown image {}", rec.image_id),
            ));
        };
        let img = &doc.images[slot];
        let ann = decode_annotation(rec, img, catalog.len())?;
        samples[slot].annotations.push(ann);
    }
    Ok((catalog, samples))
}

fn image_bytes(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + image.data.len() * 4);
    out.extend_from_slice(&IMAGE_MAGIC);
    out.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
    out.extend_from_slice(&(image.height as u32).to_le_bytes());
    out.extend_from_slice(&(image.width as u32).to_le_bytes());
    out.extend_from_slice(&(image.channels as u32).to_le_bytes());
    for v in &image.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_image(image: &Image, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&image_bytes(image)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    if bytes.len() < 20 || bytes[..4] != IMAGE_MAGIC {
        return Err(parse_err(name, "bad image magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) as u32 != IMAGE_VERSION {
        return Err(parse_err(name, format!("unsupported image version {}", word(4))));
    }
    let (height, width, channels) = (word(8), word(12), word(16));
    let n = height * width * channels;
    if bytes.len() != 20 + 4 * n {
        return Err(parse_err(name, "image payload length does not match header"));
    }
    let data = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Image {
        height,
        width,
        channels,
        data,
    })
}

const ANNOTATION_FILE: &str = "annotations.json";
const IMAGE_DIR: &str = "images";

fn image_path(dir: &Path, id: u64) -> std::path::PathBuf {
    dir.join(IMAGE_DIR).join(format!("{id:06}.img"))
}

/// Writes `dir/annotations.json` and `dir/images/<id>.img`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGE_DIR)).map_err(|e| Error::io(dir, e))?;
    write_annotations(&dataset.catalog, &dataset.samples, &dir.join(ANNOTATION_FILE))?;
    for s in &dataset.samples {
        write_image(&s.image, &image_path(dir, s.sample_id))?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (catalog, mut samples) = read_annotations(&dir.join(ANNOTATION_FILE))?;
    for s in &mut samples {
        let image = read_image(&image_path(dir, s.sample_id))?;
        if image.height != s.height() || image.width != s.width() {
            return Err(parse_err(
                format!("image {}", s.sample_id),
                "pixel container size differs from annotation record",
            ));
        }
        s.image = image;
    }
    Ok(Dataset { catalog, samples })
}

/// Content digest over the annotation document and every image container.
pub fn dataset_digest(catalog: &ClassCatalog, samples: &[SceneSample]) -> Result<String> {
    let mut d = Digest::new();
    d.update(&annotation_bytes(catalog, samples)?);
    for s in samples {
        d.update(&image_bytes(&s.image));
    }
    Ok(d.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_split, DatasetSpec, Split};

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let cat = ClassCatalog::new(vec!["disk".into()]);
        write_annotations(&cat, &[], &p).unwrap();
        let (c2, s2) = read_annotations(&p).unwrap();
        assert_eq!(c2, cat);
        assert!(s2.is_empty());
    }

    #[test]
    fn dataset_round_trip() {
        let spec = DatasetSpec {
            train_samples: 10,
            ..DatasetSpec::default()
        };
        let ds = Dataset {
            catalog: spec.catalog(),
            samples: generate_split(&spec, Split::Train).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(
            dataset_digest(&ds.catalog, &ds.samples).unwrap(),
            dataset_digest(&back.catalog, &back.samples).unwrap()
        );
    }

    #[test]
    fn malformed_record_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        let doc = r#"{"version":1,"categories":[{"id":1,"name":"disk"}],
            "images":[{"id":3,"height":2,"width":2}],
            "annotations":[{"id":9,"image_id":3,"category_id":1,"bbox":[0,0,1,1],"area":1,"mask":["1x","00"]}]}"#;
        fs::write(&p, doc).unwrap();
        let err = read_annotations(&p).unwrap_err().to_string();
        assert!(err.contains("annotation 9"), "{err}");
    }

    #[test]
    fn image_container_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.img");
        let mut img = Image::zeros(3, 2, 3);
        img.data[4] = 0.25;
        write_image(&img, &p).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(read_image(&p).is_err());
    }
}
