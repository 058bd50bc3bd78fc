//! CSV (comma separated, no header, label last) and big-endian IDX files.

use std::io::Write;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::divergence::{DomainTag, SampleSet};
use crate::error::{Error, Result};
use crate::fmt_f64;

const IDX3_UBYTE: u32 = 0x0000_0803;
const IDX1_UBYTE: u32 = 0x0000_0801;

/// Reads a headerless CSV whose last column is an integer label.
pub fn load_csv(path: &Path, domain: DomainTag) -> Result<SampleSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, format!("row {}: {e}", row + 1)))?;
        if record.len() < 2 {
            return Err(Error::parse(
                path,
                format!("row {}: need at least one feature and a label", row + 1),
            ));
        }
        let d = record.len() - 1;
        if *width.get_or_insert(d) != d {
            return Err(Error::parse(
                path,
                format!("row {}: {} columns, expected {}", row + 1, d + 1, width.unwrap_or(0) + 1),
            ));
        }
        for (col, cell) in record.iter().take(d).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("row {}, column {}: non-numeric cell {cell:?}", row + 1, col + 1),
                )
            })?;
            data.push(v);
        }
        let cell = &record[d];
        let label: usize = cell.parse().map_err(|_| {
            Error::parse(
                path,
                format!("row {}: label {cell:?} is not a non-negative integer", row + 1),
            )
        })?;
        labels.push(label);
    }
    let Some(d) = width else {
        return Err(Error::parse(path, "no rows"));
    };
    let n = labels.len();
    SampleSet::new(Tensor::new(n, d, data)?, Some(labels), domain)
}

/// Writes features and labels as headerless CSV (17 significant digits).
/// Unlabeled sets get an empty label column.
pub fn write_csv(set: &SampleSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, row) in set.features().row_iter().enumerate() {
        for v in row {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        if let Some(labels) = set.labels() {
            out.push_str(&labels[i].to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::parse(
                path,
                format!("truncated header at byte {offset} (file has {} bytes)", bytes.len()),
            )
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(Error::parse(
            path,
            format!("bad IDX magic 0x{magic:08x} at byte 0, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let end = start + len;
    if bytes.len() != end {
        return Err(Error::parse(
            path,
            format!(
                "payload from byte {start} should end at byte {end}, file has {} bytes",
                bytes.len()
            ),
        ));
    }
    Ok(&bytes[start..end])
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Raw IDX3 unsigned-byte images: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IDX3_UBYTE, path)?;
    let n = read_u32(&bytes, 4, path)? as usize;
    let rows = read_u32(&bytes, 8, path)? as usize;
    let cols = read_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, n * rows * cols, path)?.to_vec();
    Ok((n, rows, cols, pixels))
}

/// Raw IDX1 unsigned-byte labels.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    check_magic(&bytes, IDX1_UBYTE, path)?;
    let n = read_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, n, path)?.to_vec())
}

/// Loads an image/label IDX pair, flattening each image to a row with pixels
/// scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path, domain: DomainTag) -> Result<SampleSet> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let labels_raw = read_idx_labels(labels)?;
    if labels_raw.len() != n {
        return Err(Error::parse(
            labels,
            format!("{} labels for {n} images in {}", labels_raw.len(), images.display()),
        ));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Tensor::new(n, rows * cols, data)?;
    let labels = labels_raw.into_iter().map(usize::from).collect();
    SampleSet::new(features, Some(labels), domain)
}

/// Writes a set back as an IDX3/IDX1 pair; features must be `k / 255` pixel
/// values and labels must fit in a byte.
pub fn write_idx(
    set: &SampleSet,
    image_rows: usize,
    image_cols: usize,
    images: &Path,
    labels: &Path,
) -> Result<()> {
    if image_rows * image_cols != set.dim() {
        return Err(Error::InvalidArgument(format!(
            "{image_rows}x{image_cols} images do not match feature width {}",
            set.dim()
        )));
    }
    let ys = set.labels().ok_or(Error::MissingLabels("write_idx"))?;
    let n = u32::try_from(set.len())
        .map_err(|_| Error::InvalidArgument("too many samples for IDX".into()))?;
    let mut img = Vec::with_capacity(16 + set.features().len());
    for header in [IDX3_UBYTE, n, image_rows as u32, image_cols as u32] {
        img.extend_from_slice(&header.to_be_bytes());
    }
    for &v in set.features().data() {
        let p = (v * 255.0).round();
        if !(0.0..=255.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        img.push(p as u8);
    }
    let mut lab = Vec::with_capacity(8 + ys.len());
    lab.extend_from_slice(&IDX1_UBYTE.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    for &y in ys {
        let b = u8::try_from(y)
            .map_err(|_| Error::InvalidArgument(format!("label {y} does not fit in a byte")))?;
        lab.push(b);
    }
    let write = |path: &Path, bytes: &[u8]| -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    write(images, &img)?;
    write(labels, &lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "1,2,0\n3,4,1").unwrap();
        let s = load_csv(&path, DomainTag::Source).unwrap();
        assert_eq!(s.features().shape(), (2, 2));
        assert_eq!(s.features().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.labels(), Some(&[0, 1][..]));
    }

    #[test]
    fn csv_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2,0\n3,x,1\n").unwrap();
        let err = load_csv(&path, DomainTag::Source).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("column 2"), "{err}");

        std::fs::write(&path, "1,2,0\n3,1\n").unwrap();
        let err = load_csv(&path, DomainTag::Source).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        std::fs::write(&path, "1,2,-1\n").unwrap();
        assert!(load_csv(&path, DomainTag::Source).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let s = crate::datasets::gen_two_moons(20, 0.1, 3).unwrap();
        write_csv(&s, &path).unwrap();
        assert_eq!(load_csv(&path, DomainTag::Source).unwrap(), s);
    }

    fn idx_pair(dir: &Path, pixels: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img.idx3");
        let lab = dir.join("lab.idx1");
        let mut b = Vec::new();
        for h in [IDX3_UBYTE, labels.len() as u32, 1, (pixels.len() / labels.len()) as u32] {
            b.extend_from_slice(&h.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        std::fs::write(&img, b).unwrap();
        let mut b = Vec::new();
        b.extend_from_slice(&IDX1_UBYTE.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        std::fs::write(&lab, b).unwrap();
        (img, lab)
    }

    #[test]
    fn idx_scaling_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_pair(dir.path(), &[0, 255, 128, 7, 1, 2], &[3, 9]);
        let s = load_idx(&img, &lab, DomainTag::Target).unwrap();
        assert_eq!(s.features().shape(), (2, 3));
        assert_eq!(s.features().get(0, 1), 1.0);
        assert_eq!(s.features().get(0, 0), 0.0);
        assert_eq!(s.labels(), Some(&[3, 9][..]));

        let img2 = dir.path().join("img2");
        let lab2 = dir.path().join("lab2");
        write_idx(&s, 1, 3, &img2, &lab2).unwrap();
        assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(&img2).unwrap());
        assert_eq!(std::fs::read(&lab).unwrap(), std::fs::read(&lab2).unwrap());
        assert_eq!(load_idx(&img2, &lab2, DomainTag::Target).unwrap(), s);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_pair(dir.path(), &[1, 2, 3, 4], &[0, 1]);
        // swap: label file has the IDX1 magic
        let err = load_idx(&lab, &img, DomainTag::Source).unwrap_err().to_string();
        assert!(err.contains("0x00000801"), "{err}");

        let (img, _) = idx_pair(dir.path(), &[1, 2, 3, 4], &[0, 1]);
        let lab3 = dir.path().join("three");
        let mut b = IDX1_UBYTE.to_be_bytes().to_vec();
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[0, 1, 2]);
        std::fs::write(&lab3, b).unwrap();
        let err = load_idx(&img, &lab3, DomainTag::Source).unwrap_err().to_string();
        assert!(err.contains("3 labels for 2 images"), "{err}");

        let mut truncated = std::fs::read(&img).unwrap();
        truncated.pop();
        std::fs::write(&img, truncated).unwrap();
        let err = read_idx_images(&img).unwrap_err().to_string();
        assert!(err.contains("byte 16"), "{err}");
    }
}
