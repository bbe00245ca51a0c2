//! Netpbm graymap (P2 ASCII, P5 binary) reading and writing.

use std::path::{Path, PathBuf};

use super::{GrayImage, IngestError};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header, IngestError> {
    if bytes.is_empty() {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }
    if bytes.len() < 2 || !(bytes[..2] == *b"P2" || bytes[..2] == *b"P5") {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(IngestError::UnsupportedFormat { path: path.to_path_buf(), magic });
    }
    let malformed = |message: &str| IngestError::MalformedHeader { path: path.to_path_buf(), message: message.into() };
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal integer"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("integer out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval must be in 1..=65535"));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_start: pos,
    })
}

fn read_raster(path: &Path) -> Result<(usize, usize, Vec<u32>, u32), IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let h = parse_header(&bytes, path)?;
    let n = h.width * h.height;
    let data = &bytes[h.data_start..];
    let samples: Vec<u32> = if h.magic == *b"P5" {
        let bps = if h.maxval > 255 { 2 } else { 1 };
        let found = data.len() / bps;
        if found < n {
            return Err(IngestError::TruncatedFile { path: path.to_path_buf(), expected: n, found });
        }
        if bps == 1 {
            data[..n].iter().map(|&b| u32::from(b)).collect()
        } else {
            data[..2 * n].chunks_exact(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))).collect()
        }
    } else {
        let text = String::from_utf8_lossy(data);
        let mut out = Vec::with_capacity(n);
        for tok in text.split_ascii_whitespace().take(n) {
            let v: u32 = tok.parse().map_err(|_| IngestError::MalformedHeader {
                path: path.to_path_buf(),
                message: format!("invalid sample {tok:?}"),
            })?;
            out.push(v);
        }
        if out.len() < n {
            return Err(IngestError::TruncatedFile { path: path.to_path_buf(), expected: n, found: out.len() });
        }
        out
    };
    Ok((h.width, h.height, samples, h.maxval))
}

/// Reads a P2/P5 graymap, scaling intensities to [0, 1] by `maxval`.
pub fn load_pgm(path: &Path) -> Result<GrayImage, IngestError> {
    let (w, h, samples, maxval) = read_raster(path)?;
    let scale = f64::from(maxval);
    let pixels = samples.iter().map(|&s| (f64::from(s) / scale).min(1.0)).collect();
    GrayImage::new(w, h, pixels)
}

/// `scan.pgm` -> `scan.mask.pgm`
pub fn mask_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    path.with_file_name(format!("{stem}.mask.pgm"))
}

/// Reads an image and, if present, its sibling mask (nonzero = foreground).
pub fn load_pgm_with_mask(path: &Path) -> Result<GrayImage, IngestError> {
    let img = load_pgm(path)?;
    let mpath = mask_path_for(path);
    if !mpath.is_file() {
        return Ok(img);
    }
    let (mw, mh, samples, _) = read_raster(&mpath)?;
    if mw != img.width() || mh != img.height() {
        return Err(IngestError::MaskMismatch { img_w: img.width(), img_h: img.height(), mask_w: mw, mask_h: mh });
    }
    img.with_mask(samples.iter().map(|&s| s > 0).collect())
}

/// Writes a 16-bit P5 graymap; intensities are clamped to [0, 1].
pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), IngestError> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for &p in image.pixels() {
        let v = (p.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, out).map_err(|e| IngestError::io(path, e))
}

pub fn write_mask_pgm(path: &Path, mask: &[bool], width: usize, height: usize) -> Result<(), IngestError> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(mask.iter().map(|&m| if m { 255u8 } else { 0 }));
    std::fs::write(path, out).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn reads_ascii_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.pgm", b"P2\n# comment\n2 2\n# another\n4\n0 1\n2 4\n");
        let img = load_pgm(&p).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn reads_binary_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.pgm", b"P5 2 1 255\n\x00\xff");
        assert_eq!(load_pgm(&p).unwrap().pixels(), &[0.0, 1.0]);
        let p = write(dir.path(), "b.pgm", b"P5\n1 1\n65535\n\x80\x00");
        let v = load_pgm(&p).unwrap().pixels()[0];
        assert!((v - 32768.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.ppm", b"P6\n1 1\n255\n\x00\x00\x00");
        assert!(matches!(load_pgm(&p), Err(IngestError::UnsupportedFormat { .. })));
    }

    #[test]
    fn truncated_raster_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.pgm", b"P5\n4 4\n255\n\x00\x01\x02");
        assert!(matches!(load_pgm(&p), Err(IngestError::TruncatedFile { expected: 16, found: 3, .. })));
        let p = write(dir.path(), "b.pgm", b"P2\n2 2\n255\n1 2 3");
        assert!(matches!(load_pgm(&p), Err(IngestError::TruncatedFile { expected: 4, found: 3, .. })));
    }

    #[test]
    fn round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::new(3, 2, vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0]).unwrap();
        let p = dir.path().join("scan.pgm");
        write_pgm(&p, &img).unwrap();
        let mask = [true, false, true, false, true, false];
        write_mask_pgm(&mask_path_for(&p), &mask, 3, 2).unwrap();
        let back = load_pgm_with_mask(&p).unwrap();
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(back.mask().unwrap(), &mask);
        assert_eq!(mask_path_for(&p).file_name().unwrap(), "scan.mask.pgm");
    }
}
