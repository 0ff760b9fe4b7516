//! Occupancy images, NetPBM I/O and mask comparison.

use std::path::Path;

use crate::error::{ensure, Error, Result};

/// Row-major occupancy values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl SilhouetteImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        ensure(data.len() == width * height, || {
            format!("image data has {} values, expected {}x{}", data.len(), width, height)
        })?;
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("occupancy value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Binary image of the `≥ 0.5` super-level set.
    pub fn thresholded(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Area-weighted resampling to another resolution (each output pixel is
    /// the coverage-weighted mean of the input pixels it overlaps).
    pub fn resample_area(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let wx = area_weights(self.width, width);
        let wy = area_weights(self.height, height);
        // Horizontal pass then vertical pass.
        let mut tmp = vec![0.0; self.height * width];
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            for (x, taps) in wx.iter().enumerate() {
                tmp[y * width + x] = taps.iter().map(|&(i, w)| row[i] * w).sum();
            }
        }
        let mut out = vec![0.0; width * height];
        for (y, taps) in wy.iter().enumerate() {
            for x in 0..width {
                let v: f64 = taps.iter().map(|&(i, w)| tmp[i * width + x] * w).sum();
                out[y * width + x] = v.clamp(0.0, 1.0);
            }
        }
        Self { width, height, data: out }
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut token = || -> std::result::Result<String, String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err("not a binary PGM (P5) file".into());
        }
        let parse = |s: String| s.parse::<usize>().map_err(|e| format!("bad PGM header field {s:?}: {e}"));
        let width = parse(token()?)?;
        let height = parse(token()?)?;
        let maxval = parse(token()?)?;
        if maxval != 255 {
            return Err(format!("only 8-bit PGM is supported (maxval {maxval})"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let end = start + width * height;
        if bytes.len() < end {
            return Err(format!(
                "PGM raster truncated: need {} bytes, have {}",
                width * height,
                bytes.len().saturating_sub(start)
            ));
        }
        let data = bytes[start..end].iter().map(|&b| b as f64 / 255.0).collect();
        Ok(Self { width, height, data })
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|m| Error::parse(path, m))
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Intersection over union of the `≥ 0.5` sets. Two empty masks score 1.
pub fn mask_iou(a: &SilhouetteImage, b: &SilhouetteImage) -> Result<f64> {
    ensure(a.same_size(b), || format!("mask sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height))?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.data.iter().zip(&b.data) {
        let (p, q) = (*x >= 0.5, *y >= 0.5);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, x0: usize, y0: usize, side: usize) -> SilhouetteImage {
        let mut img = SilhouetteImage::zeros(w, w);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                img.data[y * w + x] = 1.0;
            }
        }
        img
    }

    #[test]
    fn iou_cases() {
        let a = square(32, 4, 4, 8);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &square(32, 20, 20, 8)).unwrap(), 0.0);
        // Shifted by half a side: overlap 32, union 96.
        let iou = mask_iou(&a, &square(32, 8, 4, 8)).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-15);
        assert!(mask_iou(&a, &SilhouetteImage::zeros(16, 16)).is_err());
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let img = SilhouetteImage::new(3, 2, vec![0.0, 1.0, 0.2, 0.6, 1.0, 0.0]).unwrap();
        let back = SilhouetteImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0);
        }
        assert!(SilhouetteImage::from_pgm_bytes(b"P2\n1 1\n255\n0").is_err());
        assert!(SilhouetteImage::from_pgm_bytes(b"P5\n4 4\n255\n\x00").is_err());
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\xff\x00";
        assert_eq!(SilhouetteImage::from_pgm_bytes(with_comment).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(SilhouetteImage::new(1, 1, vec![1.5]).is_err());
        assert!(SilhouetteImage::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn area_resampling_preserves_mass() {
        let img = square(30, 3, 7, 11);
        let small = img.resample_area(8, 8);
        let big_mass: f64 = img.data().iter().sum::<f64>() / (30.0 * 30.0);
        let small_mass: f64 = small.data().iter().sum::<f64>() / 64.0;
        assert!((big_mass - small_mass).abs() < 1e-12);
        let halved = square(4, 0, 0, 2).resample_area(2, 2);
        assert_eq!(halved.data(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
