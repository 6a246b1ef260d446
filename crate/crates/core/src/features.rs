//! Feature providers that turn frames into vectors: colour histograms of
//! binary PPM images and seeded Gaussian random projection.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::linalg::Matrix;
use crate::rng::{rng_for, TAG_PROJECTION};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpmImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PpmImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput("image with zero width or height"));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::DimensionMismatch {
                expected: 3 * width * height,
                actual: pixels.len(),
            });
        }
        Ok(PpmImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB bytes, row-major.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = 3 * (y * self.width + x);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn parse_ppm(bytes: &[u8]) -> Result<PpmImage> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos).ok_or_else(|| Error::Truncated("ppm header".into()))?;
    if magic != "P6" {
        return Err(Error::UnsupportedFormat(format!(
            "ppm magic {magic:?}, only binary P6 is supported"
        )));
    }
    let mut field = |name: &str| -> Result<usize> {
        let tok =
            header_token(bytes, &mut pos).ok_or_else(|| Error::Truncated(format!("ppm header ({name})")))?;
        tok.parse()
            .map_err(|_| Error::UnsupportedFormat(format!("ppm {name} {tok:?}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "ppm maxval {maxval}, only 255 is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = 3 * width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(Error::Truncated(format!(
            "ppm raster has {} bytes, expected {need}",
            raster.len()
        )));
    }
    PpmImage::new(width, height, raster[..need].to_vec())
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<PpmImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes)
}

pub fn save_ppm(img: &PpmImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, img.to_ppm_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramConfig {
    pub bins_per_channel: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig { bins_per_channel: 8 }
    }
}

impl HistogramConfig {
    pub fn new(bins_per_channel: usize) -> Result<Self> {
        if !(1..=256).contains(&bins_per_channel) {
            return Err(Error::InvalidConfig(format!(
                "bins_per_channel must be in 1..=256, got {bins_per_channel}"
            )));
        }
        Ok(HistogramConfig { bins_per_channel })
    }

    #[inline]
    pub fn bin(&self, value: u8) -> usize {
        // 255 * bins / 256 < bins, so the top value lands in the last bin.
        value as usize * self.bins_per_channel / 256
    }
}

/// Per-channel normalized histogram, concatenated R, G, B.
/// Each channel block sums to one.
pub fn histogram_descriptor(img: &PpmImage, cfg: &HistogramConfig) -> Vec<f64> {
    let bins = cfg.bins_per_channel;
    let mut counts = vec![0u64; 3 * bins];
    for px in img.pixels.chunks_exact(3) {
        for (c, &v) in px.iter().enumerate() {
            counts[c * bins + cfg.bin(v)] += 1;
        }
    }
    let total = (img.width * img.height) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Projects rows of `xs` through a Gaussian matrix with entries drawn from
/// `N(0, 1/target_dim)`.
pub fn random_projection(xs: &Matrix, target_dim: usize, seed: u64) -> Result<Matrix> {
    if target_dim == 0 {
        return Err(Error::InvalidConfig("target_dim must be positive".into()));
    }
    let d = xs.cols();
    let normal = Normal::new(0.0, (1.0 / target_dim as f64).sqrt()).expect("positive sigma");
    let mut rng = rng_for(seed, &[TAG_PROJECTION]);
    let entries = (0..d * target_dim).map(|_| normal.sample(&mut rng)).collect();
    let proj = Matrix::from_vec(d, target_dim, entries)?;
    xs.matmul(&proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> PpmImage {
        let mut rng = rng_for(seed, &[99]);
        let px = (0..3 * w * h).map(|_| rng.gen::<u8>()).collect();
        PpmImage::new(w, h, px).unwrap()
    }

    #[test]
    fn uniform_gray_fills_one_bin() {
        let img = PpmImage::new(4, 3, vec![128; 36]).unwrap();
        let h = histogram_descriptor(&img, &HistogramConfig::default());
        assert_eq!(h.len(), 24);
        for c in 0..3 {
            let block = &h[c * 8..(c + 1) * 8];
            assert_eq!(block[4], 1.0);
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn half_black_half_white_two_bins() {
        let mut px = vec![0u8; 3 * 8];
        px.extend(vec![255u8; 3 * 8]);
        let img = PpmImage::new(4, 4, px).unwrap();
        let h = histogram_descriptor(&img, &HistogramConfig::new(2).unwrap());
        assert_eq!(h, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn histogram_matches_pixel_loop() {
        let img = random_image(16, 16, 5);
        let cfg = HistogramConfig::new(8).unwrap();
        let h = histogram_descriptor(&img, &cfg);
        // Independent count: compare each value against explicit bin edges.
        let mut expected = vec![0.0; 24];
        for y in 0..16 {
            for x in 0..16 {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    let v = p[c] as f64;
                    let b = (0..8).find(|&b| v < (b + 1) as f64 * 32.0).unwrap();
                    expected[c * 8 + b] += 1.0 / 256.0;
                }
            }
        }
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn top_value_lands_in_last_bin() {
        for bins in [1, 3, 7, 8, 255, 256] {
            let cfg = HistogramConfig::new(bins).unwrap();
            assert_eq!(cfg.bin(255), bins - 1);
            assert_eq!(cfg.bin(0), 0);
        }
        assert!(HistogramConfig::new(0).is_err());
        assert!(HistogramConfig::new(257).is_err());
    }

    #[test]
    fn one_white_pixel() {
        let img = parse_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!(img.pixel(0, 0), [255, 255, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = parse_ppm(b"P6 # made by hand\n2 1 # size\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn ascii_ppm_unsupported() {
        assert!(matches!(
            parse_ppm(b"P3\n1 1\n255\n255 255 255\n"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn bad_maxval_and_truncation() {
        assert!(matches!(
            parse_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_ppm(b"P6\n2 2\n255\n\0\0\0"),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(parse_ppm(b"P6\n2"), Err(Error::Truncated(_))));
    }

    #[test]
    fn ppm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = random_image(7, 5, 1);
        let path = dir.path().join("a.ppm");
        save_ppm(&img, &path).unwrap();
        assert_eq!(load_ppm(&path).unwrap(), img);
    }

    #[test]
    fn projection_deterministic_and_zero_preserving() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64; 10]).collect();
        let xs = Matrix::from_rows(&rows).unwrap();
        let a = random_projection(&xs, 4, 3).unwrap();
        assert_eq!(a, random_projection(&xs, 4, 3).unwrap());
        assert_ne!(a, random_projection(&xs, 4, 4).unwrap());
        let z = random_projection(&Matrix::zeros(3, 10), 4, 3).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert!(random_projection(&xs, 0, 3).is_err());
    }

    #[test]
    fn projection_roughly_preserves_distances() {
        let mut rng = rng_for(21, &[0]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let xs = Matrix::from_rows(&rows).unwrap();
        let ys = random_projection(&xs, 64, 9).unwrap();
        let mut distortion: Vec<f64> = (0..100)
            .map(|p| {
                let (i, j) = (2 * p, 2 * p + 1);
                let before = crate::linalg::dist(xs.row(i), xs.row(j));
                let after = crate::linalg::dist(ys.row(i), ys.row(j));
                (after / before - 1.0).abs()
            })
            .collect();
        distortion.sort_by(f64::total_cmp);
        let median = (distortion[49] + distortion[50]) / 2.0;
        assert!(median < 0.3, "median distortion {median}");
    }
}
