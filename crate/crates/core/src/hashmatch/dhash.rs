use super::FrameHash;
use crate::{Error, Result};

pub const HASH_COLS: usize = 9;
pub const HASH_ROWS: usize = 8;

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("zero-sized frame {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayFrame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Converts interleaved RGB bytes to luma.
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::invalid("RGB buffer length does not match dimensions"));
        }
        let pixels = rgb.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// ITU-R BT.601 luma, rounded half away from zero.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

/// Difference hash on a 9x8 area-averaged grid.
///
/// Source pixel column `x` falls into grid column `floor(x * 9 / width)`,
/// and likewise for rows with 8 cells, so cells are half-open intervals with
/// evenly spaced real-valued edges. A bit is set when a cell's mean is
/// strictly greater than the mean of its right neighbour.
pub fn compute_dhash(frame: &GrayFrame) -> Result<FrameHash> {
    let (w, h) = (frame.width, frame.height);
    if w < HASH_COLS || h < HASH_ROWS {
        return Err(Error::invalid(format!(
            "frame {w}x{h} is smaller than the {HASH_COLS}x{HASH_ROWS} hash grid"
        )));
    }
    let col_cell: Vec<usize> = (0..w).map(|x| x * HASH_COLS / w).collect();
    let mut sums = [[0u64; HASH_COLS]; HASH_ROWS];
    let mut counts = [[0u64; HASH_COLS]; HASH_ROWS];
    for y in 0..h {
        let r = y * HASH_ROWS / h;
        let row = &frame.pixels[y * w..(y + 1) * w];
        for (x, &p) in row.iter().enumerate() {
            let c = col_cell[x];
            sums[r][c] += p as u64;
            counts[r][c] += 1;
        }
    }
    let mut bits = 0u64;
    for r in 0..HASH_ROWS {
        let means: [f64; HASH_COLS] = std::array::from_fn(|c| sums[r][c] as f64 / counts[r][c] as f64);
        for c in 0..HASH_COLS - 1 {
            bits <<= 1;
            if means[c] > means[c + 1] {
                bits |= 1;
            }
        }
    }
    Ok(FrameHash(bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_hashes_to_zero() {
        let f = GrayFrame::filled(64, 64, 128).unwrap();
        assert_eq!(compute_dhash(&f).unwrap(), FrameHash(0));
    }

    #[test]
    fn strictly_decreasing_rows_hash_to_all_ones() {
        let (w, h) = (90, 16);
        let pixels = (0..h).flat_map(|_| (0..w).map(|x| 250 - (x as u8 * 2))).collect();
        let f = GrayFrame::new(w, h, pixels).unwrap();
        assert_eq!(compute_dhash(&f).unwrap(), FrameHash(u64::MAX));
    }

    #[test]
    fn minimum_size_is_nine_by_eight() {
        assert!(compute_dhash(&GrayFrame::filled(9, 8, 0).unwrap()).is_ok());
        assert!(matches!(
            compute_dhash(&GrayFrame::filled(8, 8, 0).unwrap()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            compute_dhash(&GrayFrame::filled(9, 7, 0).unwrap()),
            Err(Error::InvalidInput(_))
        ));
        assert!(GrayFrame::new(0, 8, vec![]).is_err());
    }

    #[test]
    fn msb_is_top_left_comparison() {
        // Only cell (0,0) brighter than (0,1).
        let mut f = GrayFrame::filled(9, 8, 10).unwrap();
        f.pixels_mut()[0] = 200;
        assert_eq!(compute_dhash(&f).unwrap(), FrameHash(1 << 63));
        // Only cell (7,7) brighter than (7,8): the least significant bit.
        let mut f = GrayFrame::filled(9, 8, 10).unwrap();
        f.pixels_mut()[7 * 9 + 7] = 200;
        assert_eq!(compute_dhash(&f).unwrap(), FrameHash(1));
    }

    #[test]
    fn luma_rounds() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        // 0.299 * 10 = 2.99
        assert_eq!(luma(10, 0, 0), 3);
        // 0.114 * 100 = 11.4
        assert_eq!(luma(0, 0, 100), 11);
        let f = GrayFrame::from_rgb(1, 1, &[0, 100, 0]).unwrap();
        assert_eq!(f.pixels(), &[59]);
    }
}
