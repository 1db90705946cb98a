//! Timestamped RGB frames stored row-major, channel-interleaved (H×W×3).

use crate::scalar::Real;

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame<T> {
    pub timestamp_ns: u64,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ImageFrame<T> {
    /// Frame filled with one RGB color.
    pub fn filled(height: usize, width: usize, rgb: [T; 3], timestamp_ns: u64) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            timestamp_ns,
            height,
            width,
            data,
        }
    }

    /// Wraps an H×W×3 buffer. Panics if the length does not match.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>, timestamp_ns: u64) -> Self {
        assert_eq!(data.len(), height * width * CHANNELS, "image buffer length");
        Self {
            timestamp_ns,
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [T; 3] {
        let i = self.index(y, x, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [T; 3]) {
        let i = self.index(y, x, 0);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn cast<U: Real>(&self) -> ImageFrame<U> {
        ImageFrame {
            timestamp_ns: self.timestamp_ns,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.cast()).collect(),
        }
    }
}
