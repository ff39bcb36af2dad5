use alloc::vec::Vec;

use crate::{Error, Result};

/// One grayscale observation, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::BadArray {
                shape: alloc::vec![height, width],
                len: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: alloc::vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    /// Largest absolute pixel difference.
    pub fn max_abs_diff(&self, other: &Frame) -> f32 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn approx_eq(&self, other: &Frame, tol: f32) -> bool {
        self.height == other.height && self.width == other.width && self.max_abs_diff(other) <= tol
    }

    /// 8-bit quantization used by the PGM exporter and golden images.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0 + 0.5) as u8)
            .collect()
    }
}

/// An ordered run of frames with its motion class and playback speed.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<Frame>,
    pub class_id: usize,
    pub speed: f32,
}

impl MotionSequence {
    pub fn new(frames: Vec<Frame>, class_id: usize, speed: f32) -> Self {
        Self {
            frames,
            class_id,
            speed,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same metadata, different frames.
    pub fn with_frames(&self, frames: Vec<Frame>) -> Self {
        Self {
            frames,
            class_id: self.class_id,
            speed: self.speed,
        }
    }

    pub fn window(&self, start: usize, len: usize) -> Self {
        self.with_frames(self.frames[start..start + len].to_vec())
    }

    /// True when every frame matches the first within `tol`.
    pub fn is_constant(&self, tol: f32) -> bool {
        match self.frames.first() {
            None => true,
            Some(first) => self.frames.iter().all(|f| f.approx_eq(first, tol)),
        }
    }

    pub fn approx_eq(&self, other: &MotionSequence, tol: f32) -> bool {
        self.len() == other.len()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| a.approx_eq(b, tol))
    }
}
