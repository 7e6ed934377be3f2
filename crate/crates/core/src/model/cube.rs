use crate::error::{Result, SciError};
use crate::scalar::Real;

/// A single `height x width` plane stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(SciError::DimensionMismatch(format!(
                "plane {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Plane { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape(&self, other: &Plane<T>) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A video cube: `frames` frames of `channels` planes each, every plane
/// `height x width` row-major. Storage order is frame, channel, row, column.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoCube<T> {
    height: usize,
    width: usize,
    channels: usize,
    frames: usize,
    data: Vec<T>,
}

impl<T: Real> VideoCube<T> {
    pub fn zeros(height: usize, width: usize, channels: usize, frames: usize) -> Self {
        VideoCube {
            height,
            width,
            channels,
            frames,
            data: vec![T::zero(); height * width * channels * frames],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, frames: usize, value: T) -> Self {
        let mut cube = Self::zeros(height, width, channels, frames);
        cube.data.iter_mut().for_each(|v| *v = value);
        cube
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        frames: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(SciError::InvalidParameter(format!(
                "cube must have 1 or 3 channels, got {channels}"
            )));
        }
        if frames == 0 {
            return Err(SciError::InvalidParameter("cube needs at least one frame".into()));
        }
        let expected = height * width * channels * frames;
        if data.len() != expected {
            return Err(SciError::DimensionMismatch(format!(
                "cube {height}x{width}x{channels}x{frames} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(VideoCube {
            height,
            width,
            channels,
            frames,
            data,
        })
    }

    /// Stacks single-channel planes into a grayscale cube.
    pub fn from_planes(planes: &[Plane<T>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| SciError::InvalidParameter("no planes given".into()))?;
        let (h, w) = (first.height(), first.width());
        let mut data = Vec::with_capacity(h * w * planes.len());
        for p in planes {
            if !p.same_shape(first) {
                return Err(SciError::DimensionMismatch("planes differ in shape".into()));
            }
            data.extend_from_slice(p.as_slice());
        }
        Self::from_vec(h, w, 1, planes.len(), data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(height, width, channels, frames)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.height, self.width, self.channels, self.frames)
    }

    pub fn same_shape(&self, other: &VideoCube<T>) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &VideoCube<T>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(SciError::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    #[inline]
    fn plane_offset(&self, frame: usize, channel: usize) -> usize {
        (frame * self.channels + channel) * self.plane_len()
    }

    #[inline]
    pub fn plane(&self, frame: usize, channel: usize) -> &[T] {
        let off = self.plane_offset(frame, channel);
        &self.data[off..off + self.plane_len()]
    }

    #[inline]
    pub fn plane_mut(&mut self, frame: usize, channel: usize) -> &mut [T] {
        let off = self.plane_offset(frame, channel);
        let n = self.plane_len();
        &mut self.data[off..off + n]
    }

    /// All channels of one frame, contiguous.
    #[inline]
    pub fn frame(&self, frame: usize) -> &[T] {
        let n = self.plane_len() * self.channels;
        &self.data[frame * n..(frame + 1) * n]
    }

    #[inline]
    pub fn frame_mut(&mut self, frame: usize) -> &mut [T] {
        let n = self.plane_len() * self.channels;
        &mut self.data[frame * n..(frame + 1) * n]
    }

    pub fn plane_owned(&self, frame: usize, channel: usize) -> Plane<T> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.plane(frame, channel).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, frame: usize, channel: usize, row: usize, col: usize) -> T {
        self.data[self.plane_offset(frame, channel) + row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, channel: usize, row: usize, col: usize, value: T) {
        let off = self.plane_offset(frame, channel) + row * self.width + col;
        self.data[off] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Copies frames `start..start+count` into a new cube.
    pub fn frame_range(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.frames {
            return Err(SciError::DimensionMismatch(format!(
                "frame range {start}..{} outside 0..{}",
                start + count,
                self.frames
            )));
        }
        let n = self.plane_len() * self.channels;
        Ok(VideoCube {
            height: self.height,
            width: self.width,
            channels: self.channels,
            frames: count,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// A cube of the same shape holding `data`.
    pub(crate) fn with_data(&self, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        VideoCube {
            height: self.height,
            width: self.width,
            channels: self.channels,
            frames: self.frames,
            data,
        }
    }

    /// Zero cube of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.height, self.width, self.channels, self.frames)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn clip(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> VideoCube<U> {
        VideoCube {
            height: self.height,
            width: self.width,
            channels: self.channels,
            frames: self.frames,
            data: self.data.iter().map(|&v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}
