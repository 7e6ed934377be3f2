//! Bayer colour filter array: mosaicking `T`, its adjoint, and the
//! four-component half-resolution decomposition of a mosaic.

use super::cube::VideoCube;
use crate::error::{Result, SciError};
use crate::scalar::Real;

pub const RED: usize = 0;
pub const GREEN: usize = 1;
pub const BLUE: usize = 2;

/// Supported CFA layouts. Only RGGB with red at `(0, 0)` exists; other
/// phases are rejected at parse time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CfaPattern {
    Rggb,
}

impl CfaPattern {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rggb" => Ok(CfaPattern::Rggb),
            other => Err(SciError::UnsupportedCfa(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        "rggb"
    }
}

/// Index of a Bayer quad site; the order matches [`interleave`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BayerSite {
    R,
    G1,
    G2,
    B,
}

impl BayerSite {
    pub const ALL: [BayerSite; 4] = [BayerSite::R, BayerSite::G1, BayerSite::G2, BayerSite::B];

    /// `(row, col)` offset inside the 2x2 quad.
    pub fn offset(self) -> (usize, usize) {
        match self {
            BayerSite::R => (0, 0),
            BayerSite::G1 => (0, 1),
            BayerSite::G2 => (1, 0),
            BayerSite::B => (1, 1),
        }
    }

    pub fn channel(self) -> usize {
        match self {
            BayerSite::R => RED,
            BayerSite::G1 | BayerSite::G2 => GREEN,
            BayerSite::B => BLUE,
        }
    }

    #[inline]
    pub fn at(row: usize, col: usize) -> Self {
        match (row & 1, col & 1) {
            (0, 0) => BayerSite::R,
            (0, _) => BayerSite::G1,
            (_, 0) => BayerSite::G2,
            _ => BayerSite::B,
        }
    }
}

/// The mosaicking operator `T` for frames of a fixed size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CfaOperator {
    pattern: CfaPattern,
    height: usize,
    width: usize,
}

pub(crate) fn check_even(height: usize, width: usize) -> Result<()> {
    if height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0 {
        return Err(SciError::OddDimensions { height, width });
    }
    Ok(())
}

impl CfaOperator {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        Self::with_pattern(CfaPattern::Rggb, height, width)
    }

    pub fn with_pattern(pattern: CfaPattern, height: usize, width: usize) -> Result<Self> {
        check_even(height, width)?;
        Ok(CfaOperator {
            pattern,
            height,
            width,
        })
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Colour channel sampled at `(row, col)`.
    #[inline]
    pub fn channel_at(&self, row: usize, col: usize) -> usize {
        BayerSite::at(row, col).channel()
    }

    fn check_dims<T: Real>(&self, cube: &VideoCube<T>, channels: usize) -> Result<()> {
        if cube.height() != self.height || cube.width() != self.width || cube.channels() != channels {
            return Err(SciError::DimensionMismatch(format!(
                "cube {:?} does not match CFA {}x{} with {channels} channel(s)",
                cube.shape(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// `T_M x`: keeps one colour sample per pixel of every frame.
    pub fn mosaic<T: Real>(&self, rgb: &VideoCube<T>) -> Result<VideoCube<T>> {
        self.check_dims(rgb, 3)?;
        let (h, w) = (self.height, self.width);
        let mut out = VideoCube::zeros(h, w, 1, rgb.frames());
        for b in 0..rgb.frames() {
            let frame = rgb.frame(b);
            let dst = out.plane_mut(b, 0);
            for i in 0..h {
                for j in 0..w {
                    let c = self.channel_at(i, j);
                    dst[i * w + j] = frame[c * h * w + i * w + j];
                }
            }
        }
        Ok(out)
    }

    /// `T_M^T q`: scatters mosaic samples back into otherwise-zero RGB frames.
    pub fn mosaic_adjoint<T: Real>(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        self.check_dims(mosaic, 1)?;
        let (h, w) = (self.height, self.width);
        let mut out = VideoCube::zeros(h, w, 3, mosaic.frames());
        for b in 0..mosaic.frames() {
            let src = mosaic.plane(b, 0).to_vec();
            let frame = out.frame_mut(b);
            for i in 0..h {
                for j in 0..w {
                    let c = self.channel_at(i, j);
                    frame[c * h * w + i * w + j] = src[i * w + j];
                }
            }
        }
        Ok(out)
    }

    /// 0/1 diagonal of `T^T T` on an RGB frame, laid out like one frame of a
    /// 3-channel cube.
    pub fn sampling_indicator<T: Real>(&self) -> Vec<T> {
        let (h, w) = (self.height, self.width);
        let mut s = vec![T::zero(); 3 * h * w];
        for i in 0..h {
            for j in 0..w {
                s[self.channel_at(i, j) * h * w + i * w + j] = T::one();
            }
        }
        s
    }
}

/// Four half-resolution stacks `[R, G1, G2, B]` of a mosaic stack.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerComponents<T> {
    pub components: [VideoCube<T>; 4],
}

/// Splits a single-channel mosaic stack into its four Bayer components.
pub fn interleave<T: Real>(mosaic: &VideoCube<T>) -> Result<BayerComponents<T>> {
    if mosaic.channels() != 1 {
        return Err(SciError::DimensionMismatch("interleave expects a mosaic stack".into()));
    }
    let (h, w) = (mosaic.height(), mosaic.width());
    check_even(h, w)?;
    let (hh, hw) = (h / 2, w / 2);
    let components = BayerSite::ALL.map(|site| {
        let (di, dj) = site.offset();
        let mut out = VideoCube::zeros(hh, hw, 1, mosaic.frames());
        for b in 0..mosaic.frames() {
            let src = mosaic.plane(b, 0);
            let dst = out.plane_mut(b, 0);
            for i in 0..hh {
                for j in 0..hw {
                    dst[i * hw + j] = src[(2 * i + di) * w + 2 * j + dj];
                }
            }
        }
        out
    });
    Ok(BayerComponents { components })
}

/// Inverse of [`interleave`].
pub fn deinterleave<T: Real>(parts: &BayerComponents<T>) -> Result<VideoCube<T>> {
    let first = &parts.components[0];
    if parts.components.iter().any(|c| !c.same_shape(first) || c.channels() != 1) {
        return Err(SciError::DimensionMismatch("Bayer components differ in shape".into()));
    }
    let (hh, hw) = (first.height(), first.width());
    let (h, w) = (2 * hh, 2 * hw);
    let mut out = VideoCube::zeros(h, w, 1, first.frames());
    for (site, comp) in BayerSite::ALL.iter().zip(&parts.components) {
        let (di, dj) = site.offset();
        for b in 0..first.frames() {
            let src = comp.plane(b, 0);
            let dst = out.plane_mut(b, 0);
            for i in 0..hh {
                for j in 0..hw {
                    dst[(2 * i + di) * w + 2 * j + dj] = src[i * hw + j];
                }
            }
        }
    }
    Ok(out)
}
