//! Modulation masks and the sensing operator `H = [D_1, ..., D_B]`.
//!
//! `H` maps a stack of `B` mosaic-domain planes to one measurement plane by
//! per-pixel modulation and temporal summation. Every block `D_b` is
//! diagonal, so `H H^T` is the diagonal matrix of per-pixel sums of squared
//! mask values. Nothing here ever materializes `H`.

use rand::Rng;

use super::cube::{Plane, VideoCube};
use crate::error::{Result, SciError};
use crate::scalar::Real;

/// `B` modulation planes plus their cached Gram diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskStack<T> {
    masks: VideoCube<T>,
    gram: Plane<T>,
}

impl<T: Real> MaskStack<T> {
    /// Builds a stack from a single-channel cube of mask values in `[0, 1]`.
    pub fn new(masks: VideoCube<T>) -> Result<Self> {
        if masks.channels() != 1 {
            return Err(SciError::DimensionMismatch(format!(
                "masks must be single-channel, got {} channels",
                masks.channels()
            )));
        }
        if let Some(bad) = masks
            .as_slice()
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(SciError::InvalidParameter(format!(
                "mask value {bad} outside [0, 1]"
            )));
        }
        let gram = compute_gram(&masks);
        Ok(MaskStack { masks, gram })
    }

    /// Pseudo-random binary masks with `P(1) = p`.
    pub fn random_binary<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        frames: usize,
        p: f64,
        rng: &mut R,
    ) -> Self {
        let data = (0..height * width * frames)
            .map(|_| if rng.random::<f64>() < p { T::one() } else { T::zero() })
            .collect();
        let cube = VideoCube::from_vec(height, width, 1, frames, data).expect("shape");
        Self::new(cube).expect("binary masks are valid")
    }

    /// Pseudo-random gray masks uniform in `[lo, hi]`.
    pub fn random_uniform<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        frames: usize,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        let data = (0..height * width * frames)
            .map(|_| T::of(lo + (hi - lo) * rng.random::<f64>()))
            .collect();
        let cube = VideoCube::from_vec(height, width, 1, frames, data).expect("shape");
        Self::new(cube).expect("uniform masks are valid")
    }

    pub fn height(&self) -> usize {
        self.masks.height()
    }

    pub fn width(&self) -> usize {
        self.masks.width()
    }

    pub fn frames(&self) -> usize {
        self.masks.frames()
    }

    /// Mask plane `C_b`.
    pub fn mask(&self, b: usize) -> &[T] {
        self.masks.plane(b, 0)
    }

    pub fn as_cube(&self) -> &VideoCube<T> {
        &self.masks
    }

    /// Per-pixel diagonal of `H H^T`: `r_j = sum_b c_{b,j}^2`.
    pub fn gram(&self) -> &Plane<T> {
        &self.gram
    }

    fn check_stack(&self, x: &VideoCube<T>) -> Result<()> {
        if x.channels() != 1
            || x.frames() != self.frames()
            || x.height() != self.height()
            || x.width() != self.width()
        {
            return Err(SciError::DimensionMismatch(format!(
                "stack {:?} does not match masks {}x{}x1x{}",
                x.shape(),
                self.height(),
                self.width(),
                self.frames()
            )));
        }
        Ok(())
    }

    fn check_plane(&self, y: &Plane<T>) -> Result<()> {
        if y.height() != self.height() || y.width() != self.width() {
            return Err(SciError::DimensionMismatch(format!(
                "plane {}x{} does not match masks {}x{}",
                y.height(),
                y.width(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }

    /// `H x`: modulate every plane and sum over frames.
    pub fn apply_h(&self, x: &VideoCube<T>) -> Result<Plane<T>> {
        self.check_stack(x)?;
        let mut out = Plane::zeros(self.height(), self.width());
        for b in 0..self.frames() {
            for ((o, &c), &v) in out.as_mut_slice().iter_mut().zip(self.mask(b)).zip(x.plane(b, 0)) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// `H^T y`: plane `b` is `C_b * y`.
    pub fn adjoint_h(&self, y: &Plane<T>) -> Result<VideoCube<T>> {
        self.check_plane(y)?;
        let mut out = VideoCube::zeros(self.height(), self.width(), 1, self.frames());
        for b in 0..self.frames() {
            for ((o, &c), &v) in out.plane_mut(b, 0).iter_mut().zip(self.mask(b)).zip(y.as_slice()) {
                *o = c * v;
            }
        }
        Ok(out)
    }

    /// `H^T (y ./ d)` with a per-pixel divisor computed from the Gram diagonal.
    pub(crate) fn adjoint_weighted(
        &self,
        residual: &Plane<T>,
        divisor: impl Fn(T) -> T,
    ) -> Result<VideoCube<T>> {
        self.check_plane(residual)?;
        let scaled: Vec<T> = residual
            .as_slice()
            .iter()
            .zip(self.gram.as_slice())
            .map(|(&e, &r)| e / divisor(r))
            .collect();
        let scaled = Plane::from_vec(self.height(), self.width(), scaled)?;
        self.adjoint_h(&scaled)
    }
}

fn compute_gram<T: Real>(masks: &VideoCube<T>) -> Plane<T> {
    let mut r = Plane::zeros(masks.height(), masks.width());
    for b in 0..masks.frames() {
        for (o, &c) in r.as_mut_slice().iter_mut().zip(masks.plane(b, 0)) {
            *o += c * c;
        }
    }
    r
}

/// Free-function form of [`MaskStack::apply_h`].
pub fn apply_h<T: Real>(x: &VideoCube<T>, masks: &MaskStack<T>) -> Result<Plane<T>> {
    masks.apply_h(x)
}

/// Free-function form of [`MaskStack::adjoint_h`].
pub fn adjoint_h<T: Real>(y: &Plane<T>, masks: &MaskStack<T>) -> Result<VideoCube<T>> {
    masks.adjoint_h(y)
}

/// Diagonal of `H H^T`.
pub fn gram_diag<T: Real>(masks: &MaskStack<T>) -> Plane<T> {
    masks.gram().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn masks_from(planes: &[&[f64]], h: usize, w: usize) -> MaskStack<f64> {
        let data = planes.iter().flat_map(|p| p.iter().copied()).collect();
        MaskStack::new(VideoCube::from_vec(h, w, 1, planes.len(), data).unwrap()).unwrap()
    }

    #[test]
    fn apply_h_zero_input_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MaskStack::<f64>::random_uniform(4, 5, 3, 0.0, 1.0, &mut rng);
        let y = m.apply_h(&VideoCube::zeros(4, 5, 1, 3)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_all_ones_mask_is_identity() {
        let m = masks_from(&[&[1.0; 6]], 2, 3);
        let x = VideoCube::from_vec(2, 3, 1, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(m.apply_h(&x).unwrap().as_slice(), x.as_slice());
        let y = x.plane_owned(0, 0);
        assert_eq!(m.adjoint_h(&y).unwrap(), x);
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MaskStack::<f64>::random_binary(3, 3, 4, 0.5, &mut rng);
        let s = m.adjoint_h(&Plane::zeros(3, 3)).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_counts_ones_for_binary_masks() {
        let m = masks_from(&[&[1.0, 0.0, 1.0, 1.0], &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]], 2, 2);
        assert_eq!(gram_diag(&m).as_slice(), &[2.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn gram_of_zero_masks_is_zero() {
        let m = masks_from(&[&[0.0; 4], &[0.0; 4]], 2, 2);
        assert!(m.gram().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = masks_from(&[&[1.0; 4]], 2, 2);
        assert!(m.apply_h(&VideoCube::zeros(2, 2, 1, 2)).is_err());
        assert!(m.adjoint_h(&Plane::zeros(3, 2)).is_err());
    }

    #[test]
    fn out_of_range_masks_rejected() {
        let cube = VideoCube::from_vec(1, 2, 1, 1, vec![0.5, 1.5]).unwrap();
        assert!(MaskStack::new(cube).is_err());
    }
}
