//! Classical RGGB demosaicers: channel-wise bilinear interpolation and the
//! gradient-corrected 5x5 linear filters of Malvar, He and Cutler.
//!
//! Borders use reflect padding (mirror without repeating the edge sample),
//! which keeps the Bayer phase intact because reflection preserves index
//! parity.

use super::Demosaicer;
use crate::error::{Result, SciError};
use crate::model::cfa::{check_even, BayerSite, BLUE, GREEN, RED};
use crate::model::{Plane, VideoCube};
use crate::scalar::Real;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // Works for offsets up to n - 1 outside the range.
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i as usize
}

struct Mosaic<'a, T> {
    data: &'a [T],
    h: usize,
    w: usize,
}

impl<T: Real> Mosaic<'_, T> {
    #[inline]
    fn at(&self, i: usize, j: usize, di: isize, dj: isize) -> T {
        let r = reflect(i as isize + di, self.h);
        let c = reflect(j as isize + dj, self.w);
        self.data[r * self.w + c]
    }

    fn stencil(&self, i: usize, j: usize, k: &[[f64; 5]; 5]) -> T {
        let mut acc = T::zero();
        for (a, row) in k.iter().enumerate() {
            for (b, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += T::of(kv) * self.at(i, j, a as isize - 2, b as isize - 2);
                }
            }
        }
        acc / T::of(8.0)
    }
}

fn frame_bilinear<T: Real>(m: &Mosaic<'_, T>, out: &mut [T]) {
    let (h, w) = (m.h, m.w);
    let n = h * w;
    let half = T::of(0.5);
    let quarter = T::of(0.25);
    for i in 0..h {
        for j in 0..w {
            let v = m.at(i, j, 0, 0);
            let cross = (m.at(i, j, -1, 0) + m.at(i, j, 1, 0) + m.at(i, j, 0, -1) + m.at(i, j, 0, 1)) * quarter;
            let diag = (m.at(i, j, -1, -1) + m.at(i, j, -1, 1) + m.at(i, j, 1, -1) + m.at(i, j, 1, 1)) * quarter;
            let horiz = (m.at(i, j, 0, -1) + m.at(i, j, 0, 1)) * half;
            let vert = (m.at(i, j, -1, 0) + m.at(i, j, 1, 0)) * half;
            let (r, g, b) = match BayerSite::at(i, j) {
                BayerSite::R => (v, cross, diag),
                BayerSite::G1 => (horiz, v, vert),
                BayerSite::G2 => (vert, v, horiz),
                BayerSite::B => (diag, cross, v),
            };
            let k = i * w + j;
            out[RED * n + k] = r;
            out[GREEN * n + k] = g;
            out[BLUE * n + k] = b;
        }
    }
}

/// Green at red or blue sites.
const G_AT_RB: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [-1.0, 2.0, 4.0, 2.0, -1.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];

/// Red (blue) at a green site whose row holds red (blue) samples.
const RB_AT_G_ROW: [[f64; 5]; 5] = [
    [0.0, 0.0, 0.5, 0.0, 0.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [-1.0, 4.0, 5.0, 4.0, -1.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.5, 0.0, 0.0],
];

/// Red (blue) at a green site whose column holds red (blue) samples.
const RB_AT_G_COL: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.5, 0.0, 5.0, 0.0, 0.5],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];

/// Red at blue sites and blue at red sites.
const RB_AT_BR: [[f64; 5]; 5] = [
    [0.0, 0.0, -1.5, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [-1.5, 0.0, 6.0, 0.0, -1.5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0, 0.0, -1.5, 0.0, 0.0],
];

/// The stencils, exposed for dense-operator tests.
pub fn malvar_kernels() -> [(&'static str, [[f64; 5]; 5]); 4] {
    [
        ("g_at_rb", G_AT_RB),
        ("rb_at_g_row", RB_AT_G_ROW),
        ("rb_at_g_col", RB_AT_G_COL),
        ("rb_at_br", RB_AT_BR),
    ]
}

fn frame_malvar<T: Real>(m: &Mosaic<'_, T>, out: &mut [T]) {
    let (h, w) = (m.h, m.w);
    let n = h * w;
    for i in 0..h {
        for j in 0..w {
            let v = m.at(i, j, 0, 0);
            let (r, g, b) = match BayerSite::at(i, j) {
                BayerSite::R => (v, m.stencil(i, j, &G_AT_RB), m.stencil(i, j, &RB_AT_BR)),
                BayerSite::G1 => (m.stencil(i, j, &RB_AT_G_ROW), v, m.stencil(i, j, &RB_AT_G_COL)),
                BayerSite::G2 => (m.stencil(i, j, &RB_AT_G_COL), v, m.stencil(i, j, &RB_AT_G_ROW)),
                BayerSite::B => (m.stencil(i, j, &RB_AT_BR), m.stencil(i, j, &G_AT_RB), v),
            };
            let k = i * w + j;
            out[RED * n + k] = r;
            out[GREEN * n + k] = g;
            out[BLUE * n + k] = b;
        }
    }
}

fn demosaic_stack<T: Real>(
    mosaic: &VideoCube<T>,
    min: usize,
    f: fn(&Mosaic<'_, T>, &mut [T]),
) -> Result<VideoCube<T>> {
    if mosaic.channels() != 1 {
        return Err(SciError::DimensionMismatch(format!(
            "demosaicing expects a single-channel mosaic, got {} channels",
            mosaic.channels()
        )));
    }
    let (h, w) = (mosaic.height(), mosaic.width());
    check_even(h, w)?;
    if h < min || w < min {
        return Err(SciError::TooSmall { height: h, width: w, min });
    }
    let mut out = VideoCube::zeros(h, w, 3, mosaic.frames());
    for b in 0..mosaic.frames() {
        let m = Mosaic {
            data: mosaic.plane(b, 0),
            h,
            w,
        };
        f(&m, out.frame_mut(b));
    }
    Ok(out)
}

fn plane_to_cube<T: Real>(plane: &Plane<T>) -> Result<VideoCube<T>> {
    VideoCube::from_vec(plane.height(), plane.width(), 1, 1, plane.as_slice().to_vec())
}

/// Bilinear demosaic of one mosaic plane into a one-frame RGB cube.
pub fn demosaic_bilinear<T: Real>(mosaic: &Plane<T>) -> Result<VideoCube<T>> {
    demosaic_stack(&plane_to_cube(mosaic)?, 2, frame_bilinear)
}

/// Malvar demosaic of one mosaic plane into a one-frame RGB cube.
pub fn demosaic_malvar<T: Real>(mosaic: &Plane<T>) -> Result<VideoCube<T>> {
    demosaic_stack(&plane_to_cube(mosaic)?, 6, frame_malvar)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BilinearDemosaicer;

impl<T: Real> Demosaicer<T> for BilinearDemosaicer {
    fn demosaic(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        demosaic_stack(mosaic, 2, frame_bilinear)
    }

    fn name(&self) -> String {
        "bilinear".into()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MalvarDemosaicer;

impl<T: Real> Demosaicer<T> for MalvarDemosaicer {
    fn demosaic(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        demosaic_stack(mosaic, 6, frame_malvar)
    }

    fn name(&self) -> String {
        "malvar".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_preserve_constants() {
        for (name, k) in malvar_kernels() {
            let s: f64 = k.iter().flatten().sum();
            assert_eq!(s, 8.0, "{name}");
        }
    }

    #[test]
    fn constant_mosaic_gives_gray() {
        let p = Plane::filled(8, 10, 0.3_f64);
        for out in [demosaic_bilinear(&p).unwrap(), demosaic_malvar(&p).unwrap()] {
            assert!(out.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn sampled_sites_preserved() {
        let p = Plane::from_fn(6, 8, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.2);
        for out in [demosaic_bilinear(&p).unwrap(), demosaic_malvar(&p).unwrap()] {
            for i in 0..6 {
                for j in 0..8 {
                    let c = BayerSite::at(i, j).channel();
                    assert_eq!(out.get(0, c, i, j), p.get(i, j));
                }
            }
        }
    }

    #[test]
    fn horizontal_ramp_bilinear_means() {
        // value = column index
        let p = Plane::from_fn(4, 4, |_, j| j as f64);
        let out = demosaic_bilinear(&p).unwrap();
        // Red at G1 (0,1): mean of (0,0) and (0,2).
        assert_eq!(out.get(0, RED, 0, 1), 1.0);
        // Green at R (2,2): mean of (1,2),(3,2),(2,1),(2,3) = (2+2+1+3)/4.
        assert_eq!(out.get(0, GREEN, 2, 2), 2.0);
        // Blue at R (0,0): diagonals reflect to (1,1) four times -> 1.
        assert_eq!(out.get(0, BLUE, 0, 0), 1.0);
        // Blue at G1 (2,1): mean of (1,1) and (3,1).
        assert_eq!(out.get(0, BLUE, 2, 1), 1.0);
        // Red at B (1,3): diagonals (0,2),(0,4->2),(2,2),(2,2) -> 2.
        assert_eq!(out.get(0, RED, 1, 3), 2.0);
        // Green at B (1,1): (0,1),(2,1),(1,0),(1,2) -> (1+1+0+2)/4.
        assert_eq!(out.get(0, GREEN, 1, 1), 1.0);
    }

    #[test]
    fn delta_at_blue_site() {
        let mut p = Plane::zeros(8, 8);
        p.set(3, 3, 1.0_f64);
        let out = demosaic_malvar(&p).unwrap();
        assert_eq!(out.get(0, GREEN, 3, 3), 4.0 / 8.0);
        assert_eq!(out.get(0, RED, 3, 3), 6.0 / 8.0);
    }

    #[test]
    fn size_checks() {
        assert!(matches!(demosaic_malvar(&Plane::<f64>::zeros(4, 8)), Err(SciError::TooSmall { .. })));
        assert!(matches!(demosaic_bilinear(&Plane::<f64>::zeros(3, 4)), Err(SciError::OddDimensions { .. })));
    }
}
