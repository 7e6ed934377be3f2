//! Deterministic synthetic scenes with known motion.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SciError};
use crate::model::VideoCube;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Bright square translating over a flat background (grayscale).
    MovingSquare,
    /// Sum of sinusoids panning horizontally (grayscale).
    TexturePan,
    /// Three coloured discs orbiting the frame centre (RGB).
    ColorOrbits,
}

impl SyntheticKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "moving_square" => Ok(SyntheticKind::MovingSquare),
            "texture_pan" => Ok(SyntheticKind::TexturePan),
            "color_orbits" => Ok(SyntheticKind::ColorOrbits),
            other => Err(SciError::InvalidParameter(format!("unknown synthetic scene '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::MovingSquare => "moving_square",
            SyntheticKind::TexturePan => "texture_pan",
            SyntheticKind::ColorOrbits => "color_orbits",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            SyntheticKind::ColorOrbits => 3,
            _ => 1,
        }
    }
}

/// Geometry of a `moving_square` scene. Positions wrap around the frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovingSquare {
    pub top: usize,
    pub left: usize,
    pub side: usize,
    /// Pixels per frame, (down, right).
    pub velocity: (isize, isize),
    pub background: f64,
    pub foreground: f64,
}

impl MovingSquare {
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = (height.min(width) / 4).max(1);
        MovingSquare {
            top: rng.random_range(0..height),
            left: rng.random_range(0..width),
            side,
            velocity: (rng.random_range(-1i64..=1) as isize, rng.random_range(1i64..=2) as isize),
            background: 0.15,
            foreground: 0.85,
        }
    }

    /// Top-left corner in frame `b`: start plus `b * velocity`, wrapped.
    pub fn origin(&self, b: usize, height: usize, width: usize) -> (usize, usize) {
        let r = (self.top as isize + b as isize * self.velocity.0).rem_euclid(height as isize);
        let c = (self.left as isize + b as isize * self.velocity.1).rem_euclid(width as isize);
        (r as usize, c as usize)
    }
}

/// Palette and motion of a `color_orbits` scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorOrbits {
    pub background: [f64; 3],
    pub colors: [[f64; 3]; 3],
    pub radius: f64,
    pub orbit: f64,
    pub phase: f64,
    /// Radians per frame.
    pub angular_velocity: f64,
}

impl ColorOrbits {
    pub fn new(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0105);
        let background = [0.0; 3].map(|_: f64| rng.random_range(0.05..0.3));
        let colors = [[0.0; 3]; 3].map(|_| [0.0; 3].map(|_: f64| rng.random_range(0.1..0.95)));
        let m = height.min(width) as f64;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        ColorOrbits {
            background,
            colors,
            radius: (m / 8.0).max(1.0),
            orbit: m / 4.0,
            phase: rng.random_range(0.0..2.0 * PI),
            angular_velocity: sign * rng.random_range(0.15..0.35),
        }
    }

    /// Disc centres `(row, col)` in frame `b`.
    pub fn centers(&self, b: usize, height: usize, width: usize) -> [(f64, f64); 3] {
        let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
        let base = self.phase + self.angular_velocity * b as f64;
        [0, 1, 2].map(|d| {
            let a = base + d as f64 * 2.0 * PI / 3.0;
            (cy + self.orbit * a.sin(), cx + self.orbit * a.cos())
        })
    }

    /// Expected mean of each channel, from disc areas.
    pub fn target_mean(&self, height: usize, width: usize) -> [f64; 3] {
        let frac = PI * self.radius * self.radius / (height * width) as f64;
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            *o = self.background[ch] * (1.0 - 3.0 * frac) + self.colors.iter().map(|c| c[ch] * frac).sum::<f64>();
        }
        out
    }
}

fn moving_square<T: Real>(h: usize, w: usize, frames: usize, seed: u64) -> VideoCube<T> {
    let s = MovingSquare::new(h, w, seed);
    let mut cube = VideoCube::filled(h, w, 1, frames, T::of(s.background));
    for b in 0..frames {
        let (r0, c0) = s.origin(b, h, w);
        let plane = cube.plane_mut(b, 0);
        for di in 0..s.side {
            for dj in 0..s.side {
                plane[((r0 + di) % h) * w + (c0 + dj) % w] = T::of(s.foreground);
            }
        }
    }
    cube
}

fn texture_pan<T: Real>(h: usize, w: usize, frames: usize, seed: u64) -> VideoCube<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.05..0.25),
                rng.random_range(0.05..0.25),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.08..0.13),
            )
        })
        .collect();
    let speed = rng.random_range(0.5..1.5);
    let mut cube = VideoCube::zeros(h, w, 1, frames);
    for b in 0..frames {
        let shift = speed * b as f64;
        let plane = cube.plane_mut(b, 0);
        for i in 0..h {
            for j in 0..w {
                let x = j as f64 - shift;
                let v: f64 = waves
                    .iter()
                    .map(|&(fy, fx, ph, amp)| amp * (2.0 * PI * (fy * i as f64 + fx * x) + ph).sin())
                    .sum();
                plane[i * w + j] = T::of((0.5 + v).clamp(0.0, 1.0));
            }
        }
    }
    cube
}

fn color_orbits<T: Real>(h: usize, w: usize, frames: usize, seed: u64) -> VideoCube<T> {
    let s = ColorOrbits::new(h, w, seed);
    let mut cube = VideoCube::zeros(h, w, 3, frames);
    let r2 = s.radius * s.radius;
    for b in 0..frames {
        let centers = s.centers(b, h, w);
        for i in 0..h {
            for j in 0..w {
                let mut px = s.background;
                for (d, &(cy, cx)) in centers.iter().enumerate() {
                    let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                    if dy * dy + dx * dx <= r2 {
                        px = s.colors[d];
                    }
                }
                for (ch, &v) in px.iter().enumerate() {
                    cube.set(b, ch, i, j, T::of(v));
                }
            }
        }
    }
    cube
}

/// Generates an `height x width` scene with `frames` frames.
pub fn gen_synthetic<T: Real>(
    kind: SyntheticKind,
    height: usize,
    width: usize,
    frames: usize,
    seed: u64,
) -> Result<VideoCube<T>> {
    if height < 4 || width < 4 {
        return Err(SciError::TooSmall { height, width, min: 4 });
    }
    if frames == 0 {
        return Err(SciError::InvalidParameter("frames must be >= 1".into()));
    }
    Ok(match kind {
        SyntheticKind::MovingSquare => moving_square(height, width, frames, seed),
        SyntheticKind::TexturePan => texture_pan(height, width, frames, seed),
        SyntheticKind::ColorOrbits => {
            crate::model::cfa::check_even(height, width)?;
            color_orbits(height, width, frames, seed)
        }
    })
}
