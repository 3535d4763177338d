use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Ellipses,
    PowerLawTexture,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipses" => Ok(Self::Ellipses),
            "texture" => Ok(Self::PowerLawTexture),
            _ => Err(Error::Config(format!("unknown phantom kind `{s}` (ellipses|texture)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    /// Texture only.
    pub spectral_exponent: f64,
    /// Ellipses only.
    pub max_ellipses: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { kind: PhantomKind::PowerLawTexture, size: 32, count: 200, seed: 0, spectral_exponent: 2.0, max_ellipses: 8 }
    }
}

/// Phantom `i` is drawn from `Rng::new(seed).fork(i)`, so a dataset's prefix does not depend on `count`.
pub fn generate_phantoms(spec: &PhantomSpec) -> Result<Vec<Field>> {
    if spec.size == 0 || !spec.size.is_multiple_of(4) {
        return Err(Error::Config(format!("phantom size {} must be a positive multiple of 4", spec.size)));
    }
    let root = Rng::new(spec.seed);
    (0..spec.count)
        .map(|i| {
            let mut rng = root.fork(i as u64);
            match spec.kind {
                PhantomKind::Ellipses => Ok(ellipses(spec.size, spec.max_ellipses.max(1), &mut rng)),
                PhantomKind::PowerLawTexture => texture(spec.size, spec.spectral_exponent, &mut rng),
            }
        })
        .collect()
}

/// Filled ellipses painted in order on a zero background; later ellipses cover earlier ones.
fn ellipses(d: usize, max: usize, rng: &mut Rng) -> Field {
    let n = 1 + rng.below(max);
    let df = d as f64;
    let shapes: Vec<_> = (0..n)
        .map(|_| {
            let cy = rng.uniform_range(0.2, 0.8) * df;
            let cx = rng.uniform_range(0.2, 0.8) * df;
            let a = rng.uniform_range(0.05, 0.35) * df;
            let b = rng.uniform_range(0.05, 0.35) * df;
            let theta = rng.uniform_range(0.0, PI);
            let v = rng.uniform_range(0.2, 1.0);
            (cy, cx, a, b, theta.cos(), theta.sin(), v)
        })
        .collect();
    Field::from_fn(Shape { height: d, width: d, channels: 1 }, |r, c, _| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        let mut out = 0.0;
        for &(cy, cx, a, b, ct, st, v) in &shapes {
            let (dy, dx) = (y - cy, x - cx);
            let u = dx * ct + dy * st;
            let w = -dx * st + dy * ct;
            if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                out = v;
            }
        }
        out
    })
}

/// In-place 2-D DFT of a row-major `h x w` array.
pub(crate) fn fft2(data: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut t = vec![Complex::default(); h * w];
    for r in 0..h {
        for c in 0..w {
            t[c * h + r] = data[r * w + c];
        }
    }
    col.process(&mut t);
    for r in 0..h {
        for c in 0..w {
            data[r * w + c] = t[c * h + r];
        }
    }
}

/// Signed integer frequency of DFT bin `k` out of `n`.
pub(crate) fn freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Gaussian random field with power `(1 + |f|)^-exponent` (`|f|` in cycles per image), scaled to peak 1.
fn texture(d: usize, exponent: f64, rng: &mut Rng) -> Result<Field> {
    let mut buf: Vec<Complex<f64>> = (0..d * d).map(|_| Complex::new(rng.normal(), 0.0)).collect();
    fft2(&mut buf, d, d, false);
    for r in 0..d {
        for c in 0..d {
            let f = freq(r, d).hypot(freq(c, d));
            buf[r * d + c] *= (1.0 + f).powf(-exponent / 2.0);
        }
    }
    buf[0] = Complex::default();
    fft2(&mut buf, d, d, true);
    let data: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Field::from_vec(Shape { height: d, width: d, channels: 1 }, data.into_iter().map(|v| v / peak).collect())
}
