//! Laplacian pyramid with a separable 5-tap kernel and mirror boundaries.
//!
//! `down` blurs then keeps even rows and columns. `up` zero-inserts to twice
//! the size and blurs with the taps doubled per axis, so constants are fixed
//! points of both. Levels are indexed 1 (finest, base resolution) to `L`
//! (coarsest):
//!
//! ```text
//! x^(L) = down^(L-1)(x)
//! x^(i) = down^(i-1)(x) - up(down^i(x))      for i < L
//! ```
//!
//! Reconstruction folds coarse to fine and is exact for any kernel.

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mirror about the edge sample without repeating it: `x[-1] = x[1]`.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidKernel {
    taps: [f64; 5],
    boundary: Boundary,
}

/// Binomial `[1, 4, 6, 4, 1] / 16` with reflect boundaries.
pub const BINOMIAL: PyramidKernel = PyramidKernel {
    taps: [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0],
    boundary: Boundary::Reflect,
};

impl Default for PyramidKernel {
    fn default() -> Self {
        BINOMIAL
    }
}

/// Index into `0..n` after mirroring about both ends.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let j = i.rem_euclid(period);
    if j >= n as isize {
        (period - j) as usize
    } else {
        j as usize
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Rows,
    Cols,
}

/// Geometry of a 1-D pass: number of lines, line length, and strides.
struct Lines {
    count: usize,
    len: usize,
    line_stride: usize,
    step: usize,
}

fn lines(shape: Shape, axis: Axis) -> Vec<Lines> {
    let c = shape.channels;
    // One entry per channel; channels never mix.
    (0..c)
        .map(|_| match axis {
            Axis::Cols => Lines { count: shape.height, len: shape.width, line_stride: shape.width * c, step: c },
            Axis::Rows => Lines { count: shape.width, len: shape.height, line_stride: c, step: shape.width * c },
        })
        .collect()
}

impl PyramidKernel {
    /// Symmetric 5-tap kernel; taps must sum to one.
    pub fn new(taps: [f64; 5]) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 4.0 * f64::EPSILON {
            return Err(Error::InvalidArgument(format!("kernel taps sum to {sum}, expected 1")));
        }
        if taps[0] != taps[4] || taps[1] != taps[3] {
            return Err(Error::InvalidArgument("kernel taps must be symmetric".into()));
        }
        Ok(Self { taps, boundary: Boundary::Reflect })
    }

    pub fn taps(&self) -> [f64; 5] {
        self.taps
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Blur along `axis` with `gain * taps`, evaluating only every `stride`-th
    /// output sample. Output length along the axis is `ceil(len / stride)`.
    fn filter(&self, x: &Field, axis: Axis, gain: f64, stride: usize) -> Field {
        let s = x.shape();
        let out_shape = match axis {
            Axis::Cols => Shape { width: s.width.div_ceil(stride), ..s },
            Axis::Rows => Shape { height: s.height.div_ceil(stride), ..s },
        };
        let mut out = Field::zeros(out_shape);
        let src = x.data();
        let in_lines = lines(s, axis);
        let out_lines = lines(out_shape, axis);
        let dst = out.data_mut();
        for (ch, (li, lo)) in in_lines.iter().zip(&out_lines).enumerate() {
            for line in 0..li.count {
                let ib = line * li.line_stride + ch;
                let ob = line * lo.line_stride + ch;
                for (k, n) in (0..li.len).step_by(stride).enumerate() {
                    let mut acc = 0.0;
                    for (t, &w) in self.taps.iter().enumerate() {
                        let m = mirror(n as isize + t as isize - 2, li.len);
                        acc += w * src[ib + m * li.step];
                    }
                    dst[ob + k * lo.step] = gain * acc;
                }
            }
        }
        out
    }

    /// Adjoint of `filter(.., gain = 1, stride = 1)` along `axis`.
    fn filter_adjoint(&self, u: &Field, axis: Axis) -> Field {
        let s = u.shape();
        let mut out = Field::zeros(s);
        let src = u.data();
        let ls = lines(s, axis);
        let dst = out.data_mut();
        for (ch, l) in ls.iter().enumerate() {
            for line in 0..l.count {
                let base = line * l.line_stride + ch;
                for n in 0..l.len {
                    let v = src[base + n * l.step];
                    for (t, &w) in self.taps.iter().enumerate() {
                        let m = mirror(n as isize + t as isize - 2, l.len);
                        dst[base + m * l.step] += w * v;
                    }
                }
            }
        }
        out
    }

    /// Separable blur (no decimation).
    pub fn blur(&self, x: &Field) -> Field {
        self.filter(&self.filter(x, Axis::Cols, 1.0, 1), Axis::Rows, 1.0, 1)
    }

    pub fn blur_adjoint(&self, x: &Field) -> Field {
        self.filter_adjoint(&self.filter_adjoint(x, Axis::Rows), Axis::Cols)
    }

    /// Blur then keep even-indexed rows and columns.
    pub fn down(&self, x: &Field) -> Result<Field> {
        x.shape().halved()?;
        Ok(self.filter(&self.filter(x, Axis::Cols, 1.0, 2), Axis::Rows, 1.0, 2))
    }

    /// Exact adjoint of [`PyramidKernel::down`]: zero insertion followed by the blur adjoint.
    pub fn down_adjoint(&self, u: &Field) -> Field {
        self.blur_adjoint(&zero_insert(u))
    }

    /// Zero-insert to double size, then blur with `2 * taps` per axis.
    pub fn up(&self, x: &Field) -> Field {
        let z = zero_insert(x);
        self.filter(&self.filter(&z, Axis::Cols, 2.0, 1), Axis::Rows, 2.0, 1)
    }

    pub fn decompose(&self, x: &Field, num_levels: usize) -> Result<LaplacianPyramid> {
        if num_levels < 2 {
            return Err(Error::InvalidArgument(format!("pyramid needs at least 2 levels, got {num_levels}")));
        }
        x.shape().check_divisible(1 << (num_levels - 1))?;
        // gaussian[j] = down^j(x)
        let mut gaussian = vec![x.clone()];
        for j in 1..num_levels {
            let next = self.down(&gaussian[j - 1])?;
            gaussian.push(next);
        }
        let mut levels = Vec::with_capacity(num_levels);
        levels.push(gaussian[num_levels - 1].clone());
        for i in (1..num_levels).rev() {
            levels.push(gaussian[i - 1].sub(&self.up(&gaussian[i]))?);
        }
        Ok(LaplacianPyramid { levels, base_shape: x.shape(), kernel: *self })
    }
}

/// Place `x[r, c]` at `(2r, 2c)` of a field twice the size; other entries zero.
/// This is the adjoint of even-index decimation.
pub fn zero_insert(x: &Field) -> Field {
    let s = x.shape();
    let big = s.doubled();
    let mut out = Field::zeros(big);
    let c = s.channels;
    let dst = out.data_mut();
    for r in 0..s.height {
        for col in 0..s.width {
            for ch in 0..c {
                dst[((2 * r) * big.width + 2 * col) * c + ch] = x.get(r, col, ch);
            }
        }
    }
    out
}

/// Keep even-indexed rows and columns.
pub fn decimate(x: &Field) -> Result<Field> {
    let half = x.shape().halved()?;
    Ok(Field::from_fn(half, |r, c, ch| x.get(2 * r, 2 * c, ch)))
}

pub fn down(x: &Field) -> Result<Field> {
    BINOMIAL.down(x)
}

pub fn up(x: &Field) -> Field {
    BINOMIAL.up(x)
}

pub fn decompose(x: &Field, num_levels: usize) -> Result<LaplacianPyramid> {
    BINOMIAL.decompose(x, num_levels)
}

pub fn reconstruct(p: &LaplacianPyramid) -> Result<Field> {
    p.reconstruct()
}

pub fn partial_reconstruct(p: &LaplacianPyramid, from_level: usize) -> Result<Field> {
    p.partial_reconstruct(from_level)
}

/// Levels `[x^(L), ..., x^(1)]` at dyadic resolutions, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    levels: Vec<Field>,
    base_shape: Shape,
    kernel: PyramidKernel,
}

impl LaplacianPyramid {
    /// Assembles a pyramid from levels ordered coarsest first, checking the dyadic shapes.
    pub fn from_levels(levels: Vec<Field>, kernel: PyramidKernel) -> Result<Self> {
        let num_levels = levels.len();
        if num_levels < 2 {
            return Err(Error::InvalidArgument(format!("pyramid needs at least 2 levels, got {num_levels}")));
        }
        let base_shape = levels[num_levels - 1].shape();
        for (k, lvl) in levels.iter().enumerate() {
            let factor = 1 << (num_levels - 1 - k);
            let expected = Shape { height: base_shape.height / factor, width: base_shape.width / factor, ..base_shape };
            if !base_shape.height.is_multiple_of(factor) || !base_shape.width.is_multiple_of(factor) || lvl.shape() != expected {
                return Err(Error::ShapeMismatch(lvl.shape(), expected));
            }
        }
        Ok(Self { levels, base_shape, kernel })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn base_shape(&self) -> Shape {
        self.base_shape
    }

    pub fn kernel(&self) -> &PyramidKernel {
        &self.kernel
    }

    /// Levels coarsest first.
    pub fn levels(&self) -> &[Field] {
        &self.levels
    }

    /// `x^(i)`, with `1 <= i <= L`.
    pub fn level(&self, i: usize) -> &Field {
        assert!(i >= 1 && i <= self.num_levels(), "level {i} out of range");
        &self.levels[self.num_levels() - i]
    }

    pub fn reconstruct(&self) -> Result<Field> {
        self.partial_reconstruct(1)
    }

    /// `x^(i) + up(x^(i+1) + up(...))`: everything from level `i` upward, at level-`i` resolution.
    pub fn partial_reconstruct(&self, from_level: usize) -> Result<Field> {
        let l = self.num_levels();
        if from_level < 1 || from_level > l {
            return Err(Error::InvalidArgument(format!("level {from_level} outside 1..={l}")));
        }
        let mut r = self.level(l).clone();
        for i in (from_level..l).rev() {
            r = self.level(i).add(&self.kernel.up(&r))?;
        }
        Ok(r)
    }

    /// Applies `f` to each level; used to build channel-wise pyramids.
    pub fn map_levels(&self, mut f: impl FnMut(&Field) -> Field) -> Result<Self> {
        Self::from_levels(self.levels.iter().map(&mut f).collect(), self.kernel)
    }
}
