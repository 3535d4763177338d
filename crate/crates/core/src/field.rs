//! The image container shared by every other module.
//!
//! A [`Field`] is a dense 2-D grid with one or two channels stored row-major,
//! channel-minor: the value at `(row, col, ch)` lives at
//! `(row * width + col) * channels + ch`. Two channels encode a complex image
//! as (real, imaginary) planes.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "height and width must be positive, got {height}x{width}"
            )));
        }
        if !(1..=2).contains(&channels) {
            return Err(Error::InvalidShape(format!(
                "channels must be 1 or 2, got {channels}"
            )));
        }
        Ok(Self { height, width, channels })
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Shape after halving both spatial dimensions.
    pub fn halved(&self) -> Result<Self> {
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::OddDimension(*self));
        }
        Ok(Self { height: self.height / 2, width: self.width / 2, channels: self.channels })
    }

    pub fn doubled(&self) -> Self {
        Self { height: self.height * 2, width: self.width * 2, channels: self.channels }
    }

    pub fn check_divisible(&self, divisor: usize) -> Result<()> {
        if divisor == 0 || !self.height.is_multiple_of(divisor) || !self.width.is_multiple_of(divisor) {
            return Err(Error::NotDivisible { shape: *self, divisor });
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A 2-D grid of `f64` values with 1 or 2 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: Shape,
    data: Vec<f64>,
}

impl Field {
    /// Builds a field from raw data, checking the length and that every entry is finite.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match {shape} ({} values)",
                data.len(),
                shape.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Field::from_vec"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn constant(shape: Shape, value: f64) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    /// Single-channel `height x width` field of zeros. Panics on a zero dimension.
    pub fn zeros2(height: usize, width: usize) -> Self {
        Self::zeros(Shape::new(height, width, 1).expect("positive dimensions"))
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                for ch in 0..shape.channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.shape.width + col) * self.shape.channels + ch]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn check_same(&self, other: &Field) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(self.shape, other.shape));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { shape: self.shape, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Field {
        self.map(|v| alpha * v)
    }

    pub fn negate(&self) -> Field {
        self.map(|v| -v)
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.zip_with(other, |a, b| alpha * a + beta * b)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Field) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `||self - reference|| / ||reference||`, or the absolute norm when the reference is zero.
    pub fn rel_err(&self, reference: &Field) -> Result<f64> {
        let diff = self.sub(reference)?.norm();
        let scale = reference.norm();
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    /// Extracts one channel as a single-channel field.
    pub fn plane(&self, ch: usize) -> Field {
        assert!(ch < self.shape.channels, "channel {ch} out of range for {}", self.shape);
        let c = self.shape.channels;
        let data = self.data.iter().skip(ch).step_by(c).copied().collect();
        Field { shape: Shape { channels: 1, ..self.shape }, data }
    }

    /// Interleaves single-channel planes into one field.
    pub fn from_planes(planes: &[Field]) -> Result<Field> {
        let first = planes.first().ok_or_else(|| Error::InvalidArgument("no planes".into()))?;
        let shape = Shape::new(first.height(), first.width(), planes.len())?;
        for p in planes {
            if p.channels() != 1 || p.height() != shape.height || p.width() != shape.width {
                return Err(Error::ShapeMismatch(first.shape, p.shape));
            }
        }
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..shape.pixels() {
            data.extend(planes.iter().map(|p| p.data[i]));
        }
        Ok(Field { shape, data })
    }

    /// Per-pixel magnitude; the identity (up to sign) for single-channel fields.
    pub fn magnitude(&self) -> Field {
        match self.shape.channels {
            1 => self.map(f64::abs),
            _ => {
                let data = self
                    .data
                    .chunks_exact(self.shape.channels)
                    .map(|px| px.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .collect();
                Field { shape: Shape { channels: 1, ..self.shape }, data }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, context: &'static str) -> Result<Field> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(context))
        }
    }
}

/// Elementwise sum of two equally shaped fields.
pub fn field_add(a: &Field, b: &Field) -> Result<Field> {
    a.add(b)
}

/// Field of i.i.d. `N(0, sigma^2)` entries drawn from `rng`.
pub fn gaussian_field(rng: &mut Rng, shape: Shape, sigma: f64) -> Result<Field> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Field::zeros(shape));
    }
    let data = (0..shape.len()).map(|_| sigma * rng.normal()).collect();
    Ok(Field { shape, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(h: usize, w: usize) -> Shape {
        Shape::new(h, w, 1).unwrap()
    }

    #[test]
    fn add_identity_and_inverse() {
        let z = Field::zeros(s(4, 4));
        assert_eq!(field_add(&z, &z).unwrap(), z);

        let mut rng = Rng::new(3);
        let x = gaussian_field(&mut rng, s(4, 4), 1.0).unwrap();
        assert_eq!(field_add(&x, &x.negate()).unwrap(), z);

        let ones = Field::constant(s(2, 2), 1.0);
        assert_eq!(field_add(&ones, &ones).unwrap(), Field::constant(s(2, 2), 2.0));
    }

    #[test]
    fn add_shape_mismatch_names_both_shapes() {
        let err = field_add(&Field::zeros(s(4, 4)), &Field::zeros(s(2, 4))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4x4x1") && msg.contains("2x4x1"), "{msg}");
    }

    #[test]
    fn gaussian_zero_sigma_and_determinism() {
        let mut rng = Rng::new(1);
        let z = gaussian_field(&mut rng, s(5, 3), 0.0).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let a = gaussian_field(&mut Rng::new(7), s(8, 8), 1.0).unwrap();
        let b = gaussian_field(&mut Rng::new(7), s(8, 8), 1.0).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(gaussian_field(&mut rng, s(2, 2), -1.0).is_err());
    }

    #[test]
    fn gaussian_moments_one_million() {
        let shape = Shape::new(1000, 1000, 1).unwrap();
        let f = gaussian_field(&mut Rng::new(11), shape, 1.0).unwrap();
        let n = f.data().len() as f64;
        let mean = f.mean();
        let var = f.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn planes_round_trip() {
        let mut rng = Rng::new(2);
        let x = gaussian_field(&mut rng, Shape::new(3, 5, 2).unwrap(), 1.0).unwrap();
        let back = Field::from_planes(&[x.plane(0), x.plane(1)]).unwrap();
        assert_eq!(back, x);
        assert_eq!(x.plane(1).get(2, 4, 0), x.get(2, 4, 1));
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(Field::from_vec(s(2, 2), vec![0.0; 3]).is_err());
        assert!(Field::from_vec(s(1, 1), vec![f64::NAN]).is_err());
        assert!(Shape::new(2, 2, 3).is_err());
        assert!(Shape::new(0, 2, 1).is_err());
    }
}
