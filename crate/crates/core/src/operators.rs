//! Linear degradation operators and the proximal data-consistency solve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::pyramid::{PyramidKernel, BINOMIAL};

/// Largest input size accepted by [`materialize_dense`].
pub const DENSE_LIMIT: usize = 4096;

/// A linear map between fields. Shapes are inferred from the input, so a
/// single value describes the operator at every resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Identity,
    /// Blur with the pyramid kernel, then keep even rows and columns.
    Down2(PyramidKernel),
    /// Applied right to left: the last map acts first.
    Compose(Vec<LinearMap>),
}

impl LinearMap {
    pub fn out_shape(&self, in_shape: Shape) -> Result<Shape> {
        match self {
            LinearMap::Identity => Ok(in_shape),
            LinearMap::Down2(_) => in_shape.halved(),
            LinearMap::Compose(maps) => maps.iter().rev().try_fold(in_shape, |s, m| m.out_shape(s)),
        }
    }

    pub fn apply(&self, x: &Field) -> Result<Field> {
        match self {
            LinearMap::Identity => Ok(x.clone()),
            LinearMap::Down2(k) => k.down(x),
            LinearMap::Compose(maps) => {
                let mut cur = x.clone();
                for m in maps.iter().rev() {
                    cur = m.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }

    pub fn adjoint(&self, y: &Field) -> Result<Field> {
        match self {
            LinearMap::Identity => Ok(y.clone()),
            LinearMap::Down2(k) => Ok(k.down_adjoint(y)),
            LinearMap::Compose(maps) => {
                let mut cur = y.clone();
                for m in maps {
                    cur = m.adjoint(&cur)?;
                }
                Ok(cur)
            }
        }
    }

    /// `H^T H x`.
    pub fn normal(&self, x: &Field) -> Result<Field> {
        self.adjoint(&self.apply(x)?)
    }

    /// Number of factor-2 decimations along each axis.
    pub fn halvings(&self) -> usize {
        match self {
            LinearMap::Identity => 0,
            LinearMap::Down2(_) => 1,
            LinearMap::Compose(maps) => maps.iter().map(LinearMap::halvings).sum(),
        }
    }
}

pub fn make_down2() -> LinearMap {
    LinearMap::Down2(BINOMIAL)
}

/// `count` Down2 maps in sequence; the identity for zero.
pub fn down2_chain(count: usize) -> LinearMap {
    match count {
        0 => LinearMap::Identity,
        1 => make_down2(),
        n => LinearMap::Compose(vec![make_down2(); n]),
    }
}

/// Super-resolution degradation for factor `k`: `log2(k)` Down2 maps.
pub fn make_sr_operator(factor: usize) -> Result<LinearMap> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::Config(format!("super-resolution factor must be a power of two >= 2, got {factor}")));
    }
    Ok(down2_chain(factor.trailing_zeros() as usize))
}

/// Dense matrix `M` with `M * vec(x) = vec(apply(x))`, probed column by column.
pub fn materialize_dense(m: &LinearMap, in_shape: Shape) -> Result<DMatrix<f64>> {
    let n = in_shape.len();
    if n > DENSE_LIMIT {
        return Err(Error::SizeGuard { elements: n, limit: DENSE_LIMIT });
    }
    let out = m.out_shape(in_shape)?;
    let mut mat = DMatrix::zeros(out.len(), n);
    let mut e = Field::zeros(in_shape);
    for j in 0..n {
        e.data_mut()[j] = 1.0;
        let col = m.apply(&e)?;
        mat.column_mut(j).copy_from_slice(col.data());
        e.data_mut()[j] = 0.0;
    }
    Ok(mat)
}

/// Measurement `y = H x + z` with `z ~ N(0, noise_sigma^2 I)`.
#[derive(Debug, Clone)]
pub struct Measurement {
    y: Field,
    op: LinearMap,
    noise_sigma: f64,
    in_shape: Shape,
}

impl Measurement {
    pub fn new(y: Field, op: LinearMap, noise_sigma: f64, in_shape: Shape) -> Result<Self> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        let out = op.out_shape(in_shape)?;
        if out != y.shape() {
            return Err(Error::ShapeMismatch(y.shape(), out));
        }
        Ok(Self { y, op, noise_sigma, in_shape })
    }

    pub fn y(&self) -> &Field {
        &self.y
    }

    pub fn op(&self) -> &LinearMap {
        &self.op
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn in_shape(&self) -> Shape {
        self.in_shape
    }

    /// `||y - H x||^2`.
    pub fn residual_sq(&self, x: &Field) -> Result<f64> {
        Ok(self.y.sub(&self.op.apply(x)?)?.norm_sq())
    }

    /// Same operator and noise level, with `y` replaced by `y - H offset`.
    ///
    /// Fitting `H (v + offset)` to `y` is the same as fitting `H v` to the shifted target.
    pub fn shifted(&self, offset: &Field) -> Result<Self> {
        let y = self.y.sub(&self.op.apply(offset)?)?;
        Ok(Self { y, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

/// Solves `argmin_x ||y - H x||^2 + tau ||x - x0_hat||^2`, i.e.
/// `(H^T H + tau I) x = H^T y + tau x0_hat`, by conjugate gradients started at `x0_hat`.
pub fn prox_data_consistency(m: &Measurement, x0_hat: &Field, tau: f64, opts: CgOptions) -> Result<Field> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be positive and finite, got {tau}")));
    }
    if x0_hat.shape() != m.in_shape() {
        return Err(Error::ShapeMismatch(x0_hat.shape(), m.in_shape()));
    }
    let op = m.op();
    let apply_a = |v: &Field| -> Result<Field> { op.normal(v)?.lin_comb(1.0, v, tau) };

    let b = op.adjoint(m.y())?.lin_comb(1.0, x0_hat, tau)?;
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(Field::zeros(x0_hat.shape()));
    }
    let mut x = x0_hat.clone();
    let mut r = b.sub(&apply_a(&x)?)?;
    let mut p = r.clone();
    let mut rs = r.norm_sq();
    let mut iterations = 0;
    while rs.sqrt() / b_norm > opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual: rs.sqrt() / b_norm });
        }
        let ap = apply_a(&p)?;
        let alpha = rs / p.dot(&ap)?;
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        let rs_next = r.norm_sq();
        p = r.lin_comb(1.0, &p, rs_next / rs)?;
        rs = rs_next;
        iterations += 1;
    }
    x.ensure_finite("prox_data_consistency")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_field;
    use crate::pyramid::down;
    use crate::rng::Rng;
    use nalgebra::DVector;

    fn shape(h: usize, w: usize) -> Shape {
        Shape::new(h, w, 1).unwrap()
    }

    fn rand_field(rng: &mut Rng, s: Shape) -> Field {
        gaussian_field(rng, s, 1.0).unwrap()
    }

    fn adjoint_rel_err(m: &LinearMap, s: Shape, rng: &mut Rng) -> f64 {
        let a = rand_field(rng, s);
        let b = rand_field(rng, m.out_shape(s).unwrap());
        let lhs = m.apply(&a).unwrap().dot(&b).unwrap();
        let rhs = a.dot(&m.adjoint(&b).unwrap()).unwrap();
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
    }

    #[test]
    fn down2_constant_and_shapes() {
        let d = make_down2();
        let c = Field::constant(shape(8, 6), 0.4);
        let y = d.apply(&c).unwrap();
        assert_eq!(y.shape(), shape(4, 3));
        assert!(y.data().iter().all(|v| (v - 0.4).abs() < 1e-15));
        let m = materialize_dense(&d, shape(4, 4)).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (4, 16));
    }

    #[test]
    fn adjoints_pass_probe_test() {
        let mut rng = Rng::new(10);
        for m in [LinearMap::Identity, make_down2(), make_sr_operator(4).unwrap(), make_sr_operator(8).unwrap()] {
            for s in [shape(8, 8), shape(16, 24), Shape::new(16, 8, 2).unwrap()] {
                if m.out_shape(s).is_err() {
                    continue;
                }
                for _ in 0..50 {
                    let e = adjoint_rel_err(&m, s, &mut rng);
                    assert!(e < 1e-10, "{m:?} {s} {e}");
                }
            }
        }
    }

    #[test]
    fn sr_operator_construction() {
        assert_eq!(make_sr_operator(2).unwrap(), make_down2());
        let h4 = make_sr_operator(4).unwrap();
        let x = rand_field(&mut Rng::new(3), shape(16, 16));
        let y = h4.apply(&x).unwrap();
        assert_eq!(y.shape(), shape(4, 4));
        let twice = down(&down(&x).unwrap()).unwrap();
        assert_eq!(y.max_abs_diff(&twice).unwrap(), 0.0);
        for k in [2, 4, 8] {
            let s = make_sr_operator(k).unwrap().out_shape(shape(32, 64)).unwrap();
            assert_eq!((s.height, s.width), (32 / k, 64 / k));
        }
        for bad in [0, 1, 3, 6, 12] {
            assert!(matches!(make_sr_operator(bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn dense_materialization() {
        let eye = materialize_dense(&LinearMap::Identity, shape(2, 2)).unwrap();
        assert_eq!(eye, DMatrix::identity(4, 4));

        let d = make_down2();
        let c = Field::constant(shape(2, 2), 1.0);
        let m = materialize_dense(&d, shape(2, 2)).unwrap();
        let mv = &m * DVector::from_column_slice(c.data());
        assert_eq!(mv.as_slice(), d.apply(&c).unwrap().data());

        let comp = make_sr_operator(4).unwrap();
        let s = shape(8, 8);
        let m_comp = materialize_dense(&comp, s).unwrap();
        let m1 = materialize_dense(&d, s).unwrap();
        let m2 = materialize_dense(&d, shape(4, 4)).unwrap();
        assert!((m_comp - m2 * m1).amax() < 1e-12);

        assert!(matches!(
            materialize_dense(&d, shape(128, 64)),
            Err(Error::SizeGuard { elements: 8192, .. })
        ));
    }

    #[test]
    fn linearity() {
        let mut rng = Rng::new(4);
        for m in [make_down2(), make_sr_operator(4).unwrap()] {
            let s = shape(16, 16);
            let (a, b) = (rand_field(&mut rng, s), rand_field(&mut rng, s));
            let (alpha, beta) = (rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0));
            let lhs = m.apply(&a.lin_comb(alpha, &b, beta).unwrap()).unwrap();
            let rhs = m.apply(&a).unwrap().lin_comb(alpha, &m.apply(&b).unwrap(), beta).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }
    }

    #[test]
    fn prox_identity_closed_form() {
        let s = shape(4, 4);
        let m = Measurement::new(Field::constant(s, 2.0), LinearMap::Identity, 0.0, s).unwrap();
        let x = prox_data_consistency(&m, &Field::zeros(s), 1.0, CgOptions::default()).unwrap();
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn prox_large_tau_returns_prior_point() {
        let mut rng = Rng::new(8);
        let s = shape(8, 8);
        let op = make_down2();
        let y = rand_field(&mut rng, shape(4, 4));
        let x0 = rand_field(&mut rng, s);
        let m = Measurement::new(y, op, 0.1, s).unwrap();
        let x = prox_data_consistency(&m, &x0, 1e8, CgOptions::default()).unwrap();
        assert!(x.rel_err(&x0).unwrap() < 1e-6);
    }

    #[test]
    fn prox_matches_dense_solve() {
        let mut rng = Rng::new(12);
        let s = shape(8, 8);
        let op = make_down2();
        let y = rand_field(&mut rng, shape(4, 4));
        let x0 = rand_field(&mut rng, s);
        let tau = 0.5;
        let m = Measurement::new(y.clone(), op.clone(), 0.1, s).unwrap();
        let x = prox_data_consistency(&m, &x0, tau, CgOptions::default()).unwrap();

        let h = materialize_dense(&op, s).unwrap();
        let a = h.transpose() * &h + DMatrix::identity(64, 64) * tau;
        let b = h.transpose() * DVector::from_column_slice(y.data()) + DVector::from_column_slice(x0.data()) * tau;
        let xd = a.lu().solve(&b).unwrap();
        let xd = Field::from_vec(s, xd.as_slice().to_vec()).unwrap();
        assert!(x.rel_err(&xd).unwrap() < 1e-8);
    }

    #[test]
    fn prox_minimizes_objective_and_reduces_residual() {
        let mut rng = Rng::new(13);
        let s = shape(16, 16);
        let op = make_sr_operator(4).unwrap();
        for _ in 0..5 {
            let y = rand_field(&mut rng, shape(4, 4));
            let x0 = rand_field(&mut rng, s);
            let tau = rng.uniform_range(0.01, 3.0);
            let m = Measurement::new(y.clone(), op.clone(), 0.1, s).unwrap();
            let x = prox_data_consistency(&m, &x0, tau, CgOptions { tol: 1e-12, max_iter: 1000 }).unwrap();
            let obj = |v: &Field| m.residual_sq(v).unwrap() + tau * v.sub(&x0).unwrap().norm_sq();
            let hty = op.adjoint(&y).unwrap();
            assert!(obj(&x) <= obj(&x0) + 1e-12);
            assert!(obj(&x) <= obj(&hty) + 1e-12);
            assert!(m.residual_sq(&x).unwrap() <= m.residual_sq(&x0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn prox_errors() {
        let s = shape(8, 8);
        let m = Measurement::new(Field::constant(shape(4, 4), 1.0), make_down2(), 0.0, s).unwrap();
        let x0 = Field::constant(s, 0.3);
        assert!(matches!(
            prox_data_consistency(&m, &x0, 1e-9, CgOptions { tol: 1e-14, max_iter: 1 }),
            Err(Error::NonConvergence { iterations: 1, .. })
        ));
        assert!(prox_data_consistency(&m, &x0, 0.0, CgOptions::default()).is_err());
        assert!(prox_data_consistency(&m, &Field::zeros(shape(4, 4)), 1.0, CgOptions::default()).is_err());
        assert!(Measurement::new(Field::zeros(shape(3, 3)), make_down2(), 0.0, s).is_err());
    }
}
