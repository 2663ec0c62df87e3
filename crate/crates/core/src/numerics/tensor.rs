//! Dense n-dimensional arrays over f32 (training) or f64 (gradient checks).

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

/// Scalar element type. Training uses `f32`; correctness checks switch to `f64`.
pub trait Elem:
    num_traits_float::FloatLike + Copy + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

/// Minimal float surface so we avoid pulling a whole numerics crate for two impls.
pub mod num_traits_float {
    pub trait FloatLike:
        std::ops::Add<Output = Self>
        + std::ops::Sub<Output = Self>
        + std::ops::Mul<Output = Self>
        + std::ops::Div<Output = Self>
        + std::ops::Neg<Output = Self>
        + PartialOrd
        + Sized
        + Copy
    {
        fn zero() -> Self;
        fn one() -> Self;
        fn sqrt(self) -> Self;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn tanh(self) -> Self;
        fn abs(self) -> Self;
        fn powi(self, n: i32) -> Self;
        fn max_v(self, other: Self) -> Self;
        fn min_v(self, other: Self) -> Self;
        fn is_finite_v(self) -> bool;
    }

    macro_rules! impl_float_like {
        ($t:ty) => {
            impl FloatLike for $t {
                fn zero() -> Self {
                    0.0
                }
                fn one() -> Self {
                    1.0
                }
                fn sqrt(self) -> Self {
                    self.sqrt()
                }
                fn exp(self) -> Self {
                    self.exp()
                }
                fn ln(self) -> Self {
                    self.ln()
                }
                fn tanh(self) -> Self {
                    self.tanh()
                }
                fn abs(self) -> Self {
                    self.abs()
                }
                fn powi(self, n: i32) -> Self {
                    self.powi(n)
                }
                fn max_v(self, other: Self) -> Self {
                    self.max(other)
                }
                fn min_v(self, other: Self) -> Self {
                    self.min(other)
                }
                fn is_finite_v(self) -> bool {
                    self.is_finite()
                }
            }
        };
    }
    impl_float_like!(f32);
    impl_float_like!(f64);
}

impl Elem for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Elem for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. `product(shape) == data.len()` always holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<E: Elem = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![E::zero(); n] }
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: E) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("std must be finite");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| E::from_f64(dist.sample(rng))).collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn rand_uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let dist = Uniform::new(lo, hi);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| E::from_f64(dist.sample(rng))).collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn item(&self) -> E {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "zip_map",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add_assign_tensor(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale_in_place(&mut self, c: E) {
        for v in &mut self.data {
            *v = *v * c;
        }
    }

    /// Hard error on any NaN/Inf; used by tests and validation passes.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite_v()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    pub fn to_f64_tensor(&self) -> Tensor<f64> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| v.to_f64()).collect() }
    }

    pub fn to_f32_tensor(&self) -> Tensor<f32> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64() as f32).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64())
            .fold(0.0, f64::max)
    }
}

/// `C = op(A) . op(B)` for 2-D operands with optional transposes.
///
/// Loop orders are chosen so the innermost loop runs over contiguous rows and
/// autovectorizes; rows of the output are computed independently (bit-exact
/// regardless of thread count).
pub fn matmul2<E: Elem>(a: &Tensor<E>, ta: bool, b: &Tensor<E>, tb: bool) -> Result<Tensor<E>> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: ash.to_vec(), rhs: bsh.to_vec() });
    }
    let (m, ka) = if ta { (ash[1], ash[0]) } else { (ash[0], ash[1]) };
    let (kb, n) = if tb { (bsh[1], bsh[0]) } else { (bsh[0], bsh[1]) };
    if ka != kb {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: ash.to_vec(), rhs: bsh.to_vec() });
    }
    let mut out = vec![E::zero(); m * n];
    matmul_kernel(a.data(), ta, b.data(), tb, m, ka, n, &mut out);
    Tensor::from_vec(&[m, n], out)
}

/// Batched matmul over equal leading batch dims: `[B, m, k] x [B, k, n]`.
pub fn matmul3<E: Elem>(a: &Tensor<E>, ta: bool, b: &Tensor<E>, tb: bool) -> Result<Tensor<E>> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: ash.to_vec(), rhs: bsh.to_vec() });
    }
    let bsz = ash[0];
    let (m, ka) = if ta { (ash[2], ash[1]) } else { (ash[1], ash[2]) };
    let (kb, n) = if tb { (bsh[2], bsh[1]) } else { (bsh[1], bsh[2]) };
    if ka != kb {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: ash.to_vec(), rhs: bsh.to_vec() });
    }
    let mut out = vec![E::zero(); bsz * m * n];
    let (astride, bstride, ostride) = (m * ka, kb * n, m * n);
    out.par_chunks_mut(ostride).enumerate().for_each(|(i, chunk)| {
        let asub = &a.data()[i * astride..(i + 1) * astride];
        let bsub = &b.data()[i * bstride..(i + 1) * bstride];
        matmul_kernel(asub, ta, bsub, tb, m, ka, n, chunk);
    });
    Tensor::from_vec(&[bsz, m, n], out)
}

fn matmul_kernel<E: Elem>(a: &[E], ta: bool, b: &[E], tb: bool, m: usize, k: usize, n: usize, out: &mut [E]) {
    match (ta, tb) {
        (false, false) => {
            // C[i,:] += A[i,k] * B[k,:]
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for kk in 0..k {
                    let av = a[i * k + kk];
                    let brow = &b[kk * n..kk * n + n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            });
        }
        (false, true) => {
            // C[i,j] = dot(A[i,:], B[j,:])
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let arow = &a[i * k..i * k + k];
                for (j, o) in row.iter_mut().enumerate() {
                    let brow = &b[j * k..j * k + k];
                    let mut acc = E::zero();
                    for (&av, &bv) in arow.iter().zip(brow) {
                        acc = acc + av * bv;
                    }
                    *o = acc;
                }
            });
        }
        (true, false) => {
            // A is [k, m]; C[i,:] += A[kk,i] * B[kk,:]
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for kk in 0..k {
                    let av = a[kk * m + i];
                    let brow = &b[kk * n..kk * n + n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            });
        }
        (true, true) => {
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, o) in row.iter_mut().enumerate() {
                    let mut acc = E::zero();
                    for kk in 0..k {
                        acc = acc + a[kk * m + i] * b[j * k + kk];
                    }
                    *o = acc;
                }
            });
        }
    }
}
