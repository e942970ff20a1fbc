//! Dense row-major tensors and the forward kernels the tape is built on.
//!
//! Every reduction accumulates in index order, so results are bit-identical
//! across runs and thread counts.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Epsilon added to the variance in layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| F::of(x)).collect())
    }

    pub fn scalar(x: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    /// Entries drawn from N(0, std^2).
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                F::of(z * std)
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows when viewed as a matrix over the last axis.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    /// Extent of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, index: &[usize]) -> F {
        let mut flat = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < ext, "index {ix} out of range on axis {i}");
            flat = flat * ext + ix;
        }
        self.data[flat]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::of(x.to_f64_lossy())).collect(),
        }
    }

    /// Row-major CSV dump with 17 significant digits; one line per row of the
    /// trailing axis.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows() {
            for (j, v) in self.row(r).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.16e}", v.to_f64_lossy());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// `a · b` for rank-2 operands.
    pub fn matmul(&self, b: &Tensor<F>) -> Result<Tensor<F>> {
        if self.rank() != 2 || b.rank() != 2 || self.shape[1] != b.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], b.shape[1]);
        let mut out = vec![F::zero(); m * n];
        matmul_into(&self.data, &b.data, &mut out, m, k, n);
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor<F>> {
        if self.rank() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: self.shape.clone(),
                rhs: vec![],
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<F>> {
        let (outer, n, inner) = axis_split(&self.shape, axis, "softmax")?;
        let mut out = vec![F::zero(); self.data.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut max = F::neg_infinity();
                for j in 0..n {
                    max = max.max(self.data[base + j * inner]);
                }
                let mut sum = F::zero();
                for j in 0..n {
                    let e = (self.data[base + j * inner] - max).exp();
                    out[base + j * inner] = e;
                    sum += e;
                }
                for j in 0..n {
                    out[base + j * inner] /= sum;
                }
            }
        }
        Tensor::new(&self.shape, out)
    }

    /// `x W + b`, broadcasting over all leading axes of `x`.
    pub fn linear(&self, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        let d_in = self.cols();
        if w.rank() != 2 || w.shape[0] != d_in || b.len() != w.shape[1] {
            return Err(Error::Shape {
                op: "linear",
                lhs: self.shape.clone(),
                rhs: w.shape.clone(),
            });
        }
        let (m, n) = (self.rows(), w.shape[1]);
        let mut out = vec![F::zero(); m * n];
        matmul_into(&self.data, &w.data, &mut out, m, d_in, n);
        for r in 0..m {
            for (o, &bj) in out[r * n..(r + 1) * n].iter_mut().zip(&b.data) {
                *o += bj;
            }
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = n;
        Tensor::new(&shape, out)
    }

    /// Normalizes each slice along the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
        let d = self.cols();
        if gain.len() != d || bias.len() != d {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: self.shape.clone(),
                rhs: gain.shape.clone(),
            });
        }
        let mut out = vec![F::zero(); self.data.len()];
        let mut xhat = vec![F::zero(); d];
        for r in 0..self.rows() {
            let row = self.row(r);
            layer_norm_row(row, &mut xhat);
            for j in 0..d {
                out[r * d + j] = xhat[j] * gain.data[j] + bias.data[j];
            }
        }
        Tensor::new(&self.shape, out)
    }
}

/// Normalizes one row into `xhat` and returns `1/sqrt(var + eps)`.
pub(crate) fn layer_norm_row<F: Scalar>(row: &[F], xhat: &mut [F]) -> F {
    let d = F::of(row.len() as f64);
    let mean = row.iter().copied().sum::<F>() / d;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() / d;
    let rstd = F::one() / (var + F::of(LAYER_NORM_EPS)).sqrt();
    for (h, &x) in xhat.iter_mut().zip(row) {
        *h = (x - mean) * rstd;
    }
    rstd
}

/// `out += a[m×k] · b[k×n]`, accumulating over k in increasing order.
pub(crate) fn matmul_into<F: Scalar>(
    a: &[F],
    b: &[F],
    out: &mut [F],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_bt_into<F: Scalar>(
    a: &[F],
    b: &[F],
    out: &mut [F],
    m: usize,
    k: usize,
    n: usize,
) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = F::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * n + j] += s;
        }
    }
}

/// `out += a[k×m]ᵀ · b[k×n]`.
pub(crate) fn matmul_at_into<F: Scalar>(
    a: &[F],
    b: &[F],
    out: &mut [F],
    m: usize,
    k: usize,
    n: usize,
) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &api) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

pub(crate) fn axis_split(
    shape: &[usize],
    axis: usize,
    op: &'static str,
) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![axis],
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(Tensor::eye(2).matmul(&a).unwrap(), a);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::<f64>::zeros(&[2, 3]);
        let b = t(
            &[3, 4],
            &(0..12).map(|i| i as f64 - 3.5).collect::<Vec<_>>(),
        );
        let c = z.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        assert!(c.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let err = t(&[2, 3], &[0.; 6])
            .matmul(&t(&[2, 3], &[0.; 6]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let s = t(&[3], &[0., 0., 0.]).softmax(0).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = t(&[2, 3], &[1., 2., 3., -4., 0.5, 9.]);
        let y = x.map(|v| v + 123.25);
        let (a, b) = (x.softmax(1).unwrap(), y.softmax(1).unwrap());
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_exponentials() {
        // e^x / Σe^x evaluated without max subtraction
        let e: Vec<f64> = [1f64, 2., 3.].iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        let s = t(&[3], &[1., 2., 3.]).softmax(0).unwrap();
        for (v, ei) in s.data().iter().zip(&e) {
            assert!((v - ei / z).abs() < 1e-15);
        }
        assert!((s.data()[0] - 0.090_030_573_170_380_46).abs() < 1e-15);
    }

    #[test]
    fn softmax_inner_axis() {
        let x = t(&[2, 2], &[0., 10., 0., 10.]);
        let s = x.softmax(0).unwrap();
        assert!((s.get(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((s.get(&[1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_cases() {
        let x = t(&[2, 2], &[1., -2., 3., 0.5]);
        let out = x.linear(&Tensor::eye(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out, x);
        let out = t(&[2], &[1., 1.])
            .linear(&t(&[2, 1], &[1., 2.]), &t(&[1], &[3.]))
            .unwrap();
        assert_eq!(out.data(), &[6.]);
        let out = x
            .linear(&Tensor::zeros(&[2, 3]), &Tensor::full(&[3], 7.0))
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn layer_norm_cases() {
        let one = Tensor::<f64>::full(&[2], 1.0);
        let zero = Tensor::<f64>::zeros(&[2]);
        let c = t(&[2], &[4., 4.]).layer_norm(&one, &zero).unwrap();
        assert_eq!(c.data(), &[0., 0.]);
        // mean 2, var 1: (x - 2) / sqrt(1 + eps)
        let y = t(&[2], &[1., 3.]).layer_norm(&one, &zero).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] + expect).abs() < 1e-15);
        assert!((y.data()[1] - expect).abs() < 1e-15);
        let b = t(&[2], &[0.25, -3.]);
        let g = t(&[2], &[1., 3.]).layer_norm(&zero, &b).unwrap();
        assert_eq!(g.data(), b.data());
    }

    #[test]
    fn csv_dump_has_17_significant_digits() {
        let s = t(&[1, 2], &[0.1, -2.0]).to_csv_string();
        assert_eq!(s, "1.0000000000000001e-1,-2.0000000000000000e0\n");
    }
}
