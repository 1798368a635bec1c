//! Dense row-major `f64` tensors and the numeric kernels behind every graph
//! primitive.
//!
//! Shape rules are strict: apart from [`Tensor::scale`] (scalar times
//! tensor) and [`Tensor::expand`] (scalar to shape) no operation broadcasts.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` around `axis` into (outer, dim, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    /// Builds a tensor, checking that the data length matches the shape and
    /// that every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) || numel_of(&shape) != data.len() {
            return Err(Error::shape("new", &shape, &[data.len()]));
        }
        Self::checked("new", shape, data)
    }

    fn checked(op: &'static str, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(Tensor { shape, data })
        } else {
            Err(Error::Numeric { op })
        }
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel_of(shape)],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel_of(shape)],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// The single value of a scalar (or one-element) tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Element `(r, c)` of a rank-2 tensor.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    fn same_shape(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(())
    }

    fn zip_with(&self, op: &'static str, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op, other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::checked(op, self.shape.clone(), data)
    }

    fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        Self::checked(op, self.shape.clone(), self.data.iter().map(|&a| f(a)).collect())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("mul", other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        self.map("scale", |a| a * factor)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.map("relu", |a| if a > 0.0 { a } else { 0.0 })
    }

    /// `grad` masked by the ReLU derivative of `self` (0 at the kink).
    pub fn relu_mask(&self, grad: &Tensor) -> Result<Tensor> {
        self.zip_with("relu_mask", grad, |x, g| if x > 0.0 { g } else { 0.0 })
    }

    pub fn square(&self) -> Result<Tensor> {
        self.map("square", |a| a * a)
    }

    pub fn sum(&self) -> Result<Tensor> {
        Self::checked("sum", Vec::new(), vec![self.data.iter().sum()])
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        Self::checked("mean", Vec::new(), vec![self.data.iter().sum::<f64>() / n])
    }

    /// Broadcasts a scalar to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        if !self.is_scalar() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("expand", &self.shape, shape));
        }
        Ok(Tensor::full(shape, self.data[0]))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::checked("matmul", vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", &self.shape, &[]));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().any(|&d| d == 0) || numel_of(shape) != self.numel() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= self.rank() || start >= end || end > self.shape[axis] {
            return Err(Error::shape("slice", &self.shape, &[axis, start, end]));
        }
        let (outer, dim, inner) = axis_extents(&self.shape, axis);
        let width = (end - start) * inner;
        let mut out = Vec::with_capacity(outer * width);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&self.data[base..base + width]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = end - start;
        Ok(Tensor { shape, data: out })
    }

    /// Adjoint of [`Tensor::slice`]: embeds `self` at `start` along `axis` in
    /// a zero tensor whose extent along `axis` is `total`.
    pub fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + self.shape[axis] > total {
            return Err(Error::shape("pad", &self.shape, &[axis, start, total]));
        }
        let (outer, dim, inner) = axis_extents(&self.shape, axis);
        let mut shape = self.shape.clone();
        shape[axis] = total;
        let mut out = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let src = &self.data[o * dim * inner..(o + 1) * dim * inner];
            let base = o * total * inner + start * inner;
            out[base..base + dim * inner].copy_from_slice(src);
        }
        Ok(Tensor { shape, data: out })
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::Empty("concat input"))?;
        if axis >= first.rank() {
            return Err(Error::shape("concat", &first.shape, &[axis]));
        }
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
        }
        let (outer, _, inner) = axis_extents(&first.shape, axis);
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let w = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Tensor { shape, data: out })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn identity_matmul() {
        let v = t(&[3, 1], &[0.3, -1.5, 7.0]);
        assert_eq!(Tensor::eye(3).matmul(&v).unwrap(), v);
    }

    #[test]
    fn mean_of_squares() {
        let x = t(&[3], &[1.0, -2.0, 3.0]);
        assert_eq!(x.square().unwrap().mean().unwrap().item(), 14.0 / 3.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::NAN]),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn shape_errors_name_op_and_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
        assert!(a.add(&Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn overflow_is_numeric_error() {
        let x = t(&[1], &[1e200]);
        assert!(matches!(x.square(), Err(Error::Numeric { op: "square" })));
    }

    #[test]
    fn slice_pad_concat_agree() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let cols = x.slice(1, 1, 3).unwrap();
        assert_eq!(cols.data(), &[2.0, 3.0, 5.0, 6.0]);
        let padded = cols.pad(1, 1, 3).unwrap();
        assert_eq!(padded.data(), &[0.0, 2.0, 3.0, 0.0, 5.0, 6.0]);
        let left = x.slice(1, 0, 1).unwrap();
        assert_eq!(Tensor::concat(&[&left, &cols], 1).unwrap(), x);
        let rows = x.slice(0, 1, 2).unwrap();
        assert_eq!(rows.data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn transpose_roundtrip() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let xt = x.transpose().unwrap();
        assert_eq!(xt.shape(), &[3, 2]);
        assert_eq!(xt.at(2, 1), 6.0);
        assert_eq!(xt.transpose().unwrap(), x);
    }
}
