use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of f64, the numeric carrier for everything in this crate.
///
/// Activations are sequence-major (`n x d`), attention scores are `n x n` with
/// row-stochastic rows (rows index queries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension {
                what: "tensor dimension",
                value: 0,
            });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension {
                what: "tensor data length",
                value: data.len(),
            });
        }
        Ok(Tensor2D { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidDimension {
                what: "row count",
                value: 0,
            });
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::InvalidDimension {
                    what: "ragged row length",
                    value: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor2D::from_vec(r, c, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2D::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor2D) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn shape_err(&self, other: &Tensor2D, op: &'static str) -> Error {
        Error::ShapeMismatch {
            op,
            lhs_rows: self.rows,
            lhs_cols: self.cols,
            rhs_rows: other.rows,
            rhs_cols: other.cols,
        }
    }

    /// Matrix product `self * other`. ikj loop order keeps the inner loop contiguous.
    pub fn matmul(&self, other: &Tensor2D) -> Result<Tensor2D> {
        if self.cols != other.rows {
            return Err(self.shape_err(other, "matmul"));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2D::zeros(m, n);
        for i in 0..m {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transpose_b(&self, other: &Tensor2D) -> Result<Tensor2D> {
        if self.cols != other.cols {
            return Err(self.shape_err(other, "matmul_transpose_b"));
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Tensor2D::zeros(m, n);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut s = 0.0;
                for p in 0..k {
                    s += arow[p] * brow[p];
                }
                out.data[i * n + j] = s;
            }
        }
        Ok(out)
    }

    /// `self^T * other` without materializing the transpose.
    pub fn transpose_a_matmul(&self, other: &Tensor2D) -> Result<Tensor2D> {
        if self.rows != other.rows {
            return Err(self.shape_err(other, "transpose_a_matmul"));
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2D::zeros(m, n);
        for p in 0..k {
            let arow = &self.data[p * m..(p + 1) * m];
            let brow = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = arow[i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Tensor2D) -> Result<Tensor2D> {
        if !self.same_shape(other) {
            return Err(self.shape_err(other, "add"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Tensor2D::from_vec(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Tensor2D) -> Result<Tensor2D> {
        if !self.same_shape(other) {
            return Err(self.shape_err(other, "sub"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Tensor2D::from_vec(self.rows, self.cols, data)
    }

    pub fn add_assign(&mut self, other: &Tensor2D) -> Result<()> {
        if !self.same_shape(other) {
            return Err(self.shape_err(other, "add_assign"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Checks each row sums to one within `tol` and entries are nonnegative.
    pub fn check_row_stochastic(&self, tol: f64) -> Result<()> {
        for i in 0..self.rows {
            let sum: f64 = self.row(i).iter().sum();
            if (sum - 1.0).abs() > tol || self.row(i).iter().any(|v| *v < -tol) {
                return Err(Error::NotStochastic { row: i, sum, tol });
            }
        }
        Ok(())
    }
}

/// Matrix product as a free function, matching the operation surface of this module.
pub fn matmul(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    a.matmul(b)
}

/// Numerically stabilized row-wise softmax of `logits * scale`.
///
/// Each row of the output is nonnegative and sums to one; the row max is
/// subtracted before exponentiation so large logits cannot overflow.
pub fn row_softmax(logits: &Tensor2D, scale: f64) -> Result<Tensor2D> {
    if !logits.is_finite() || !scale.is_finite() {
        return Err(Error::NonFinite { op: "row_softmax" });
    }
    let mut out = logits.scale(scale);
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Backward pass of `row_softmax`: given `a = row_softmax(z, scale)` and the
/// upstream gradient `da`, returns the gradient with respect to `z`.
pub fn row_softmax_backward(a: &Tensor2D, da: &Tensor2D, scale: f64) -> Result<Tensor2D> {
    if !a.same_shape(da) {
        return Err(Error::ShapeMismatch {
            op: "row_softmax_backward",
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: da.rows(),
            rhs_cols: da.cols(),
        });
    }
    let mut out = Tensor2D::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let grow = da.row(i);
        let dot: f64 = arow.iter().zip(grow).map(|(x, g)| x * g).sum();
        let orow = out.row_mut(i);
        for j in 0..arow.len() {
            orow[j] = arow[j] * (grow[j] - dot) * scale;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor2D, b: &Tensor2D) -> Tensor2D {
        let mut out = Tensor2D::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let m = Tensor2D::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        let i3 = Tensor2D::identity(3);
        assert_eq!(i3.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_scalar() {
        let a = Tensor2D::from_vec(1, 1, vec![2.0]).unwrap();
        let b = Tensor2D::from_vec(1, 1, vec![3.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = crate::numerics::Rng::new(11);
        let a = rng.normal_tensor(4, 5, 1.0);
        let b = rng.normal_tensor(5, 3, 1.0);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor2D::zeros(2, 3);
        let b = Tensor2D::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn transpose_variants_agree() {
        let mut rng = crate::numerics::Rng::new(3);
        let a = rng.normal_tensor(4, 6, 1.0);
        let b = rng.normal_tensor(5, 6, 1.0);
        let direct = a.matmul(&b.transpose()).unwrap();
        let fused = a.matmul_transpose_b(&b).unwrap();
        for (x, y) in direct.data().iter().zip(fused.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let c = rng.normal_tensor(4, 3, 1.0);
        let direct = a.transpose().matmul(&c).unwrap();
        let fused = a.transpose_a_matmul(&c).unwrap();
        for (x, y) in direct.data().iter().zip(fused.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_zero_row_is_uniform() {
        let z = Tensor2D::zeros(1, 5);
        let a = row_softmax(&z, 1.0).unwrap();
        for v in a.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_dominant_logit_is_stable() {
        let z = Tensor2D::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let a = row_softmax(&z, 1.0).unwrap();
        assert!((a.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(a.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn softmax_single_column_is_ones() {
        let z = Tensor2D::from_rows(&[vec![3.0], vec![-7.0]]).unwrap();
        let a = row_softmax(&z, 1.0).unwrap();
        assert_eq!(a.data(), &[1.0, 1.0]);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let z = Tensor2D::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(row_softmax(&z, 1.0).is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let mut rng = crate::numerics::Rng::new(5);
        let z = rng.normal_tensor(3, 4, 1.0);
        let up = rng.normal_tensor(3, 4, 1.0);
        let scale = 0.5;
        let a = row_softmax(&z, scale).unwrap();
        let analytic = row_softmax_backward(&a, &up, scale).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut zp = z.clone();
                zp.set(i, j, z.get(i, j) + h);
                let mut zm = z.clone();
                zm.set(i, j, z.get(i, j) - h);
                let fp: f64 = row_softmax(&zp, scale)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(a, g)| a * g)
                    .sum();
                let fm: f64 = row_softmax(&zm, scale)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(a, g)| a * g)
                    .sum();
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - analytic.get(i, j)).abs() < 1e-7);
            }
        }
    }
}
