use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type. `f32` drives training and inference, `f64`
/// is used for finite-difference gradient checks.
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + std::iter::Sum + 'static
{
    const NAME: &'static str;

    fn of(x: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor2[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Real> Tensor2<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("from_rows", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[T]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor2<U> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::of(x.to_f64())).collect(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) {
        for x in &mut self.data {
            *x = *x * s;
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&x| x.to_f64() * x.to_f64()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_same(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    pub(crate) fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Dot product with eight independent accumulators; the summation order is
/// fixed so results are reproducible.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] = acc[k] + xa[k] * xb[k];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `A (m×k) · B (k×n)`.
pub fn matmul<T: Real>(a: &Tensor2<T>, b: &Tensor2<T>) -> Result<Tensor2<T>> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape_str(), b.shape_str()));
    }
    let mut out = Tensor2::zeros(a.rows, b.cols);
    matmul_acc(a, b, &mut out);
    Ok(out)
}

/// `C += A · B`; every output row depends only on the matching row of `A`.
pub(crate) fn matmul_acc<T: Real>(a: &Tensor2<T>, b: &Tensor2<T>, c: &mut Tensor2<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let crow = &mut c.data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != T::zero() {
                axpy(av, &b.data[p * n..(p + 1) * n], crow);
            }
        }
    }
}

/// `C += A · Bᵀ` with `A: m×n`, `B: k×n`, `C: m×k`.
pub(crate) fn matmul_nt_acc<T: Real>(a: &Tensor2<T>, b: &Tensor2<T>, c: &mut Tensor2<T>) {
    for i in 0..a.rows {
        let arow = a.row(i);
        for p in 0..b.rows {
            let v = dot(arow, b.row(p));
            let idx = i * c.cols + p;
            c.data[idx] = c.data[idx] + v;
        }
    }
}

/// `C += Aᵀ · B` with `A: m×k`, `B: m×n`, `C: k×n`.
pub(crate) fn matmul_tn_acc<T: Real>(a: &Tensor2<T>, b: &Tensor2<T>, c: &mut Tensor2<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let brow = &b.data[i * n..(i + 1) * n];
        for p in 0..a.cols {
            let av = a.data[i * a.cols + p];
            if av != T::zero() {
                axpy(av, brow, &mut c.data[p * n..(p + 1) * n]);
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax restricted to the positions where `mask` is true. Masked
/// positions come out as exact zeros.
pub fn masked_softmax<T: Real>(scores: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if scores.len() != mask.len() {
        return Err(Error::shape("masked_softmax", scores.len(), mask.len()));
    }
    let mut out = vec![T::zero(); scores.len()];
    masked_softmax_into(scores, mask, &mut out)?;
    Ok(out)
}

pub(crate) fn masked_softmax_into<T: Real>(
    scores: &[T],
    mask: &[bool],
    out: &mut [T],
) -> Result<()> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or_else(|| Error::Domain("softmax over an all-masked vector".into()))?;
    let mut total = T::zero();
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        if m {
            let e = (s - max).exp();
            *o = e;
            total = total + e;
        } else {
            *o = T::zero();
        }
    }
    for (o, &m) in out.iter_mut().zip(mask) {
        if m {
            *o = *o / total;
        }
    }
    Ok(())
}

/// Numerically stable log-softmax of a single row.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mut out = logits.to_vec();
    log_softmax_in_place(&mut out);
    out
}

pub(crate) fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    for x in row.iter_mut() {
        *x = *x - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2<f64> {
        Tensor2::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let b = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Tensor2::identity(2), &b).unwrap(), b);
        let ones = t(&[&[1.0], &[1.0]]);
        assert_eq!(matmul(&b, &ones).unwrap(), t(&[&[3.0], &[7.0]]));
        let z = Tensor2::zeros(3, 2);
        assert_eq!(matmul(&z, &b).unwrap(), Tensor2::zeros(3, 2));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor2::<f32>::zeros(2, 3);
        let b = Tensor2::<f32>::zeros(2, 3);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = t(&[&[1.0, -2.0, 0.5], &[0.0, 3.0, 1.0]]);
        let b = t(&[&[2.0, 1.0, -1.0], &[4.0, 0.0, 2.0], &[1.0, 1.0, 1.0]]);
        let mut nt = Tensor2::zeros(2, 3);
        matmul_nt_acc(&a, &b, &mut nt);
        assert_eq!(nt, matmul(&a, &b.transpose()).unwrap());
        let mut tn = Tensor2::zeros(3, 3);
        matmul_tn_acc(&a, &t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]), &mut tn);
        assert_eq!(
            tn,
            matmul(&a.transpose(), &t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]])).unwrap()
        );
    }

    #[test]
    fn softmax_examples() {
        let p = masked_softmax(&[0.0f64, 0.0, 0.0], &[true; 3]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(masked_softmax(&[5.0f64], &[true]).unwrap(), vec![1.0]);
        let p = masked_softmax(&[1.0f64, 2.0, 9.0], &[true, true, false]).unwrap();
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        assert!((p[0] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((p[1] - e2 / (e1 + e2)).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        assert!((p[0] - 0.2689).abs() < 1e-4 && (p[1] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_all_masked_is_domain_error() {
        let err = masked_softmax(&[1.0f32, 2.0], &[false, false]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn softmax_is_stable_for_large_scores() {
        let p = masked_softmax(&[1000.0f32, 1000.0], &[true, true]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn log_softmax_normalizes() {
        let l = log_softmax(&[0.3f64, -2.0, 7.5, 1.0]);
        let s: f64 = l.iter().map(|x| x.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(l.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..21).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
