//! Dense complex matrices on labelled tensor products.
//!
//! Basis ordering is row-major with the leftmost tensor factor varying slowest.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Integer power that also accepts negative exponents.
pub fn powi(x: C64, n: i64) -> C64 {
    if n >= 0 {
        x.powu(n as u32)
    } else {
        x.inv().powu((-n) as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceShape {
    pub dims: Vec<usize>,
}

impl SpaceShape {
    pub fn new(dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "zero-dimensional factor");
        SpaceShape {
            dims: dims.to_vec(),
        }
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut d = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            d[k] = index % self.dims[k];
            index /= self.dims[k];
        }
        d
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&d, &n)| acc * n + d)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.dims.len() {
            return Err(Error::IndexOutOfRange {
                index: site,
                len: self.dims.len(),
            });
        }
        Ok(())
    }

    pub fn without(&self, site: usize) -> SpaceShape {
        let mut dims = self.dims.clone();
        dims.remove(site);
        SpaceShape { dims }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
    pub row_shape: Option<SpaceShape>,
    pub col_shape: Option<SpaceShape>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
            row_shape: None,
            col_shape: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let cl = rows.first().map_or(0, |v| v.len());
        assert!(rows.iter().all(|v| v.len() == cl), "ragged rows");
        Self::from_fn(r, cl, |i, j| rows[i][j])
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn with_shapes(mut self, row: SpaceShape, col: SpaceShape) -> Self {
        assert_eq!(row.total(), self.rows);
        assert_eq!(col.total(), self.cols);
        self.row_shape = Some(row);
        self.col_shape = Some(col);
        self
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|z| *z *= s);
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)]);
        m.row_shape = self.col_shape.clone();
        m.col_shape = self.row_shape.clone();
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = self.transpose();
        m.data.iter_mut().for_each(|z| *z = z.conj());
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let n = other.cols;
        let mut out = ComplexMatrix::zeros(self.rows, n);
        for i in 0..self.rows {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out.row_shape = self.row_shape.clone();
        out.col_shape = other.col_shape.clone();
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Product of a list of matrices, left to right.
    pub fn product(factors: &[&ComplexMatrix]) -> ComplexMatrix {
        let mut it = factors.iter();
        let first = (*it.next().expect("empty product")).clone();
        it.fold(first, |acc, m| acc.matmul(m))
    }

    pub fn commutator(&self, other: &ComplexMatrix) -> ComplexMatrix {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Rows `r0..r1`, columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> ComplexMatrix {
        Self::from_fn(r1 - r0, c1 - c0, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn inverse(&self) -> Result<ComplexMatrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(
                "inverse of non-square matrix".into(),
            ));
        }
        let lu = self.to_nalgebra().lu();
        lu.try_inverse()
            .map(|m| Self::from_nalgebra(&m))
            .ok_or_else(|| Error::Singular(format!("{}x{} inverse", self.rows, self.cols)))
    }

    /// Solve `self * x = b` for square `self`.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let lu = self.to_nalgebra().lu();
        lu.solve(&b.to_nalgebra())
            .map(|m| Self::from_nalgebra(&m))
            .ok_or_else(|| Error::Singular("linear solve".into()))
    }

    /// Divide every row by the larger of its norms in `self` and `other`.
    /// Used to compare identities whose rows span many orders of magnitude.
    pub fn row_balanced_pair(&self, other: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut a = self.clone();
        let mut b = other.clone();
        for i in 0..self.rows {
            let ra = &self.data[i * self.cols..(i + 1) * self.cols];
            let rb = &other.data[i * self.cols..(i + 1) * self.cols];
            let na = ra.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let nb = rb.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let s = na.max(nb);
            if s > 0.0 {
                for j in 0..self.cols {
                    a.data[i * self.cols + j] /= s;
                    b.data[i * self.cols + j] /= s;
                }
            }
        }
        (a, b)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut m = self.clone();
        m.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a += b);
        m
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut m = self.clone();
        m.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a -= b);
        m
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (rb, cb) = (b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(a.rows * rb, a.cols * cb);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let x = a[(i, j)];
            if x == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = x * b[(k, l)];
                }
            }
        }
    }
    let shape = |sa: &Option<SpaceShape>, sb: &Option<SpaceShape>, na: usize, nb: usize| {
        let mut d = sa.clone().map_or(vec![na], |s| s.dims);
        d.extend(sb.clone().map_or(vec![nb], |s| s.dims));
        SpaceShape { dims: d }
    };
    out.row_shape = Some(shape(&a.row_shape, &b.row_shape, a.rows, rb));
    out.col_shape = Some(shape(&a.col_shape, &b.col_shape, a.cols, cb));
    out
}

pub fn kron_all(factors: &[ComplexMatrix]) -> ComplexMatrix {
    factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| kron(&acc, f))
}

/// Embed `x`, acting on the factors `sites` (in the order listed), into the full
/// product `shape`; identity on all other factors.
pub fn embed_sites(
    x: &ComplexMatrix,
    sites: &[usize],
    shape: &SpaceShape,
) -> Result<ComplexMatrix> {
    for &s in sites {
        shape.check_site(s)?;
    }
    for (k, &s) in sites.iter().enumerate() {
        if sites[..k].contains(&s) {
            return Err(Error::DimensionMismatch(format!("site {s} repeated")));
        }
    }
    let local = SpaceShape {
        dims: sites.iter().map(|&s| shape.dims[s]).collect(),
    };
    if x.rows != local.total() || x.cols != local.total() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, factors need {}",
            x.rows,
            x.cols,
            local.total()
        )));
    }
    let n = shape.total();
    let strides = shape.strides();
    let mut out = ComplexMatrix::zeros(n, n);
    for col in 0..n {
        let digits = shape.digits(col);
        let lc: Vec<usize> = sites.iter().map(|&s| digits[s]).collect();
        let lcol = local.index(&lc);
        let base = col - sites.iter().map(|&s| digits[s] * strides[s]).sum::<usize>();
        for lrow in 0..local.total() {
            let v = x[(lrow, lcol)];
            if v == ZERO {
                continue;
            }
            let ld = local.digits(lrow);
            let row = base
                + sites
                    .iter()
                    .zip(&ld)
                    .map(|(&s, &d)| d * strides[s])
                    .sum::<usize>();
            out[(row, col)] = v;
        }
    }
    Ok(out.with_shapes(shape.clone(), shape.clone()))
}

/// `X_{mn}` in the usual subscript notation; `m > n` reverses the factor order of `x`.
pub fn embed(x: &ComplexMatrix, m: usize, n: usize, shape: &SpaceShape) -> Result<ComplexMatrix> {
    if m == n {
        return Err(Error::DimensionMismatch(
            "embed needs two distinct sites".into(),
        ));
    }
    embed_sites(x, &[m, n], shape)
}

pub fn embed1(x: &ComplexMatrix, m: usize, shape: &SpaceShape) -> Result<ComplexMatrix> {
    embed_sites(x, &[m], shape)
}

pub fn partial_trace(x: &ComplexMatrix, site: usize, shape: &SpaceShape) -> Result<ComplexMatrix> {
    shape.check_site(site)?;
    if x.rows != shape.total() || x.cols != shape.total() {
        return Err(Error::DimensionMismatch("partial_trace shape".into()));
    }
    let rest = shape.without(site);
    let stride = shape.strides()[site];
    let d = shape.dims[site];
    let lift = |i: usize| {
        // insert digit 0 at `site`
        let hi = i / stride;
        let lo = i % stride;
        hi * stride * d + lo
    };
    let m = rest.total();
    let mut out = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        let bi = lift(i);
        for j in 0..m {
            let bj = lift(j);
            out[(i, j)] = (0..d).map(|k| x[(bi + k * stride, bj + k * stride)]).sum();
        }
    }
    Ok(out.with_shapes(rest.clone(), rest))
}

pub fn partial_transpose(
    x: &ComplexMatrix,
    site: usize,
    shape: &SpaceShape,
) -> Result<ComplexMatrix> {
    shape.check_site(site)?;
    if x.rows != shape.total() || x.cols != shape.total() {
        return Err(Error::DimensionMismatch("partial_transpose shape".into()));
    }
    let stride = shape.strides()[site];
    let d = shape.dims[site];
    let n = shape.total();
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let di = (i / stride) % d;
        for j in 0..n {
            let dj = (j / stride) % d;
            let si = i - di * stride + dj * stride;
            let sj = j - dj * stride + di * stride;
            out[(i, j)] = x[(si, sj)];
        }
    }
    Ok(out.with_shapes(shape.clone(), shape.clone()))
}

pub fn swap_p(dim_a: usize, dim_b: usize) -> ComplexMatrix {
    let n = dim_a * dim_b;
    let mut p = ComplexMatrix::zeros(n, n);
    for i in 0..dim_a {
        for j in 0..dim_b {
            p[(j * dim_a + i, i * dim_b + j)] = ONE;
        }
    }
    p.with_shapes(
        SpaceShape::new(&[dim_b, dim_a]),
        SpaceShape::new(&[dim_a, dim_b]),
    )
}

pub fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let diff = (a - b).frobenius();
    Ok(diff / 1f64.max(a.frobenius()).max(b.frobenius()))
}

/// Relative error of two scalars under the same normalization as [`rel_err`].
pub fn rel_err_scalar(a: C64, b: C64) -> f64 {
    (a - b).norm() / 1f64.max(a.norm()).max(b.norm())
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn kron_of_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2).data, ComplexMatrix::identity(4).data);
    }

    #[test]
    fn kron_of_diagonals() {
        let z2 = c(0.3, 0.7).powu(2);
        let d = ComplexMatrix::diag(&[ONE, z2]);
        let k = kron(&d, &d);
        let want = ComplexMatrix::diag(&[ONE, z2, z2, z2 * z2]);
        assert!(rel_err(&k, &want).unwrap() < 1e-15);
    }

    #[test]
    fn kron_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(2, 2, &mut rng);
        let b = random(2, 2, &mut rng);
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for l in 0..2 {
                        assert_eq!(k[(i * 2 + p, j * 2 + l)], a[(i, j)] * b[(p, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn embed_identity() {
        let s = SpaceShape::new(&[2, 2, 2]);
        let e = embed(&ComplexMatrix::identity(4), 0, 1, &s).unwrap();
        assert_eq!(e.data, ComplexMatrix::identity(8).data);
    }

    #[test]
    fn embed_swap_moves_basis_vectors() {
        let s = SpaceShape::new(&[2, 2]);
        let p = embed(&swap_p(2, 2), 0, 1, &s).unwrap();
        // v0 (x) v1 has index 1, v1 (x) v0 has index 2
        let v = p.mul_vec(&[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(v, vec![ZERO, ZERO, ONE, ZERO]);
    }

    #[test]
    fn embed_reversed_is_conjugation_by_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(4, 4, &mut rng);
        let s = SpaceShape::new(&[2, 2]);
        let p = swap_p(2, 2);
        let want = p.matmul(&x).matmul(&p);
        let got = embed(&x, 1, 0, &s).unwrap();
        assert!(rel_err(&got, &want).unwrap() < 1e-15);
    }

    #[test]
    fn embed_mixed_dimensions_against_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(6, 6, &mut rng);
        let s = SpaceShape::new(&[3, 4, 2]);
        let got = embed(&x, 0, 2, &s).unwrap();
        // X_{02} = P_{12} (X (x) I_4) P_{12}, built from explicit digits
        let want = ComplexMatrix::from_fn(24, 24, |i, j| {
            let di = s.digits(i);
            let dj = s.digits(j);
            if di[1] != dj[1] {
                return ZERO;
            }
            x[(di[0] * 2 + di[2], dj[0] * 2 + dj[2])]
        });
        assert_eq!(got.data, want.data);
    }

    #[test]
    fn embed_errors() {
        let s = SpaceShape::new(&[2, 2]);
        let x = ComplexMatrix::identity(4);
        assert!(matches!(
            embed(&x, 0, 2, &s),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            embed(&ComplexMatrix::identity(6), 0, 1, &s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn partial_trace_of_identity() {
        let s = SpaceShape::new(&[3, 2]);
        let t = partial_trace(&ComplexMatrix::identity(6), 0, &s).unwrap();
        assert!(rel_err(&t, &ComplexMatrix::identity(2).scale(cr(3.0))).unwrap() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(3, 3, &mut rng);
        let b = random(2, 2, &mut rng);
        let s = SpaceShape::new(&[3, 2]);
        let t0 = partial_trace(&kron(&a, &b), 0, &s).unwrap();
        assert!(rel_err(&t0, &b.scale(a.trace())).unwrap() < 1e-14);
        let t1 = partial_trace(&kron(&a, &b), 1, &s).unwrap();
        assert!(rel_err(&t1, &a.scale(b.trace())).unwrap() < 1e-14);
    }

    #[test]
    fn sequential_partial_traces_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SpaceShape::new(&[2, 3, 2]);
        let x = random(12, 12, &mut rng);
        let t = partial_trace(&x, 0, &s).unwrap();
        let t = partial_trace(&t, 0, &s.without(0)).unwrap();
        let mut want = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        want[(i, j)] += x[(s.index(&[a, b, i]), s.index(&[a, b, j]))];
                    }
                }
            }
        }
        assert!(rel_err(&t, &want).unwrap() < 1e-14);
    }

    #[test]
    fn partial_transpose_factorized_and_involutive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(3, 3, &mut rng);
        let b = random(2, 2, &mut rng);
        let s = SpaceShape::new(&[3, 2]);
        let pt = partial_transpose(&kron(&a, &b), 1, &s).unwrap();
        assert_eq!(pt.data, kron(&a, &b.transpose()).data);
        let x = random(6, 6, &mut rng);
        let back = partial_transpose(&partial_transpose(&x, 0, &s).unwrap(), 0, &s).unwrap();
        assert_eq!(back.data, x.data);
    }

    #[test]
    fn swap_conjugation_exchanges_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(2, 2, &mut rng);
        let b = random(2, 2, &mut rng);
        let p = swap_p(2, 2);
        assert!(rel_err(&p.matmul(&p), &ComplexMatrix::identity(4)).unwrap() == 0.0);
        let lhs = p.matmul(&kron(&a, &b)).matmul(&p);
        assert!(rel_err(&lhs, &kron(&b, &a)).unwrap() < 1e-15);
    }

    #[test]
    fn swap_rectangular_dims() {
        let p = swap_p(3, 2);
        let a = ComplexMatrix::from_fn(3, 3, |i, j| cr((i * 3 + j) as f64));
        let b = ComplexMatrix::from_fn(2, 2, |i, j| c(i as f64, j as f64));
        let lhs = p.matmul(&kron(&a, &b)).matmul(&p.transpose());
        assert!(rel_err(&lhs, &kron(&b, &a)).unwrap() < 1e-15);
    }

    #[test]
    fn rel_err_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(3, 3, &mut rng).scale(cr(10.0));
        assert_eq!(rel_err(&a, &a).unwrap(), 0.0);
        let z = ComplexMatrix::zeros(2, 2);
        assert_eq!(rel_err(&z, &z).unwrap(), 0.0);
        let e = random(3, 3, &mut rng);
        let eps = 1e-7;
        let got = rel_err(&a, &(&a + &e.scale(cr(eps)))).unwrap();
        let want = eps * e.frobenius() / a.frobenius();
        assert!((got - want).abs() < 1e-3 * want);
        assert!(rel_err(&a, &z).is_err());
    }
}
