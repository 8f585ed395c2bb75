//! Site-local operators: R, L and relatives, the boundary K-matrices, and the
//! fusion maps between `W`, `W (x) V` and back.
//!
//! Operators on `W (x) V` are indexed `2*k + nu` for `w^k (x) v^nu`. They are
//! written as 2x2 blocks `X[mu][nu]` of Fock operators with
//! `X(w (x) v^nu) = sum_mu X[mu][nu](w) (x) v^mu`.

use crate::error::{Error, Result};
use crate::qoscillator::{ktw_matrix, kw_matrix, osc_a, osc_adag, osc_fd, FockCutoff};
use crate::tensor_core::{partial_transpose, powi, ComplexMatrix, SpaceShape, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryParams {
    pub xi: C64,
    pub xitilde: C64,
}

impl BoundaryParams {
    pub fn new(xi: C64, xitilde: C64) -> Result<Self> {
        if xi == ZERO || xitilde == ZERO {
            return Err(Error::Domain("boundary parameters must be nonzero".into()));
        }
        Ok(BoundaryParams { xi, xitilde })
    }
}

pub fn wv_shape(j: FockCutoff) -> SpaceShape {
    SpaceShape::new(&[j.dim(), 2])
}

/// Assemble an operator on `W (x) V` from its four Fock blocks.
pub fn wv_from_blocks(x: [[&ComplexMatrix; 2]; 2]) -> ComplexMatrix {
    let n = x[0][0].rows;
    let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
    for mu in 0..2 {
        for nu in 0..2 {
            let b = x[mu][nu];
            for k in 0..n {
                for l in 0..n {
                    let v = b[(k, l)];
                    if v != ZERO {
                        m[(2 * k + mu, 2 * l + nu)] = v;
                    }
                }
            }
        }
    }
    m.with_shapes(SpaceShape::new(&[n, 2]), SpaceShape::new(&[n, 2]))
}

struct Fock {
    q: C64,
    j: FockCutoff,
}

impl Fock {
    fn a(&self) -> ComplexMatrix {
        osc_a(self.j).matrix
    }
    fn ad(&self) -> ComplexMatrix {
        osc_adag(self.q, self.j).matrix
    }
    fn f(&self, f: impl Fn(i64) -> C64) -> ComplexMatrix {
        osc_fd(|k| f(k as i64), self.j).matrix
    }
    fn qd(&self, s: i64) -> ComplexMatrix {
        let q = self.q;
        self.f(|k| powi(q, s * k))
    }
}

pub fn r_matrix(z: C64, q: C64) -> ComplexMatrix {
    let a = ONE - q * q * z * z;
    let b = q * (ONE - z * z);
    let c = (ONE - q * q) * z;
    ComplexMatrix::from_rows(&[
        vec![a, ZERO, ZERO, ZERO],
        vec![ZERO, b, c, ZERO],
        vec![ZERO, c, b, ZERO],
        vec![ZERO, ZERO, ZERO, a],
    ])
    .with_shapes(SpaceShape::new(&[2, 2]), SpaceShape::new(&[2, 2]))
}

/// `((R^{t1})^{-1})^{t1}`.
pub fn r_tilde(z: C64, q: C64) -> Result<ComplexMatrix> {
    let s = SpaceShape::new(&[2, 2]);
    let t = partial_transpose(&r_matrix(z, q), 0, &s)?;
    partial_transpose(&t.inverse()?, 0, &s)
}

pub fn l_matrix(z: C64, r: C64, q: C64, j: FockCutoff) -> ComplexMatrix {
    let f = Fock { q, j };
    let x00 = f.f(|k| r * powi(q, k));
    let x01 = f.ad().matmul(&f.qd(-1)).scale(-z / q);
    let x10 = f.a().matmul(&f.qd(1)).scale(-q * z * r);
    let x11 = f.f(|k| (ONE - powi(q, 2 * (k + 1)) * z * z) * powi(q, -k));
    wv_from_blocks([[&x00, &x01], [&x10, &x11]])
}

pub fn l_inverse(z: C64, r: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    let den = ONE - z * z;
    if den.norm() < 1e-14 {
        return Err(Error::Singular("L(z) is not invertible at z^2 = 1".into()));
    }
    let f = Fock { q, j };
    let s = den.inv();
    let x00 = f.f(|k| powi(q, -k) / r * (ONE - powi(q, 2 * k) * z * z) * s);
    let x01 = f.qd(-1).matmul(&f.ad()).scale(z / (q * r) * s);
    let x10 = f.qd(1).matmul(&f.a()).scale(q * z * s);
    let x11 = f.f(|k| powi(q, k) * s);
    Ok(wv_from_blocks([[&x00, &x01], [&x10, &x11]]))
}

/// Closed form of the partial transpose of `L` in the `V` factor.
pub fn l_t2(z: C64, r: C64, q: C64, j: FockCutoff) -> ComplexMatrix {
    let f = Fock { q, j };
    let x00 = f.f(|k| r * powi(q, k));
    let x01 = f.qd(1).matmul(&f.a()).scale(-r * q * q * z);
    let x10 = f.qd(-1).matmul(&f.ad()).scale(-z);
    let x11 = f.f(|k| powi(q, -k) * (ONE - powi(q, 2 * (k + 1)) * z * z));
    wv_from_blocks([[&x00, &x01], [&x10, &x11]])
}

/// Closed form of `(L^{t2})^{-1}`, valid away from `q^2 z^2 = 1`.
pub fn l_t2_inverse(z: C64, r: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    let den = ONE - q * q * z * z;
    if den.norm() < 1e-14 {
        return Err(Error::Singular(
            "partial transpose of L is singular at q^2 z^2 = 1".into(),
        ));
    }
    let s = den.inv();
    let f = Fock { q, j };
    let x00 = f.f(|k| (ONE - powi(q, 2 * (k + 2)) * z * z) * powi(q, -k) / r * s);
    let x01 = f.a().matmul(&f.qd(1)).scale(q * q * z * s);
    let x10 = f.ad().matmul(&f.qd(-1)).scale(z / r * s);
    let x11 = f.f(|k| powi(q, k) * s);
    Ok(wv_from_blocks([[&x00, &x01], [&x10, &x11]]))
}

/// `((L^{t2})^{-1})^{t2}` from the closed-form inverse.
pub fn l_tilde(z: C64, r: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    partial_transpose(&l_t2_inverse(z, r, q, j)?, 1, &wv_shape(j))
}

/// The same object through numerical partial transposes and a dense inverse.
/// Agrees with [`l_tilde`] away from the last Fock row.
pub fn l_tilde_pipeline(z: C64, r: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    let s = wv_shape(j);
    let t = partial_transpose(&l_matrix(z, r, q, j), 1, &s)?;
    partial_transpose(&t.inverse()?, 1, &s)
}

pub fn kv(z: C64, xi: C64) -> ComplexMatrix {
    ComplexMatrix::diag(&[xi * z * z - ONE, xi - z * z])
}

pub fn ktv(z: C64, xitilde: C64, q: C64) -> ComplexMatrix {
    ComplexMatrix::diag(&[q * q * xitilde * z * z - ONE, xitilde - q * q * z * z])
}

/// Materialized right oscillator K-matrix; fails if the cutoff overflows.
pub fn kw_dense(z: C64, r: C64, xi: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    kw_matrix(z, r, xi, q, j).to_matrix()
}

pub fn ktw_dense(z: C64, r: C64, xitilde: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    ktw_matrix(z, r, xitilde, q, j)?.to_matrix()
}

/// `iota(r) : W -> W (x) V`; the `w^J` component is dropped.
pub fn iota(r: C64, q: C64, j: FockCutoff) -> ComplexMatrix {
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(2 * n, n);
    for k in 0..n {
        let kk = k as i64;
        if k + 1 < n {
            m[(2 * (k + 1), k)] = powi(q, -kk - 1) - powi(q, kk + 1);
        }
        m[(2 * k + 1, k)] = powi(q, kk + 1) * r;
    }
    m.row_shape = Some(wv_shape(j));
    m
}

/// `tau(r) : W (x) V -> W`; the `w^J` component is dropped.
pub fn tau(r: C64, q: C64, j: FockCutoff) -> ComplexMatrix {
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(n, 2 * n);
    for k in 0..n {
        let kk = k as i64;
        m[(k, 2 * k)] = powi(q, kk);
        if k + 1 < n {
            m[(k + 1, 2 * k + 1)] = (powi(q, kk + 1) - powi(q, -kk - 1)) / r;
        }
    }
    m.col_shape = Some(wv_shape(j));
    m
}

/// `tau'(w^j) = q^{-j} w^j (x) v^0`, a right inverse of `tau`.
pub fn tau_section(_r: C64, q: C64, j: FockCutoff) -> ComplexMatrix {
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(2 * n, n);
    for k in 0..n {
        m[(2 * k, k)] = powi(q, -(k as i64));
    }
    m.row_shape = Some(wv_shape(j));
    m
}

/// The retraction `iota'(w^k (x) v^1) = q^{-k-1} r^{-1} w^k`, `iota'(w^k (x) v^0) = 0`,
/// so that `iota' iota = Id` and `iota' tau' = 0`.
pub fn iota_retraction(r: C64, q: C64, j: FockCutoff) -> Result<ComplexMatrix> {
    if r == ZERO {
        return Err(Error::Domain("r must be nonzero".into()));
    }
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(n, 2 * n);
    for k in 0..n {
        m[(k, 2 * k + 1)] = powi(q, -(k as i64) - 1) / r;
    }
    m.col_shape = Some(wv_shape(j));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::{c, embed, kron, rel_err, swap_p};

    fn q0() -> C64 {
        c(0.5, 0.15)
    }

    fn cut(n: usize) -> FockCutoff {
        FockCutoff::new(n).unwrap()
    }

    /// Keep W (x) V rows and columns with Fock index below `keep`.
    fn interior(m: &ComplexMatrix, keep: usize) -> ComplexMatrix {
        m.block(0, 2 * keep, 0, 2 * keep)
    }

    #[test]
    fn r_special_points() {
        let q = q0();
        let r0 = r_matrix(ZERO, q);
        assert!(rel_err(&r0, &ComplexMatrix::diag(&[ONE, q, q, ONE])).unwrap() < 1e-15);
        let r1 = r_matrix(ONE, q);
        assert!(rel_err(&r1, &swap_p(2, 2).scale(ONE - q * q)).unwrap() < 1e-15);
    }

    #[test]
    fn r_crossing_unitarity() {
        let q = q0();
        for z in [c(0.3, 0.2), c(-0.7, 0.4), c(1.3, -0.1)] {
            let z2 = z * z;
            let lhs = r_tilde(z, q).unwrap().inverse().unwrap();
            let s =
                (ONE - z2) * (ONE - q.powu(4) * z2) / ((ONE - q * q * z2) * (ONE - q.powu(6) * z2));
            let rhs = r_matrix(q * q * z, q).scale(s);
            assert!(rel_err(&lhs, &rhs).unwrap() < 1e-13);
        }
    }

    #[test]
    fn l_at_zero_is_diagonal() {
        let q = q0();
        let j = cut(6);
        let r = c(1.3, 0.2);
        let l = l_matrix(ZERO, r, q, j);
        let d: Vec<C64> = (0..6).flat_map(|k| [r * powi(q, k), powi(q, -k)]).collect();
        assert!(rel_err(&l, &ComplexMatrix::diag(&d)).unwrap() < 1e-15);
        let lt = l_tilde(ZERO, r, q, j).unwrap();
        let dt: Vec<C64> = (0..6).flat_map(|k| [powi(q, -k) / r, powi(q, k)]).collect();
        assert!(rel_err(&lt, &ComplexMatrix::diag(&dt)).unwrap() < 1e-15);
    }

    #[test]
    fn l_entries_match_component_form() {
        // L^0_0 = q^D, L_0^1 = -z q^{-D} a^+, L_1^0 = -z a q^{D+1}, L_1^1 = q^{-D}(1 - q^{2(D+1)} z^2)
        let q = q0();
        let j = cut(7);
        let z = c(0.6, -0.3);
        let l = l_matrix(z, ONE, q, j);
        for k in 0..7usize {
            let kk = k as i64;
            assert!((l[(2 * k, 2 * k)] - powi(q, kk)).norm() < 1e-14);
            if k + 1 < 7 {
                let want = -z * powi(q, -kk - 1) * (ONE - powi(q, 2 * kk + 2));
                assert!((l[(2 * (k + 1), 2 * k + 1)] - want).norm() < 1e-13);
            }
            if k >= 1 {
                let want = -z * powi(q, kk + 1);
                assert!((l[(2 * (k - 1) + 1, 2 * k)] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn l_r_factorization() {
        let q = q0();
        let j = cut(6);
        let (z, r) = (c(0.4, 0.5), c(0.8, -0.6));
        let d = kron(&ComplexMatrix::identity(6), &ComplexMatrix::diag(&[r, ONE]));
        let lhs = l_matrix(z, r, q, j);
        let rhs = l_matrix(z, ONE, q, j).matmul(&d);
        assert!(rel_err(&lhs, &rhs).unwrap() < 1e-14);
    }

    #[test]
    fn l_inverse_on_interior() {
        let q = q0();
        let n = 8;
        let j = cut(n);
        let (z, r) = (c(0.4, 0.5), c(0.8, -0.6));
        let prod = l_matrix(z, r, q, j).matmul(&l_inverse(z, r, q, j).unwrap());
        assert!(
            rel_err(
                &interior(&prod, n - 1),
                &ComplexMatrix::identity(2 * (n - 1))
            )
            .unwrap()
                < 1e-13
        );
        assert!(l_inverse(ONE, r, q, j).is_err());
    }

    #[test]
    fn partial_transpose_matches_closed_form() {
        let q = q0();
        let n = 7;
        let j = cut(n);
        let (z, r) = (c(0.4, 0.5), c(0.8, -0.6));
        let pt = partial_transpose(&l_matrix(z, r, q, j), 1, &wv_shape(j)).unwrap();
        assert!(rel_err(&pt, &l_t2(z, r, q, j)).unwrap() < 1e-14);
        let prod = l_t2(z, r, q, j).matmul(&l_t2_inverse(z, r, q, j).unwrap());
        assert!(
            rel_err(
                &interior(&prod, n - 1),
                &ComplexMatrix::identity(2 * (n - 1))
            )
            .unwrap()
                < 1e-13
        );
    }

    #[test]
    fn l_tilde_two_constructions_agree() {
        let q = q0();
        let n = 9;
        let j = cut(n);
        let (z, r) = (c(0.7, -0.2), c(1.1, 0.3));
        let a = l_tilde(z, r, q, j).unwrap();
        let b = l_tilde_pipeline(z, r, q, j).unwrap();
        assert!(rel_err(&interior(&a, n - 1), &interior(&b, n - 1)).unwrap() < 1e-12);
    }

    #[test]
    fn l_crossing_unitarity() {
        let q = q0();
        let n = 10;
        let j = cut(n);
        let r = c(0.9, 0.2);
        for z in [
            c(0.3, 0.1),
            c(0.8, -0.5),
            c(-0.4, 0.9),
            c(1.2, 0.3),
            c(0.05, 0.6),
        ] {
            let z2 = z * z;
            let s = (ONE - q * q * z2) / (ONE - q.powu(4) * z2);
            let prod = l_tilde(z, r, q, j)
                .unwrap()
                .matmul(&l_matrix(q * q * z, r, q, j))
                .scale(s);
            assert!(
                rel_err(
                    &interior(&prod, n - 2),
                    &ComplexMatrix::identity(2 * (n - 2))
                )
                .unwrap()
                    < 1e-12
            );
        }
    }

    #[test]
    fn kv_special_values_and_reflection() {
        let q = q0();
        let xi = c(0.7, 0.3);
        assert!(
            rel_err(&kv(ONE, xi), &ComplexMatrix::identity(2).scale(xi - ONE)).unwrap() < 1e-15
        );
        let (y, z) = (c(0.6, 0.4), c(-0.3, 0.8));
        let s = SpaceShape::new(&[2, 2]);
        let k1 = embed(&kron(&kv(y, xi), &ComplexMatrix::identity(2)), 0, 1, &s).unwrap();
        let k2 = kron(&ComplexMatrix::identity(2), &kv(z, xi));
        let lhs = ComplexMatrix::product(&[&r_matrix(y / z, q), &k1, &r_matrix(y * z, q), &k2]);
        let rhs = ComplexMatrix::product(&[&k2, &r_matrix(y * z, q), &k1, &r_matrix(y / z, q)]);
        assert!(rel_err(&lhs, &rhs).unwrap() < 1e-13);
    }

    #[test]
    fn ktv_from_kv_with_rescaled_prefactor() {
        // the displayed left K-matrix equals f(z) K(qz)^{-1} at xi -> 1/xi~ only after
        // dividing f(z) = (q^2 xt z^2 - 1)(q^2 z^2 - xt) by xt
        let q = q0();
        let xt = c(0.2, -0.3);
        let z = c(0.7, 0.45);
        let f = (q * q * xt * z * z - ONE) * (q * q * z * z - xt) / xt;
        let rhs = kv(q * z, xt.inv()).inverse().unwrap().scale(f);
        assert!(rel_err(&ktv(z, xt, q), &rhs).unwrap() < 1e-14);
    }

    #[test]
    fn iota_tau_small_cases() {
        let q = q0();
        let n = 6;
        let j = cut(n);
        let r = c(1.2, -0.3);
        let io = iota(r, q, j);
        let w0 = io.mul_vec(&[ONE, ZERO, ZERO, ZERO, ZERO, ZERO]);
        assert!((w0[2] - (q.inv() - q)).norm() < 1e-15);
        assert!((w0[1] - q * r).norm() < 1e-15);
        let t = tau(r, q, j);
        let mut v = vec![ZERO; 2 * n];
        v[0] = ONE;
        assert!((t.mul_vec(&v)[0] - ONE).norm() < 1e-15);
        let ti = t.matmul(&io);
        assert!(ti.block(0, n - 1, 0, n - 1).max_abs() < 1e-12);
    }

    #[test]
    fn splitting_maps() {
        let q = q0();
        let n = 8;
        let j = cut(n);
        let r = c(0.7, 0.5);
        let io = iota(r, q, j);
        let t = tau(r, q, j);
        let ts = tau_section(r, q, j);
        let ir = iota_retraction(r, q, j).unwrap();
        let id = ComplexMatrix::identity(n);
        assert!(rel_err(&t.matmul(&ts), &id).unwrap() < 1e-14);
        assert!(rel_err(&ir.matmul(&io), &id).unwrap() < 1e-12);
        assert!(ir.matmul(&ts).max_abs() < 1e-12);
        let sum = &io.matmul(&ir) + &ts.matmul(&t);
        let m = 2 * (n - 1);
        assert!(rel_err(&sum.block(0, m, 0, m), &ComplexMatrix::identity(m)).unwrap() < 1e-12);
        // agrees with solving iota' [iota | tau'] = [Id | 0] directly
        let basis = ComplexMatrix::from_fn(2 * n, 2 * n, |i, k| {
            if k < n {
                io[(i, k)]
            } else {
                ts[(i, k - n)]
            }
        });
        let solved = basis.inverse().unwrap().block(0, n, 0, 2 * n);
        assert!(rel_err(&solved, &ir).unwrap() < 1e-10);
    }
}
