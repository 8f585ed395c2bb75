//! The identity battery. Every check returns named [`CheckResult`]s; properties
//! that are only conjectured are flagged as such.
//!
//! Identities on spaces containing `W` are evaluated on a truncated Fock space
//! and compared on the rows whose Fock index keeps every intermediate product
//! exact, each row measured against the size of the terms summed into it.

use crate::chain::{
    closed_p_minus, closed_p_plus, closed_q, closed_transfer_v, closed_transfer_w,
    closed_transfer_w_truncated, diag_power, in_exclusion_set, p_minus, p_plus, q_operator,
    spin_twist, total_spin, transfer_v, transfer_w, transfer_w_truncated, ChainParams,
};
use crate::error::{Error, Result};
use crate::lattice_ops::{
    iota, iota_retraction, ktv, kv, kw_dense, l_matrix, l_tilde, r_matrix, tau, tau_section,
};
use crate::poly::Poly;
use crate::qoscillator::{ktw_entries, FockCutoff};
use crate::tensor_core::{
    embed, embed1, kron, powi, rel_err, ComplexMatrix, SpaceShape, C64, ONE, ZERO,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub conjecture: bool,
    pub params_digest: String,
    pub notes: String,
}

impl CheckResult {
    pub fn new(name: &str, residual: f64, tolerance: f64, digest: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            residual,
            tolerance,
            passed: residual < tolerance,
            conjecture: false,
            params_digest: digest.to_string(),
            notes: String::new(),
        }
    }

    pub fn conjecture(mut self) -> Self {
        self.conjecture = true;
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes = s.into();
        self
    }

    /// A check that could not be evaluated.
    pub fn failed(name: &str, err: &Error, digest: &str) -> Self {
        CheckResult::new(name, f64::INFINITY, 0.0, digest).note(err.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    pub samples: usize,
    /// Overrides both default tolerances.
    pub tol: Option<f64>,
    /// Extra Fock levels on top of the working cutoff of W-space checks.
    pub extra_levels: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0,
            samples: 5,
            tol: None,
            extra_levels: 0,
        }
    }
}

impl CheckOptions {
    fn exact(&self) -> f64 {
        self.tol.unwrap_or(EXACT_TOL)
    }
    fn default_tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
    }
}

/// Seed plus a parameter echo.
pub fn params_digest(p: &ChainParams, seed: u64) -> String {
    let f = |z: C64| format!("{:.17e}{:+.17e}i", z.re, z.im);
    let t: Vec<String> = p.t.iter().map(|&t| f(t)).collect();
    format!(
        "seed={seed} q={} xi={} xitilde={} zeta={} r={} t=[{}] J={}",
        f(p.q),
        f(p.xi),
        f(p.xitilde),
        f(p.zeta),
        f(p.r),
        t.join(","),
        p.cutoff.dim()
    )
}

fn rand_z(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> C64 {
    C64::from_polar(
        rng.gen_range(lo..hi),
        rng.gen_range(0.0..std::f64::consts::TAU),
    )
}

/// Working Fock cutoff for materialized checks on `N` sites: wide enough for an
/// interior band, small enough that `q^{+-J^2}` stays in range.
fn w_cutoff(n: usize, extra: usize) -> FockCutoff {
    FockCutoff {
        j_max: 2 * n + 12 + extra,
    }
}

/// Rows of a space of shape `shape` whose digit at `site` is below `keep`.
fn rows_below(shape: &SpaceShape, site: usize, keep: usize) -> Vec<usize> {
    (0..shape.total())
        .filter(|&i| shape.digits(i)[site] < keep)
        .collect()
}

/// A product together with the product of the entrywise moduli of its factors,
/// which bounds the rounding error of each entry.
#[derive(Clone)]
struct Tracked {
    m: ComplexMatrix,
    mag: ComplexMatrix,
}

impl Tracked {
    fn of(m: &ComplexMatrix) -> Self {
        let mut mag = m.clone();
        for v in &mut mag.data {
            *v = C64::new(v.norm(), 0.0);
        }
        Tracked { m: m.clone(), mag }
    }
    fn then(&self, o: &Tracked) -> Tracked {
        Tracked {
            m: self.m.matmul(&o.m),
            mag: self.mag.matmul(&o.mag),
        }
    }
    fn scale(&self, s: C64) -> Tracked {
        Tracked {
            m: self.m.scale(s),
            mag: self.mag.scale(C64::new(s.norm(), 0.0)),
        }
    }
}

fn chain(parts: &[&Tracked]) -> Tracked {
    parts[1..]
        .iter()
        .fold(parts[0].clone(), |acc, p| acc.then(p))
}

fn tp(f: &[&ComplexMatrix]) -> Tracked {
    f[1..]
        .iter()
        .fold(Tracked::of(f[0]), |acc, m| acc.then(&Tracked::of(m)))
}

/// Largest row defect on the rows with Fock index below `keep`, each row measured
/// against the size of the terms summed into it.
fn interior_err(
    a: &Tracked,
    b: &Tracked,
    shape: &SpaceShape,
    site: usize,
    keep: usize,
) -> Result<f64> {
    let rows = rows_below(shape, site, keep);
    let cols = a.m.cols;
    let norm =
        |m: &ComplexMatrix, i: usize| (0..cols).map(|j| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
    let mut worst = 0f64;
    for i in rows {
        let s = norm(&a.m, i)
            .max(norm(&b.m, i))
            .max(norm(&a.mag, i))
            .max(norm(&b.mag, i));
        let diff = (0..cols)
            .map(|j| (a.m[(i, j)] - b.m[(i, j)]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if !diff.is_finite() || !s.is_finite() {
            return Err(Error::Overflow(
                "non-finite entries in a W-space comparison".into(),
            ));
        }
        if s > 0.0 {
            worst = worst.max(diff / s);
        }
    }
    Ok(worst)
}

fn comm_rel(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let s = a.frobenius() * b.frobenius();
    if s == 0.0 {
        return 0.0;
    }
    a.commutator(b).frobenius() / s
}

fn ktw_inverse_dense(z: C64, r: C64, p: &ChainParams, j: FockCutoff) -> Result<ComplexMatrix> {
    let e = ktw_entries(z, r, p.xitilde, p.q, j.dim())?;
    let d: Result<Vec<C64>> = e.into_iter().map(|v| v.inv().value()).collect();
    Ok(ComplexMatrix::diag(&d?))
}

fn ktw_dense(z: C64, r: C64, p: &ChainParams, j: FockCutoff) -> Result<ComplexMatrix> {
    crate::lattice_ops::ktw_dense(z, r, p.xitilde, p.q, j)
}

fn run(name: &str, digest: &str, tol: f64, f: impl FnOnce() -> Result<f64>) -> CheckResult {
    match f() {
        Ok(r) => CheckResult::new(name, r, tol, digest),
        Err(e) => CheckResult::failed(name, &e, digest),
    }
}

/// Yang-Baxter equations for `R`, for `L` with the oscillator in the first
/// factor and for `L` with the oscillator in the last factor.
pub fn check_ybe(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let q = p.q;
    let j = w_cutoff(1, o.extra_levels);
    let mut rng = o.rng(1);
    let zs: Vec<[C64; 3]> = (0..o.samples.max(1))
        .map(|_| {
            [
                rand_z(&mut rng, 0.4, 1.4),
                rand_z(&mut rng, 0.4, 1.4),
                rand_z(&mut rng, 0.4, 1.4),
            ]
        })
        .collect();
    let rs = [
        p.r,
        p.r * C64::from_polar(1.3, 0.7),
        p.r * C64::from_polar(0.6, -1.9),
    ];
    let r_ybe = run("ybe:R", &d, o.exact(), || {
        let s = SpaceShape::new(&[2, 2, 2]);
        let mut worst = 0f64;
        for [z1, z2, z3] in &zs {
            let r12 = embed(&r_matrix(z1 / z2, q), 0, 1, &s)?;
            let r13 = embed(&r_matrix(z1 / z3, q), 0, 2, &s)?;
            let r23 = embed(&r_matrix(z2 / z3, q), 1, 2, &s)?;
            let lhs = ComplexMatrix::product(&[&r12, &r13, &r23]);
            let rhs = ComplexMatrix::product(&[&r23, &r13, &r12]);
            worst = worst.max(rel_err(&lhs, &rhs)?);
        }
        Ok(worst)
    });
    let lplus = run("ybe:L-oscillator-first", &d, o.exact(), || {
        let s = SpaceShape::new(&[j.dim(), 2, 2]);
        let mut worst = 0f64;
        for &r in &rs {
            for [z1, z2, z3] in &zs {
                let l12 = embed(&l_matrix(z1 / z2, r, q, j), 0, 1, &s)?;
                let l13 = embed(&l_matrix(z1 / z3, r, q, j), 0, 2, &s)?;
                let r23 = embed(&r_matrix(z2 / z3, q), 1, 2, &s)?;
                let lhs = tp(&[&l12, &l13, &r23]);
                let rhs = tp(&[&r23, &l13, &l12]);
                worst = worst.max(interior_err(&lhs, &rhs, &s, 0, j.dim() - 2)?);
            }
        }
        Ok(worst)
    })
    .note("three values of r");
    let lmin = run("ybe:L-oscillator-last", &d, o.exact(), || {
        let s = SpaceShape::new(&[2, 2, j.dim()]);
        let mut worst = 0f64;
        for &r in &rs {
            for [z1, z2, z3] in &zs {
                let r12 = embed(&r_matrix(z1 / z2, q), 0, 1, &s)?;
                let l13 = embed(&l_matrix(z1 / z3, r, q, j), 2, 0, &s)?;
                let l23 = embed(&l_matrix(z2 / z3, r, q, j), 2, 1, &s)?;
                let lhs = tp(&[&r12, &l13, &l23]);
                let rhs = tp(&[&l23, &l13, &r12]);
                worst = worst.max(interior_err(&lhs, &rhs, &s, 2, j.dim() - 2)?);
            }
        }
        Ok(worst)
    });
    vec![r_ybe, lplus, lmin]
}

/// Right and left reflection equations, the left ones in their inverted form.
pub fn check_reflection(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let (q, r) = (p.q, p.r);
    let j = w_cutoff(1, o.extra_levels);
    let mut rng = o.rng(2);
    let yz: Vec<(C64, C64)> = (0..o.samples.max(1))
        .map(|_| (rand_z(&mut rng, 0.4, 1.3), rand_z(&mut rng, 0.4, 1.3)))
        .collect();
    let vv = SpaceShape::new(&[2, 2]);
    let wv = SpaceShape::new(&[j.dim(), 2]);
    let keep = j.dim() - 2;
    let kv_re = run("reflection:right-V", &d, o.exact(), || {
        let mut worst = 0f64;
        for &(y, z) in &yz {
            let k1 = embed1(&kv(y, p.xi), 0, &vv)?;
            let k2 = embed1(&kv(z, p.xi), 1, &vv)?;
            let (ra, rb) = (r_matrix(y / z, q), r_matrix(y * z, q));
            let lhs = ComplexMatrix::product(&[&ra, &k1, &rb, &k2]);
            let rhs = ComplexMatrix::product(&[&k2, &rb, &k1, &ra]);
            worst = worst.max(rel_err(&lhs, &rhs)?);
        }
        Ok(worst)
    });
    let kw_re = run("reflection:right-W", &d, o.exact(), || {
        let mut worst = 0f64;
        for &(y, z) in &yz {
            let k1 = kron(&kw_dense(y, r, p.xi, q, j)?, &ComplexMatrix::identity(2));
            let k2 = embed1(&kv(z, p.xi), 1, &wv)?;
            let (la, lb) = (l_matrix(y / z, r, q, j), l_matrix(y * z, r, q, j));
            let lhs = tp(&[&la, &k1, &lb, &k2]);
            let rhs = tp(&[&k2, &lb, &k1, &la]);
            worst = worst.max(interior_err(&lhs, &rhs, &wv, 0, keep)?);
        }
        Ok(worst)
    });
    let ktv_re = run("reflection:left-V", &d, o.exact(), || {
        let mut worst = 0f64;
        for &(y, z) in &yz {
            let k1 = embed1(&ktv(y / q, p.xitilde, q).inverse()?, 0, &vv)?;
            let k2 = embed1(&ktv(z / q, p.xitilde, q).inverse()?, 1, &vv)?;
            let (ra, rb) = (r_matrix(y / z, q), r_matrix(y * z, q));
            let lhs = ComplexMatrix::product(&[&ra, &k1, &rb, &k2]);
            let rhs = ComplexMatrix::product(&[&k2, &rb, &k1, &ra]);
            worst = worst.max(rel_err(&lhs, &rhs)?);
        }
        Ok(worst)
    });
    let ktw_re = run("reflection:left-W", &d, o.exact(), || {
        let mut worst = 0f64;
        for &(y, z) in &yz {
            let k1 = kron(
                &ktw_inverse_dense(y / q, r, p, j)?,
                &ComplexMatrix::identity(2),
            );
            let k2 = embed1(&ktv(z / q, p.xitilde, q).inverse()?, 1, &wv)?;
            let (la, lb) = (l_matrix(y / z, r, q, j), l_matrix(y * z, r, q, j));
            let lhs = tp(&[&la, &k1, &lb, &k2]);
            let rhs = tp(&[&k2, &lb, &k1, &la]);
            worst = worst.max(interior_err(&lhs, &rhs, &wv, 0, keep)?);
        }
        Ok(worst)
    });
    vec![kv_re, kw_re, ktv_re, ktw_re]
}

/// Bulk and boundary fusion through `iota` and `tau`.
pub fn check_fusion(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let (q, r, xi, xt) = (p.q, p.r, p.xi, p.xitilde);
    let j = w_cutoff(1, o.extra_levels);
    let n = j.dim();
    let keep = n - 3;
    let mut rng = o.rng(3);
    let zs: Vec<C64> = (0..o.samples.max(1))
        .map(|_| rand_z(&mut rng, 0.4, 1.2))
        .collect();
    let tol = o.exact();
    let i2 = ComplexMatrix::identity(2);
    let w = SpaceShape::new(&[n]);
    let wv = SpaceShape::new(&[n, 2]);
    let wvv = SpaceShape::new(&[n, 2, 2]);
    let mut out = Vec::new();

    out.push(run("fusion:bulk-iota", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let l13 = embed(&l_matrix(z, r, q, j), 0, 2, &wvv)?;
            let r23 = embed(&r_matrix(z, q), 1, 2, &wvv)?;
            let io = kron(&iota(r, q, j), &i2);
            let lhs = tp(&[&l13, &r23, &io]);
            let rhs = tp(&[&io, &l_matrix(q * z, q * r, q, j)]).scale(ONE - z * z);
            worst = worst.max(interior_err(&lhs, &rhs, &wvv, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("fusion:bulk-tau", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let l13 = embed(&l_matrix(z, r, q, j), 0, 2, &wvv)?;
            let r23 = embed(&r_matrix(z, q), 1, 2, &wvv)?;
            let ta = kron(&tau(r, q, j), &i2);
            let lhs = tp(&[&ta, &l13, &r23]);
            let rhs = tp(&[&l_matrix(z / q, r / q, q, j), &ta]).scale(q * (ONE - q * q * z * z));
            worst = worst.max(interior_err(&lhs, &rhs, &wv, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("fusion:right-boundary-iota", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let z2 = z * z;
            let k1 = kron(&kw_dense(z, r, xi, q, j)?, &i2);
            let k2 = embed1(&kv(z, xi), 1, &wv)?;
            let lhs = tp(&[&k1, &l_matrix(z2, r, q, j), &k2, &iota(r, q, j)]);
            let rhs = tp(&[&iota(r, q, j), &kw_dense(q * z, q * r, xi, q, j)?])
                .scale((ONE - z2 * z2) * (xi - q * q * z2));
            worst = worst.max(interior_err(&lhs, &rhs, &wv, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("fusion:right-boundary-tau", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let z2 = z * z;
            let k1 = kron(&kw_dense(z, r, xi, q, j)?, &i2);
            let k2 = embed1(&kv(z, xi), 1, &wv)?;
            let lhs = tp(&[&tau(r, q, j), &k1, &l_matrix(z2, r, q, j), &k2]);
            let rhs =
                tp(&[&kw_dense(z / q, r / q, xi, q, j)?, &tau(r, q, j)]).scale(r * (xi * z2 - ONE));
            worst = worst.max(interior_err(&lhs, &rhs, &w, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("fusion:left-boundary-iota", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let z2 = z * z;
            let k2 = embed1(&ktv(z, xt, q), 1, &wv)?;
            let k1 = kron(&ktw_dense(z, r, p, j)?, &i2);
            let lhs = tp(&[&k2, &l_tilde(z2, r, q, j)?, &k1, &iota(r, q, j)]);
            let rhs = tp(&[&iota(r, q, j), &ktw_dense(q * z, q * r, p, j)?])
                .scale((xt - q * q * z2) / (ONE - q * q * z2 * z2));
            worst = worst.max(interior_err(&lhs, &rhs, &wv, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("fusion:left-boundary-tau", &d, tol, || {
        let mut worst = 0f64;
        for &z in &zs {
            let z2 = z * z;
            let z4 = z2 * z2;
            let k2 = embed1(&ktv(z, xt, q), 1, &wv)?;
            let k1 = kron(&ktw_dense(z, r, p, j)?, &i2);
            let lhs = tp(&[&tau(r, q, j), &k2, &l_tilde(z2, r, q, j)?, &k1]);
            let s = (ONE - powi(q, 4) * z4) / (ONE - q * q * z4) * (xt * z2 - ONE) / r;
            let rhs = tp(&[&ktw_dense(z / q, r / q, p, j)?, &tau(r, q, j)]).scale(s);
            worst = worst.max(interior_err(&lhs, &rhs, &w, 0, keep)?);
        }
        Ok(worst)
    }));
    out
}

/// Operators on `W_a (x) V_b (x) V^{(x)N}`.
struct RowSpace {
    shape: SpaceShape,
    spins: Vec<usize>,
    j: FockCutoff,
}

impl RowSpace {
    fn new(n: usize, j: FockCutoff) -> Self {
        let mut dims = vec![j.dim(), 2];
        dims.extend(std::iter::repeat_n(2, n));
        RowSpace {
            shape: SpaceShape::new(&dims),
            spins: (2..n + 2).collect(),
            j,
        }
    }
    fn ab(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        embed(x, 0, 1, &self.shape)
    }
    fn a_site(&self, x: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        embed(x, 0, n + 2, &self.shape)
    }
    fn b_site(&self, x: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
        embed(x, 1, n + 2, &self.shape)
    }
    fn a_only(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        embed1(x, 0, &self.shape)
    }
    fn b_only(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        embed1(x, 1, &self.shape)
    }
    /// `X (x) Id_{V^N}` for a map on the auxiliary factors.
    fn lift(&self, x: &ComplexMatrix) -> ComplexMatrix {
        kron(x, &ComplexMatrix::identity(1 << self.spins.len()))
    }
    fn keep(&self) -> usize {
        self.j.dim() - (2 * self.spins.len() + 2) - 2
    }
}

/// Monodromy exchange relations and row fusion on `N` sites.
pub fn check_row_fusion_and_monodromy(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let n = p.n_sites();
    let (q, r, xi, xt) = (p.q, p.r, p.xi, p.xitilde);
    let j = w_cutoff(n, o.extra_levels);
    let sp = RowSpace::new(n, j);
    let mut rng = o.rng(4);
    let pairs: Vec<(C64, C64)> = (0..o.samples.clamp(1, 3))
        .map(|_| (rand_z(&mut rng, 0.5, 1.2), rand_z(&mut rng, 0.5, 1.2)))
        .collect();
    let tol = o.exact();
    let keep = sp.keep();
    let mut out = Vec::new();

    // monodromies as tracked products of their embedded factors
    let mw_a = |y: C64, r: C64| -> Result<Tracked> {
        let mut f = Vec::new();
        for (k, &t) in p.t.iter().enumerate() {
            f.push(sp.a_site(&l_matrix(t * y, r, q, j), k)?);
        }
        f.push(sp.a_only(&kw_dense(y, r, xi, q, j)?)?);
        for (k, &t) in p.t.iter().enumerate().rev() {
            f.push(sp.a_site(&l_matrix(y / t, r, q, j), k)?);
        }
        Ok(tp(&f.iter().collect::<Vec<_>>()))
    };
    let mv_b = |z: C64| -> Result<Tracked> {
        let mut f = Vec::new();
        for (k, &t) in p.t.iter().enumerate() {
            f.push(sp.b_site(&r_matrix(t * z, q), k)?);
        }
        f.push(sp.b_only(&kv(z, xi))?);
        for (k, &t) in p.t.iter().enumerate().rev() {
            f.push(sp.b_site(&r_matrix(z / t, q), k)?);
        }
        Ok(tp(&f.iter().collect::<Vec<_>>()))
    };
    let on_ab = |x: &ComplexMatrix| -> Result<Tracked> { Ok(Tracked::of(&sp.ab(x)?)) };

    out.push(run("monodromy:exchange-W-first", &d, tol, || {
        let mut worst = 0f64;
        for &(y, z) in &pairs {
            let lyz = on_ab(&l_matrix(y * z, r, q, j))?;
            let lhs = chain(&[&mw_a(y, r)?, &lyz, &mv_b(z)?]);
            let mut f = Vec::new();
            for (k, &t) in p.t.iter().enumerate() {
                f.push(sp.a_site(&l_matrix(t * y, r, q, j), k)?);
                f.push(sp.b_site(&r_matrix(t * z, q), k)?);
            }
            f.push(sp.a_only(&kw_dense(y, r, xi, q, j)?)?);
            f.push(sp.ab(&l_matrix(y * z, r, q, j))?);
            f.push(sp.b_only(&kv(z, xi))?);
            for (k, &t) in p.t.iter().enumerate().rev() {
                f.push(sp.a_site(&l_matrix(y / t, r, q, j), k)?);
                f.push(sp.b_site(&r_matrix(z / t, q), k)?);
            }
            let rhs = tp(&f.iter().collect::<Vec<_>>());
            worst = worst.max(interior_err(&lhs, &rhs, &sp.shape, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("monodromy:exchange-V-first", &d, tol, || {
        let mut worst = 0f64;
        for &(y, z) in &pairs {
            let lyz = on_ab(&l_matrix(y * z, r, q, j))?;
            let lhs = chain(&[&mv_b(z)?, &lyz, &mw_a(y, r)?]);
            let mut f = Vec::new();
            for (k, &t) in p.t.iter().enumerate() {
                f.push(sp.b_site(&r_matrix(t * z, q), k)?);
                f.push(sp.a_site(&l_matrix(t * y, r, q, j), k)?);
            }
            f.push(sp.b_only(&kv(z, xi))?);
            f.push(sp.ab(&l_matrix(y * z, r, q, j))?);
            f.push(sp.a_only(&kw_dense(y, r, xi, q, j)?)?);
            for (k, &t) in p.t.iter().enumerate().rev() {
                f.push(sp.b_site(&r_matrix(z / t, q), k)?);
                f.push(sp.a_site(&l_matrix(y / t, r, q, j), k)?);
            }
            let rhs = tp(&f.iter().collect::<Vec<_>>());
            worst = worst.max(interior_err(&lhs, &rhs, &sp.shape, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("monodromy:reflection", &d, tol, || {
        let mut worst = 0f64;
        for &(y, z) in &pairs {
            let (mw, mv) = (mw_a(y, r)?, mv_b(z)?);
            let la = on_ab(&l_matrix(y / z, r, q, j))?;
            let lb = on_ab(&l_matrix(y * z, r, q, j))?;
            let lhs = chain(&[&la, &mw, &lb, &mv]);
            let rhs = chain(&[&mv, &lb, &mw, &la]);
            worst = worst.max(interior_err(&lhs, &rhs, &sp.shape, 0, keep)?);
        }
        Ok(worst)
    }));

    // K~^V_b L~_ab K~^W_a M^W_a L_ab M^V_b, the double row before fusion
    let double_row = |z: C64| -> Result<Tracked> {
        let z2 = z * z;
        Ok(chain(&[
            &Tracked::of(&sp.b_only(&ktv(z, xt, q))?),
            &on_ab(&l_tilde(z2, r, q, j)?)?,
            &Tracked::of(&sp.a_only(&ktw_dense(z, r, p, j)?)?),
            &mw_a(z, r)?,
            &on_ab(&l_matrix(z2, r, q, j))?,
            &mv_b(z)?,
        ]))
    };
    let w_shape = {
        let mut dims = vec![j.dim()];
        dims.extend(std::iter::repeat_n(2, n));
        SpaceShape::new(&dims)
    };
    let single_row = |z: C64, r: C64| -> Result<Tracked> {
        let mut f = vec![embed1(&ktw_dense(z, r, p, j)?, 0, &w_shape)?];
        for (k, &t) in p.t.iter().enumerate() {
            f.push(embed(&l_matrix(t * z, r, q, j), 0, k + 1, &w_shape)?);
        }
        f.push(embed1(&kw_dense(z, r, xi, q, j)?, 0, &w_shape)?);
        for (k, &t) in p.t.iter().enumerate().rev() {
            f.push(embed(&l_matrix(z / t, r, q, j), 0, k + 1, &w_shape)?);
        }
        Ok(tp(&f.iter().collect::<Vec<_>>()))
    };
    out.push(run("row-fusion:iota", &d, tol, || {
        let mut worst = 0f64;
        for &(z, _) in &pairs {
            let io = Tracked::of(&sp.lift(&iota(r, q, j)));
            let lhs = double_row(z)?.then(&io);
            let s = p_plus(z, p) / (ONE - q * q * z.powu(4));
            let rhs = io.then(&single_row(q * z, q * r)?).scale(s);
            worst = worst.max(interior_err(&lhs, &rhs, &sp.shape, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("row-fusion:tau", &d, tol, || {
        let mut worst = 0f64;
        for &(z, _) in &pairs {
            let ta = Tracked::of(&sp.lift(&tau(r, q, j)));
            let lhs = ta.then(&double_row(z)?);
            let s = p_minus(z, p) / (ONE - q * q * z.powu(4));
            let rhs = single_row(z / q, r / q)?.then(&ta).scale(s);
            worst = worst.max(interior_err(&lhs, &rhs, &w_shape, 0, keep)?);
        }
        Ok(worst)
    }));
    out.push(run("monodromy:r-dependence", &d, tol, || {
        let mut worst = 0f64;
        let dg = Tracked::of(&kron(
            &ComplexMatrix::identity(j.dim()),
            &diag_power(r, ONE, n),
        ));
        for &(z, _) in &pairs {
            let lhs = single_row(z, r)?;
            let rhs = chain(&[&dg, &single_row(z, ONE)?, &dg]);
            worst = worst.max(interior_err(&lhs, &rhs, &w_shape, 0, keep)?);
        }
        Ok(worst)
    }));
    out
}

/// Trace splitting along `W -> W (x) V -> W` for a random banded `theta` supported
/// away from the truncation edge, plus the two bookkeeping cases.
pub fn check_split_trace(
    p: &ChainParams,
    o: &CheckOptions,
    theta: Option<&ComplexMatrix>,
) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let (q, r) = (p.q, p.r);
    let j = w_cutoff(0, o.extra_levels);
    let n = j.dim();
    let mut rng = o.rng(5);
    let random = ComplexMatrix::from_fn(2 * n, 2 * n, |a, b| {
        let (ka, kb) = (a / 2, b / 2);
        if ka.abs_diff(kb) <= 2 && ka + 4 < n && kb + 4 < n {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            ZERO
        }
    });
    let theta = theta.cloned().unwrap_or(random);
    let split = |th: &ComplexMatrix| -> Result<(C64, C64, C64)> {
        let ip = iota_retraction(r, q, j)?;
        let a = ComplexMatrix::product(&[&ip, th, &iota(r, q, j)]).trace();
        let c = ComplexMatrix::product(&[&tau(r, q, j), th, &tau_section(r, q, j)]).trace();
        Ok((th.trace(), a, c))
    };
    let tol = o.tol.unwrap_or(1e-12);
    let main = run("split-trace:banded", &d, tol, || {
        let (b, a, c) = split(&theta)?;
        Ok((b - a - c).norm() / b.norm().max(1.0))
    });
    let ident = run("split-trace:identity", &d, tol, || {
        let (b, a, c) = split(&ComplexMatrix::identity(2 * n))?;
        let want = C64::new(n as f64, 0.0);
        Ok([(b - a - c).norm(), (a - want).norm(), (c - want).norm()]
            .into_iter()
            .fold(0.0, f64::max))
    })
    .note("truncated W: both halves contribute the cutoff J");
    let proj = run("split-trace:iota-retraction", &d, tol, || {
        let ii = iota(r, q, j).matmul(&iota_retraction(r, q, j)?);
        let (_, _, c) = split(&ii)?;
        Ok(c.norm())
    });
    vec![main, ident, proj]
}

fn clear(z: C64, p: &ChainParams) -> bool {
    !in_exclusion_set(z, p) && !in_exclusion_set(p.q * z, p) && !in_exclusion_set(z / p.q, p)
}

fn sample_clear(p: &ChainParams, rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<C64> {
    let mut out = Vec::new();
    while out.len() < count {
        let z = rand_z(rng, lo, hi);
        if clear(z, p) {
            out.push(z);
        }
    }
    out
}

/// `(1 - q^2 z^4) T^V(z) Q(z) = p_+(z) Q(qz) + p_-(z) Q(z/q)`, and the vanishing
/// right side at `z^4 = q^-2`.
pub fn check_tq(p: &ChainParams, o: &CheckOptions, zs: Option<&[C64]>) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let q = p.q;
    let mut rng = o.rng(6);
    let zs: Vec<C64> = match zs {
        Some(z) => z.to_vec(),
        None => sample_clear(p, &mut rng, o.samples.max(1), 0.5, 1.3),
    };
    let tq = run("tq:relation", &d, o.default_tol(), || {
        let mut worst = 0f64;
        for &z in &zs {
            let lhs = transfer_v(z, p)?
                .matmul(&q_operator(z, p)?)
                .scale(ONE - q * q * z.powu(4));
            let rhs = &q_operator(q * z, p)?.scale(p_plus(z, p))
                + &q_operator(z / q, p)?.scale(p_minus(z, p));
            worst = worst.max(rel_err(&lhs, &rhs)?);
        }
        Ok(worst)
    });
    let fixed = run("tq:fixed-point", &d, o.default_tol(), || {
        let base = q.inv().sqrt();
        let z = [base, base * C64::i(), -base, -base * C64::i()]
            .into_iter()
            .find(|&z| clear(z, p))
            .ok_or_else(|| Error::Excluded("all fourth roots of q^-2".into()))?;
        let a = q_operator(q * z, p)?.scale(p_plus(z, p));
        let b = q_operator(z / q, p)?.scale(p_minus(z, p));
        Ok((&a + &b).frobenius() / a.frobenius().max(b.frobenius()))
    });
    vec![tq, fixed]
}

/// Commutativity of the transfer matrices and the Q-operator.
pub fn check_commutators(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let mut rng = o.rng(7);
    let n = p.n_sites();
    let pairs: Vec<(C64, C64)> = (0..o.samples.max(1))
        .map(|_| {
            let v = sample_clear(p, &mut rng, 2, 0.5, 1.3);
            (v[0], v[1])
        })
        .collect();
    let tol = o.tol.unwrap_or(1e-9);
    let tvtv = run("commutator:TV-TV", &d, tol, || {
        pairs.iter().try_fold(0f64, |w, &(y, z)| {
            Ok(w.max(comm_rel(&transfer_v(y, p)?, &transfer_v(z, p)?)))
        })
    });
    let qtv = run("commutator:Q-TV", &d, tol, || {
        pairs.iter().try_fold(0f64, |w, &(y, z)| {
            Ok(w.max(comm_rel(&q_operator(y, p)?, &transfer_v(z, p)?)))
        })
    });
    let qq = run("commutator:Q-Q", &d, tol, || {
        pairs.iter().try_fold(0f64, |w, &(y, z)| {
            Ok(w.max(comm_rel(&q_operator(y, p)?, &q_operator(z, p)?)))
        })
    })
    .conjecture();
    let twist = run("commutator:Q-spin-twist", &d, tol, || {
        let u = rand_z(&mut o.rng(8), 0.5, 2.0);
        pairs.iter().try_fold(0f64, |w, &(y, _)| {
            Ok(w.max(comm_rel(&q_operator(y, p)?, &spin_twist(u, n))))
        })
    });
    vec![tvtv, qtv, qq, twist]
}

/// `T^V(1/(qz)) = (q z^2)^{-2(N+1)} T^V(z)` and `Q(1/(qz)) = (q z^2)^{-2N} Q(z)`.
pub fn check_crossing(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let q = p.q;
    let n = p.n_sites() as i64;
    let mut rng = o.rng(9);
    let s = q.norm().powf(-0.5);
    let mut zs = Vec::new();
    while zs.len() < o.samples.max(2) {
        let z = rand_z(&mut rng, 0.8 * s, 1.2 * s);
        if !in_exclusion_set(z, p) && !in_exclusion_set((q * z).inv(), p) {
            zs.push(z);
        }
    }
    let tv = run("crossing:TV", &d, o.default_tol(), || {
        zs.iter().try_fold(0f64, |w, &z| {
            let f = powi(q * z * z, -2 * (n + 1));
            Ok(w.max(rel_err(
                &transfer_v((q * z).inv(), p)?,
                &transfer_v(z, p)?.scale(f),
            )?))
        })
    });
    let qc = run("crossing:Q", &d, o.default_tol(), || {
        zs.iter().try_fold(0f64, |w, &z| {
            let f = powi(q * z * z, -2 * n);
            Ok(w.max(rel_err(
                &q_operator((q * z).inv(), p)?,
                &q_operator(z, p)?.scale(f),
            )?))
        })
    })
    .conjecture()
    .note("relies on polynomiality of all Q entries");
    vec![tv, qc]
}

/// Nodes on a circle in `Z = z^2`, all clear of the exclusion set.
fn circle_nodes(p: &ChainParams, count: usize, radius: f64, offset: f64) -> Vec<C64> {
    let mut shift = offset;
    loop {
        let zs: Vec<C64> = (0..count)
            .map(|k| {
                C64::from_polar(
                    radius.sqrt(),
                    0.5 * (shift + std::f64::consts::TAU * k as f64 / count as f64),
                )
            })
            .collect();
        if zs.iter().all(|&z| !in_exclusion_set(z, p)) {
            return zs;
        }
        shift += 0.1;
    }
}

/// Interpolation error at held-out nodes for the selected entries of `f(z)`,
/// as a polynomial in `z^2` of degree `deg`.
fn poly_deviation(
    zs: &[C64],
    held: &[C64],
    deg: usize,
    f: impl Fn(C64) -> Result<ComplexMatrix>,
    entries: &[(usize, usize)],
) -> Result<f64> {
    let vals: Vec<ComplexMatrix> = zs.iter().map(|&z| f(z)).collect::<Result<_>>()?;
    let test: Vec<ComplexMatrix> = held.iter().map(|&z| f(z)).collect::<Result<_>>()?;
    let nodes: Vec<C64> = zs.iter().map(|z| z * z).collect();
    let mut worst = 0f64;
    for &(a, b) in entries {
        let v: Vec<C64> = vals.iter().map(|m| m[(a, b)]).collect();
        let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        let poly = Poly::fit(&nodes, &v, deg)?;
        for (z, m) in held.iter().zip(&test) {
            worst = worst.max((poly.eval(z * z) - m[(a, b)]).norm() / scale);
        }
    }
    Ok(worst)
}

/// Q entries are polynomials in `z^2`; proven for diagonal entries.
pub fn check_polynomiality(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let n = p.n_sites();
    let dim = 1 << n;
    let deg = 2 * n + 1;
    let zs = circle_nodes(p, deg + 1, 1.0, 0.3);
    let held = circle_nodes(p, 3, 0.8, 1.1);
    let diag: Vec<(usize, usize)> = (0..dim).map(|i| (i, i)).collect();
    let off: Vec<(usize, usize)> = (0..dim)
        .flat_map(|a| (0..dim).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && (a as u32).count_ones() == (b as u32).count_ones())
        .collect();
    let tol = o.tol.unwrap_or(1e-8);
    let dres = run("polynomiality:diagonal", &d, tol, || {
        poly_deviation(&zs, &held, deg, |z| q_operator(z, p), &diag)
    });
    let mut ores = run("polynomiality:off-diagonal", &d, tol, || {
        poly_deviation(&zs, &held, deg, |z| q_operator(z, p), &off)
    })
    .conjecture();
    if off.is_empty() {
        ores = ores.note("no off-diagonal entries in a spin sector");
    }
    vec![dres, ores]
}

/// Two-site closed forms for `T^W` entries.
pub fn check_n2_closed_forms(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    if p.n_sites() != 2 {
        let e = Error::DimensionMismatch("two-site closed forms need N = 2".into());
        return vec![CheckResult::failed("n2:closed-forms", &e, &d)];
    }
    let (q, xi, xt) = (p.q, p.xi, p.xitilde);
    let (t1, t2) = (p.t[0], p.t[1]);
    let den = (ONE - q * q * xi * xt) * (ONE - xi * xt);
    let offdiag = |z: C64, t1: C64, t2: C64| {
        q * z * z * (ONE - q * q) * (t1 - xt / t1) * (t2 - xi / t2) / den
    };
    let diff = |z: C64| {
        let s = |t: C64| t * t + (t * t).inv();
        q * q
            * z
            * z
            * ((s(t1) - s(t2)) / (ONE - q * q * xi * xt) - (q - q.inv()).powu(2) * (xi - xt) / den)
    };
    let mut rng = o.rng(10);
    let zs = sample_clear(p, &mut rng, 4, 0.5, 1.3);
    let tol = o.exact();
    let tw: Result<Vec<ComplexMatrix>> = zs.iter().map(|&z| Ok(transfer_w(z, p)?.matrix)).collect();
    let rel = |a: C64, b: C64| (a - b).norm() / a.norm().max(b.norm()).max(1e-300);
    let mut out = Vec::new();
    match tw {
        Err(e) => out.push(CheckResult::failed("n2:closed-forms", &e, &d)),
        Ok(tw) => {
            let worst = |f: &dyn Fn(C64, &ComplexMatrix) -> f64| {
                zs.iter()
                    .zip(&tw)
                    .map(|(&z, m)| f(z, m))
                    .fold(0.0, f64::max)
            };
            let coef = offdiag(ONE, t1, t2);
            out.push(
                CheckResult::new(
                    "n2:entry-01-10",
                    worst(&|z, m| rel(m[(2, 1)], offdiag(z, t1, t2))),
                    tol,
                    &d,
                )
                .note(format!("z^2 coefficient {:.17e}{:+.17e}i", coef.re, coef.im)),
            );
            out.push(
                CheckResult::new(
                    "n2:entry-10-01",
                    worst(&|z, m| rel(m[(1, 2)], offdiag(z, t1.inv(), t2.inv()))),
                    tol,
                    &d,
                )
                .note("closed form with inverted inhomogeneities"),
            );
            out.push(CheckResult::new(
                "n2:diagonal-difference",
                worst(&|z, m| rel(m[(1, 1)] - m[(2, 2)], diff(z))),
                tol,
                &d,
            ));
            let ratios = |col: (usize, usize)| -> f64 {
                let r: Vec<C64> = tw
                    .iter()
                    .map(|m| (m[(1, 1)] - m[(2, 2)]) / m[col])
                    .collect();
                r.iter().map(|&x| rel(x, r[0])).fold(0.0, f64::max)
            };
            out.push(CheckResult::new(
                "n2:ratio-constant",
                ratios((2, 1)).max(ratios((1, 2))),
                tol,
                &d,
            ));
        }
    }
    out
}

/// Closed chain: TQ relation, commutativity, degree bound, trace at zero and
/// invertibility.
pub fn check_closed_chain(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    if let Err(e) = p.validate_closed() {
        return vec![CheckResult::failed("closed:twist", &e, &d)];
    }
    let q = p.q;
    let n = p.n_sites();
    let mut rng = o.rng(11);
    let zs: Vec<C64> = (0..o.samples.max(2))
        .map(|_| rand_z(&mut rng, 0.5, 1.3))
        .collect();
    let mut out = Vec::new();
    out.push(run("closed:tq", &d, o.tol.unwrap_or(1e-9), || {
        zs.iter().try_fold(0f64, |w, &z| {
            let lhs = closed_transfer_v(z, p)?.matmul(&closed_q(z, p)?);
            let rhs = &closed_q(q * z, p)?.scale(closed_p_plus(z, p))
                + &closed_q(z / q, p)?.scale(closed_p_minus(z, p));
            Ok(w.max(rel_err(&lhs, &rhs)?))
        })
    }));
    out.push(run(
        "closed:commutator-Q-TV",
        &d,
        o.tol.unwrap_or(1e-10),
        || {
            zs.windows(2).try_fold(0f64, |w, v| {
                Ok(w.max(comm_rel(&closed_q(v[0], p)?, &closed_transfer_v(v[1], p)?)))
            })
        },
    ));
    out.push(run(
        "closed:commutator-Q-Q",
        &d,
        o.tol.unwrap_or(1e-10),
        || {
            zs.windows(2).try_fold(0f64, |w, v| {
                Ok(w.max(comm_rel(&closed_q(v[0], p)?, &closed_q(v[1], p)?)))
            })
        },
    ));
    out.push(
        run("closed:degree", &d, o.tol.unwrap_or(1e-8), || {
            let nodes: Vec<C64> = (0..n + 1)
                .map(|k| {
                    C64::from_polar(1.0, 0.2 + std::f64::consts::PI * k as f64 / (n + 1) as f64)
                })
                .collect();
            let held: Vec<C64> = (0..3)
                .map(|k| C64::from_polar(0.85, 1.0 + k as f64))
                .collect();
            let all: Vec<(usize, usize)> = (0..1 << n)
                .flat_map(|a| (0..1 << n).map(move |b| (a, b)))
                .collect();
            poly_deviation(
                &nodes,
                &held,
                n,
                |z| Ok(closed_transfer_w(z, p)?.matrix),
                &all,
            )
        })
        .note("T^W entries of degree <= N in z^2, so Q entries have degree <= 2N in z"),
    );
    out.push(run(
        "closed:trace-at-zero",
        &d,
        o.tol.unwrap_or(1e-12),
        || {
            let t = closed_transfer_w(ZERO, p)?.matrix;
            let sig = total_spin(n);
            let want = ComplexMatrix::from_fn(1 << n, 1 << n, |a, b| {
                if a == b {
                    (ONE - p.zeta * powi(q, sig[(a, a)].re as i64)).inv()
                } else {
                    ZERO
                }
            });
            rel_err(&t, &want)
        },
    ));
    out.push(
        run("closed:invertible", &d, 1e12, || {
            let t = closed_transfer_w(zs[0], p)?.matrix.to_nalgebra();
            let sv = t.singular_values();
            let (mx, mn) = (sv.max(), sv.min());
            Ok(if mn > 0.0 { mx / mn } else { f64::INFINITY })
        })
        .note("residual is the condition number"),
    );
    out
}

/// `T^W` and closed `T^W` change by less than the tolerance when the number of
/// Fock levels grows by 5; W-space identities still hold at a cutoff 5 higher.
pub fn check_truncation_stability(p: &ChainParams, o: &CheckOptions) -> Vec<CheckResult> {
    let d = params_digest(p, o.seed);
    let mut rng = o.rng(12);
    let zs = sample_clear(p, &mut rng, 3, 0.5, 1.3);
    let tol = o.tol.unwrap_or(p.tol.max(1e-12));
    let open = run("truncation:open-trace", &d, tol, || {
        zs.iter().try_fold(0f64, |w, &z| {
            let r = transfer_w(z, p)?;
            Ok(w.max(rel_err(
                &r.matrix,
                &transfer_w_truncated(z, p, r.terms + 5)?,
            )?))
        })
    });
    let closed = run("truncation:closed-trace", &d, tol, || {
        p.validate_closed()?;
        zs.iter().try_fold(0f64, |w, &z| {
            let r = closed_transfer_w(z, p)?;
            Ok(w.max(rel_err(
                &r.matrix,
                &closed_transfer_w_truncated(z, p, r.terms + 5)?,
            )?))
        })
    });
    let more = CheckOptions {
        extra_levels: o.extra_levels + 5,
        samples: 2,
        ..*o
    };
    let mut w_checks = check_fusion(p, &more);
    if p.n_sites() <= 2 {
        w_checks.extend(check_row_fusion_and_monodromy(p, &more));
    }
    let worst = w_checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let failing: Vec<&str> = w_checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    let wspace = CheckResult::new("truncation:w-space-identities", worst, o.exact(), &d).note(
        if failing.is_empty() {
            "cutoff raised by 5".to_string()
        } else {
            failing.join(",")
        },
    );
    vec![open, closed, wspace]
}
