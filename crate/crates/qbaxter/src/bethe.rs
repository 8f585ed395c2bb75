//! Spectrum extraction and Bethe roots.
//!
//! The commuting family is diagonalized sector by sector. Eigenvalues of the
//! Q-operator are fitted as polynomials in `Z = z^2` and factorized; roots are
//! checked against the Bethe equations and against the algebraic Bethe ansatz
//! built directly from the blocks of the double-row monodromy.

use crate::chain::{
    closed_transfer_v, closed_transfer_w, monodromy_v, q_operator, transfer_v,
    in_exclusion_set, ChainParams, SpinSector,
};
use crate::error::{Error, Result};
use crate::lattice_ops::{kv, ktv};
use crate::poly::Poly;
use crate::tensor_core::{powi, vec_norm, ComplexMatrix, C64, ONE, ZERO};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SpectrumRecord {
    pub sector: SpinSector,
    /// Unit vector on the full `2^N` space.
    pub eigenvector: Vec<C64>,
    pub tv_samples: Vec<(C64, C64)>,
    /// Largest `|T^V v - lambda v|` over the samples.
    pub tv_residual: f64,
    /// Eigenvalue samples of the fitted operator at the fitting nodes.
    pub q_samples: Vec<(C64, C64)>,
    /// Open chain: the Q eigenvalue in `Z = z^2`, degree `<= 2N`. Closed chain:
    /// the `T^W` eigenvalue in `Z`, degree `<= N`.
    pub q_poly: Poly,
    /// Relative deviation of `q_poly` at the held-out nodes.
    pub q_fit_residual: f64,
    /// Coefficient of the highest power that survives in this sector.
    pub q_const: C64,
}

#[derive(Clone, Debug)]
pub struct BetheRootSet {
    pub m_roots: usize,
    pub f: C64,
    /// `y_j`, one per orbit.
    pub roots: Vec<C64>,
    /// `y_j^2`.
    pub roots_sq: Vec<C64>,
    /// Matched orbits `(Y, q^-2 / Y)`; empty for the closed chain.
    pub pairing_certificate: Vec<(C64, C64)>,
    pub pairing_residual: f64,
    /// `|prod Y / q^{-2M} - 1|` over all `2M` polynomial roots; zero for the closed chain.
    pub product_residual: f64,
    /// Size of the coefficients that must vanish in this sector, relative to the
    /// polynomial.
    pub truncation_residual: f64,
    /// Some root sits near a fixed point `Y = +-q^-1` of the involution.
    pub degenerate: bool,
    pub residuals: Vec<C64>,
}

/// Eigenpairs inside one sector of `a`, resolved with `b` if `a` is degenerate.
fn sector_eigenvectors(
    sector: &SpinSector,
    a: &ComplexMatrix,
    b: impl Fn(usize) -> Result<ComplexMatrix>,
    gap_tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<C64>>> {
    let idx = &sector.indices;
    let base = a.select(idx, idx);
    let mut m = base.clone();
    for attempt in 0..=3 {
        if attempt > 0 {
            let extra = b(attempt)?.select(idx, idx);
            let mu = C64::from_polar(rng.gen_range(0.05..0.2), rng.gen_range(0.0..std::f64::consts::TAU))
                * (base.frobenius() / extra.frobenius().max(1e-300));
            m = &base + &extra.scale(mu);
        }
        let nm = m.to_nalgebra();
        let eig = nm
            .clone()
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::NonConvergence("sector eigenvalues".into()))?;
        let scale = eig.iter().map(|l| l.norm()).fold(0.0, f64::max).max(1e-300);
        let mut min_gap = f64::INFINITY;
        for i in 0..eig.len() {
            for j in 0..i {
                min_gap = min_gap.min((eig[i] - eig[j]).norm() / scale);
            }
        }
        if min_gap < gap_tol {
            continue;
        }
        return eig.iter().map(|&l| null_vector(&nm, l)).collect();
    }
    Err(Error::Degeneracy(format!(
        "sector M={} stays degenerate after 3 perturbations",
        sector.m_down
    )))
}

fn null_vector(m: &DMatrix<C64>, l: C64) -> Result<Vec<C64>> {
    let n = m.nrows();
    let shifted = m - DMatrix::<C64>::identity(n, n) * l;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Singular("svd".into()))?;
    let k = (0..n)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(0);
    let v: Vec<C64> = (0..n).map(|i| vt[(k, i)].conj()).collect();
    let nv = vec_norm(&v);
    Ok(v.iter().map(|x| x / nv).collect())
}

fn rayleigh(m: &ComplexMatrix, v: &[C64]) -> C64 {
    let mv = m.mul_vec(v);
    let num: C64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
    let den: C64 = v.iter().map(|a| a.conj() * a).sum();
    num / den
}

/// Nodes on the circle `|Z| = radius`, rotated until clear of the exclusion set.
fn fit_nodes(p: &ChainParams, count: usize, radius: f64) -> Vec<C64> {
    let mut shift = 0.37;
    loop {
        let zs: Vec<C64> = (0..count)
            .map(|k| {
                C64::from_polar(radius.sqrt(), 0.5 * (shift + std::f64::consts::TAU * k as f64 / count as f64))
            })
            .collect();
        let clear = zs.iter().all(|&z| {
            !in_exclusion_set(z, p)
                && zs.iter().all(|&w| w == z || (w * w - z * z).norm() > 1e-3 * radius)
        });
        if clear {
            return zs;
        }
        shift += 0.05;
    }
}

struct Family<'a> {
    tv: &'a dyn Fn(C64) -> Result<ComplexMatrix>,
    /// Operator fitted as a polynomial in `Z`.
    fitted: &'a dyn Fn(C64) -> Result<ComplexMatrix>,
    deg: usize,
    radius: f64,
}

fn spectrum(
    p: &ChainParams,
    fam: Family,
    z_probe: C64,
    z_samples: &[C64],
) -> Result<Vec<SpectrumRecord>> {
    let n = p.n_sites();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let a = (fam.tv)(z_probe)?;
    let nodes = fit_nodes(p, fam.deg + 4, fam.radius);
    let fitted: Vec<ComplexMatrix> = nodes.iter().map(|&z| (fam.fitted)(z)).collect::<Result<_>>()?;
    let tvs: Vec<ComplexMatrix> = z_samples.iter().map(|&z| (fam.tv)(z)).collect::<Result<_>>()?;
    let probes = [z_probe * C64::from_polar(1.1, 0.3), z_probe * C64::from_polar(0.9, -0.7), z_probe * C64::from_polar(1.2, 1.9)];
    let mut out = Vec::new();
    for sector in SpinSector::all(n) {
        let vecs = sector_eigenvectors(&sector, &a, |k| (fam.fitted)(probes[k - 1]), 1e3 * p.tol, &mut rng)?;
        for local in vecs {
            let mut v = vec![ZERO; 1 << n];
            for (&i, &x) in sector.indices.iter().zip(&local) {
                v[i] = x;
            }
            let mut tv_samples = Vec::new();
            let mut tv_residual = 0f64;
            for (&z, m) in z_samples.iter().zip(&tvs) {
                let l = rayleigh(m, &v);
                let r: Vec<C64> = m.mul_vec(&v).iter().zip(&v).map(|(a, b)| a - l * b).collect();
                tv_residual = tv_residual.max(vec_norm(&r) / m.frobenius().max(1e-300));
                tv_samples.push((z, l));
            }
            let q_samples: Vec<(C64, C64)> = nodes.iter().zip(&fitted).map(|(&z, m)| (z, rayleigh(m, &v))).collect();
            let zs: Vec<C64> = q_samples.iter().map(|(z, _)| z * z).collect();
            let vs: Vec<C64> = q_samples.iter().map(|&(_, v)| v).collect();
            let k = fam.deg + 1;
            let q_poly = Poly::fit(&zs[..k], &vs[..k], fam.deg)?;
            let scale = vs.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
            let q_fit_residual = zs[k..]
                .iter()
                .zip(&vs[k..])
                .map(|(&z, &v)| (q_poly.eval(z) - v).norm() / scale)
                .fold(0.0, f64::max);
            out.push(SpectrumRecord {
                sector: sector.clone(),
                eigenvector: v,
                tv_samples,
                tv_residual,
                q_samples,
                q_const: ZERO,
                q_poly,
                q_fit_residual,
            });
        }
    }
    Ok(out)
}

/// Joint eigenvectors of `T^V` and `Q` with eigenvalue samples and the fitted Q
/// eigenvalue polynomial.
pub fn joint_spectrum(p: &ChainParams, z_probe: C64, z_samples: &[C64]) -> Result<Vec<SpectrumRecord>> {
    let n = p.n_sites();
    let tv = |z| transfer_v(z, p);
    let qo = |z| q_operator(z, p);
    let mut recs = spectrum(
        p,
        Family { tv: &tv, fitted: &qo, deg: 2 * n, radius: p.q.norm().recip() },
        z_probe,
        z_samples,
    )?;
    for r in &mut recs {
        r.q_const = r.q_poly.0[n + r.sector.m_down];
    }
    Ok(recs)
}

/// Joint eigenvectors of the closed `T^V` and `Q`; `q_poly` is the closed `T^W`
/// eigenvalue.
pub fn closed_joint_spectrum(p: &ChainParams, z_probe: C64, z_samples: &[C64]) -> Result<Vec<SpectrumRecord>> {
    p.validate_closed()?;
    let tv = |z| closed_transfer_v(z, p);
    let tw = |z| Ok(closed_transfer_w(z, p)?.matrix);
    let mut recs = spectrum(p, Family { tv: &tv, fitted: &tw, deg: p.n_sites(), radius: 1.0 }, z_probe, z_samples)?;
    for r in &mut recs {
        r.q_const = r.q_poly.0[r.sector.m_down];
    }
    Ok(recs)
}

/// The ratio `|sum| / |terms|` of coefficients outside `keep`, each weighted by
/// `radius^k`.
fn outside_weight(p: &Poly, keep: std::ops::RangeInclusive<usize>, radius: f64) -> f64 {
    let w: Vec<f64> = p.0.iter().enumerate().map(|(k, c)| c.norm() * radius.powi(k as i32)).collect();
    let total = w.iter().cloned().fold(0.0, f64::max).max(1e-300);
    w.iter()
        .enumerate()
        .filter(|(k, _)| !keep.contains(k))
        .map(|(_, &x)| x)
        .fold(0.0, f64::max)
        / total
}

/// Pairs `roots` into orbits `{Y, q^-2/Y}`: greedy first, exhaustive optimal
/// matching when greedy leaves a bad pair.
fn pair_orbits(roots: &[C64], q: C64) -> (Vec<(C64, C64)>, f64) {
    let psi = |y: C64| (q * q * y).inv();
    let cost = |a: C64, b: C64| (b - psi(a)).norm() / psi(a).norm();
    let mut left: Vec<C64> = roots.to_vec();
    let mut greedy = Vec::new();
    let mut worst = 0f64;
    while let Some(a) = left.pop() {
        if left.is_empty() {
            return (greedy, f64::INFINITY);
        }
        let (i, c) = left
            .iter()
            .enumerate()
            .map(|(i, &b)| (i, cost(a, b)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        worst = worst.max(c);
        greedy.push((a, left.remove(i)));
    }
    if worst < 1e-6 {
        return (greedy, worst);
    }
    // exhaustive: minimize the largest pair cost
    fn best(rest: &[C64], cost: &dyn Fn(C64, C64) -> f64) -> (Vec<(C64, C64)>, f64) {
        if rest.is_empty() {
            return (vec![], 0.0);
        }
        let a = rest[0];
        let mut top = (vec![], f64::INFINITY);
        for k in 1..rest.len() {
            let mut sub: Vec<C64> = rest[1..].to_vec();
            let b = sub.remove(k - 1);
            let (mut pairs, w) = best(&sub, cost);
            let w = w.max(cost(a, b));
            if w < top.1 {
                pairs.push((a, b));
                top = (pairs, w);
            }
        }
        top
    }
    let (pairs, w) = best(roots, &cost);
    if w < worst {
        (pairs, w)
    } else {
        (greedy, worst)
    }
}

/// Factorizes the Q eigenvalue as `f Z^{N-M} prod_j (Z - Y_j)(Z - q^-2/Y_j)`.
pub fn factorize_q_eigenvalue(rec: &SpectrumRecord, p: &ChainParams) -> Result<BetheRootSet> {
    let n = p.n_sites();
    let m = rec.sector.m_down;
    let q = p.q;
    let radius = q.norm().recip();
    let trunc = outside_weight(&rec.q_poly, n - m..=n + m, radius);
    let core = Poly(rec.q_poly.0[n - m..=n + m].to_vec());
    let f = core.0[2 * m];
    if m == 0 {
        return Ok(BetheRootSet {
            m_roots: 0,
            f,
            roots: vec![],
            roots_sq: vec![],
            pairing_certificate: vec![],
            pairing_residual: 0.0,
            product_residual: 0.0,
            truncation_residual: trunc,
            degenerate: false,
            residuals: vec![],
        });
    }
    let all = core.roots()?;
    if all.len() != 2 * m {
        return Err(Error::Pairing(format!("{} roots for M = {m}", all.len())));
    }
    let prod: C64 = all.iter().product();
    let product_residual = (prod * powi(q, 2 * m as i64) - ONE).norm();
    let (pairs, pres) = pair_orbits(&all, q);
    if pres > 1e-6 {
        return Err(Error::Pairing(format!("orbit mismatch {pres:.2e}")));
    }
    let fixed = q.inv();
    let degenerate = all
        .iter()
        .any(|&y| (y - fixed).norm().min((y + fixed).norm()) < 1e-4 * fixed.norm());
    let roots_sq: Vec<C64> = pairs
        .iter()
        .map(|&(a, b)| if a.norm() <= b.norm() { a } else { b })
        .collect();
    let residuals = bethe_residual(&roots_sq, p)?;
    Ok(BetheRootSet {
        m_roots: m,
        f,
        roots: roots_sq.iter().map(|y| y.sqrt()).collect(),
        roots_sq,
        pairing_certificate: pairs,
        pairing_residual: pres,
        product_residual,
        truncation_residual: trunc,
        degenerate,
        residuals,
    })
}

/// Factorizes the closed `T^W` eigenvalue as `f prod_j (Z - Y_j)`.
pub fn factorize_closed_eigenvalue(rec: &SpectrumRecord, p: &ChainParams) -> Result<BetheRootSet> {
    let m = rec.sector.m_down;
    let trunc = outside_weight(&rec.q_poly, 0..=m, 1.0);
    let core = Poly(rec.q_poly.0[..=m].to_vec());
    let roots_sq = if m == 0 { vec![] } else { core.roots()? };
    if roots_sq.len() != m {
        return Err(Error::Pairing(format!("{} roots for M = {m}", roots_sq.len())));
    }
    let residuals = closed_bethe_residual(&roots_sq, p)?;
    Ok(BetheRootSet {
        m_roots: m,
        f: core.0[m],
        roots: roots_sq.iter().map(|y| y.sqrt()).collect(),
        roots_sq,
        pairing_certificate: vec![],
        pairing_residual: 0.0,
        product_residual: 0.0,
        truncation_residual: trunc,
        degenerate: false,
        residuals,
    })
}

/// A linear factor of one side of a Bethe equation with its partial derivatives
/// in `Y_i` and in one other root.
#[derive(Clone, Copy)]
struct Factor {
    v: C64,
    di: C64,
    other: Option<(usize, C64)>,
}

fn fac(v: C64, di: C64) -> Factor {
    Factor { v, di, other: None }
}

/// Both sides of the open Bethe equation for root `i` as factor lists:
///
/// `(1-xi~ Y)(1-xi Y) prod_n (1-q^2 t^2 Y)(1-q^2 t^-2 Y) prod_{j!=i} (1-q^-2 Y/Y_j)(1-Y Y_j)`
///
/// `= q^{2(N-M)} (xi~-q^2 Y)(xi-q^2 Y) prod_n (1-t^2 Y)(1-t^-2 Y) prod_{j!=i} (1-q^2 Y/Y_j)(q^-2-q^2 Y Y_j)`
fn open_sides(ys: &[C64], i: usize, p: &ChainParams) -> (Vec<Factor>, Vec<Factor>) {
    let (q, xi, xt) = (p.q, p.xi, p.xitilde);
    let q2 = q * q;
    let y = ys[i];
    let m = ys.len() as i64;
    let mut l = vec![fac(ONE - xt * y, -xt), fac(ONE - xi * y, -xi)];
    let mut r = vec![
        fac(powi(q, 2 * (p.n_sites() as i64 - m)), ZERO),
        fac(xt - q2 * y, -q2),
        fac(xi - q2 * y, -q2),
    ];
    for &t in &p.t {
        let (a, b) = (t * t, (t * t).inv());
        l.push(fac(ONE - q2 * a * y, -q2 * a));
        l.push(fac(ONE - q2 * b * y, -q2 * b));
        r.push(fac(ONE - a * y, -a));
        r.push(fac(ONE - b * y, -b));
    }
    for (j, &yj) in ys.iter().enumerate() {
        if j == i {
            continue;
        }
        let o = |d: C64| Some((j, d));
        l.push(Factor { v: ONE - y / (q2 * yj), di: -(q2 * yj).inv(), other: o(y / (q2 * yj * yj)) });
        l.push(Factor { v: ONE - y * yj, di: -yj, other: o(-y) });
        r.push(Factor { v: ONE - q2 * y / yj, di: -q2 / yj, other: o(q2 * y / (yj * yj)) });
        r.push(Factor { v: q2.inv() - q2 * y * yj, di: -q2 * yj, other: o(-q2 * y) });
    }
    (l, r)
}

/// Closed chain: `prod_n (1-q^2 Y t^-2) prod_{j!=i} (q^2 - Y/Y_j)
/// = q^N zeta prod_n (1 - Y t^-2) prod_{j!=i} (1 - q^2 Y/Y_j)`.
fn closed_sides(ys: &[C64], i: usize, p: &ChainParams, zeta: C64) -> (Vec<Factor>, Vec<Factor>) {
    let q = p.q;
    let q2 = q * q;
    let y = ys[i];
    let mut l = Vec::new();
    let mut r = vec![fac(powi(q, p.n_sites() as i64) * zeta, ZERO)];
    for &t in &p.t {
        let b = (t * t).inv();
        l.push(fac(ONE - q2 * b * y, -q2 * b));
        r.push(fac(ONE - b * y, -b));
    }
    for (j, &yj) in ys.iter().enumerate() {
        if j == i {
            continue;
        }
        l.push(Factor { v: q2 - y / yj, di: -yj.inv(), other: Some((j, y / (yj * yj))) });
        r.push(Factor { v: ONE - q2 * y / yj, di: -q2 / yj, other: Some((j, q2 * y / (yj * yj))) });
    }
    (l, r)
}

fn product(f: &[Factor]) -> C64 {
    f.iter().map(|x| x.v).product()
}

/// Gradient of a factor product with respect to every root.
fn product_grad(f: &[Factor], i: usize, m: usize) -> Vec<C64> {
    let mut g = vec![ZERO; m];
    for (k, x) in f.iter().enumerate() {
        let rest: C64 = f.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, y)| y.v).product();
        g[i] += rest * x.di;
        if let Some((j, d)) = x.other {
            g[j] += rest * d;
        }
    }
    g
}

fn normalized(l: C64, r: C64) -> C64 {
    let s = l.norm().max(r.norm());
    if s == 0.0 {
        ZERO
    } else {
        (l - r) / s
    }
}

/// Raw sides `(LHS, RHS)` of the open Bethe equation for root `i`.
pub fn bethe_sides(ys: &[C64], i: usize, p: &ChainParams) -> (C64, C64) {
    let (l, r) = open_sides(ys, i, p);
    (product(&l), product(&r))
}

/// The same equation as `p_+(y) Q(qy) + p_-(y) Q(y/q)` with `Q` rebuilt from the
/// roots with `f = 1`.
pub fn bethe_tq_form(ys: &[C64], i: usize, p: &ChainParams) -> C64 {
    let n = p.n_sites();
    let m = ys.len();
    let q = p.q;
    let qz = |z2: C64| {
        ys.iter().fold(powi(z2, (n - m) as i64), |acc, &y| acc * (z2 - y) * (z2 - (q * q * y).inv()))
    };
    let y2 = ys[i];
    let z = y2.sqrt();
    crate::chain::p_plus(z, p) * qz(q * q * y2) + crate::chain::p_minus(z, p) * qz(y2 / (q * q))
}

/// Normalized residuals `(LHS - RHS) / max(|LHS|, |RHS|)` of the open Bethe
/// equations in the variables `Y_j = y_j^2`.
pub fn bethe_residual(ys: &[C64], p: &ChainParams) -> Result<Vec<C64>> {
    check_roots(ys)?;
    Ok((0..ys.len())
        .map(|i| {
            let (l, r) = bethe_sides(ys, i, p);
            normalized(l, r)
        })
        .collect())
}

pub fn closed_bethe_sides(ys: &[C64], i: usize, p: &ChainParams, zeta: C64) -> (C64, C64) {
    let (l, r) = closed_sides(ys, i, p, zeta);
    (product(&l), product(&r))
}

pub fn closed_bethe_residual(ys: &[C64], p: &ChainParams) -> Result<Vec<C64>> {
    check_roots(ys)?;
    Ok((0..ys.len())
        .map(|i| {
            let (l, r) = closed_bethe_sides(ys, i, p, p.zeta);
            normalized(l, r)
        })
        .collect())
}

fn check_roots(ys: &[C64]) -> Result<()> {
    if ys.iter().any(|y| y.norm() < 1e-300) {
        return Err(Error::Domain("Bethe roots must be nonzero".into()));
    }
    Ok(())
}

/// Jacobian of `LHS_i - RHS_i` in the variables `Y_j`.
pub fn bethe_jacobian(ys: &[C64], p: &ChainParams) -> ComplexMatrix {
    let m = ys.len();
    let mut jac = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        let (l, r) = open_sides(ys, i, p);
        let (gl, gr) = (product_grad(&l, i, m), product_grad(&r, i, m));
        for k in 0..m {
            jac[(i, k)] = gl[k] - gr[k];
        }
    }
    jac
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub roots_sq: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton on the open Bethe equations in `Y_j = y_j^2`.
pub fn refine_bethe_newton(seed: &[C64], p: &ChainParams, max_iter: usize) -> Result<NewtonOutcome> {
    let res = |ys: &[C64]| -> Result<f64> {
        Ok(bethe_residual(ys, p)?.iter().map(|r| r.norm()).fold(0.0, f64::max))
    };
    let mut ys = seed.to_vec();
    let mut cur = res(&ys)?;
    let mut it = 0;
    while cur >= 1e-12 && it < max_iter {
        let g: Vec<C64> = (0..ys.len())
            .map(|i| {
                let (l, r) = bethe_sides(&ys, i, p);
                l - r
            })
            .collect();
        let jac = bethe_jacobian(&ys, p);
        let step = jac
            .solve(&ComplexMatrix::from_fn(g.len(), 1, |i, _| g[i]))
            .map_err(|_| Error::Newton("singular Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<C64> = ys.iter().enumerate().map(|(i, &y)| y - step[(i, 0)] * lambda).collect();
            if let Ok(t) = res(&trial) {
                if t.is_finite() && t < cur {
                    ys = trial;
                    cur = t;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::Newton(format!("no descent at residual {cur:.2e}")));
            }
        }
        it += 1;
    }
    if !cur.is_finite() {
        return Err(Error::Newton("diverged".into()));
    }
    Ok(NewtonOutcome { roots_sq: ys, iterations: it, residual: cur })
}

fn rc(x: C64, q: C64) -> (C64, C64, C64) {
    let x2 = x * x;
    (ONE - q * q * x2, q * (ONE - x2), (ONE - q * q) * x)
}

/// The auxiliary-space blocks `(A, B, C, D)` of the double-row monodromy.
pub fn aba_blocks(z: C64, p: &ChainParams) -> Result<(ComplexMatrix, ComplexMatrix, ComplexMatrix, ComplexMatrix)> {
    let m = monodromy_v(z, p)?;
    let d = 1 << p.n_sites();
    Ok((m.block(0, d, 0, d), m.block(0, d, d, 2 * d), m.block(d, 2 * d, 0, d), m.block(d, 2 * d, d, 2 * d)))
}

/// `f(z) = z^2 (1 - q^2) / (q^2 z^4 - 1)`.
pub fn aba_f(z: C64, q: C64) -> Result<C64> {
    let z2 = z * z;
    let den = q * q * z2 * z2 - ONE;
    if den.norm() < 1e-14 {
        return Err(Error::Pole("f has a pole at z^4 = q^-2".into()));
    }
    Ok(z2 * (ONE - q * q) / den)
}

pub fn aba_dtilde(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let (a, _, _, d) = aba_blocks(z, p)?;
    Ok(&d + &a.scale(aba_f(z, p.q)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbaCoefficients {
    pub alpha1: C64,
    pub alpha2: C64,
    pub alpha4: C64,
    pub beta1: C64,
    pub beta2: C64,
    pub beta4: C64,
    pub alpha2_tilde: C64,
    pub beta2_tilde: C64,
    pub beta4_tilde: C64,
    pub phi_plus: C64,
    pub phi_minus: C64,
    pub gamma_plus: C64,
    pub gamma_minus: C64,
    pub delta_plus: C64,
    pub delta_minus: C64,
}

/// `Delta_+(z)` and `Delta_-(z)`, the vacuum eigenvalues of `A` and `D~`.
pub fn aba_deltas(z: C64, p: &ChainParams) -> Result<(C64, C64)> {
    let q = p.q;
    let k = kv(z, p.xi);
    let f = aba_f(z, q)?;
    let mut dp = k[(0, 0)];
    let mut dm = k[(1, 1)] + f * k[(0, 0)];
    for &t in &p.t {
        let (a1, b1, _) = rc(z / t, q);
        let (a2, b2, _) = rc(z * t, q);
        dp *= a1 * a2;
        dm *= b1 * b2;
    }
    Ok((dp, dm))
}

/// `gamma_+ = K~^V(z)_00 - f(z) K~^V(z)_11`, `gamma_- = K~^V(z)_11`.
pub fn aba_gammas(z: C64, p: &ChainParams) -> Result<(C64, C64)> {
    let k = ktv(z, p.xitilde, p.q);
    Ok((k[(0, 0)] - aba_f(z, p.q)? * k[(1, 1)], k[(1, 1)]))
}

pub fn aba_coefficients(z: C64, y: C64, p: &ChainParams) -> Result<AbaCoefficients> {
    let q = p.q;
    let (a_m, b_m, c_m) = rc(y / z, q);
    let (a_p, b_p, c_p) = rc(y * z, q);
    let (a_r, b_r, c_r) = rc(z / y, q);
    for (v, what) in [(b_m, "b(y/z)"), (a_p, "a(yz)"), (b_p, "b(yz)"), (b_r, "b(z/y)")] {
        if v.norm() < 1e-14 {
            return Err(Error::Pole(format!("{what} vanishes")));
        }
    }
    let alpha1 = a_m * b_p / (b_m * a_p);
    let alpha2 = -c_m * b_p / (b_m * a_p);
    let alpha4 = -c_p / a_p;
    let ac = a_p * a_p - c_p * c_p;
    let beta1 = ac * a_r / (a_p * b_p * b_r);
    let beta2 = -ac * c_r / (a_p * b_p * b_r);
    let beta4 = c_p * (c_m * c_r * b_r + b_m * a_r * a_r) / (b_m * a_p * b_r * b_r);
    let (fz, fy) = (aba_f(z, q)?, aba_f(y, q)?);
    let alpha2_tilde = alpha2 - alpha4 * fy;
    let beta2_tilde = beta2 + alpha4 * fz;
    let beta4_tilde = beta4 - beta2 * fy + alpha2_tilde * fz;
    let (gamma_plus, gamma_minus) = aba_gammas(z, p)?;
    let (delta_plus, delta_minus) = aba_deltas(z, p)?;
    Ok(AbaCoefficients {
        alpha1,
        alpha2,
        alpha4,
        beta1,
        beta2,
        beta4,
        alpha2_tilde,
        beta2_tilde,
        beta4_tilde,
        phi_plus: gamma_plus * alpha2_tilde + gamma_minus * beta4_tilde,
        phi_minus: gamma_plus * alpha4 + gamma_minus * beta2_tilde,
        gamma_plus,
        gamma_minus,
        delta_plus,
        delta_minus,
    })
}

/// Closed forms of `phi_+` and `phi_-`.
pub fn aba_phi_explicit(z: C64, y: C64, p: &ChainParams) -> (C64, C64) {
    let q = p.q;
    let q2 = q * q;
    let (y2, z2) = (y * y, z * z);
    let w = (q2 - ONE) * y * z * (ONE - q2 * q2 * z2 * z2) / ((y2 - z2) * (ONE - q2 * y2 * z2));
    let plus = w * (ONE - y2 * y2) / (ONE - q2 * y2 * y2) * (ONE - p.xitilde * y2);
    let minus = w * (p.xitilde / q2 - y2);
    (plus, minus)
}

/// `B(y_1) ... B(y_M) Omega`.
pub fn aba_state(roots: &[C64], p: &ChainParams) -> Result<Vec<C64>> {
    let mut v = vec![ZERO; 1 << p.n_sites()];
    v[0] = ONE;
    for &y in roots.iter().rev() {
        let (_, b, _, _) = aba_blocks(y, p)?;
        v = b.mul_vec(&v);
    }
    Ok(v)
}

pub fn aba_eigenvalue(z: C64, roots: &[C64], p: &ChainParams) -> Result<C64> {
    let (gp, gm) = aba_gammas(z, p)?;
    let (dp, dm) = aba_deltas(z, p)?;
    let mut a = gp * dp;
    let mut d = gm * dm;
    for &y in roots {
        let c = aba_coefficients(z, y, p)?;
        a *= c.alpha1;
        d *= c.beta1;
    }
    Ok(a + d)
}

/// Reference spectral parameter for the `z`-dependent form of the ansatz
/// equations.
pub const ABA_REFERENCE_Z: C64 = C64::new(0.37, 0.61);

/// Per-root residual of the ansatz equations
/// `phi_+(z, y_i) Delta_+(y_i) prod alpha_1(y_i, y_j) + phi_-(z, y_i) Delta_-(y_i) prod beta_1(y_i, y_j)`,
/// normalized by the larger of the two terms.
pub fn aba_bethe_residual(roots: &[C64], p: &ChainParams) -> Result<Vec<C64>> {
    (0..roots.len()).map(|i| aba_bethe_terms(roots, i, p, ABA_REFERENCE_Z).map(|(a, b)| normalized(a, -b))).collect()
}

/// The two terms of the ansatz equation for root `i`.
pub fn aba_bethe_terms(roots: &[C64], i: usize, p: &ChainParams, z: C64) -> Result<(C64, C64)> {
    let yi = roots[i];
    let (php, phm) = aba_phi_explicit(z, yi, p);
    let (dp, dm) = aba_deltas(yi, p)?;
    let (mut a, mut d) = (php * dp, phm * dm);
    for (j, &yj) in roots.iter().enumerate() {
        if j != i {
            let c = aba_coefficients(yi, yj, p)?;
            a *= c.alpha1;
            d *= c.beta1;
        }
    }
    Ok((a, d))
}
