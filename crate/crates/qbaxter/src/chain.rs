//! Global objects on `V^{(x)N}`: double-row monodromies, the transfer matrices
//! `T^V` and `T^W`, the Q-operator, and the closed (periodic, twisted) chain.
//!
//! Spin basis index: site 1 is the most significant bit, `v^1` is bit value 1.
//! The oscillator traces never materialize `W`. For every trace index `j` and
//! basis column the product of L-operators is applied to `w^j (x) e_alpha`
//! inside the Fock window `[j-N, j+N]`, keeping one log-scale per Fock index,
//! so the `q^{+-k^2}` growth of the boundary factors never leaves double range.

use crate::error::{Error, Result};
use crate::lattice_ops::{ktv, kv, kw_dense, l_matrix, r_matrix, BoundaryParams};
use crate::poly::Poly;
use crate::qoscillator::{ktw_entries, kw_entries, FockCutoff, LogValue};
use crate::tensor_core::{
    cr, embed, embed1, partial_trace, powi, ComplexMatrix, SpaceShape, C64, ONE, ZERO,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainParams {
    pub q: C64,
    pub xi: C64,
    pub xitilde: C64,
    pub zeta: C64,
    pub t: Vec<C64>,
    pub r: C64,
    pub cutoff: FockCutoff,
    pub tol: f64,
    pub exclusion_radius: f64,
}

impl ChainParams {
    /// Open-chain parameters with `zeta = 0.5 |q|^N`, `r = 1`, a 120-term trace
    /// budget and a `1e-13` trace tolerance.
    pub fn new(q: C64, xi: C64, xitilde: C64, t: Vec<C64>) -> Result<Self> {
        let n = t.len();
        let p = ChainParams {
            q,
            xi,
            xitilde,
            zeta: cr(0.5 * q.norm().powi(n as i32)),
            t,
            r: ONE,
            cutoff: FockCutoff::new(120)?,
            tol: 1e-13,
            exclusion_radius: 1e-6,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_sites(&self) -> usize {
        self.t.len()
    }

    pub fn boundary(&self) -> BoundaryParams {
        BoundaryParams {
            xi: self.xi,
            xitilde: self.xitilde,
        }
    }

    /// `|xi xi~| |q|^{-2N}`, the asymptotic ratio of consecutive trace terms.
    pub fn rho_open(&self) -> f64 {
        (self.xi * self.xitilde).norm() * self.q.norm().powi(-2 * self.n_sites() as i32)
    }

    pub fn rho_closed(&self) -> f64 {
        self.zeta.norm() * self.q.norm().powi(-(self.n_sites() as i32))
    }

    fn validate_common(&self) -> Result<()> {
        let aq = self.q.norm();
        if !(aq > 0.0 && aq < 1.0) {
            return Err(Error::Domain(format!("|q| = {aq} must lie in (0, 1)")));
        }
        if self.t.contains(&ZERO) {
            return Err(Error::Domain("inhomogeneities must be nonzero".into()));
        }
        if self.r == ZERO {
            return Err(Error::Domain("r must be nonzero".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Open-chain invariants: nonzero boundary parameters and `|xi xi~| < |q|^{2N}`.
    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        BoundaryParams::new(self.xi, self.xitilde)?;
        let rho = self.rho_open();
        if rho >= 1.0 {
            return Err(Error::Domain(format!(
                "|xi xi~| |q|^-2N = {rho:.3} is not below 1; the oscillator trace diverges"
            )));
        }
        Ok(())
    }

    pub fn validate_closed(&self) -> Result<()> {
        self.validate_common()?;
        let rho = self.rho_closed();
        if rho >= 1.0 {
            return Err(Error::Domain(format!(
                "|zeta| |q|^-N = {rho:.3} is not below 1"
            )));
        }
        Ok(())
    }

    /// Checks that the configured cutoff can reach the trace tolerance at the
    /// asymptotic rate.
    pub fn preflight(&self, rho: f64) -> Result<()> {
        let j = self.cutoff.dim() as f64;
        if rho.powf(j) >= self.tol / 10.0 {
            return Err(Error::TailCertificate(format!(
                "cutoff {} too small for ratio {rho:.3} at tolerance {:e}",
                self.cutoff.dim(),
                self.tol
            )));
        }
        Ok(())
    }

    /// Generic parameters: `0.3 <= |q| <= 0.8`, `|xi xi~| = c |q|^{2N}` with
    /// `c` in `[0.1, 0.5]`, inhomogeneities near the unit circle and a twist with
    /// `|zeta| = c' |q|^N`.
    pub fn sample(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase =
            |rng: &mut ChaCha8Rng| C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        let q = phase(&mut rng) * rng.gen_range(0.3..0.8);
        let aq = q.norm();
        let prod = rng.gen_range(0.1..0.5) * aq.powi(2 * n as i32);
        let split = rng.gen_range(-0.5..0.5f64).exp();
        let xi = phase(&mut rng) * prod.sqrt() * split;
        let xitilde = phase(&mut rng) * prod.sqrt() / split;
        let t = (0..n)
            .map(|_| phase(&mut rng) * (1.0 + rng.gen_range(-0.15..0.15)))
            .collect();
        let zeta = phase(&mut rng) * rng.gen_range(0.1..0.5) * aq.powi(n as i32);
        ChainParams {
            q,
            xi,
            xitilde,
            zeta,
            t,
            r: ONE,
            cutoff: FockCutoff { j_max: 120 },
            tol: 1e-13,
            exclusion_radius: 1e-6,
        }
    }

    pub fn spin_shape(&self) -> SpaceShape {
        SpaceShape::new(&vec![2; self.n_sites()])
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_sites()
    }
}

/// Basis states with `m_down` factors equal to `v^1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinSector {
    pub m_down: usize,
    pub indices: Vec<usize>,
}

impl SpinSector {
    pub fn new(n: usize, m_down: usize) -> Self {
        let indices = (0..1usize << n)
            .filter(|i| i.count_ones() as usize == m_down)
            .collect();
        SpinSector { m_down, indices }
    }

    pub fn all(n: usize) -> Vec<SpinSector> {
        (0..=n).map(|m| SpinSector::new(n, m)).collect()
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Eigenvalue of the total spin on this sector.
    pub fn spin(&self, n: usize) -> i64 {
        n as i64 - 2 * self.m_down as i64
    }
}

pub fn in_exclusion_set(z: C64, p: &ChainParams) -> bool {
    let d = p.exclusion_radius;
    let n = p.n_sites() as i64;
    let near = |w: C64| (z - w).norm() < d || (z + w).norm() < d;
    let sxi = p.xi.sqrt();
    if (0..n).any(|i| near(powi(p.q, i) * sxi)) {
        return true;
    }
    let sxt = p.xitilde.sqrt().inv();
    (1..=p.cutoff.dim() as i64).any(|k| near(powi(p.q, -k) * sxt))
}

fn check_excluded(z: C64, p: &ChainParams) -> Result<()> {
    if in_exclusion_set(z, p) {
        return Err(Error::Excluded(format!("z = {z}")));
    }
    Ok(())
}

/// `diag(a, b)^{(x)N}`.
pub fn diag_power(a: C64, b: C64, n: usize) -> ComplexMatrix {
    let d: Vec<C64> = (0..1usize << n)
        .map(|i| {
            let ones = i.count_ones() as i32;
            a.powi(n as i32 - ones) * b.powi(ones)
        })
        .collect();
    ComplexMatrix::diag(&d)
}

pub fn total_spin(n: usize) -> ComplexMatrix {
    let d: Vec<C64> = (0..1usize << n)
        .map(|i| cr(n as f64 - 2.0 * i.count_ones() as f64))
        .collect();
    ComplexMatrix::diag(&d)
}

/// `R_{a1}(t_1 z) ... R_{aN}(t_N z) K^V_a(z) R_{aN}(z/t_N) ... R_{a1}(z/t_1)` on
/// `V_a (x) V^{(x)N}`.
pub fn monodromy_v(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let n = p.n_sites();
    let shape = SpaceShape::new(&vec![2; n + 1]);
    let mut m = embed1(&kv(z, p.xi), 0, &shape)?;
    for (k, &t) in p.t.iter().enumerate().rev() {
        let left = embed(&r_matrix(t * z, p.q), 0, k + 1, &shape)?;
        let right = embed(&r_matrix(z / t, p.q), 0, k + 1, &shape)?;
        m = left.matmul(&m).matmul(&right);
    }
    Ok(m.with_shapes(shape.clone(), shape))
}

/// The oscillator analogue of [`monodromy_v`] on `W_J (x) V^{(x)N}`.
pub fn monodromy_w(z: C64, r: C64, p: &ChainParams, j: FockCutoff) -> Result<ComplexMatrix> {
    let n = p.n_sites();
    let mut dims = vec![j.dim()];
    dims.extend(std::iter::repeat_n(2, n));
    let shape = SpaceShape::new(&dims);
    let mut m = embed1(&kw_dense(z, r, p.xi, p.q, j)?, 0, &shape)?;
    for (k, &t) in p.t.iter().enumerate().rev() {
        let left = embed(&l_matrix(t * z, r, p.q, j), 0, k + 1, &shape)?;
        let right = embed(&l_matrix(z / t, r, p.q, j), 0, k + 1, &shape)?;
        m = left.matmul(&m).matmul(&right);
    }
    Ok(m.with_shapes(shape.clone(), shape))
}

pub fn transfer_v(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let n = p.n_sites();
    let shape = SpaceShape::new(&vec![2; n + 1]);
    let k = embed1(&ktv(z, p.xitilde, p.q), 0, &shape)?;
    let m = k.matmul(&monodromy_v(z, p)?);
    if n == 0 {
        return Ok(ComplexMatrix::from_rows(&[vec![m.trace()]]));
    }
    partial_trace(&m, 0, &shape)
}

/// A vector on `W (x) V^{(x)N}` restricted to the Fock window `[lo, lo+width)`,
/// with entry `(k, s)` equal to `mant * exp(scale[k])`.
struct Window {
    lo: usize,
    width: usize,
    spins: usize,
    mant: Vec<C64>,
    scale: Vec<f64>,
}

/// Matrix elements of `L(z, r)` between `w^k (x) v^nu` and its images.
struct LCoefs {
    q: C64,
    z: C64,
    r: C64,
}

impl LCoefs {
    /// `(stay, move)`: the coefficient keeping the Fock index and the one shifting it
    /// (down for `nu = 0`, up for `nu = 1`); the spin flips on a shift.
    fn at(&self, k: usize, nu: usize) -> (C64, C64) {
        let (q, z, r) = (self.q, self.z, self.r);
        let kk = k as i64;
        if nu == 0 {
            let qk = powi(q, kk);
            (r * qk, if k == 0 { ZERO } else { -r * z * q * qk })
        } else {
            let qm = powi(q, -kk);
            let g = ONE - powi(q, 2 * (kk + 1));
            (qm * (ONE - powi(q, 2 * (kk + 1)) * z * z), -z * qm / q * g)
        }
    }
}

impl Window {
    fn basis(j: usize, n: usize, col: usize) -> Self {
        let lo = j.saturating_sub(n);
        let width = j + n + 1 - lo;
        let spins = 1 << n;
        let mut mant = vec![ZERO; width * spins];
        mant[(j - lo) * spins + col] = ONE;
        Window {
            lo,
            width,
            spins,
            mant,
            scale: vec![0.0; width],
        }
    }

    fn row_max(&self, i: usize) -> f64 {
        self.mant[i * self.spins..(i + 1) * self.spins]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Apply `L_{a,site}(z, r)`; `site` counts spins from 0, most significant first.
    fn apply_l(&mut self, site: usize, n: usize, l: &LCoefs) {
        let shift = n - 1 - site;
        let (w, sp) = (self.width, self.spins);
        let coefs: Vec<[(C64, C64); 2]> = (0..w)
            .map(|i| [l.at(self.lo + i, 0), l.at(self.lo + i, 1)])
            .collect();
        // new scale per Fock row: the largest incoming log-magnitude
        let mut new_scale = vec![f64::NEG_INFINITY; w];
        let row_log: Vec<f64> = (0..w)
            .map(|i| self.row_max(i).ln() + self.scale[i])
            .collect();
        let bump = |ns: &mut Vec<f64>, i: usize, v: f64| {
            if v > ns[i] {
                ns[i] = v;
            }
        };
        for i in 0..w {
            if row_log[i] == f64::NEG_INFINITY {
                continue;
            }
            for nu in 0..2 {
                let (stay, mv) = coefs[i][nu];
                if stay != ZERO {
                    bump(&mut new_scale, i, row_log[i] + stay.norm().ln());
                }
                let target = if nu == 0 {
                    i.checked_sub(1)
                } else {
                    Some(i + 1).filter(|&t| t < w)
                };
                if let Some(t) = target {
                    if mv != ZERO {
                        bump(&mut new_scale, t, row_log[i] + mv.norm().ln());
                    }
                }
            }
        }
        let mut out = vec![ZERO; w * sp];
        for i in 0..w {
            if row_log[i] == f64::NEG_INFINITY {
                continue;
            }
            for s in 0..sp {
                let m = self.mant[i * sp + s];
                if m == ZERO {
                    continue;
                }
                let nu = (s >> shift) & 1;
                let (stay, mv) = coefs[i][nu];
                out[i * sp + s] += m * stay * (self.scale[i] - new_scale[i]).exp();
                let target = if nu == 0 {
                    i.checked_sub(1)
                } else {
                    Some(i + 1).filter(|&t| t < w)
                };
                if let Some(t) = target {
                    out[t * sp + (s ^ (1 << shift))] +=
                        m * mv * (self.scale[i] - new_scale[t]).exp();
                }
            }
        }
        for s in new_scale.iter_mut() {
            if *s == f64::NEG_INFINITY {
                *s = 0.0;
            }
        }
        self.mant = out;
        self.scale = new_scale;
    }

    /// Multiply Fock row `k` by `d[k]`.
    fn apply_diag(&mut self, d: &[LogValue]) {
        for i in 0..self.width {
            let v = d[self.lo + i];
            if v.is_zero() {
                self.mant[i * self.spins..(i + 1) * self.spins].fill(ZERO);
            } else {
                self.scale[i] += v.log_mag;
                for m in &mut self.mant[i * self.spins..(i + 1) * self.spins] {
                    *m *= v.phase;
                }
            }
        }
    }

    /// Entries of Fock row `j`, multiplied by `pre`.
    fn read(&self, j: usize, pre: LogValue) -> Result<Vec<C64>> {
        let i = j - self.lo;
        let s = LogValue {
            log_mag: self.scale[i] + pre.log_mag,
            phase: pre.phase,
        };
        let f = if pre.is_zero() { ZERO } else { s.value()? };
        Ok(self.mant[i * self.spins..(i + 1) * self.spins]
            .iter()
            .map(|m| m * f)
            .collect())
    }
}

/// A certified oscillator trace.
#[derive(Clone, Debug)]
pub struct TraceResult {
    pub matrix: ComplexMatrix,
    /// Number of Fock levels summed.
    pub terms: usize,
    pub tail_bound: f64,
}

/// How the trace is cut off.
#[derive(Clone, Copy, Debug)]
enum Stop {
    Certified {
        tol: f64,
        rho_th: f64,
        max_terms: usize,
    },
    Fixed(usize),
}

/// Sum `sum_j summand(j)` of `2^N x 2^N` matrices where `summand(j)` is given as
/// one column per basis state.
fn sum_trace(
    dim: usize,
    stop: Stop,
    summand: impl Fn(usize) -> Result<Vec<Vec<C64>>> + Sync,
) -> Result<TraceResult> {
    let mut acc = ComplexMatrix::zeros(dim, dim);
    let mut prev: Option<f64> = None;
    let max = match stop {
        Stop::Certified { max_terms, .. } => max_terms,
        Stop::Fixed(n) => n,
    };
    for j in 0..max {
        let cols = summand(j)?;
        let mut mag = 0f64;
        for (a, col) in cols.iter().enumerate() {
            for (b, v) in col.iter().enumerate() {
                acc[(b, a)] += v;
                mag = mag.max(v.norm());
            }
        }
        if !mag.is_finite() {
            return Err(Error::Overflow(format!("trace term {j} is not finite")));
        }
        if let Stop::Certified { tol, rho_th, .. } = stop {
            let emp = match prev {
                Some(p) if p > 0.0 => mag / p,
                _ => 0.0,
            };
            prev = Some(mag);
            let rho = rho_th.max(emp);
            let size = acc.max_abs().max(1.0);
            if j >= 1 && rho < 1.0 {
                let bound = mag * rho / (1.0 - rho);
                if bound < tol / 10.0 * size {
                    return Ok(TraceResult {
                        matrix: acc,
                        terms: j + 1,
                        tail_bound: bound,
                    });
                }
            }
        }
    }
    match stop {
        Stop::Fixed(n) => Ok(TraceResult {
            matrix: acc,
            terms: n,
            tail_bound: f64::NAN,
        }),
        Stop::Certified { .. } => Err(Error::TailCertificate(format!(
            "tail bound not reached within {max} Fock levels"
        ))),
    }
}

fn open_summand(
    z: C64,
    p: &ChainParams,
    kt: &[LogValue],
    k: &[LogValue],
    j: usize,
) -> Result<Vec<Vec<C64>>> {
    let n = p.n_sites();
    let outer: Vec<LCoefs> =
        p.t.iter()
            .map(|&t| LCoefs {
                q: p.q,
                z: z / t,
                r: ONE,
            })
            .collect();
    let inner: Vec<LCoefs> =
        p.t.iter()
            .map(|&t| LCoefs {
                q: p.q,
                z: z * t,
                r: ONE,
            })
            .collect();
    (0..1usize << n)
        .into_par_iter()
        .map(|col| {
            let mut w = Window::basis(j, n, col);
            for s in 0..n {
                w.apply_l(s, n, &outer[s]);
            }
            w.apply_diag(k);
            for s in (0..n).rev() {
                w.apply_l(s, n, &inner[s]);
            }
            w.read(j, kt[j])
        })
        .collect()
}

fn open_trace(z: C64, p: &ChainParams, stop: Stop) -> Result<TraceResult> {
    p.validate()?;
    check_excluded(z, p)?;
    if let Stop::Certified { rho_th, .. } = stop {
        p.preflight(rho_th)?;
    }
    let n = p.n_sites();
    let levels = match stop {
        Stop::Certified { max_terms, .. } => max_terms,
        Stop::Fixed(m) => m,
    };
    let kt = ktw_entries(z, ONE, p.xitilde, p.q, levels)?;
    let k = kw_entries(z, ONE, p.xi, p.q, levels + n + 1);
    sum_trace(1 << n, stop, |j| open_summand(z, p, &kt, &k, j))
}

/// `T^W(z)` with the certified cutoff.
pub fn transfer_w(z: C64, p: &ChainParams) -> Result<TraceResult> {
    open_trace(
        z,
        p,
        Stop::Certified {
            tol: p.tol,
            rho_th: p.rho_open(),
            max_terms: p.cutoff.dim(),
        },
    )
}

/// `T^W(z)` summed over exactly `terms` Fock levels.
pub fn transfer_w_truncated(z: C64, p: &ChainParams, terms: usize) -> Result<ComplexMatrix> {
    Ok(open_trace(z, p, Stop::Fixed(terms))?.matrix)
}

pub fn q_operator(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let t = transfer_w(z, p)?.matrix;
    Ok(diag_power(z * z, ONE, p.n_sites()).matmul(&t))
}

pub fn p_plus(z: C64, p: &ChainParams) -> C64 {
    let (q, z2) = (p.q, z * z);
    let mut v = (ONE - z2 * z2) * (p.xitilde - q * q * z2) * (p.xi - q * q * z2);
    for &t in &p.t {
        v *= (ONE - t * t * z2) * (ONE - z2 / (t * t));
    }
    v
}

pub fn p_minus(z: C64, p: &ChainParams) -> C64 {
    let (q, z2) = (p.q, z * z);
    let q2 = q * q;
    let mut v = powi(q, 2 * p.n_sites() as i64)
        * (ONE - q2 * q2 * z2 * z2)
        * (ONE - p.xitilde * z2)
        * (ONE - p.xi * z2);
    for &t in &p.t {
        v *= (ONE - q2 * t * t * z2) * (ONE - q2 * z2 / (t * t));
    }
    v
}

/// Diagonal entry `T^W(z)^alpha_alpha` as a polynomial in `z^2`, built by peeling
/// the first site:
///
/// * `alpha_1 = 0`: `T(rest; q^2 xi~)`
/// * `alpha_1 = 1`: `(1 - q^2 z^2/xi~)(1 - xi~ z^2) T(rest; q^-2 xi~)
///   - q^2 z^2 (t_1^2 + t_1^-2 - xi~ - xi~^-1) T(rest; xi~)`
///
/// ending at `1/(1 - xi xi~)`. Works on coefficients only, so intermediate
/// boundary parameters need not keep the trace convergent.
pub fn tw_diagonal_recursion(alpha: &[u8], p: &ChainParams) -> Result<Poly> {
    if alpha.len() != p.n_sites() {
        return Err(Error::DimensionMismatch(format!(
            "{} bits for {} sites",
            alpha.len(),
            p.n_sites()
        )));
    }
    diag_rec(alpha, &p.t, p.xi, p.xitilde, p.q)
}

fn diag_rec(alpha: &[u8], t: &[C64], xi: C64, xt: C64, q: C64) -> Result<Poly> {
    let Some((&a, rest)) = alpha.split_first() else {
        let d = ONE - xi * xt;
        if d.norm() < 1e-14 {
            return Err(Error::Pole("1 - xi xi~ vanishes".into()));
        }
        return Ok(Poly::constant(d.inv()));
    };
    let (u, ts) = (t[0], &t[1..]);
    let q2 = q * q;
    match a {
        0 => diag_rec(rest, ts, xi, q2 * xt, q),
        1 => {
            let shifted = diag_rec(rest, ts, xi, xt / q2, q)?;
            let same = diag_rec(rest, ts, xi, xt, q)?;
            let f = Poly::linear(ONE, -q2 / xt).mul(&Poly::linear(ONE, -xt));
            let g = Poly(vec![ZERO, -q2 * (u * u + (u * u).inv() - xt - xt.inv())]);
            Ok(f.mul(&shifted).add(&g.mul(&same)))
        }
        _ => Err(Error::Domain(format!("bit value {a}"))),
    }
}

/// `T^V` of the closed chain: `Tr_a diag(1, zeta)_a R_{aN}(z/t_N) ... R_{a1}(z/t_1)`.
pub fn closed_transfer_v(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let n = p.n_sites();
    let shape = SpaceShape::new(&vec![2; n + 1]);
    let mut m = embed1(&ComplexMatrix::diag(&[ONE, p.zeta]), 0, &shape)?;
    for (k, &t) in p.t.iter().enumerate().rev() {
        m = m.matmul(&embed(&r_matrix(z / t, p.q), 0, k + 1, &shape)?);
    }
    if n == 0 {
        return Ok(ComplexMatrix::from_rows(&[vec![m.trace()]]));
    }
    partial_trace(&m, 0, &shape)
}

fn closed_trace(z: C64, p: &ChainParams, stop: Stop) -> Result<TraceResult> {
    p.validate_closed()?;
    if let Stop::Certified { rho_th, .. } = stop {
        p.preflight(rho_th)?;
    }
    let n = p.n_sites();
    let ls: Vec<LCoefs> =
        p.t.iter()
            .map(|&t| LCoefs {
                q: p.q,
                z: z / t,
                r: ONE,
            })
            .collect();
    let lz = LogValue::from_c(p.zeta);
    sum_trace(1 << n, stop, |j| {
        let pre = if j == 0 {
            LogValue::ONE
        } else {
            LogValue {
                log_mag: lz.log_mag * j as f64,
                phase: lz.phase.powu(j as u32),
            }
        };
        (0..1usize << n)
            .into_par_iter()
            .map(|col| {
                let mut w = Window::basis(j, n, col);
                for s in 0..n {
                    w.apply_l(s, n, &ls[s]);
                }
                w.read(j, pre)
            })
            .collect()
    })
}

/// `Tr_a zeta^D L_{aN}(z/t_N) ... L_{a1}(z/t_1)` with `r = 1`.
pub fn closed_transfer_w(z: C64, p: &ChainParams) -> Result<TraceResult> {
    closed_trace(
        z,
        p,
        Stop::Certified {
            tol: p.tol,
            rho_th: p.rho_closed(),
            max_terms: p.cutoff.dim(),
        },
    )
}

pub fn closed_transfer_w_truncated(z: C64, p: &ChainParams, terms: usize) -> Result<ComplexMatrix> {
    Ok(closed_trace(z, p, Stop::Fixed(terms))?.matrix)
}

pub fn closed_q(z: C64, p: &ChainParams) -> Result<ComplexMatrix> {
    let t = closed_transfer_w(z, p)?.matrix;
    Ok(diag_power(z, ONE, p.n_sites()).matmul(&t))
}

pub fn closed_p_plus(z: C64, p: &ChainParams) -> C64 {
    p.t.iter().fold(p.zeta, |v, &t| v * (ONE - z * z / (t * t)))
}

pub fn closed_p_minus(z: C64, p: &ChainParams) -> C64 {
    let q = p.q;
    p.t.iter().fold(powi(q, p.n_sites() as i64), |v, &t| {
        v * (ONE - q * q * z * z / (t * t))
    })
}

/// `diag(1, y)^{(x)N}`.
pub fn spin_twist(y: C64, n: usize) -> ComplexMatrix {
    diag_power(ONE, y, n)
}

/// Spectral-parameter samples clear of the exclusion set, on a ring of modulus
/// `radius` with a seeded phase.
pub fn sample_z(p: &ChainParams, count: usize, radius: f64, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = C64::from_polar(
            radius * rng.gen_range(0.8..1.2),
            rng.gen_range(0.0..std::f64::consts::TAU),
        );
        if !in_exclusion_set(z, p) && (z * z).norm() > 1e-3 {
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::{c, rel_err};

    fn params(n: usize, seed: u64) -> ChainParams {
        ChainParams::sample(n, seed)
    }

    #[test]
    fn sampler_stays_in_domain() {
        for n in 0..5 {
            for seed in 0..20 {
                let p = params(n, seed);
                p.validate().unwrap();
                p.validate_closed().unwrap();
                let aq = p.q.norm();
                assert!((0.3..=0.8).contains(&aq));
                let c = (p.xi * p.xitilde).norm() / aq.powi(2 * n as i32);
                assert!((0.1..=0.5).contains(&c));
            }
        }
        assert_eq!(params(3, 9), params(3, 9));
    }

    #[test]
    fn validation_rejects_divergent_boundaries() {
        let q = cr(0.5);
        assert!(ChainParams::new(q, cr(0.5), cr(0.5), vec![ONE]).is_err());
        assert!(ChainParams::new(q, cr(0.1), cr(0.1), vec![ONE]).is_ok());
        assert!(ChainParams::new(q, cr(0.1), cr(0.1), vec![ZERO]).is_err());
        assert!(ChainParams::new(cr(1.0), cr(0.1), cr(0.1), vec![ONE]).is_err());
    }

    #[test]
    fn exclusion_points() {
        let p = params(2, 3);
        assert!(in_exclusion_set(p.xi.sqrt(), &p));
        assert!(in_exclusion_set(-p.q * p.xi.sqrt(), &p));
        assert!(in_exclusion_set(p.xitilde.sqrt().inv() / p.q, &p));
        assert!(!in_exclusion_set(ZERO, &p));
        assert!(matches!(
            transfer_w(p.xi.sqrt(), &p),
            Err(Error::Excluded(_))
        ));
    }

    #[test]
    fn sectors() {
        let s = SpinSector::new(4, 2);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.spin(4), 0);
        assert_eq!(SpinSector::all(3).iter().map(|s| s.dim()).sum::<usize>(), 8);
        let sig = total_spin(1);
        assert_eq!(sig, ComplexMatrix::diag(&[ONE, -ONE]));
        assert_eq!(total_spin(3)[(0, 0)], cr(3.0));
    }

    #[test]
    fn empty_chain_values() {
        let p = params(0, 1);
        let z = c(0.7, 0.2);
        let z2 = z * z;
        let (q, xi, xt) = (p.q, p.xi, p.xitilde);
        let want = (xi * z2 - ONE) * (q * q * xt * z2 - ONE) + (xi - z2) * (xt - q * q * z2);
        assert!((transfer_v(z, &p).unwrap()[(0, 0)] - want).norm() < 1e-14);
        let tw = transfer_w(z, &p).unwrap().matrix[(0, 0)];
        assert!((tw - (ONE - xi * xt).inv()).norm() < 1e-13);
        assert_eq!(
            monodromy_v(z, &p).unwrap(),
            kv(z, xi).with_shapes(SpaceShape::new(&[2]), SpaceShape::new(&[2]))
        );
    }

    #[test]
    fn transfer_w_at_zero() {
        for n in 1..4 {
            let p = params(n, 10 + n as u64);
            let t = transfer_w(ZERO, &p).unwrap().matrix;
            let sig = total_spin(n);
            for i in 0..1 << n {
                for j in 0..1 << n {
                    let want = if i == j {
                        (ONE - powi(p.q, 2 * sig[(i, i)].re as i64) * p.xi * p.xitilde).inv()
                    } else {
                        ZERO
                    };
                    assert!((t[(i, j)] - want).norm() < 1e-12, "n={n} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn windowed_trace_matches_dense_truncation() {
        // small cutoff so the dense monodromy stays within double range
        let p = params(2, 5);
        let z = c(0.6, -0.3);
        let j = FockCutoff::new(14).unwrap();
        let shape = SpaceShape::new(&[14, 2, 2]);
        let kt = crate::lattice_ops::ktw_dense(z, ONE, p.xitilde, p.q, j).unwrap();
        let m = embed1(&kt, 0, &shape)
            .unwrap()
            .matmul(&monodromy_w(z, ONE, &p, j).unwrap());
        // keep Fock levels far from the truncation edge
        let mut dense = ComplexMatrix::zeros(4, 4);
        for lvl in 0..8 {
            for a in 0..4 {
                for b in 0..4 {
                    dense[(b, a)] += m[(lvl * 4 + b, lvl * 4 + a)];
                }
            }
        }
        let win = transfer_w_truncated(z, &p, 8).unwrap();
        assert!(rel_err(&dense, &win).unwrap() < 1e-11);
    }

    #[test]
    fn total_spin_commutes() {
        let p = params(3, 2);
        let z = c(0.4, 0.9);
        let sig = total_spin(3);
        let tv = transfer_v(z, &p).unwrap();
        assert!(sig.commutator(&tv).max_abs() < 1e-12 * tv.max_abs());
        let tw = transfer_w(z, &p).unwrap().matrix;
        for a in 0..8usize {
            for b in 0..8usize {
                if a.count_ones() != b.count_ones() {
                    assert!(tw[(a, b)].norm() < 1e-13 * tw.max_abs());
                }
            }
        }
    }

    #[test]
    fn tq_relation() {
        for n in 0..4 {
            let p = params(n, 30 + n as u64);
            for z in sample_z(&p, 3, 0.9, 7) {
                let q = p.q;
                let lhs = transfer_v(z, &p)
                    .unwrap()
                    .matmul(&q_operator(z, &p).unwrap())
                    .scale(ONE - q * q * z.powu(4));
                let rhs = &q_operator(q * z, &p).unwrap().scale(p_plus(z, &p))
                    + &q_operator(z / q, &p).unwrap().scale(p_minus(z, &p));
                let e = rel_err(&lhs, &rhs).unwrap();
                assert!(e < 1e-9, "n={n} z={z} err={e:e}");
            }
        }
    }

    #[test]
    fn p_values() {
        let p = params(2, 4);
        assert!(p_plus(ONE, &p).norm() < 1e-14);
        assert!((p_minus(ZERO, &p) - powi(p.q, 4)).norm() < 1e-15);
        let z = c(0.8, 0.3);
        let q = p.q;
        let w = (q * z).inv();
        let got = p_plus(w, &p) / p_minus(z, &p);
        let want = -powi(q, -2 * (3 * 2 + 2)) * powi(z, -4 * (2 + 2));
        assert!((got - want).norm() < 1e-9 * want.norm());
    }

    #[test]
    fn recursion_matches_trace() {
        let p = params(2, 8);
        for alpha in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let poly = tw_diagonal_recursion(&alpha, &p).unwrap();
            let idx = (alpha[0] as usize) << 1 | alpha[1] as usize;
            for z in sample_z(&p, 3, 0.8, 11) {
                let tw = transfer_w(z, &p).unwrap().matrix[(idx, idx)];
                let e = (poly.eval(z * z) - tw).norm() / tw.norm().max(1.0);
                assert!(e < 1e-9, "{alpha:?}: {e:e}");
            }
        }
    }

    #[test]
    fn closed_golden_and_tq() {
        for n in 1..4 {
            let p = params(n, 40 + n as u64);
            let t0 = closed_transfer_w(ZERO, &p).unwrap().matrix;
            let sig = total_spin(n);
            for i in 0..1 << n {
                let want = (ONE - p.zeta * powi(p.q, sig[(i, i)].re as i64)).inv();
                assert!((t0[(i, i)] - want).norm() < 1e-12);
            }
            for z in sample_z(&p, 3, 0.9, 3) {
                let q = p.q;
                let lhs = closed_transfer_v(z, &p)
                    .unwrap()
                    .matmul(&closed_q(z, &p).unwrap());
                let rhs = &closed_q(q * z, &p).unwrap().scale(closed_p_plus(z, &p))
                    + &closed_q(z / q, &p).unwrap().scale(closed_p_minus(z, &p));
                let e = rel_err(&lhs, &rhs).unwrap();
                assert!(e < 1e-10, "n={n}: {e:e}");
            }
        }
    }

    #[test]
    fn certificate_is_stable_under_more_terms() {
        let p = params(3, 12);
        let z = c(0.5, 0.5);
        let r = transfer_w(z, &p).unwrap();
        let more = transfer_w_truncated(z, &p, r.terms + 5).unwrap();
        assert!(rel_err(&r.matrix, &more).unwrap() < p.tol);
    }
}
