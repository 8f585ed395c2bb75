//! Truncated q-oscillator Fock space `W_J = span{w^0, .., w^{J-1}}`.
//!
//! The diagonal K-operators grow or decay like `|q|^{-j^2}` / `|q|^{j^2}`, so they
//! are stored as a unit-modulus mantissa plus a natural-log magnitude per row.

use crate::error::{Error, Result};
use crate::tensor_core::{powi, ComplexMatrix, C64, ONE, ZERO};

/// Largest natural-log magnitude we are willing to exponentiate.
pub const LOG_RANGE: f64 = 690.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockCutoff {
    pub j_max: usize,
}

impl FockCutoff {
    pub fn new(j_max: usize) -> Result<Self> {
        if j_max < 2 {
            return Err(Error::DimensionMismatch(format!("Fock cutoff {j_max} < 2")));
        }
        Ok(FockCutoff { j_max })
    }

    pub fn dim(&self) -> usize {
        self.j_max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    /// Mantissas; the true entry (i, j) is `matrix[(i, j)] * exp(log_scale[i])`.
    pub matrix: ComplexMatrix,
    pub band: Option<usize>,
    pub log_scale: Option<Vec<f64>>,
}

impl FockOperator {
    fn plain(matrix: ComplexMatrix, band: usize) -> Self {
        FockOperator {
            matrix,
            band: Some(band),
            log_scale: None,
        }
    }

    fn log_diagonal(entries: &[LogValue]) -> Self {
        let mant: Vec<C64> = entries.iter().map(|e| e.phase).collect();
        FockOperator {
            matrix: ComplexMatrix::diag(&mant),
            band: Some(0),
            log_scale: Some(entries.iter().map(|e| e.log_mag).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    /// Diagonal entry in log form; panics for non-diagonal operators.
    pub fn diag_log(&self, j: usize) -> LogValue {
        assert_eq!(self.band, Some(0), "diag_log on a non-diagonal operator");
        let lm = self.log_scale.as_ref().map_or(0.0, |s| s[j]);
        let m = self.matrix[(j, j)];
        if m == ZERO {
            return LogValue::ZERO;
        }
        LogValue {
            log_mag: lm + m.norm().ln(),
            phase: m / m.norm(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<C64> {
        let m = self.matrix[(i, j)];
        match &self.log_scale {
            None => Ok(m),
            Some(s) => {
                if m == ZERO {
                    return Ok(ZERO);
                }
                if s[i] > LOG_RANGE {
                    return Err(Error::Overflow(format!(
                        "Fock entry ({i},{j}) has log-magnitude {:.1}",
                        s[i]
                    )));
                }
                Ok(m * s[i].exp())
            }
        }
    }

    /// Reconstruct the plain matrix; fails rather than saturating.
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let mut out = self.matrix.clone();
        if self.log_scale.is_some() {
            for i in 0..out.rows {
                for j in 0..out.cols {
                    out[(i, j)] = self.entry(i, j)?;
                }
            }
        }
        Ok(out)
    }
}

/// A complex number as `exp(log_mag) * phase` with `|phase| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogValue {
    pub log_mag: f64,
    pub phase: C64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        log_mag: f64::NEG_INFINITY,
        phase: ZERO,
    };
    pub const ONE: LogValue = LogValue {
        log_mag: 0.0,
        phase: ONE,
    };

    pub fn from_c(z: C64) -> Self {
        if z == ZERO {
            return Self::ZERO;
        }
        LogValue {
            log_mag: z.norm().ln(),
            phase: z / z.norm(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.phase == ZERO
    }

    pub fn mul(self, o: LogValue) -> LogValue {
        if self.is_zero() || o.is_zero() {
            return Self::ZERO;
        }
        let p = self.phase * o.phase;
        LogValue {
            log_mag: self.log_mag + o.log_mag,
            phase: p / p.norm(),
        }
    }

    pub fn inv(self) -> LogValue {
        LogValue {
            log_mag: -self.log_mag,
            phase: self.phase.conj(),
        }
    }

    /// Exponentiate; an overflow is reported, an underflow flushes to zero.
    pub fn value(self) -> Result<C64> {
        if self.is_zero() {
            return Ok(ZERO);
        }
        if self.log_mag > LOG_RANGE {
            return Err(Error::Overflow(format!(
                "log-magnitude {:.1}",
                self.log_mag
            )));
        }
        Ok(self.phase * self.log_mag.exp())
    }
}

pub fn osc_a(j: FockCutoff) -> FockOperator {
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(n, n);
    for k in 0..n - 1 {
        m[(k, k + 1)] = ONE;
    }
    FockOperator::plain(m, 1)
}

pub fn osc_adag(q: C64, j: FockCutoff) -> FockOperator {
    let n = j.dim();
    let mut m = ComplexMatrix::zeros(n, n);
    for k in 0..n - 1 {
        m[(k + 1, k)] = ONE - q.powu(2 * (k as u32 + 1));
    }
    FockOperator::plain(m, 1)
}

pub fn osc_fd(f: impl Fn(usize) -> C64, j: FockCutoff) -> FockOperator {
    let d: Vec<C64> = (0..j.dim()).map(f).collect();
    FockOperator::plain(ComplexMatrix::diag(&d), 0)
}

/// `(x)_j` with base `q^2`; `j = None` is the infinite product.
pub fn pochhammer(x: C64, j: Option<i64>, q: C64) -> Result<C64> {
    let q2 = q * q;
    match j {
        Some(j) if j >= 0 => {
            let mut p = ONE;
            let mut qi = ONE;
            for _ in 0..j {
                p *= ONE - qi * x;
                qi *= q2;
            }
            Ok(p)
        }
        Some(j) => {
            let qinv2 = q2.inv();
            let mut p = ONE;
            let mut qi = qinv2;
            for i in 1..=(-j) {
                let f = ONE - qi * x;
                if f.norm() < 1e-13 {
                    return Err(Error::Pole(format!("(x)_{j}: factor i={i} vanishes")));
                }
                p /= f;
                qi *= qinv2;
            }
            Ok(p)
        }
        None => {
            if q.norm() >= 1.0 {
                return Err(Error::NonConvergence(
                    "infinite Pochhammer needs |q| < 1".into(),
                ));
            }
            let mut p = ONE;
            let mut t = x;
            while t.norm() >= f64::EPSILON * 1e-3 {
                p *= ONE - t;
                t *= q2;
            }
            Ok(p)
        }
    }
}

/// Truncated basic hypergeometric series `sum_j (a)_j (b)_j / ((q^2)_j (c)_j) x^j`.
pub fn phi21(a: C64, b: C64, c: C64, x: C64, tol: f64, q: C64) -> Result<C64> {
    if q.norm() >= 1.0 {
        return Err(Error::NonConvergence("phi21 needs |q| < 1".into()));
    }
    if x.norm() >= 1.0 {
        return Err(Error::NonConvergence(format!(
            "phi21 argument |x| = {} >= 1",
            x.norm()
        )));
    }
    let q2 = q * q;
    let mut qj = ONE;
    let mut term = ONE;
    let mut sum = ONE;
    let mut last_ratio: f64 = 0.0;
    for j in 0..100_000u32 {
        let den_c = ONE - qj * c;
        if den_c.norm() < 1e-14 * (1.0 + (qj * c).norm()) {
            return Err(Error::Pole(format!("phi21: c = q^(-2*{j})")));
        }
        let next = term * (ONE - qj * a) * (ONE - qj * b) / ((ONE - qj * q2) * den_c) * x;
        qj *= q2;
        let ratio = if term == ZERO {
            0.0
        } else {
            next.norm() / term.norm()
        };
        sum += next;
        term = next;
        // asymptotic ratio is |x|; take the worse of that and what we see
        let rho = ratio.max(last_ratio).max(x.norm());
        last_ratio = ratio;
        let scale = sum.norm().max(f64::MIN_POSITIVE);
        if rho < 1.0 && term.norm() < tol * scale && term.norm() * rho / (1.0 - rho) < tol * scale {
            return Ok(sum);
        }
        if term == ZERO {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence("phi21 did not settle".into()))
}

/// Right boundary oscillator K-matrix, entry `(q/r)^j prod_{i=1}^j (z^2 - q^{-2i} xi)`.
pub fn kw_matrix(z: C64, r: C64, xi: C64, q: C64, j: FockCutoff) -> FockOperator {
    FockOperator::log_diagonal(&kw_entries(z, r, xi, q, j.dim()))
}

/// Log-form entries of the right oscillator K-matrix for indices `0..n`.
///
/// Uses `k_j = r^{-j} (-xi)^j q^{-j^2} (q^2 z^2 / xi)_j` so the growth sits in one
/// exact exponent.
pub fn kw_entries(z: C64, r: C64, xi: C64, q: C64, n: usize) -> Vec<LogValue> {
    let mut out = Vec::with_capacity(n);
    let lq = q.ln();
    let lpre = (-xi / r).ln();
    let x = q * q * z * z / xi;
    let q2 = q * q;
    let mut poch = LogValue::ONE;
    let mut qi = ONE;
    for k in 0..n {
        if k > 0 {
            // factor (1 - q^{2(k-1)} x); a rounding-level remainder is an exact zero
            let f = ONE - qi * x;
            let f = if f.norm() < 1e-14 { ZERO } else { f };
            poch = poch.mul(LogValue::from_c(f));
            qi *= q2;
        }
        let kk = k as f64;
        let e = -lq * (kk * kk) + lpre * kk;
        out.push(
            LogValue {
                log_mag: e.re,
                phase: C64::from_polar(1.0, e.im),
            }
            .mul(poch),
        );
    }
    out
}

/// Left boundary oscillator K-matrix, entry `q^{j^2} r^j (-xt)^j / (q^2 xt z^2)_{j+1}`.
pub fn ktw_matrix(z: C64, r: C64, xitilde: C64, q: C64, j: FockCutoff) -> Result<FockOperator> {
    Ok(FockOperator::log_diagonal(&ktw_entries(
        z,
        r,
        xitilde,
        q,
        j.dim(),
    )?))
}

pub fn ktw_entries(z: C64, r: C64, xt: C64, q: C64, n: usize) -> Result<Vec<LogValue>> {
    let mut out = Vec::with_capacity(n);
    let lq = q.ln();
    let x = q * q * xt * z * z;
    let q2 = q * q;
    let mut den = LogValue::ONE;
    let mut qi = ONE;
    let pre = LogValue::from_c(-xt * r);
    let mut prepow = LogValue::ONE;
    for k in 0..n {
        let f = ONE - qi * x;
        if f.norm() < 1e-13 {
            return Err(Error::Pole(format!(
                "left oscillator K-matrix pole at index {k}: z^2 = q^-{} / xi~",
                2 * (k + 1)
            )));
        }
        den = den.mul(LogValue::from_c(f));
        qi *= q2;
        if k > 0 {
            prepow = prepow.mul(pre);
        }
        let kk = k as f64;
        let e = lq * (kk * kk);
        let qpart = LogValue {
            log_mag: e.re,
            phase: C64::from_polar(1.0, e.im),
        };
        out.push(qpart.mul(prepow).mul(den.inv()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    E0,
    E1,
    F0,
    F1,
    K0,
    K1,
}

impl std::str::FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "e0" => Generator::E0,
            "e1" => Generator::E1,
            "f0" => Generator::F0,
            "f1" => Generator::F1,
            "k0" => Generator::K0,
            "k1" => Generator::K1,
            _ => return Err(Error::UnknownGenerator(s.to_string())),
        })
    }
}

fn check_rep_args(q: C64, z: C64, r: C64) -> Result<()> {
    if q == ZERO || (q - ONE).norm() < 1e-15 || (q + ONE).norm() < 1e-15 {
        return Err(Error::Domain("q must avoid 0 and +-1".into()));
    }
    if z == ZERO || r == ZERO {
        return Err(Error::Domain("z and r must be nonzero".into()));
    }
    Ok(())
}

/// Image of an upper Borel generator in the oscillator representation.
pub fn rho_plus(gen: &str, z: C64, r: C64, q: C64, j: FockCutoff) -> Result<FockOperator> {
    check_rep_args(q, z, r)?;
    let g: Generator = gen.parse()?;
    let qq = q - q.inv();
    Ok(match g {
        Generator::E0 => scaled(osc_adag(q, j), q.inv() * z / qq),
        Generator::E1 => scaled(osc_a(j), q * z / qq),
        Generator::K0 => osc_fd(|k| r * q.powu(2 * k as u32), j),
        Generator::K1 => osc_fd(|k| r.inv() * powi(q, -2 * k as i64), j),
        _ => return Err(Error::UnknownGenerator(gen.to_string())),
    })
}

/// Image of a lower Borel generator in the oscillator representation.
pub fn rho_minus(gen: &str, z: C64, r: C64, q: C64, j: FockCutoff) -> Result<FockOperator> {
    check_rep_args(q, z, r)?;
    let g: Generator = gen.parse()?;
    let qq = q - q.inv();
    Ok(match g {
        Generator::F0 => scaled(osc_a(j), q * z.inv() / qq),
        Generator::F1 => scaled(osc_adag(q, j), q.inv() * z.inv() / qq),
        Generator::K0 => osc_fd(|k| r.inv() * q.powu(2 * k as u32), j),
        Generator::K1 => osc_fd(|k| r * powi(q, -2 * k as i64), j),
        _ => return Err(Error::UnknownGenerator(gen.to_string())),
    })
}

fn scaled(mut op: FockOperator, s: C64) -> FockOperator {
    op.matrix = op.matrix.scale(s);
    op
}
