//! Dense complex polynomials: arithmetic, least-squares fitting on sample
//! nodes, and roots via the companion matrix.

use crate::error::{Error, Result};
use crate::tensor_core::{C64, ONE, ZERO};
use nalgebra::{DMatrix, DVector};

/// Coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<C64>);

impl Poly {
    pub fn constant(c: C64) -> Self {
        Poly(vec![c])
    }

    /// `a + b x`
    pub fn linear(a: C64, b: C64) -> Self {
        Poly(vec![a, b])
    }

    pub fn from_roots(roots: &[C64]) -> Self {
        roots
            .iter()
            .fold(Poly::constant(ONE), |p, &r| p.mul(&Poly::linear(-r, ONE)))
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: C64) -> C64 {
        self.0.iter().rev().fold(ZERO, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(ZERO);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly(
            (0..n)
                .map(|k| {
                    self.0.get(k).copied().unwrap_or(ZERO) + o.0.get(k).copied().unwrap_or(ZERO)
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: C64) -> Poly {
        Poly(self.0.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = vec![ZERO; self.0.len() + o.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Least-squares fit of degree `deg` through `(nodes, values)`. The variable is
    /// rescaled by the largest node modulus so circle nodes give a well-conditioned
    /// system.
    pub fn fit(nodes: &[C64], values: &[C64], deg: usize) -> Result<Poly> {
        if nodes.len() != values.len() || nodes.len() < deg + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes for a degree-{deg} fit",
                nodes.len()
            )));
        }
        let s = nodes
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let v = DMatrix::from_fn(nodes.len(), deg + 1, |i, k| (nodes[i] / s).powu(k as u32));
        let b = DVector::from_column_slice(values);
        let svd = v.svd(true, true);
        let c = svd
            .solve(&b, 1e-14)
            .map_err(|e| Error::Singular(format!("polynomial fit: {e}")))?;
        Ok(Poly((0..=deg).map(|k| c[k] / s.powi(k as i32)).collect()))
    }

    /// All roots of the polynomial after dropping negligible leading coefficients.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::Degeneracy("roots of the zero polynomial".into()));
        }
        let mut c = self.0.clone();
        while c.len() > 1 && c.last().unwrap().norm() <= 1e-14 * scale {
            c.pop();
        }
        let n = c.len() - 1;
        if n == 0 {
            return Ok(vec![]);
        }
        let lead = c[n];
        let comp = DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                -c[n - 1 - j] / lead
            } else if i == j + 1 {
                ONE
            } else {
                ZERO
            }
        });
        let eig = comp
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::NonConvergence("companion eigenvalues".into()))?;
        let p = Poly(c);
        let dp = p.derivative();
        Ok(eig.iter().map(|&r| p.polish(&dp, r)).collect())
    }

    fn polish(&self, dp: &Poly, mut x: C64) -> C64 {
        for _ in 0..8 {
            let d = dp.eval(x);
            if d.norm() == 0.0 {
                break;
            }
            let step = self.eval(x) / d;
            if !step.is_finite() {
                break;
            }
            x -= step;
            if step.norm() <= 1e-16 * x.norm().max(1e-300) {
                break;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::c;

    #[test]
    fn arithmetic_and_eval() {
        let p = Poly::from_roots(&[c(1.0, 0.0), c(0.0, 2.0)]);
        assert!(p.eval(c(0.0, 2.0)).norm() < 1e-15);
        assert_eq!(p.degree(), 2);
        let s = p.add(&Poly::constant(ONE));
        assert!((s.eval(ZERO) - (p.eval(ZERO) + ONE)).norm() < 1e-15);
        let d = Poly(vec![ONE, ONE, ONE]).derivative();
        assert_eq!(d.0, vec![ONE, c(2.0, 0.0)]);
    }

    #[test]
    fn fit_recovers_coefficients_on_circle() {
        let p = Poly(vec![c(0.3, 1.0), c(-2.0, 0.5), c(0.0, 0.1), c(4.0, -1.0)]);
        let nodes: Vec<C64> = (0..7)
            .map(|k| C64::from_polar(3.0, 0.4 + k as f64 * 0.9))
            .collect();
        let vals: Vec<C64> = nodes.iter().map(|&z| p.eval(z)).collect();
        let f = Poly::fit(&nodes, &vals, 3).unwrap();
        for k in 0..4 {
            assert!((f.0[k] - p.0[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        let want = [c(0.2, 0.1), c(-3.0, 1.0), c(5.0, -0.5), c(0.0, -0.7)];
        let p = Poly::from_roots(&want).scale(c(2.0, 1.0));
        let mut got = p.roots().unwrap();
        for w in want {
            let (i, d) = got
                .iter()
                .enumerate()
                .map(|(i, r)| (i, (r - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d < 1e-12, "root {w} missed by {d}");
            got.remove(i);
        }
    }
}
