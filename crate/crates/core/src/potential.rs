//! Regular polynomial double-well potentials.

use crate::error::{ChbError, Result};

/// Padding added to the observed range before bounding the curvature.
pub const STAB_RANGE_PAD: f64 = 0.1;
/// Safety factor on the curvature bound.
pub const STAB_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `F(s) = (s² − 1)²`
    Quartic,
    /// `F(s) = Σ c_k s^k`, degree ≤ 4.
    Polynomial(Vec<f64>),
}

/// `(F, f, f′)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValues {
    pub big_f: f64,
    pub f: f64,
    pub df: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Quartic
    }
}

impl Potential {
    /// Builds a polynomial potential from the coefficients of `F`, checking
    /// `f(0) = 0`, at most cubic growth of `f`, and boundedness from below.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ChbError::param("potential.coeffs", "coefficients must be finite"));
        }
        let mut c = coeffs;
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        if c.len() > 5 {
            return Err(ChbError::param(
                "potential.coeffs",
                "degree must be at most 4 (|f(s)| <= c(1+|s|^3))",
            ));
        }
        if c.get(1).copied().unwrap_or(0.0) != 0.0 {
            return Err(ChbError::param("potential.coeffs", "f(0) must vanish (c1 = 0)"));
        }
        let degree = c.len() - 1;
        let lead = c[degree];
        let bounded_below = match degree {
            0 => true,
            2 | 4 => lead > 0.0,
            _ => false,
        };
        if !bounded_below {
            return Err(ChbError::param(
                "potential.coeffs",
                "F must be bounded below (even degree, positive leading coefficient)",
            ));
        }
        Ok(Potential::Polynomial(c))
    }

    /// Coefficients of `F` in increasing degree.
    pub fn coeffs(&self) -> Vec<f64> {
        match self {
            Potential::Quartic => vec![1.0, 0.0, -2.0, 0.0, 1.0],
            Potential::Polynomial(c) => c.clone(),
        }
    }

    pub fn big_f(&self, s: f64) -> f64 {
        match self {
            Potential::Quartic => {
                let t = s * s - 1.0;
                t * t
            }
            Potential::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ck| acc * s + ck),
        }
    }

    /// `f = F′`
    pub fn f(&self, s: f64) -> f64 {
        match self {
            Potential::Quartic => 4.0 * s * (s * s - 1.0),
            Potential::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, ck)| acc * s + k as f64 * ck),
        }
    }

    /// `f′ = F″`
    pub fn df(&self, s: f64) -> f64 {
        match self {
            Potential::Quartic => 12.0 * s * s - 4.0,
            Potential::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, ck)| acc * s + (k * (k - 1)) as f64 * ck),
        }
    }

    /// `f″ = F‴`
    pub fn d2f(&self, s: f64) -> f64 {
        match self {
            Potential::Quartic => 24.0 * s,
            Potential::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(3)
                .rev()
                .fold(0.0, |acc, (k, ck)| acc * s + (k * (k - 1) * (k - 2)) as f64 * ck),
        }
    }

    pub fn eval(&self, s: f64) -> Result<PotentialValues> {
        if !s.is_finite() {
            return Err(ChbError::NonFinite(format!("potential argument {s}")));
        }
        Ok(PotentialValues {
            big_f: self.big_f(s),
            f: self.f(s),
            df: self.df(s),
        })
    }

    /// Exact maximum of `f′` on `[lo, hi]` (f′ is at most quadratic).
    pub fn max_curvature(&self, lo: f64, hi: f64) -> f64 {
        let c = self.coeffs();
        let mut best = self.df(lo).max(self.df(hi));
        // f'' = 6 c3 + 24 c4 s vanishes at the vertex of f'.
        let c3 = c.get(3).copied().unwrap_or(0.0);
        let c4 = c.get(4).copied().unwrap_or(0.0);
        if c4 != 0.0 {
            let s = -6.0 * c3 / (24.0 * c4);
            if s > lo && s < hi {
                best = best.max(self.df(s));
            }
        }
        best
    }

    /// Stabilization constant `S` for the linearly stabilized splitting:
    /// `1.1 · max f′ / 2` over `[lo − 0.1, hi + 0.1]`, clamped at zero.
    pub fn stabilization(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let m = self.max_curvature(lo - STAB_RANGE_PAD, hi + STAB_RANGE_PAD);
        (STAB_SAFETY * m / 2.0).max(0.0)
    }

    /// Lower bound of `F` on the real line (the `c` of `F(s) ≥ −c`),
    /// found from the critical points of `F`.
    pub fn lower_bound(&self) -> f64 {
        let mut candidates = vec![0.0];
        match self {
            Potential::Quartic => candidates.extend([-1.0, 1.0]),
            Potential::Polynomial(c) => {
                // f is at most cubic: bracket its roots on a wide scan.
                let scale = 1.0 + c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let lim = 4.0 * scale;
                let n = 4000;
                let step = 2.0 * lim / n as f64;
                let mut a = -lim;
                for _ in 0..n {
                    let b = a + step;
                    if self.f(a) * self.f(b) <= 0.0 {
                        let (mut l, mut r) = (a, b);
                        for _ in 0..80 {
                            let m = 0.5 * (l + r);
                            if self.f(l) * self.f(m) <= 0.0 {
                                r = m;
                            } else {
                                l = m;
                            }
                        }
                        candidates.push(0.5 * (l + r));
                    }
                    a = b;
                }
            }
        }
        candidates
            .into_iter()
            .map(|s| self.big_f(s))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let p = Potential::Quartic;
        let v = p.eval(0.0).unwrap();
        assert_eq!((v.big_f, v.f, v.df), (1.0, 0.0, -4.0));
        for s in [-1.0, 1.0] {
            let v = p.eval(s).unwrap();
            assert_eq!((v.big_f, v.f, v.df), (0.0, 0.0, 8.0));
        }
        let v = p.eval(0.5).unwrap();
        assert!((v.big_f - 0.5625).abs() < 1e-15);
        assert!((v.f + 1.5).abs() < 1e-15);
        assert!((v.df + 1.0).abs() < 1e-15);
        // autodifference cross-check of f at 0.5
        let h = 1e-6;
        let fd = (p.big_f(0.5 + h) - p.big_f(0.5 - h)) / (2.0 * h);
        assert!((fd - v.f).abs() < 1e-8);
        assert!(p.eval(f64::NAN).is_err());
    }

    #[test]
    fn polynomial_matches_quartic() {
        let q = Potential::Quartic;
        let p = Potential::polynomial(q.coeffs()).unwrap();
        for k in -20..=20 {
            let s = k as f64 * 0.13;
            assert!((q.big_f(s) - p.big_f(s)).abs() < 1e-12);
            assert!((q.f(s) - p.f(s)).abs() < 1e-12);
            assert!((q.df(s) - p.df(s)).abs() < 1e-12);
            assert!((q.d2f(s) - p.d2f(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_validation() {
        assert!(Potential::polynomial(vec![0.0, 1.0, 1.0]).is_err()); // f(0) != 0
        assert!(Potential::polynomial(vec![0.0, 0.0, 0.0, 1.0]).is_err()); // cubic F
        assert!(Potential::polynomial(vec![0.0, 0.0, 1.0, 0.0, -1.0]).is_err()); // unbounded
        assert!(Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err()); // degree 5
        assert!(Potential::polynomial(vec![0.0, 0.0, 2.0]).is_ok());
    }

    #[test]
    fn stabilization_examples() {
        let q = Potential::Quartic;
        let s = q.stabilization(-1.0, 1.0);
        assert!(s >= 1.1 * (12.0 * 1.21 - 4.0) / 2.0 - 1e-12);
        assert!((s - 5.786).abs() < 1e-3);
        let s = q.stabilization(-1.2, 1.2);
        assert!(s >= 1.1 * (12.0 * 1.3 * 1.3 - 4.0) / 2.0 - 1e-12);
        // range [0, 0]: curvature is negative on the padded range, S clamps to 0
        assert_eq!(q.stabilization(0.0, 0.0), 0.0);
        let k = 3.0;
        let lin = Potential::polynomial(vec![0.0, 0.0, k / 2.0]).unwrap();
        for (lo, hi) in [(-5.0, 5.0), (0.0, 0.1)] {
            assert!(lin.stabilization(lo, hi) >= 0.55 * k - 1e-12);
        }
    }

    #[test]
    fn bounded_below() {
        assert_eq!(Potential::Quartic.lower_bound(), 0.0);
        let p = Potential::polynomial(vec![0.0, 0.0, -1.0, 0.0, 0.25]).unwrap();
        // minima at s = ±√2: F = -1
        assert!((p.lower_bound() + 1.0).abs() < 1e-9);
    }
}
