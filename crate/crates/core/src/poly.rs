//! Dense real polynomials on `[0, 1]`, stored lowest degree first.

use std::ops::{Add, Mul};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k + 1) as f64),
        );
        Poly::new(out)
    }

    pub fn integral_01(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c / (k + 1) as f64)
            .sum()
    }

    /// The unique `q` with `q'' = self`, `q(0) = 0` and `q'(1) = 0`.
    pub fn integrate_bc(&self) -> Poly {
        let a = self.antiderivative();
        let shift = a.eval(1.0);
        let mut dq = a;
        if let Some(c) = dq.coeffs.first_mut() {
            *c -= shift;
        }
        dq.antiderivative()
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| self.coeffs.get(k).unwrap_or(&0.0) + rhs.coeffs.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_calculus() {
        let p = Poly::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 6.0]);
        assert!((p.integral_01() - 1.0).abs() < 1e-15);
        let prod = &p * &Poly::new(vec![0.0, 1.0]);
        assert_eq!(prod.coeffs(), &[0.0, 1.0, -2.0, 3.0]);
        let sum = &p + &Poly::new(vec![1.0]);
        assert_eq!(sum.coeffs(), &[2.0, -2.0, 3.0]);
    }

    #[test]
    fn boundary_integration() {
        // q'' = -3 gives 1.5 (2t - t^2)
        let q = Poly::new(vec![-3.0]).integrate_bc();
        assert_eq!(q.eval(0.0), 0.0);
        assert!(q.derivative().eval(1.0).abs() < 1e-15);
        assert!((q.eval(1.0) - 1.5).abs() < 1e-15);
        assert!((q.integral_01() - 1.0).abs() < 1e-15);
    }
}
