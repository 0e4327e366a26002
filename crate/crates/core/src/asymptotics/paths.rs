//! Optimal-path expansion `g = ln S0 + sum x^k g_k`, `h = ln V0 + sum x^k h_k`.
//!
//! Each `g_k''` and `h_k''` is a polynomial in `t`; the paths follow from
//! `q(0) = 0`, `q'(1) = 0`.

use crate::error::{invalid, Result};
use crate::model::ExpansionInputs;
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    /// `g_1, g_2, g_3`.
    pub g: [Poly; 3],
    /// `h_1, h_2, h_3`.
    pub h: [Poly; 3],
    pub lambda: [f64; 3],
    pub log_s0: f64,
    pub log_v0: f64,
}

/// Path values and first two time derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub g: [f64; 3],
    pub h: [f64; 3],
}

impl PathSeries {
    /// Second derivatives `g_k''` for `k = 1, 2, 3`.
    pub fn g_second(&self) -> [Poly; 3] {
        self.g.clone().map(|p| p.derivative().derivative())
    }

    pub fn h_second(&self) -> [Poly; 3] {
        self.h.clone().map(|p| p.derivative().derivative())
    }

    pub fn path_at(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let p = self.point_at(x, t)?;
        Ok((p.g[0], p.h[0]))
    }

    /// `(g, g', g'')` and `(h, h', h'')` of the order-3 truncation.
    pub fn point_at(&self, x: f64, t: f64) -> Result<PathPoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid("t", format!("must lie in [0, 1], got {t}")));
        }
        let eval = |polys: &[Poly; 3], base: f64| {
            let mut out = [base, 0.0, 0.0];
            let mut xk = 1.0;
            for p in polys {
                xk *= x;
                let d1 = p.derivative();
                let d2 = d1.derivative();
                out[0] += xk * p.eval(t);
                out[1] += xk * d1.eval(t);
                out[2] += xk * d2.eval(t);
            }
            out
        };
        Ok(PathPoint {
            g: eval(&self.g, self.log_s0),
            h: eval(&self.h, self.log_v0),
        })
    }

    pub fn lambda_at(&self, x: f64) -> f64 {
        x * (self.lambda[0] + x * (self.lambda[1] + x * self.lambda[2]))
    }
}

pub fn optimal_paths(inputs: &ExpansionInputs) -> Result<PathSeries> {
    inputs.validate()?;
    let &ExpansionInputs {
        eta0: e0,
        eta1: e1,
        eta2: e2,
        sigma0: s0,
        sigma1: s1,
        sigma2: s2,
        rho: r,
        s0: spot,
        v0,
    } = inputs;
    let q = v0.sqrt();
    let q2 = v0;
    let q3 = v0 * q;
    let rs = r * s0 / q;

    let g1 = Poly::new(vec![-3.0]).integrate_bc();
    let h1 = Poly::new(vec![-3.0 * r * s0 / (e0 * q)]).integrate_bc();
    let lambda1 = -3.0 / (spot * e0 * e0 * v0);

    let a = 3.9 + 0.9 / e0 * (16.0 * e1 + 8.0 * rs);
    let b = -9.0 - 9.0 / e0 * (4.0 * e1 + 2.0 * rs);
    let c = 4.5 + (18.0 * e1 + 9.0 * rs) / e0;
    let ab = 3.0 * s0 / (10.0 * e0 * e0 * v0)
        * (3.0 * (-5.0 + 8.0 * r * r) * s0 + r * (30.0 * r * s1 + (13.0 * e0 + 18.0 * e1) * q));
    let bracket = (-2.0 + 3.0 * r * r) * s0 + 2.0 * r * (3.0 * r * s1 + (e0 + e1) * q);
    let bb = -4.5 * s0 / (e0 * e0 * v0) * bracket;
    let cb = -0.5 * bb;
    let g2 = Poly::new(vec![a, b, c]).integrate_bc();
    let h2 = Poly::new(vec![ab, bb, cb]).integrate_bc();
    let lambda2 = 0.3 / (e0.powi(3) * spot * v0 * q) * (9.0 * r * s0 + 13.0 * e0 * q + 18.0 * e1 * q);

    let (ee, rr, ss) = (e0 * e0, r * r, s0 * s0);
    let den2 = ee * q2;
    let c0 = (-949.0 * ee * q2 - 4248.0 * e0 * e1 * q2 + 2160.0 * e0 * e2 * q2
        - 2124.0 * e0 * q * r * s0
        - 7704.0 * e1 * e1 * q2
        - 7164.0 * e1 * q * r * s0
        - 3726.0 * rr * ss
        + 540.0 * rr * s0 * s1
        + 1800.0 * ss)
        / (350.0 * den2);
    let c1 = (288.0 * ee * q2 + 1620.0 * e0 * e1 * q2 + 1080.0 * e0 * e2 * q2
        + 810.0 * e0 * q * r * s0
        + 2412.0 * e1 * e1 * q2
        + 2682.0 * e1 * q * r * s0
        + 1053.0 * rr * ss
        + 270.0 * rr * s0 * s1
        - 450.0 * ss)
        / (20.0 * den2);
    let c2 = (-1008.0 * ee * q2 - 6300.0 * e0 * e1 * q2 - 7560.0 * e0 * e2 * q2
        - 3150.0 * e0 * q * r * s0
        - 8532.0 * e1 * e1 * q2
        - 10422.0 * e1 * q * r * s0
        - 3483.0 * rr * ss
        - 1890.0 * rr * s0 * s1
        + 1350.0 * ss)
        / (40.0 * den2);
    let c3 = (72.0 * ee * q2 + 468.0 * e0 * e1 * q2 + 648.0 * e0 * e2 * q2
        + 234.0 * e0 * q * r * s0
        + 612.0 * e1 * e1 * q2
        + 774.0 * e1 * q * r * s0
        + 243.0 * rr * ss
        + 162.0 * rr * s0 * s1
        - 90.0 * ss)
        / (4.0 * den2);
    let c4 = -0.25 * c3;

    let rrr = rr * r;
    let sss = ss * s0;
    let den3 = ee * e0 * q3;
    let cb0 = (-949.0 * ee * q2 * r * s0 - 2358.0 * e0 * e1 * q2 * r * s0
        + 2160.0 * e0 * e2 * q2 * r * s0
        - 2124.0 * e0 * q * rr * ss
        - 1890.0 * e0 * q * rr * s0 * s1
        + 945.0 * e0 * q * ss
        - 2664.0 * e1 * e1 * q2 * r * s0
        - 4644.0 * e1 * q * rr * ss
        - 5040.0 * e1 * q * rr * s0 * s1
        + 2520.0 * e1 * q * ss
        - 3726.0 * rrr * sss
        - 5130.0 * rrr * ss * s1
        + 3060.0 * r * sss
        + 3150.0 * r * ss * s1)
        / (350.0 * den3);
    let cb1 = (288.0 * ee * q2 * r * s0 + 756.0 * e0 * e1 * q2 * r * s0
        + 666.0 * e0 * q * rr * ss
        + 864.0 * e0 * q * rr * s0 * s1
        - 288.0 * e0 * q * ss
        + 468.0 * e1 * e1 * q2 * r * s0
        + 936.0 * e1 * q * rr * ss
        + 1404.0 * e1 * q * rr * s0 * s1
        - 468.0 * e1 * q * ss
        + 756.0 * rrr * sss
        + 2052.0 * rrr * ss * s1
        + 1080.0 * rrr * ss * s2
        + 540.0 * rrr * s0 * s1 * s1
        - 639.0 * r * sss
        - 1350.0 * r * ss * s1)
        / (20.0 * den3);
    let cb2 = (-1008.0 * ee * q2 * r * s0 - 2736.0 * e0 * e1 * q2 * r * s0
        - 1080.0 * e0 * e2 * q2 * r * s0
        - 2376.0 * e0 * q * rr * ss
        - 3564.0 * e0 * q * rr * s0 * s1
        + 1008.0 * e0 * q * ss
        - 1188.0 * e1 * e1 * q2 * r * s0
        - 2646.0 * e1 * q * rr * ss
        - 4104.0 * e1 * q * rr * s0 * s1
        + 1188.0 * e1 * q * ss
        - 2106.0 * rrr * sss
        - 7452.0 * rrr * ss * s1
        - 6480.0 * rrr * ss * s2
        - 3240.0 * rrr * s0 * s1 * s1
        + 1809.0 * r * sss
        + 5130.0 * r * ss * s1)
        / (40.0 * den3);
    let cb3 = (72.0 * ee * q2 * r * s0 + 198.0 * e0 * e1 * q2 * r * s0
        + 108.0 * e0 * e2 * q2 * r * s0
        + 171.0 * e0 * q * rr * ss
        + 270.0 * e0 * q * rr * s0 * s1
        - 72.0 * e0 * q * ss
        + 72.0 * e1 * e1 * q2 * r * s0
        + 171.0 * e1 * q * rr * ss
        + 270.0 * e1 * q * rr * s0 * s1
        - 72.0 * e1 * q * ss
        + 135.0 * rrr * sss
        + 540.0 * rrr * ss * s1
        + 540.0 * rrr * ss * s2
        + 270.0 * rrr * s0 * s1 * s1
        - 117.0 * r * sss
        - 378.0 * r * ss * s1)
        / (4.0 * den3);
    let cb4 = -0.25 * cb3;
    let g3 = Poly::new(vec![c0, c1, c2, c3, c4]).integrate_bc();
    let h3 = Poly::new(vec![cb0, cb1, cb2, cb3, cb4]).integrate_bc();
    let lambda3 = (-949.0 * ee * q2 - 2358.0 * e0 * e1 * q2 + 2160.0 * e0 * e2 * q2
        - 1179.0 * e0 * q * r * s0
        - 2664.0 * e1 * e1 * q2
        - 2124.0 * e1 * q * r * s0
        - 891.0 * rr * ss
        + 540.0 * rr * s0 * s1
        + 225.0 * ss)
        / (350.0 * spot * ee * ee * q2 * q2);

    Ok(PathSeries {
        g: [g1, g2, g3],
        h: [h1, h2, h3],
        lambda: [lambda1, lambda2, lambda3],
        log_s0: spot.ln(),
        log_v0: v0.ln(),
    })
}
