//! Perfect-correlation reduction.
//!
//! With `rho = +-1` the asset path is slaved to the variance path,
//! `ln S = ln F(e^h)`, where `F` solves
//! `int_{S0}^{F(v)} dS / (S eta(S)) = +- int_{V0}^{v} dv / (sqrt(v) sigma(v))`.
//! Both sides are evaluated in log variables by adaptive Simpson and the
//! left side is inverted by monotone bisection.

use super::quad::adaptive_simpson;
use super::solver::NodeMap;
use crate::model::Curve;

const QUAD_TOL: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-12;

pub struct PmMap<'a> {
    pub eta: &'a Curve,
    pub sigma: &'a Curve,
    pub sign: f64,
    pub log_s0: f64,
    pub log_v0: f64,
}

impl PmMap<'_> {
    fn asset_integral(&self, y: f64) -> f64 {
        adaptive_simpson(|u| 1.0 / self.eta.value(u.exp()), self.log_s0, y, QUAD_TOL)
    }

    fn variance_integral(&self, h: f64) -> f64 {
        self.sign
            * adaptive_simpson(
                |w| (0.5 * w).exp() / self.sigma.value(w.exp()),
                self.log_v0,
                h,
                QUAD_TOL,
            )
    }

    /// `ln F(e^h)`.
    pub fn log_map(&self, h: f64) -> Option<f64> {
        let target = self.variance_integral(h);
        if !target.is_finite() {
            return None;
        }
        if target == 0.0 {
            return Some(self.log_s0);
        }
        let dir = target.signum();
        let mut near = self.log_s0;
        let mut step = target.abs().max(1e-6);
        let mut far = near + dir * step;
        let mut expansions = 0;
        loop {
            let a = self.asset_integral(far);
            if !a.is_finite() {
                return None;
            }
            if dir * (a - target) >= 0.0 {
                break;
            }
            near = far;
            step *= 2.0;
            far += dir * step;
            expansions += 1;
            if expansions > 60 {
                return None;
            }
        }
        let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if self.asset_integral(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

impl NodeMap for PmMap<'_> {
    fn phi(&self, h: f64) -> Option<[f64; 3]> {
        let lp = self.log_map(h)?;
        let phi = lp.exp();
        let [e, e_g, _] = self.eta.log_jet(lp);
        let [s, s_h, _] = self.sigma.log_jet(h);
        if !(e > 0.0) || !(s > 0.0) {
            return None;
        }
        let k = self.sign * e * (0.5 * h).exp() / s;
        let dk = k * (e_g * k / e + 0.5 - s_h / s);
        let out = [phi, phi * k, phi * (k * k + dk)];
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sabr_map_matches_closed_form() {
        let eta = Curve::Constant(1.0);
        let sigma = Curve::Constant(2.0);
        for sign in [1.0, -1.0] {
            let map = PmMap {
                eta: &eta,
                sigma: &sigma,
                sign,
                log_s0: 0.2,
                log_v0: 0.1_f64.ln(),
            };
            for v in [0.05_f64, 0.1, 0.13, 0.3] {
                let exact = 0.2 + sign * (2.0 / 2.0) * (v.sqrt() - 0.1_f64.sqrt());
                let got = map.log_map(v.ln()).unwrap();
                assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
            }
            let h = 0.12_f64.ln();
            let [p, p1, p2] = map.phi(h).unwrap();
            let k = sign * (0.5 * h).exp() / 2.0;
            assert!((p1 - p * k).abs() < 1e-9);
            assert!((p2 - p * (k * k + 0.5 * k)).abs() < 1e-9);
        }
    }

    #[test]
    fn nonconstant_eta_inverts_consistently() {
        let eta = Curve::Tanh {
            f0: 1.0,
            f1: -0.5,
            x0: 0.0,
            anchor: 1.0,
        };
        let sigma = Curve::Constant(1.5);
        let map = PmMap {
            eta: &eta,
            sigma: &sigma,
            sign: 1.0,
            log_s0: 0.0,
            log_v0: 0.1_f64.ln(),
        };
        let h = 0.15_f64.ln();
        let y = map.log_map(h).unwrap();
        assert!((map.asset_integral(y) - map.variance_integral(h)).abs() < 1e-11);
        let d = 1e-5;
        let p1 = map.phi(h).unwrap()[1];
        let fd = ((map.log_map(h + d).unwrap()).exp() - (map.log_map(h - d).unwrap()).exp()) / (2.0 * d);
        assert!((fd - p1).abs() < 1e-6);
    }
}
