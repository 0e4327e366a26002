//! Constrained path minimization on a uniform grid.
//!
//! The action is discretized with the midpoint rule (values averaged, slopes
//! differenced over each interval) and the average constraint with the
//! trapezoid rule, both second order. The constraint is enforced by an
//! augmented Lagrangian whose inner problems are solved with damped Newton
//! steps: the banded action Hessian is factored once per step and the dense
//! rank-one penalty term is folded in with Sherman-Morrison.

use super::banded::BandMatrix;
use super::jet::Jet;
use crate::model::Curve;

pub type Jet4 = Jet<4>;

/// Lagrangian density in `F` fields: variables `y_k -> k`, `y_k' -> F + k`.
pub trait Integrand: Sync {
    fn fields(&self) -> usize;
    fn jet(&self, y: [f64; 2], p: [f64; 2]) -> Jet4;
}

/// `f(e^u)` as a jet in `u`.
pub fn curve_of_log(curve: &Curve, u: Jet4) -> Jet4 {
    let [f0, f1, f2] = curve.log_jet(u.v);
    u.compose(f0, f1, f2)
}

/// Two-field LSV action density.
pub struct LsvIntegrand<'a> {
    pub eta: &'a Curve,
    pub sigma: &'a Curve,
    pub rho: f64,
}

impl Integrand for LsvIntegrand<'_> {
    fn fields(&self) -> usize {
        2
    }

    fn jet(&self, y: [f64; 2], p: [f64; 2]) -> Jet4 {
        let g = Jet4::var(y[0], 0);
        let h = Jet4::var(y[1], 1);
        let gp = Jet4::var(p[0], 2);
        let hp = Jet4::var(p[1], 3);
        let big_g = gp / (curve_of_log(self.eta, g) * (h * 0.5).exp());
        let big_h = hp / curve_of_log(self.sigma, h);
        let quad = big_g.square() - big_g * big_h * (2.0 * self.rho) + big_h.square();
        quad * (0.5 / (1.0 - self.rho * self.rho))
    }
}

/// Local-volatility action `(1/2) (g' / (eta(e^g) sqrt(V0)))^2`.
pub struct LocalVolIntegrand<'a> {
    pub eta: &'a Curve,
    pub sqrt_v0: f64,
}

impl Integrand for LocalVolIntegrand<'_> {
    fn fields(&self) -> usize {
        1
    }

    fn jet(&self, y: [f64; 2], p: [f64; 2]) -> Jet4 {
        let g = Jet4::var(y[0], 0);
        let gp = Jet4::var(p[0], 1);
        (gp / (curve_of_log(self.eta, g) * self.sqrt_v0)).square() * 0.5
    }
}

/// Variance-only action `(1/2) (h' / sigma(e^h))^2`.
pub struct VarianceIntegrand<'a> {
    pub sigma: &'a Curve,
}

impl Integrand for VarianceIntegrand<'_> {
    fn fields(&self) -> usize {
        1
    }

    fn jet(&self, y: [f64; 2], p: [f64; 2]) -> Jet4 {
        let h = Jet4::var(y[0], 0);
        let hp = Jet4::var(p[0], 1);
        (hp / curve_of_log(self.sigma, h)).square() * 0.5
    }
}

/// Map from the constrained field to the asset level, with two derivatives.
pub trait NodeMap: Sync {
    fn phi(&self, y: f64) -> Option<[f64; 3]>;
}

pub struct ExpMap;

impl NodeMap for ExpMap {
    fn phi(&self, y: f64) -> Option<[f64; 3]> {
        let e = y.exp();
        e.is_finite().then_some([e, e, e])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// `int phi(y) dt = K`.
    Fixed(f64),
    /// `int e^g dt = kappa e^{g(1)}`.
    Floating(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_constraint: f64,
    pub tol_gradient: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

pub struct Problem<'a> {
    pub integrand: &'a dyn Integrand,
    pub map: &'a dyn NodeMap,
    pub target: Target,
    pub start: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    /// Node values, `n_intervals + 1` entries.
    pub nodes: Vec<[f64; 2]>,
    pub rate: f64,
    pub multiplier: f64,
    pub constraint: f64,
    pub gradient: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Constraint {
    value: f64,
    grad: Vec<f64>,
    diag: Vec<f64>,
}

impl Problem<'_> {
    fn nf(&self) -> usize {
        self.integrand.fields()
    }

    fn element(&self, a: [f64; 2], b: [f64; 2], dt: f64) -> Jet4 {
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let slope = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt];
        self.integrand.jet(mid, slope)
    }

    /// Discrete action.
    pub fn action(&self, nodes: &[[f64; 2]]) -> f64 {
        let dt = 1.0 / (nodes.len() - 1) as f64;
        let mut total = 0.0;
        for w in nodes.windows(2) {
            total += dt * self.element(w[0], w[1], dt).v;
        }
        if total.is_finite() {
            total
        } else {
            f64::NAN
        }
    }

    /// Action, gradient and banded Hessian in the unknowns (nodes `1..=N`).
    fn assemble(&self, nodes: &[[f64; 2]]) -> (f64, Vec<f64>, BandMatrix) {
        let nf = self.nf();
        let n_int = nodes.len() - 1;
        let dt = 1.0 / n_int as f64;
        let n = nf * n_int;
        let band = 2 * nf - 1;
        let mut grad = vec![0.0; n];
        let mut hess = BandMatrix::zeros(n, band, band);
        let mut total = 0.0;
        for i in 0..n_int {
            let jet = self.element(nodes[i], nodes[i + 1], dt);
            total += dt * jet.v;
            // local variables (node, field) -> partials of (mid_k, slope_k)
            let mut locals: Vec<(Option<usize>, [f64; 4])> = Vec::with_capacity(2 * nf);
            for (node, side) in [(i, -1.0), (i + 1, 1.0)] {
                for k in 0..nf {
                    let mut a = [0.0; 4];
                    a[k] = 0.5;
                    a[nf + k] = side / dt;
                    let global = (node > 0).then(|| (node - 1) * nf + k);
                    locals.push((global, a));
                }
            }
            let m = 2 * nf;
            for &(ga, ref aa) in &locals {
                let Some(ga) = ga else { continue };
                let mut gsum = 0.0;
                for j in 0..m {
                    gsum += aa[j] * jet.d[j];
                }
                grad[ga] += dt * gsum;
                for &(gb, ref bb) in &locals {
                    let Some(gb) = gb else { continue };
                    let mut hsum = 0.0;
                    for j in 0..m {
                        if aa[j] == 0.0 {
                            continue;
                        }
                        for l in 0..m {
                            hsum += aa[j] * jet.h[j][l] * bb[l];
                        }
                    }
                    hess.add(ga, gb, dt * hsum);
                }
            }
        }
        (total, grad, hess)
    }

    fn constraint_value(&self, nodes: &[[f64; 2]]) -> Option<f64> {
        let n_int = nodes.len() - 1;
        let dt = 1.0 / n_int as f64;
        let mut sum = 0.0;
        for (i, node) in nodes.iter().enumerate() {
            let w = if i == 0 || i == n_int { 0.5 } else { 1.0 };
            sum += w * self.map.phi(node[0])?[0];
        }
        let avg = dt * sum;
        let value = match self.target {
            Target::Fixed(k) => avg - k,
            Target::Floating(kappa) => avg - kappa * nodes[n_int][0].exp(),
        };
        value.is_finite().then_some(value)
    }

    fn constraint(&self, nodes: &[[f64; 2]]) -> Option<Constraint> {
        let nf = self.nf();
        let n_int = nodes.len() - 1;
        let dt = 1.0 / n_int as f64;
        let n = nf * n_int;
        let mut grad = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sum = 0.0;
        for (i, node) in nodes.iter().enumerate() {
            let w = if i == 0 || i == n_int { 0.5 } else { 1.0 };
            let [p0, p1, p2] = self.map.phi(node[0])?;
            sum += w * p0;
            if i > 0 {
                grad[(i - 1) * nf] = dt * w * p1;
                diag[(i - 1) * nf] = dt * w * p2;
            }
        }
        let mut value = dt * sum;
        match self.target {
            Target::Fixed(k) => value -= k,
            Target::Floating(kappa) => {
                let e = kappa * nodes[n_int][0].exp();
                value -= e;
                grad[(n_int - 1) * nf] -= e;
                diag[(n_int - 1) * nf] -= e;
            }
        }
        value.is_finite().then_some(Constraint { value, grad, diag })
    }

    fn apply(&self, nodes: &[[f64; 2]], step: &[f64], alpha: f64) -> Vec<[f64; 2]> {
        let nf = self.nf();
        let mut out = nodes.to_vec();
        for (i, node) in out.iter_mut().enumerate().skip(1) {
            for k in 0..nf {
                node[k] += alpha * step[(i - 1) * nf + k];
            }
        }
        out
    }

    /// Multiplier minimizing the stationarity residual at `nodes`.
    pub fn least_squares_multiplier(&self, nodes: &[[f64; 2]]) -> f64 {
        let (_, grad, _) = self.assemble(nodes);
        match self.constraint(nodes) {
            Some(c) => {
                let num: f64 = grad.iter().zip(&c.grad).map(|(a, b)| a * b).sum();
                let den: f64 = c.grad.iter().map(|b| b * b).sum();
                if den > 0.0 {
                    -num / den
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Stationarity residual `(dAction + lambda dC) / dt` on every unknown.
    pub fn stationarity(&self, nodes: &[[f64; 2]], lambda: f64) -> Option<Vec<f64>> {
        let dt = 1.0 / (nodes.len() - 1) as f64;
        let (_, grad, _) = self.assemble(nodes);
        let c = self.constraint(nodes)?;
        Some(
            grad.iter()
                .zip(&c.grad)
                .map(|(g, cg)| (g + lambda * cg) / dt)
                .collect(),
        )
    }

    fn merit(&self, nodes: &[[f64; 2]], mu: f64, gamma: f64) -> f64 {
        let a = self.action(nodes);
        match self.constraint_value(nodes) {
            Some(c) if a.is_finite() => a + mu * c + 0.5 * gamma * c * c,
            _ => f64::NAN,
        }
    }

    fn penalized_gradient_norm(&self, nodes: &[[f64; 2]], mu: f64, gamma: f64) -> f64 {
        let dt = 1.0 / (nodes.len() - 1) as f64;
        let (_, agrad, _) = self.assemble(nodes);
        match self.constraint(nodes) {
            Some(c) => {
                let weight = mu + gamma * c.value;
                agrad
                    .iter()
                    .zip(&c.grad)
                    .fold(0.0_f64, |m, (a, b)| m.max((a + weight * b).abs()))
                    / dt
            }
            None => f64::INFINITY,
        }
    }

    /// Newton iterations on the augmented Lagrangian at fixed `(mu, gamma)`.
    fn inner(
        &self,
        nodes: &mut Vec<[f64; 2]>,
        mu: f64,
        gamma: f64,
        settings: &SolverSettings,
        iterations: &mut usize,
    ) -> (f64, f64) {
        let dt = 1.0 / (nodes.len() - 1) as f64;
        let nf = self.nf();
        let mut tau = 0.0_f64;
        let mut gnorm = f64::INFINITY;
        let mut gtol = settings.tol_gradient;
        for _ in 0..settings.max_inner {
            let (action, agrad, mut hess) = self.assemble(nodes);
            let Some(c) = self.constraint(nodes) else {
                return (f64::INFINITY, gtol);
            };
            if !action.is_finite() {
                return (f64::INFINITY, gtol);
            }
            let weight = mu + gamma * c.value;
            let grad: Vec<f64> = agrad
                .iter()
                .zip(&c.grad)
                .map(|(a, b)| a + weight * b)
                .collect();
            gnorm = grad.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / dt;
            let n = grad.len();
            for i in 0..n {
                hess.add(i, i, weight * c.diag[i]);
            }
            // smallest gradient resolvable when each unknown moves by one ulp
            let floor = (0..n).fold(0.0_f64, |m, i| {
                let y = nodes[i / nf + 1][i % nf];
                m.max(hess.get(i, i).abs() * (1.0 + y.abs()))
            }) * 8.0
                * f64::EPSILON
                / dt;
            gtol = settings.tol_gradient.max(floor);
            if gnorm <= gtol {
                break;
            }
            *iterations += 1;
            let scale = (0..n).fold(0.0_f64, |m, i| m.max(hess.get(i, i).abs())).max(1e-300);
            let merit0 = action + mu * c.value + 0.5 * gamma * c.value * c.value;
            let mut accepted = false;
            for _ in 0..30 {
                let mut shifted = hess.clone();
                if tau > 0.0 {
                    for i in 0..n {
                        shifted.add(i, i, tau * scale);
                    }
                }
                let step = shifted.factor().map(|lu| {
                    let z1 = lu.solve(&grad);
                    let z2 = lu.solve(&c.grad);
                    let vz1: f64 = c.grad.iter().zip(&z1).map(|(a, b)| a * b).sum();
                    let vz2: f64 = c.grad.iter().zip(&z2).map(|(a, b)| a * b).sum();
                    let f = gamma * vz1 / (1.0 + gamma * vz2);
                    z1.iter().zip(&z2).map(|(a, b)| -(a - f * b)).collect::<Vec<f64>>()
                });
                let Some(step) = step else {
                    tau = (tau * 10.0).max(1e-10);
                    continue;
                };
                let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
                if !slope.is_finite() || slope >= 0.0 {
                    tau = (tau * 10.0).max(1e-10);
                    continue;
                }
                let mut alpha = 1.0;
                for _ in 0..40 {
                    let trial = self.apply(nodes, &step, alpha);
                    let m = self.merit(&trial, mu, gamma);
                    if m.is_finite() && m <= merit0 + 1e-4 * alpha * slope {
                        *nodes = trial;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    // merit flat at rounding level: fall back to gradient decrease
                    let trial = self.apply(nodes, &step, 1.0);
                    let m = self.merit(&trial, mu, gamma);
                    let noise = 1e-12 * merit0.abs().max(1e-300);
                    if m.is_finite()
                        && m <= merit0 + noise
                        && self.penalized_gradient_norm(&trial, mu, gamma) < 0.9 * gnorm
                    {
                        *nodes = trial;
                        accepted = true;
                    }
                }
                if accepted {
                    tau *= 0.1;
                    if tau < 1e-12 {
                        tau = 0.0;
                    }
                    break;
                }
                // no decrease along the Newton direction: flat merit at
                // rounding level, or a poor model; damp and retry
                if slope.abs() < 1e-14 * merit0.abs().max(1e-300) {
                    return (gnorm, gtol);
                }
                tau = (tau * 10.0).max(1e-10);
            }
            if !accepted {
                return (gnorm, gtol);
            }
        }
        (gnorm, gtol)
    }

    /// Solve on the grid defined by `init` (`N + 1` nodes, `init[0]` fixed).
    pub fn solve(&self, init: Vec<[f64; 2]>, mu0: f64, settings: &SolverSettings) -> GridSolution {
        let mut nodes = init;
        nodes[0] = self.start;
        let mut mu = mu0;
        let mut gamma = 100.0;
        let mut iterations = 0;
        let mut prev_c = f64::INFINITY;
        let mut converged = false;
        let mut gnorm = f64::INFINITY;
        let mut c_value = f64::NAN;
        for _ in 0..settings.max_outer {
            let (g, gtol) = self.inner(&mut nodes, mu, gamma, settings, &mut iterations);
            gnorm = g;
            c_value = self.constraint_value(&nodes).unwrap_or(f64::NAN);
            if !c_value.is_finite() || !gnorm.is_finite() {
                break;
            }
            let multiplier = mu + gamma * c_value;
            if c_value.abs() <= settings.tol_constraint && gnorm <= gtol {
                mu = multiplier;
                converged = true;
                break;
            }
            mu = multiplier;
            if c_value.abs() > 0.25 * prev_c.abs() {
                gamma = (gamma * 2.0).min(1e14);
            }
            prev_c = c_value;
        }
        GridSolution {
            rate: self.action(&nodes),
            nodes,
            multiplier: mu,
            constraint: c_value,
            gradient: gnorm,
            converged,
            iterations,
        }
    }
}

/// Linear interpolation of node values onto a uniform grid of `n_int` intervals.
pub fn resample(nodes: &[[f64; 2]], n_int: usize) -> Vec<[f64; 2]> {
    let m = nodes.len() - 1;
    (0..=n_int)
        .map(|i| {
            let s = i as f64 / n_int as f64 * m as f64;
            let j = (s.floor() as usize).min(m - 1);
            let w = s - j as f64;
            [
                (1.0 - w) * nodes[j][0] + w * nodes[j + 1][0],
                (1.0 - w) * nodes[j][1] + w * nodes[j + 1][1],
            ]
        })
        .collect()
}
