//! Local-stochastic volatility model family.
//!
//! A [`ModelSpec`] bundles the local volatility multiplier `eta(S)`, the
//! vol-of-vol `sigma(V)`, the variance drift `mu(V)` and the correlation
//! `rho`. The boundedness and Hölder conditions under which the short-maturity
//! results are proved are not checked at runtime; Heston is admitted even
//! though its `sigma(v) = xi / sqrt(v)` is unbounded.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, require_finite, require_positive, Error, Result};

/// A scalar function of a positive level (asset price or variance).
///
/// Parametric variants carry closed-form derivatives; [`Curve::Custom`] falls
/// back to central finite differences in the log variable.
#[derive(Clone)]
pub enum Curve {
    Constant(f64),
    /// `scale * x^exponent`.
    Power { scale: f64, exponent: f64 },
    /// `f0 + f1 * tanh(ln(x / anchor) - x0)`.
    Tanh { f0: f64, f1: f64, x0: f64, anchor: f64 },
    /// `kappa * (theta - x) / x`: the per-unit-variance Heston drift.
    MeanReversion { kappa: f64, theta: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curve::Constant(c) => write!(f, "Constant({c})"),
            Curve::Power { scale, exponent } => write!(f, "Power({scale} * x^{exponent})"),
            Curve::Tanh { f0, f1, x0, anchor } => {
                write!(f, "Tanh({f0} + {f1} tanh(ln(x/{anchor}) - {x0}))")
            }
            Curve::MeanReversion { kappa, theta } => {
                write!(f, "MeanReversion({kappa} ({theta} - x) / x)")
            }
            Curve::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Step used for finite differences in the log variable.
pub fn log_step(log_level: f64) -> f64 {
    1e-4_f64.max(1e-4 * log_level.abs())
}

impl Curve {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Curve::Custom(Arc::new(f))
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Curve::Constant(c) => c,
            Curve::Power { scale, exponent } => scale * x.powf(exponent),
            Curve::Tanh { f0, f1, x0, anchor } => f0 + f1 * ((x / anchor).ln() - x0).tanh(),
            Curve::MeanReversion { kappa, theta } => kappa * (theta - x) / x,
            Curve::Custom(ref f) => f(x),
        }
    }

    /// `x * f(x)`, with the removable singularity at `x = 0` resolved for the
    /// parametric forms (needed for truncated variance schemes).
    pub fn times_level(&self, x: f64) -> f64 {
        match *self {
            Curve::Constant(c) => c * x,
            Curve::Power { scale, exponent } => {
                if x == 0.0 {
                    if exponent + 1.0 > 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    scale * x.powf(exponent + 1.0)
                }
            }
            Curve::MeanReversion { kappa, theta } => kappa * (theta - x),
            _ => {
                if x == 0.0 {
                    0.0
                } else {
                    x * self.value(x)
                }
            }
        }
    }

    /// The constant value, if the curve is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Curve::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// `(F, F', F'')` of `F(u) = f(e^u)` with derivatives taken in `u`.
    pub fn log_jet(&self, u: f64) -> [f64; 3] {
        match *self {
            Curve::Constant(c) => [c, 0.0, 0.0],
            Curve::Power { scale, exponent } => {
                let v = scale * (exponent * u).exp();
                [v, exponent * v, exponent * exponent * v]
            }
            Curve::Tanh { f0, f1, x0, anchor } => {
                let th = (u - anchor.ln() - x0).tanh();
                let sech2 = 1.0 - th * th;
                [f0 + f1 * th, f1 * sech2, -2.0 * f1 * sech2 * th]
            }
            Curve::MeanReversion { kappa, theta } => {
                let a = kappa * theta * (-u).exp();
                [a - kappa, -a, a]
            }
            Curve::Custom(_) => self.log_jet_fd(u),
        }
    }

    /// Central three-point finite differences of `f(e^u)` in `u`.
    pub fn log_jet_fd(&self, u: f64) -> [f64; 3] {
        let h = log_step(u);
        let fm = self.value((u - h).exp());
        let f0 = self.value(u.exp());
        let fp = self.value((u + h).exp());
        [f0, (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Generic,
    Sabr,
    Heston,
    Tanh,
    LocalVol,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Generic => "generic",
            ModelKind::Sabr => "sabr",
            ModelKind::Heston => "heston",
            ModelKind::Tanh => "tanh",
            ModelKind::LocalVol => "local-vol",
        }
    }
}

/// LSV dynamics `dS/S = (r-q) dt + eta(S) sqrt(V) dB`, `dV/V = mu(V) dt + sigma(V) dZ`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub eta: Curve,
    pub sigma: Curve,
    pub mu: Curve,
    pub rho: f64,
    pub kind: ModelKind,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(invalid("rho", format!("must lie in [-1, 1], got {rho}")))
    }
}

impl ModelSpec {
    pub fn generic(eta: Curve, sigma: Curve, mu: Curve, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self {
            eta,
            sigma,
            mu,
            rho,
            kind: ModelKind::Generic,
        })
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        self.rho = rho;
        Ok(self)
    }

    /// The pure local-volatility limit `sigma = mu = 0` of this model.
    pub fn is_local_vol(&self) -> bool {
        self.kind == ModelKind::LocalVol
    }
}

/// Log-normal SABR: `eta = 1`, `sigma = sigma_const`, `mu = 0`.
pub fn make_sabr(sigma_const: f64) -> Result<ModelSpec> {
    require_positive("sigma", sigma_const)?;
    Ok(ModelSpec {
        eta: Curve::Constant(1.0),
        sigma: Curve::Constant(sigma_const),
        mu: Curve::Constant(0.0),
        rho: 0.0,
        kind: ModelKind::Sabr,
    })
}

/// Heston: `dV = kappa (theta - V) dt + xi sqrt(V) dZ`.
pub fn make_heston(kappa: f64, theta: f64, xi: f64) -> Result<ModelSpec> {
    require_positive("kappa", kappa)?;
    require_positive("theta", theta)?;
    require_positive("xi", xi)?;
    Ok(ModelSpec {
        eta: Curve::Constant(1.0),
        sigma: Curve::Power {
            scale: xi,
            exponent: -0.5,
        },
        mu: Curve::MeanReversion { kappa, theta },
        rho: 0.0,
        kind: ModelKind::Heston,
    })
}

/// Tanh local-stochastic model: `eta(S) = f0 + f1 tanh(ln(S/s0) - x0)` with
/// log-normal variance of constant vol-of-vol.
pub fn make_tanh(f0: f64, f1: f64, x0: f64, s0: f64, sigma_const: f64) -> Result<ModelSpec> {
    require_finite("f0", f0)?;
    require_finite("f1", f1)?;
    require_finite("x0", x0)?;
    require_positive("s0", s0)?;
    require_positive("sigma", sigma_const)?;
    if f0 - f1.abs() <= 0.0 {
        return Err(invalid(
            "f1",
            format!("eta = f0 + f1 tanh(.) must stay > 0; need f0 > |f1|, got f0={f0}, f1={f1}"),
        ));
    }
    Ok(ModelSpec {
        eta: Curve::Tanh {
            f0,
            f1,
            x0,
            anchor: s0,
        },
        sigma: Curve::Constant(sigma_const),
        mu: Curve::Constant(0.0),
        rho: 0.0,
        kind: ModelKind::Tanh,
    })
}

/// Pure local volatility: the variance is frozen at its initial value.
pub fn make_local_vol(eta: Curve) -> ModelSpec {
    ModelSpec {
        eta,
        sigma: Curve::Constant(0.0),
        mu: Curve::Constant(0.0),
        rho: 0.0,
        kind: ModelKind::LocalVol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub s0: f64,
    pub v0: f64,
    pub r: f64,
    pub q: f64,
}

impl MarketState {
    pub fn new(s0: f64, v0: f64, r: f64, q: f64) -> Result<Self> {
        require_positive("s0", s0)?;
        require_positive("v0", v0)?;
        require_finite("r", r)?;
        require_finite("q", q)?;
        Ok(Self { s0, v0, r, q })
    }
}

/// Coefficients of `eta` and `sigma` expanded in `ln(S/S0)` and `ln(V/V0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionInputs {
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
}

impl ExpansionInputs {
    pub fn validate(&self) -> Result<()> {
        require_positive("eta0", self.eta0)?;
        require_positive("v0", self.v0)?;
        require_positive("s0", self.s0)?;
        check_rho(self.rho)?;
        for (name, v) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("sigma0", self.sigma0),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
        ] {
            require_finite(name, v)?;
        }
        Ok(())
    }
}

/// Map a log-space jet `(F, F', F'')` to the three expansion coefficients.
fn coefficients_from_log_jet(jet: [f64; 3]) -> [f64; 3] {
    [jet[0], jet[1], 0.5 * jet[2]]
}

/// Series inputs for `model` around the market state.
///
/// Built-in kinds use closed forms; generic models go through
/// [`finite_difference_inputs`].
pub fn expansion_inputs(model: &ModelSpec, market: &MarketState) -> Result<ExpansionInputs> {
    let base = ExpansionInputs {
        eta0: 1.0,
        eta1: 0.0,
        eta2: 0.0,
        sigma0: 0.0,
        sigma1: 0.0,
        sigma2: 0.0,
        rho: model.rho,
        s0: market.s0,
        v0: market.v0,
    };
    let inputs = match (model.kind, &model.eta, &model.sigma) {
        (ModelKind::Sabr, _, Curve::Constant(sigma)) => ExpansionInputs {
            sigma0: *sigma,
            ..base
        },
        (ModelKind::Heston, _, Curve::Power { scale: xi, .. }) => {
            let s = xi / market.v0.sqrt();
            ExpansionInputs {
                sigma0: s,
                sigma1: -0.5 * s,
                sigma2: 0.125 * s,
                ..base
            }
        }
        (
            ModelKind::Tanh,
            Curve::Tanh {
                f0, f1, x0, anchor, ..
            },
            Curve::Constant(sigma),
        ) => {
            // Re-centre the kink on the market spot if it differs from the anchor.
            let x0 = x0 + (anchor / market.s0).ln();
            let th = x0.tanh();
            let sech2 = 1.0 / x0.cosh().powi(2);
            ExpansionInputs {
                eta0: f0 - f1 * th,
                eta1: f1 * sech2,
                eta2: f1 * sech2 * th,
                sigma0: *sigma,
                ..base
            }
        }
        (ModelKind::LocalVol, eta, _) => {
            let [e0, e1, e2] = coefficients_from_log_jet(eta.log_jet(market.s0.ln()));
            ExpansionInputs {
                eta0: e0,
                eta1: e1,
                eta2: e2,
                ..base
            }
        }
        _ => return finite_difference_inputs(model, market),
    };
    inputs.validate()?;
    Ok(inputs)
}

/// Series inputs from central finite differences of `eta` and `sigma` in the
/// log variable, whatever the model kind.
pub fn finite_difference_inputs(model: &ModelSpec, market: &MarketState) -> Result<ExpansionInputs> {
    let fd = |curve: &Curve, level: f64, what: &str| -> Result<[f64; 3]> {
        let u = level.ln();
        let h = log_step(u);
        if !(u + h > u && u - h < u) {
            return Err(Error::ModelEvaluation(format!(
                "finite-difference step underflow for {what} at level {level}"
            )));
        }
        let jet = curve.log_jet_fd(u);
        if jet.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelEvaluation(format!(
                "{what} is not finite near level {level}"
            )));
        }
        Ok(coefficients_from_log_jet(jet))
    };
    let [eta0, eta1, eta2] = fd(&model.eta, market.s0, "eta")?;
    let [sigma0, sigma1, sigma2] = if model.is_local_vol() {
        [0.0; 3]
    } else {
        fd(&model.sigma, market.v0, "sigma")?
    };
    let inputs = ExpansionInputs {
        eta0,
        eta1,
        eta2,
        sigma0,
        sigma1,
        sigma2,
        rho: model.rho,
        s0: market.s0,
        v0: market.v0,
    };
    inputs.validate()?;
    Ok(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn sabr_curves() {
        let m = make_sabr(2.0).unwrap();
        assert_eq!(m.eta.value(1.7), 1.0);
        assert_eq!(m.sigma.value(0.05), 2.0);
        assert_eq!(m.mu.value(0.3), 0.0);
        assert_eq!(m.kind, ModelKind::Sabr);
        assert!(make_sabr(0.0).is_err());
        assert!(make_sabr(-1.0).is_err());
    }

    #[test]
    fn heston_curves() {
        let m = make_heston(2.0, 0.09, 0.2).unwrap();
        assert!(close(m.sigma.value(0.04), 1.0, 1e-15));
        assert_eq!(m.mu.value(0.09), 0.0);
        assert!(close(m.mu.value(0.01), 16.0, 1e-14));
        assert_eq!(m.eta.value(3.0), 1.0);
        // full-truncation needs v * mu(v) and v * sigma(v) at v = 0
        assert!(close(m.mu.times_level(0.0), 0.18, 1e-15));
        assert_eq!(m.sigma.times_level(0.0), 0.0);
        assert!(make_heston(0.0, 0.09, 0.2).is_err());
        assert!(make_heston(2.0, -0.09, 0.2).is_err());
    }

    #[test]
    fn tanh_curves() {
        let m = make_tanh(1.0, -0.5, 0.0, 1.0, 2.0).unwrap();
        assert!(close(m.eta.value(1.0), 1.0, 1e-15));
        assert!(close(m.eta.value(1e12), 0.5, 1e-9));
        assert!(close(m.eta.value(1e-12), 1.5, 1e-9));
        assert!(make_tanh(1.0, -1.5, 0.0, 1.0, 2.0).is_err());
        assert!(make_tanh(1.0, 1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn rho_is_range_checked() {
        assert!(make_sabr(1.0).unwrap().with_rho(1.0).is_ok());
        assert!(make_sabr(1.0).unwrap().with_rho(1.0001).is_err());
        assert!(make_sabr(1.0).unwrap().with_rho(f64::NAN).is_err());
    }

    #[test]
    fn closed_form_inputs() {
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let sabr = expansion_inputs(&make_sabr(2.0).unwrap(), &market).unwrap();
        assert_eq!(
            [sabr.eta0, sabr.eta1, sabr.eta2, sabr.sigma0, sabr.sigma1, sabr.sigma2],
            [1.0, 0.0, 0.0, 2.0, 0.0, 0.0]
        );

        let market = MarketState::new(1.0, 0.04, 0.0, 0.0).unwrap();
        let heston = expansion_inputs(&make_heston(2.0, 0.09, 0.2).unwrap(), &market).unwrap();
        assert!(close(heston.sigma0, 1.0, 1e-15));
        assert!(close(heston.sigma1, -0.5, 1e-15));
        assert!(close(heston.sigma2, 0.125, 1e-15));

        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let tanh = expansion_inputs(&make_tanh(1.0, -0.5, 0.0, 1.0, 2.0).unwrap(), &market).unwrap();
        assert_eq!([tanh.eta0, tanh.eta1, tanh.eta2], [1.0, -0.5, 0.0]);
    }

    #[test]
    fn closed_forms_agree_with_finite_differences() {
        let cases = [
            (make_sabr(2.0).unwrap().with_rho(-0.7).unwrap(), 1.0, 0.1),
            (make_heston(2.0, 0.09, 0.2).unwrap(), 1.0, 0.04),
            (make_heston(1.5, 0.04, 0.6).unwrap(), 2.5, 0.09),
            (make_tanh(1.0, -0.5, 0.0, 1.0, 2.0).unwrap(), 1.0, 0.1),
            (make_tanh(1.2, 0.4, 0.3, 1.0, 1.0).unwrap(), 1.3, 0.2),
            (
                make_local_vol(Curve::Tanh {
                    f0: 0.3,
                    f1: 0.1,
                    x0: -0.2,
                    anchor: 100.0,
                }),
                95.0,
                1.0,
            ),
        ];
        for (model, s0, v0) in cases {
            let market = MarketState::new(s0, v0, 0.0, 0.0).unwrap();
            let cf = expansion_inputs(&model, &market).unwrap();
            let fd = finite_difference_inputs(&model, &market).unwrap();
            let pairs = [
                (cf.eta0, fd.eta0),
                (cf.eta1, fd.eta1),
                (cf.eta2, fd.eta2),
                (cf.sigma0, fd.sigma0),
                (cf.sigma1, fd.sigma1),
                (cf.sigma2, fd.sigma2),
            ];
            for (a, b) in pairs {
                let scale = 1.0_f64.max(a.abs());
                assert!((a - b).abs() <= 1e-6 * scale, "{model:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn local_vol_has_no_vol_of_vol() {
        let market = MarketState::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let m = make_local_vol(Curve::custom(|s: f64| 0.2 + 0.05 * s.ln()));
        let inputs = expansion_inputs(&m, &market).unwrap();
        assert_eq!([inputs.sigma0, inputs.sigma1, inputs.sigma2], [0.0; 3]);
        let again = expansion_inputs(&m, &market).unwrap();
        assert_eq!(inputs, again);
    }

    #[test]
    fn generic_model_uses_finite_differences() {
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let m = ModelSpec::generic(
            Curve::custom(|s: f64| 1.0 + 0.2 * s.ln()),
            Curve::custom(|v: f64| 0.5 * (v / 0.1).powf(0.25)),
            Curve::Constant(0.0),
            0.3,
        )
        .unwrap();
        let inputs = expansion_inputs(&m, &market).unwrap();
        assert!(close(inputs.eta0, 1.0, 1e-12));
        assert!(close(inputs.eta1, 0.2, 1e-7));
        assert!(inputs.eta2.abs() < 1e-6);
        assert!(close(inputs.sigma0, 0.5, 1e-12));
        assert!(close(inputs.sigma1, 0.125, 1e-7));
        assert!(close(inputs.sigma2, 0.5 * 0.0625 * 0.5, 1e-6));
    }

    #[test]
    fn nonpositive_eta_is_rejected() {
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let m = ModelSpec::generic(
            Curve::Constant(0.0),
            Curve::Constant(1.0),
            Curve::Constant(0.0),
            0.0,
        )
        .unwrap();
        assert!(expansion_inputs(&m, &market).is_err());
    }
}
