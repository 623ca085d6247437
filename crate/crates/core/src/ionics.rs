//! Ionic current and gating kinetics.
//!
//! The gating variable obeys `∂_t w + g(p, w) = 0` with `g` affine in `w`:
//! `g(p, q) = λ(p) q − μ(p)`. Both models below have this form, which makes
//! the per-node update exact in `q` for frozen `p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Vars};

/// Below this rate the exponential update switches to explicit Euler.
const LAMBDA_MIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IonicError {
    #[error("{0}")]
    Invalid(String),
    #[error("declared Lipschitz constant {declared} for {name} is below the sampled value {sampled}")]
    Lipschitz { name: String, declared: f64, sampled: f64 },
}

/// Declared Lipschitz constants of the affine model's rate functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineLipschitz {
    pub a: f64,
    pub b: f64,
    pub h1: f64,
    pub h2: f64,
}

/// `g(p,q) = a(p)(q−1) + b(p)q`, `I_ion(p,q) = h1(p) + h2(p)q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineHh {
    pub a: Expr,
    pub b: Expr,
    pub h1: Expr,
    pub h2: Expr,
    pub lipschitz: AffineLipschitz,
}

impl Default for AffineHh {
    /// Smooth bounded placeholder kinetics; not taken from any measured model.
    fn default() -> Self {
        let e = |s: &str| Expr::parse(s).expect("default expression");
        Self {
            a: e("0.1 + 0.4/(1 + exp(-p))"),
            b: e("0.1 + 0.4/(1 + exp(p))"),
            h1: e("p"),
            h2: e("0.5*sin(p)"),
            lipschitz: AffineLipschitz {
                a: 0.1,
                b: 0.1,
                h1: 1.0,
                h2: 0.5,
            },
        }
    }
}

/// Regularized Mitchell–Schaeffer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitchellSchaeffer {
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub p_th: f64,
    pub p_gate: f64,
    pub r_max: f64,
}

impl Default for MitchellSchaeffer {
    fn default() -> Self {
        Self {
            tau_in: 0.3,
            tau_out: 6.0,
            tau_open: 120.0,
            tau_close: 150.0,
            p_th: 1.5,
            p_gate: 0.13,
            r_max: 10.0,
        }
    }
}

/// `exp(-(a/b)^2)` with the value 0 at `b = 0`.
fn gauss_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        (-(a / b).powi(2)).exp()
    }
}

impl MitchellSchaeffer {
    /// `q_∞(p) = 1 − exp(−(p_gate/p)²)`, equal to 1 at `p = 0`.
    pub fn q_inf(&self, p: f64) -> f64 {
        if p == 0.0 {
            1.0
        } else {
            -(-(self.p_gate / p).powi(2)).exp_m1()
        }
    }

    fn rate(&self, q_inf: f64) -> f64 {
        1.0 / self.tau_close + (self.tau_close - self.tau_open) / (self.tau_close * self.tau_open) * q_inf
    }

    pub fn current(&self, p: f64, q: f64) -> f64 {
        q * p * p * (p - 1.0) * gauss_ratio(p, self.p_th) / self.tau_in
            - p * (1.0 + self.r_max * gauss_ratio(self.p_th, p)) / self.tau_out
    }

    pub fn validate(&self) -> Result<(), IonicError> {
        let pos = [
            ("tau_in", self.tau_in),
            ("tau_out", self.tau_out),
            ("tau_open", self.tau_open),
            ("tau_close", self.tau_close),
            ("p_th", self.p_th),
            ("p_gate", self.p_gate),
            ("r_max", self.r_max),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IonicError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_open >= self.tau_close {
            return Err(IonicError::Invalid("0 < tau_open < tau_close required".into()));
        }
        if self.p_th < 10.0 * self.p_gate {
            return Err(IonicError::Invalid("p_th >= 10 p_gate required".into()));
        }
        if self.r_max < 10.0 {
            return Err(IonicError::Invalid("r_max >= 10 required".into()));
        }
        Ok(())
    }

    /// Numerical sup of `|∂_p I_ion(p, q)|` over `q ∈ {0, 1}` (the extremes,
    /// since `I_ion` is affine in `q`), padded by 5%.
    pub fn lipschitz(&self) -> f64 {
        let range = 20.0 * self.p_th;
        let n = 40_000;
        let dp = 2.0 * range / n as f64;
        let mut sup = (1.0 + self.r_max) / self.tau_out;
        for k in 0..n {
            let p = -range + k as f64 * dp;
            for q in [0.0, 1.0] {
                let d = (self.current(p + dp, q) - self.current(p, q)) / dp;
                sup = sup.max(d.abs());
            }
        }
        1.05 * sup
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum IonicModel {
    AffineHh(AffineHh),
    MitchellSchaeffer(MitchellSchaeffer),
}

impl Default for IonicModel {
    fn default() -> Self {
        IonicModel::AffineHh(AffineHh::default())
    }
}

impl IonicModel {
    /// `(λ(p), q*(p))` with `g(p, q) = λ (q − q*)`.
    pub fn relaxation(&self, p: f64) -> (f64, f64) {
        match self {
            IonicModel::AffineHh(m) => {
                let v = Vars::p(p);
                let a = m.a.eval(&v);
                let b = m.b.eval(&v);
                let lam = a + b;
                let q = if lam > 0.0 { a / lam } else { 0.0 };
                (lam, q)
            }
            IonicModel::MitchellSchaeffer(m) => {
                let q = m.q_inf(p);
                (m.rate(q), q)
            }
        }
    }

    pub fn g_rate(&self, p: f64, q: f64) -> f64 {
        match self {
            IonicModel::AffineHh(m) => {
                let v = Vars::p(p);
                m.a.eval(&v) * (q - 1.0) + m.b.eval(&v) * q
            }
            IonicModel::MitchellSchaeffer(m) => {
                let qi = m.q_inf(p);
                m.rate(qi) * (q - qi)
            }
        }
    }

    pub fn ionic_current(&self, p: f64, q: f64) -> f64 {
        match self {
            IonicModel::AffineHh(m) => {
                let v = Vars::p(p);
                m.h1.eval(&v) + m.h2.eval(&v) * q
            }
            IonicModel::MitchellSchaeffer(m) => m.current(p, q),
        }
    }

    /// Lipschitz constant `C_I` of `p ↦ I_ion(p, q)` uniformly in `q ∈ [0,1]`.
    pub fn c_i(&self) -> f64 {
        match self {
            IonicModel::AffineHh(m) => m.lipschitz.h1 + m.lipschitz.h2,
            IonicModel::MitchellSchaeffer(m) => m.lipschitz(),
        }
    }

    /// True when the current vanishes identically (both `h` literally zero).
    pub fn is_passive(&self) -> bool {
        matches!(self, IonicModel::AffineHh(m) if m.h1.is_zero() && m.h2.is_zero())
    }

    /// Parameter checks plus, for the affine model, sampled positivity of
    /// `a, b` and sampled difference quotients against the declared constants
    /// on `p ∈ [−range, range]`.
    pub fn validate(&self, range: f64) -> Result<(), IonicError> {
        match self {
            IonicModel::MitchellSchaeffer(m) => m.validate(),
            IonicModel::AffineHh(m) => {
                let n = 2000;
                let dp = 2.0 * range / n as f64;
                let checks = [
                    ("a", &m.a, m.lipschitz.a),
                    ("b", &m.b, m.lipschitz.b),
                    ("h1", &m.h1, m.lipschitz.h1),
                    ("h2", &m.h2, m.lipschitz.h2),
                ];
                for (name, f, declared) in checks {
                    let mut sampled = 0.0f64;
                    for k in 0..n {
                        let p = -range + k as f64 * dp;
                        let (f0, f1) = (f.eval(&Vars::p(p)), f.eval(&Vars::p(p + dp)));
                        if !f0.is_finite() {
                            return Err(IonicError::Invalid(format!("{name}({p}) is not finite")));
                        }
                        if (name == "a" || name == "b") && f0 < 0.0 {
                            return Err(IonicError::Invalid(format!("{name}({p}) = {f0} is negative")));
                        }
                        sampled = sampled.max(((f1 - f0) / dp).abs());
                    }
                    if sampled > declared * (1.0 + 1e-9) + 1e-12 {
                        return Err(IonicError::Lipschitz {
                            name: name.into(),
                            declared,
                            sampled,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Advance one gating value by `dt` with `p` frozen.
    pub fn step_gating_value(&self, w: f64, p: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return w;
        }
        let (lam, q) = self.relaxation(p);
        let next = if lam <= LAMBDA_MIN {
            w - dt * self.g_rate(p, w)
        } else {
            q + (w - q) * (-lam * dt).exp()
        };
        // Convex combination of values in [0,1]; the clamp only absorbs rounding.
        next.clamp(0.0, 1.0)
    }

    /// Nodewise [`step_gating_value`](Self::step_gating_value).
    pub fn step_gating(&self, w: &[f64], p: &[f64], dt: f64) -> Vec<f64> {
        assert_eq!(w.len(), p.len());
        w.par_iter()
            .zip(p.par_iter())
            .map(|(&wi, &pi)| self.step_gating_value(wi, pi, dt))
            .collect()
    }
}
