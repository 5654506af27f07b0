//! The plant `x⁺ = f(x, u)`, `y = [I_p 0] x`, and its incremental stability
//! certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ExprError};
use crate::kfun::{KFunError, KFunction};
use crate::lattice::{self, LatticePoint};
use crate::regions::{AxisBox, BoxUnion};

/// Tolerance for the fixed-point requirement `f(0, 0) = 0`.
pub const ORIGIN_TOL: f64 = 1e-12;

/// A certificate is accepted when every sampled violation stays below this.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("{field}: {source}")]
    KFun { field: String, source: KFunError },
    #[error("component {component} of f: {source}")]
    Eval { component: usize, source: EvalError },
    #[error("component {component} of f evaluated to non-finite value {value}")]
    NonFinite { component: usize, value: f64 },
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("initial state {0:?} is not in X0")]
    NotInitial(Vec<f64>),
}

fn invalid(field: &str, msg: impl Into<String>) -> SystemError {
    SystemError::Invalid { field: field.to_string(), msg: msg.into() }
}

/// The on-disk certificate section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    pub alpha_lo: KFunction,
    pub alpha_hi: KFunction,
    pub lambda: KFunction,
    pub sigma: KFunction,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "V_weights")]
    pub weights: Vec<f64>,
    pub explore_bound: AxisBox,
}

/// The on-disk system configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub f: Vec<String>,
    #[serde(rename = "X0")]
    pub x0: BoxUnion,
    #[serde(rename = "U")]
    pub u: BoxUnion,
    pub eta: f64,
    pub certificate: CertificateDoc,
}

#[derive(Debug, Clone)]
pub struct SystemDef {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub f: Vec<Expr>,
    pub x0: BoxUnion,
    pub u: BoxUnion,
    /// Output quantization parameter.
    pub eta: f64,
}

/// Incremental Lyapunov certificate with `V(x, x') = max_i w_i |x_i - x'_i|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub alpha_lo: KFunction,
    pub alpha_hi: KFunction,
    pub lambda: KFunction,
    pub sigma: KFunction,
    pub lipschitz: f64,
    pub weights: Vec<f64>,
    pub explore_bound: AxisBox,
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl Certificate {
    pub fn v(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.weights.iter().zip(x.iter().zip(xp)).map(|(w, (a, b))| w * (a - b).abs()).fold(0.0, f64::max)
    }

    fn validate(&self, n: usize) -> Result<(), SystemError> {
        for (name, k) in [
            ("certificate.alpha_lo", &self.alpha_lo),
            ("certificate.alpha_hi", &self.alpha_hi),
            ("certificate.lambda", &self.lambda),
            ("certificate.sigma", &self.sigma),
        ] {
            k.validate().map_err(|source| SystemError::KFun { field: name.into(), source })?;
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(invalid("certificate.L", format!("must be positive, got {}", self.lipschitz)));
        }
        if self.weights.len() != n {
            return Err(invalid("certificate.V_weights", format!("expected {n} weights, got {}", self.weights.len())));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid("certificate.V_weights", format!("weights must be positive, got {w}")));
        }
        if self.explore_bound.dim() != n {
            return Err(invalid("certificate.explore_bound", format!("expected dimension {n}")));
        }
        if !self.explore_bound.is_bounded() || self.explore_bound.is_empty() {
            return Err(invalid("certificate.explore_bound", "must be a bounded non-empty box"));
        }
        Ok(())
    }
}

impl SystemDef {
    /// Validates and assembles a system from parsed parts.
    ///
    /// `p = 0` (no output) is accepted here for programmatic use; the config
    /// format requires at least one output.
    pub fn new(n: usize, m: usize, p: usize, f: Vec<Expr>, x0: BoxUnion, u: BoxUnion, eta: f64) -> Result<Self, SystemError> {
        if n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if p >= n {
            return Err(invalid("p", format!("output dimension p={p} must be smaller than n={n}")));
        }
        if f.len() != n {
            return Err(invalid("f", format!("expected {n} components, got {}", f.len())));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(invalid("eta", format!("must be positive, got {eta}")));
        }
        if x0.dim() != n || !x0.is_bounded() || x0.is_empty() {
            return Err(invalid("X0", format!("must be a bounded non-empty region of dimension {n}")));
        }
        if u.dim() != m || !u.is_bounded() || u.is_empty() {
            return Err(invalid("U", format!("must be a bounded non-empty region of dimension {m}")));
        }
        if !u.contains(&vec![0.0; m]).unwrap_or(false) {
            return Err(invalid("U", "must contain the origin"));
        }
        let sys = SystemDef { n, m, p, f, x0, u, eta };
        let image = sys.step(&vec![0.0; n], &vec![0.0; m])?;
        if let Some((i, v)) = image.iter().enumerate().find(|(_, v)| v.abs() > ORIGIN_TOL) {
            return Err(invalid(&format!("f[{i}]"), format!("origin is not a fixed point: f(0, 0) = {v}")));
        }
        Ok(sys)
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SystemError> {
        if x.len() != self.n {
            return Err(SystemError::Dimension { expected: self.n, got: x.len() });
        }
        if u.len() != self.m {
            return Err(SystemError::Dimension { expected: self.m, got: u.len() });
        }
        self.f
            .iter()
            .enumerate()
            .map(|(component, e)| {
                let v = e.eval(x, u).map_err(|source| SystemError::Eval { component, source })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(SystemError::NonFinite { component, value: v })
                }
            })
            .collect()
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        x[..self.p].to_vec()
    }

    /// `[y(t)]_η` for `t = 0..=inputs.len()`.
    pub fn quantized_output_trace(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<LatticePoint>, SystemError> {
        if x0.len() != self.n {
            return Err(SystemError::Dimension { expected: self.n, got: x0.len() });
        }
        if !self.x0.contains(x0).unwrap_or(false) {
            return Err(SystemError::NotInitial(x0.to_vec()));
        }
        let quant = |x: &[f64]| -> Result<LatticePoint, SystemError> {
            lattice::quantize(&self.output(x), self.eta).map_err(|e| invalid("trace", e.to_string()))
        };
        let mut x = x0.to_vec();
        let mut out = vec![quant(&x)?];
        for u in inputs {
            x = self.step(&x, u)?;
            out.push(quant(&x)?);
        }
        Ok(out)
    }

    /// Pretty-printed components of `f`.
    pub fn f_source(&self) -> Vec<String> {
        self.f.iter().map(|e| e.to_string()).collect()
    }
}

/// Parses and validates a JSON system configuration.
pub fn parse_system(doc: &str) -> Result<(SystemDef, Certificate), SystemError> {
    let d: SystemDoc = serde_json::from_str(doc)?;
    from_doc(&d)
}

pub fn from_doc(d: &SystemDoc) -> Result<(SystemDef, Certificate), SystemError> {
    if d.p == 0 {
        return Err(invalid("p", "must be positive"));
    }
    let f = d
        .f
        .iter()
        .enumerate()
        .map(|(i, src)| expr::parse(src, d.n, d.m).map_err(|source| SystemError::Expr { field: format!("f[{i}]"), source }))
        .collect::<Result<Vec<_>, _>>()?;
    let sys = SystemDef::new(d.n, d.m, d.p, f, d.x0.clone(), d.u.clone(), d.eta)?;
    let c = &d.certificate;
    let cert = Certificate {
        alpha_lo: c.alpha_lo.clone(),
        alpha_hi: c.alpha_hi.clone(),
        lambda: c.lambda.clone(),
        sigma: c.sigma.clone(),
        lipschitz: c.lipschitz,
        weights: c.weights.clone(),
        explore_bound: c.explore_bound.clone(),
    };
    cert.validate(d.n)?;
    Ok((sys, cert))
}

/// Uniform sample from a box (open ends are ignored; they have measure zero).
pub fn sample_box<R: Rng + ?Sized>(b: &AxisBox, rng: &mut R) -> Vec<f64> {
    (0..b.dim()).map(|i| b.lower[i] + rng.gen::<f64>() * (b.upper[i] - b.lower[i])).collect()
}

/// Sample from a union: a member box is picked uniformly, then a point in it.
pub fn sample_union<R: Rng + ?Sized>(u: &BoxUnion, rng: &mut R) -> Vec<f64> {
    let boxes: Vec<&AxisBox> = u.boxes().iter().filter(|b| !b.is_empty()).collect();
    sample_box(boxes[rng.gen_range(0..boxes.len())], rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub seed: u64,
    /// Worst excess in `α(|x-x'|) ≤ V(x,x') ≤ ᾱ(|x-x'|)`.
    pub sandwich_violation: f64,
    /// Worst excess in the dissipation inequality.
    pub decrease_violation: f64,
    /// Worst excess in the Lipschitz bound on `V`.
    pub lipschitz_violation: f64,
    pub numeric_failures: usize,
    pub pass: bool,
}

/// Sampling check of the certificate inequalities over `explore_bound × U`.
pub fn validate_certificate(sys: &SystemDef, cert: &Certificate, samples: usize, seed: u64) -> CertificateReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sandwich, mut decrease, mut lipschitz) = (0.0f64, 0.0f64, 0.0f64);
    let mut numeric_failures = 0;
    let bound = &cert.explore_bound;
    let width = (0..bound.dim()).map(|i| bound.upper[i] - bound.lower[i]).fold(0.0, f64::max);
    for _ in 0..samples {
        let x = sample_box(bound, &mut rng);
        let xp = sample_box(bound, &mut rng);
        let u = sample_union(&sys.u, &mut rng);
        let up = sample_union(&sys.u, &mut rng);
        let d = inf_norm_diff(&x, &xp);
        let v = cert.v(&x, &xp);
        sandwich = sandwich.max(cert.alpha_lo.eval_unchecked(d) - v).max(v - cert.alpha_hi.eval_unchecked(d));

        match (sys.step(&x, &u), sys.step(&xp, &up)) {
            (Ok(fx), Ok(fxp)) => {
                let lhs = cert.v(&fx, &fxp) - v;
                let rhs = -cert.lambda.eval_unchecked(v) + cert.sigma.eval_unchecked(inf_norm_diff(&u, &up));
                decrease = decrease.max(lhs - rhs);
            }
            _ => numeric_failures += 1,
        }

        // perturbation at a random scale, so both near and far pairs are probed
        let scale = width * 10f64.powf(-6.0 * rng.gen::<f64>());
        let a: Vec<f64> = x.iter().map(|c| c + scale * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        let b: Vec<f64> = xp.iter().map(|c| c + scale * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        let gap = (cert.v(&x, &xp) - cert.v(&a, &b)).abs();
        let allowed = cert.lipschitz * inf_norm_diff(&x, &a).max(inf_norm_diff(&xp, &b));
        lipschitz = lipschitz.max(gap - allowed);
    }
    let worst = sandwich.max(decrease).max(lipschitz);
    CertificateReport {
        samples,
        seed,
        sandwich_violation: sandwich,
        decrease_violation: decrease,
        lipschitz_violation: lipschitz,
        numeric_failures,
        pass: worst <= CERT_TOL && numeric_failures == 0,
    }
}
