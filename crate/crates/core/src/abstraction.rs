//! Symbolic models on the `η`-lattice and the accuracy/quantization trade-off.
//!
//! The model has one state per reachable lattice point, one input per point
//! of the `μ`-grid image of `U`, and the deterministic successor
//! `ξ → [f(ξ, v)]_η`. Only the part reachable from `[X0]_η` is built.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finsys::{AbstractionInfo, FiniteSystem};
use crate::kfun::KFunError;
use crate::lattice::{self, LatticeError};
use crate::regions::AxisBox;
use crate::system::{inf_norm_diff, sample_box, sample_union, Certificate, SystemDef, SystemError};

/// Relative slack absorbing rounding in the parameter inequalities.
const PARAM_SLACK: f64 = 1e-12;

/// Default upper limit on the number of abstract states.
pub const DEFAULT_MAX_STATES: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("parameters violate the accuracy inequalities: {0}")]
    Params(String),
    #[error(transparent)]
    KFun(#[from] KFunError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("state {coords:?} (embedded at {point:?}) leaves the exploration bound")]
    BoundExceeded { coords: Vec<i64>, point: Vec<f64> },
    #[error("evaluating f at state {coords:?}: {source}")]
    Numeric { coords: Vec<i64>, source: SystemError },
    #[error("more than {0} abstract states")]
    TooManyStates(usize),
    #[error("input set has an empty quantized image")]
    NoInputs,
    #[error(transparent)]
    Model(#[from] crate::finsys::FinSysError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractionParams {
    pub epsilon: f64,
    pub eta: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamCheck {
    pub ok: bool,
    /// `λ(α(ε)) − (Lη + σ(μ))`
    pub decrease_margin: f64,
    /// `α(ε) − ᾱ(η)`
    pub quantization_margin: f64,
}

fn positive(name: &str, v: f64) -> Result<(), AbstractionError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AbstractionError::Params(format!("{name} must be positive, got {v}")))
    }
}

pub fn check_params(cert: &Certificate, p: &AbstractionParams) -> Result<ParamCheck, AbstractionError> {
    positive("epsilon", p.epsilon)?;
    positive("eta", p.eta)?;
    positive("mu", p.mu)?;
    let a_eps = cert.alpha_lo.eval(p.epsilon)?;
    let rhs1 = cert.lambda.eval(a_eps)?;
    let lhs1 = cert.lipschitz * p.eta + cert.sigma.eval(p.mu)?;
    let lhs2 = cert.alpha_hi.eval(p.eta)?;
    let ok1 = lhs1 <= rhs1 + PARAM_SLACK * rhs1.max(1.0);
    let ok2 = lhs2 <= a_eps + PARAM_SLACK * a_eps.max(1.0);
    Ok(ParamCheck { ok: ok1 && ok2, decrease_margin: rhs1 - lhs1, quantization_margin: a_eps - lhs2 })
}

/// Smallest `ε` for which `(ε, η, μ)` satisfies both inequalities.
pub fn solve_epsilon(cert: &Certificate, eta: f64, mu: f64) -> Result<f64, AbstractionError> {
    positive("eta", eta)?;
    positive("mu", mu)?;
    let need = cert.lipschitz * eta + cert.sigma.eval(mu)?;
    let e1 = cert.lambda.compose_inverse(&cert.alpha_lo, need)?;
    let e2 = cert.alpha_lo.inverse_eval(cert.alpha_hi.eval(eta)?)?;
    Ok(e1.max(e2))
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Build even if the parameters violate the inequalities (negative controls).
    pub skip_param_check: bool,
    pub max_states: usize,
    pub config_digest: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { skip_param_check: false, max_states: DEFAULT_MAX_STATES, config_digest: String::new() }
    }
}

fn closed_contains(b: &AxisBox, x: &[f64]) -> bool {
    x.iter().enumerate().all(|(i, &v)| v >= b.lower[i] && v <= b.upper[i])
}

/// Breadth-first construction of the accessible part of the symbolic model.
///
/// States are numbered level by level, each level sorted lexicographically,
/// so the result does not depend on the number of worker threads.
pub fn build_abstraction(
    sys: &SystemDef,
    cert: &Certificate,
    params: &AbstractionParams,
    opts: &BuildOptions,
) -> Result<FiniteSystem, AbstractionError> {
    let check = check_params(cert, params)?;
    if !check.ok && !opts.skip_param_check {
        return Err(AbstractionError::Params(format!(
            "decrease margin {:e}, quantization margin {:e}",
            check.decrease_margin, check.quantization_margin
        )));
    }
    let (eta, mu) = (params.eta, params.mu);
    let bound = &cert.explore_bound;
    let inputs = lattice::quantized_image(&sys.u, mu)?;
    if inputs.is_empty() {
        return Err(AbstractionError::NoInputs);
    }
    let input_points: Vec<Vec<f64>> = inputs.iter().map(|v| lattice::embed(v, mu)).collect();
    let nu = inputs.len();

    let mut coords: Vec<Vec<i64>> = lattice::quantized_image(&sys.x0, eta)?;
    for c in &coords {
        let point = lattice::embed(c, eta);
        if !closed_contains(bound, &point) {
            return Err(AbstractionError::BoundExceeded { coords: c.clone(), point });
        }
    }
    if coords.len() > opts.max_states {
        return Err(AbstractionError::TooManyStates(opts.max_states));
    }
    let initial: Vec<usize> = (0..coords.len()).collect();
    let mut index: HashMap<Vec<i64>, usize> = coords.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let mut successors: Vec<usize> = Vec::new();
    let mut level = 0..coords.len();

    while !level.is_empty() {
        let expanded: Vec<Vec<Vec<i64>>> = coords[level.clone()]
            .par_iter()
            .map(|c| {
                let x = lattice::embed(c, eta);
                input_points
                    .iter()
                    .map(|u| {
                        let y = sys.step(&x, u).map_err(|source| AbstractionError::Numeric { coords: c.clone(), source })?;
                        let q = lattice::quantize_coords(&y, eta)?;
                        let point = lattice::embed(&q, eta);
                        if !closed_contains(bound, &point) {
                            return Err(AbstractionError::BoundExceeded { coords: q, point });
                        }
                        Ok(q)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut fresh: Vec<&Vec<i64>> = expanded.iter().flatten().filter(|q| !index.contains_key(*q)).collect();
        fresh.sort_unstable();
        fresh.dedup();
        let start = coords.len();
        if start + fresh.len() > opts.max_states {
            return Err(AbstractionError::TooManyStates(opts.max_states));
        }
        for q in fresh {
            index.insert(q.clone(), coords.len());
            coords.push(q.clone());
        }
        for row in &expanded {
            successors.extend(row.iter().map(|q| index[q]));
        }
        level = start..coords.len();
    }

    let mut fs = FiniteSystem::lattice(eta, sys.p, coords, initial, nu, successors)?;
    fs.info = Some(AbstractionInfo {
        eta,
        mu,
        epsilon: params.epsilon,
        m: sys.m,
        inputs,
        config_digest: opts.config_digest.clone(),
    });
    Ok(fs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationReport {
    pub samples: usize,
    pub seed: u64,
    /// `α(ε)`, the sublevel defining the relation.
    pub threshold: f64,
    pub max_v: f64,
    pub max_distance: f64,
    /// Plant moves not matched by the symbolic model.
    pub forward_violations: usize,
    /// Symbolic moves not matched by the plant.
    pub backward_violations: usize,
    /// Related pairs further apart than `ε`.
    pub distance_violations: usize,
    pub numeric_failures: usize,
    pub pass: bool,
}

fn nearest_in_input_set(sys: &SystemDef, v: &[f64]) -> Vec<f64> {
    if sys.u.contains(v).unwrap_or(false) {
        return v.to_vec();
    }
    sys.u
        .boxes()
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| v.iter().enumerate().map(|(i, &c)| c.clamp(b.lower[i], b.upper[i])).collect::<Vec<f64>>())
        .min_by(|a, b| inf_norm_diff(a, v).total_cmp(&inf_norm_diff(b, v)))
        .expect("input set is non-empty")
}

/// Sampling check that `V(x, ξ) ≤ α(ε)` is an ε-approximate bisimulation
/// between the plant and the symbolic model `s`.
///
/// Each sample draws a symbolic state `ξ` and a plant state `x` in its
/// relation sublevel, then checks one plant move (random `u`, matched by
/// `[u]_μ`) and one symbolic move (random `v`, matched by the closest `u ∈ U`).
pub fn certify_relation(
    sys: &SystemDef,
    cert: &Certificate,
    params: &AbstractionParams,
    s: &FiniteSystem,
    samples: usize,
    seed: u64,
) -> Result<RelationReport, AbstractionError> {
    let info = s.info.as_ref().ok_or_else(|| AbstractionError::Params("model is not a symbolic abstraction".into()))?;
    let threshold = cert.alpha_lo.eval(params.epsilon)?;
    let tol = 1e-12 * threshold.max(1.0);
    let input_index: HashMap<&Vec<i64>, usize> = info.inputs.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = RelationReport {
        samples,
        seed,
        threshold,
        max_v: 0.0,
        max_distance: 0.0,
        forward_violations: 0,
        backward_violations: 0,
        distance_violations: 0,
        numeric_failures: 0,
        pass: false,
    };
    if s.num_states() == 0 {
        r.pass = samples == 0;
        return Ok(r);
    }
    let record = |r: &mut RelationReport, x: &[f64], xi: &[f64]| -> bool {
        let v = cert.v(x, xi);
        let d = inf_norm_diff(x, xi);
        r.max_v = r.max_v.max(v);
        r.max_distance = r.max_distance.max(d);
        if d > params.epsilon + 1e-12 * params.epsilon.max(1.0) {
            r.distance_violations += 1;
        }
        v <= threshold + tol
    };
    for _ in 0..samples {
        let k = rng.gen_range(0..s.num_states());
        let xi = s.embed(k);
        let half: Vec<f64> = cert.weights.iter().map(|w| threshold / w).collect();
        let sub = AxisBox::closed(
            xi.iter().zip(&half).map(|(c, h)| c - h).collect(),
            xi.iter().zip(&half).map(|(c, h)| c + h).collect(),
        )
        .expect("sublevel box is ordered");
        let x = sample_box(&sub, &mut rng);
        record(&mut r, &x, &xi);

        // plant move, matched by the quantized input
        let u = sample_union(&sys.u, &mut rng);
        let vq = lattice::quantize_coords(&u, params.mu)?;
        match (input_index.get(&vq), sys.step(&x, &u)) {
            (Some(&vi), Ok(x1)) => {
                let xi1 = s.embed(s.successors(k, vi)[0]);
                if !record(&mut r, &x1, &xi1) {
                    r.forward_violations += 1;
                }
            }
            (None, _) => r.forward_violations += 1,
            (_, Err(_)) => r.numeric_failures += 1,
        }

        // symbolic move, matched by the nearest admissible plant input
        let vi = rng.gen_range(0..s.num_inputs());
        let u = nearest_in_input_set(sys, &lattice::embed(&info.inputs[vi], params.mu));
        match sys.step(&x, &u) {
            Ok(x1) => {
                let xi1 = s.embed(s.successors(k, vi)[0]);
                if !record(&mut r, &x1, &xi1) {
                    r.backward_violations += 1;
                }
            }
            Err(_) => r.numeric_failures += 1,
        }
    }
    r.pass = r.forward_violations == 0
        && r.backward_violations == 0
        && r.distance_violations == 0
        && r.numeric_failures == 0;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn params(epsilon: f64, eta: f64, mu: f64) -> AbstractionParams {
        AbstractionParams { epsilon, eta, mu }
    }

    #[test]
    fn param_examples() {
        let (_, cert) = fixtures::e1();
        assert!(check_params(&cert, &params(1.0, 0.1, 0.05)).unwrap().ok);
        let bad = check_params(&cert, &params(0.5, 0.1, 0.1)).unwrap();
        assert!(!bad.ok && bad.decrease_margin < 0.0);
        assert!(check_params(&cert, &params(0.5, 1e-9, 1e-9)).unwrap().ok);
    }

    #[test]
    fn solve_examples() {
        let (_, cert) = fixtures::e1();
        assert!((solve_epsilon(&cert, 0.1, 0.05).unwrap() - 1.0).abs() < 1e-9);
        assert!((solve_epsilon(&cert, 0.2, 0.1).unwrap() - 2.0).abs() < 1e-9);
        assert!(solve_epsilon(&cert, 1e-12, 1e-12).unwrap() < 1e-10);
        let e = solve_epsilon(&cert, 0.3, 0.07).unwrap();
        assert!(check_params(&cert, &params(e + 1e-9, 0.3, 0.07)).unwrap().ok);
    }

    #[test]
    fn e1_coarse_abstraction() {
        let (sys, cert) = fixtures::e1();
        let eps = solve_epsilon(&cert, 0.5, 0.5).unwrap();
        let s = build_abstraction(&sys, &cert, &params(eps, 0.5, 0.5), &BuildOptions::default()).unwrap();
        assert!(s.is_deterministic());
        assert_eq!(s.initial().len(), 9);
        let idx = s.coord_index();
        let origin = idx[&vec![0, 0]];
        let info = s.info.as_ref().unwrap();
        assert_eq!(info.inputs, vec![vec![-1], vec![0], vec![1]]);
        let succ: Vec<&[i64]> = (0..3).map(|v| s.lattice_coords(s.successors(origin, v)[0]).unwrap()).collect();
        assert_eq!(succ, vec![&[-1, 0][..], &[0, 0][..], &[1, 0][..]]);
    }

    #[test]
    fn escape_is_reported() {
        let (sys, mut cert) = fixtures::e1();
        cert.explore_bound = AxisBox::closed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let eps = solve_epsilon(&cert, 0.5, 0.5).unwrap();
        let err = build_abstraction(&sys, &cert, &params(eps, 0.5, 0.5), &BuildOptions::default()).unwrap_err();
        assert!(matches!(err, AbstractionError::BoundExceeded { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_params_unless_told() {
        let (sys, cert) = fixtures::e1();
        let p = params(0.5, 0.5, 0.5);
        assert!(matches!(build_abstraction(&sys, &cert, &p, &BuildOptions::default()), Err(AbstractionError::Params(_))));
        let opts = BuildOptions { skip_param_check: true, ..Default::default() };
        assert!(build_abstraction(&sys, &cert, &p, &opts).is_ok());
    }
}
