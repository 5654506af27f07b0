//! Transfer of finite-model verdicts to the plant.
//!
//! With `(ε, η, μ)` satisfying the accuracy inequalities, the symbolic model
//! and the plant are ε-bisimilar, and:
//!
//! * if the model is `(kη, F_ε)`-diagnosable, the plant is
//!   `(ρ, F)`-diagnosable for every `ρ > 2ε + kη`;
//! * if the model is not `(k'η, F'_ε)`-diagnosable with
//!   `k' > min{h : ρ + 2ε ≤ hη}` and `F'_ε ≠ ∅`, the plant is not
//!   `(ρ, F)`-diagnosable.
//!
//! Here `F_ε` is the ε-dilation of `F` and `F'_ε` its ε-erosion, both
//! restricted to the `η`-lattice. Any other outcome is inconclusive.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::abstraction::{check_params, AbstractionError, AbstractionParams};
use crate::diagnosis::{check_diagnosability, unroll, DiagnosisError, FaultSpec, Verdict};
use crate::finsys::FiniteSystem;
use crate::lattice::{self, LatticeError};
use crate::regions::{AxisBox, BoxUnion, RegionError};
use crate::system::{sample_union, Certificate, SystemDef};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("fault set meets the initial set")]
    FaultMeetsInitial,
    #[error("fault set must be a bounded region of dimension {0}")]
    BadFaultSet(usize),
    #[error("the eroded fault set contains no lattice point; refutation needs it non-empty")]
    EmptyErosion,
    #[error("parameters violate the accuracy inequalities")]
    Params,
    #[error("model is not a symbolic abstraction built with these parameters: {0}")]
    Model(String),
    #[error("lattice fault sets are not nested (internal error)")]
    Sandwich,
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
}

/// `2ε + kη`, the plant-level radius guaranteed by a successful prove check.
pub fn prove_bound(epsilon: f64, eta: f64, k: u64) -> f64 {
    2.0 * epsilon + k as f64 * eta
}

/// `min{h ∈ ℕ : ρ + 2ε ≤ hη}`, with rounding noise in the quotient snapped.
pub fn min_h(rho: f64, epsilon: f64, eta: f64) -> u64 {
    lattice::snap((rho + 2.0 * epsilon) / eta).ceil().max(0.0) as u64
}

/// The smallest admissible `k'` for refuting `(ρ, F)`-diagnosability.
pub fn refute_k(rho: f64, epsilon: f64, eta: f64) -> u64 {
    min_h(rho, epsilon, eta) + 1
}

/// Default `k` for prove mode: `⌈2ε/η⌉`.
pub fn default_k(epsilon: f64, eta: f64) -> u64 {
    lattice::snap(2.0 * epsilon / eta).ceil().max(0.0) as u64
}

/// A fault set on the `η`-lattice: every point, and the model states among them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeFaults {
    #[serde(skip)]
    pub points: Vec<Vec<i64>>,
    pub lattice_points: usize,
    /// Indices of the points that are states of the model.
    pub states: Vec<usize>,
    /// Points outside the accessible part of the model.
    pub dropped: usize,
}

fn check_fault_set(f: &BoxUnion, x0: &BoxUnion) -> Result<(), BridgeError> {
    if f.dim() != x0.dim() || !f.is_bounded() {
        return Err(BridgeError::BadFaultSet(x0.dim()));
    }
    if f.intersects(x0) {
        return Err(BridgeError::FaultMeetsInitial);
    }
    Ok(())
}

fn to_states(points: Vec<Vec<i64>>, model: &FiniteSystem) -> LatticeFaults {
    let index = model.coord_index();
    let mut states: Vec<usize> = points.iter().filter_map(|p| index.get(p).copied()).collect();
    states.sort_unstable();
    LatticeFaults { lattice_points: points.len(), dropped: points.len() - states.len(), states, points }
}

/// `F_ε`: lattice points of the ε-dilation of `F`.
pub fn fault_lattice_dilated(f: &BoxUnion, eps: f64, eta: f64, x0: &BoxUnion, model: &FiniteSystem) -> Result<LatticeFaults, BridgeError> {
    check_fault_set(f, x0)?;
    Ok(to_states(lattice::lattice_points_in(&f.dilate(eps), eta)?, model))
}

/// `F'_ε`: lattice points `x ∈ F` whose closed ε-ball lies in `F`.
pub fn fault_lattice_eroded(f: &BoxUnion, eps: f64, eta: f64, x0: &BoxUnion, model: &FiniteSystem) -> Result<LatticeFaults, BridgeError> {
    check_fault_set(f, x0)?;
    let mut points = Vec::new();
    for p in lattice::lattice_points_in(f, eta)? {
        if f.ball_in_union(&lattice::embed(&p, eta), eps)? {
            points.push(p);
        }
    }
    Ok(to_states(points, model))
}

/// Checks `F'_ε ⊆ F ∩ lattice ⊆ F_ε` on lattice points.
pub fn sandwich_holds(f: &BoxUnion, eps: f64, eta: f64) -> Result<bool, BridgeError> {
    let inner = lattice::lattice_points_in(f, eta)?;
    let outer: HashSet<Vec<i64>> = lattice::lattice_points_in(&f.dilate(eps), eta)?.into_iter().collect();
    let inner_set: HashSet<&Vec<i64>> = inner.iter().collect();
    for p in &inner {
        if !outer.contains(p) {
            return Ok(false);
        }
        if f.ball_in_union(&lattice::embed(p, eta), eps)? && !inner_set.contains(p) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Model states within `rho` of any of `points` (which need not be states).
fn ball_of_points(model: &FiniteSystem, points: &[Vec<i64>], eta: f64, rho: f64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let r = lattice::snap(rho / (2.0 * eta)).floor() as i64;
    let n = model.dim();
    let neighbourhood = (2 * r + 1).checked_pow(n as u32).map(|v| v as usize);
    let coords = |s: usize| model.lattice_coords(s).expect("lattice model");
    let close = |a: &[i64], b: &[i64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= r);
    match neighbourhood {
        Some(nb) if nb < points.len() => {
            let set: HashSet<&[i64]> = points.iter().map(Vec::as_slice).collect();
            (0..model.num_states())
                .into_par_iter()
                .filter(|&s| {
                    let c = coords(s);
                    let mut off = vec![-r; n];
                    loop {
                        let q: Vec<i64> = c.iter().zip(&off).map(|(a, b)| a + b).collect();
                        if set.contains(q.as_slice()) {
                            return true;
                        }
                        let mut i = 0;
                        while i < n {
                            if off[i] < r {
                                off[i] += 1;
                                break;
                            }
                            off[i] = -r;
                            i += 1;
                        }
                        if i == n {
                            return false;
                        }
                    }
                })
                .collect()
        }
        _ => (0..model.num_states()).into_par_iter().filter(|&s| points.iter().any(|p| close(coords(s), p))).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prove,
    Refute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "direction", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    DiagnosableForRhoAbove { bound: f64 },
    NotDiagnosableForRho { rho: f64 },
    Inconclusive { reason: String },
}

/// Plant trajectory templates: abstract states with the relation tube radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Templates {
    pub faulty: Vec<Vec<f64>>,
    pub safe: Vec<Vec<f64>>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantVerdict {
    pub mode: Mode,
    pub conclusion: Direction,
    pub epsilon: f64,
    pub eta: f64,
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub rho_hat: f64,
    pub faults: LatticeFaults,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finite: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<Templates>,
}

impl PlantVerdict {
    pub fn is_inconclusive(&self) -> bool {
        matches!(self.conclusion, Direction::Inconclusive { .. })
    }
}

/// Runs the finite check for one mode and lifts its verdict to the plant.
///
/// `k` is used in prove mode (default `⌈2ε/η⌉`); `rho` is required in
/// refute mode.
#[allow(clippy::too_many_arguments)]
pub fn conclude(
    sys: &SystemDef,
    cert: &Certificate,
    params: &AbstractionParams,
    model: &FiniteSystem,
    f: &BoxUnion,
    mode: Mode,
    k: Option<u64>,
    rho: Option<f64>,
) -> Result<PlantVerdict, BridgeError> {
    if !check_params(cert, params)?.ok {
        return Err(BridgeError::Params);
    }
    let info = model.info.as_ref().ok_or_else(|| BridgeError::Model("not a lattice abstraction".into()))?;
    if info.eta != params.eta || info.mu != params.mu {
        return Err(BridgeError::Model(format!("built with eta={}, mu={}", info.eta, info.mu)));
    }
    let (eps, eta) = (params.epsilon, params.eta);
    if !sandwich_holds(f, eps, eta)? {
        return Err(BridgeError::Sandwich);
    }
    let (faults, k, k_prime, rho_hat) = match mode {
        Mode::Prove => {
            let k = k.unwrap_or_else(|| default_k(eps, eta));
            (fault_lattice_dilated(f, eps, eta, &sys.x0, model)?, Some(k), None, k as f64 * eta)
        }
        Mode::Refute => {
            let rho = rho.ok_or_else(|| BridgeError::Model("refute mode needs a target radius".into()))?;
            let kp = refute_k(rho, eps, eta);
            let eroded = fault_lattice_eroded(f, eps, eta, &sys.x0, model)?;
            if eroded.lattice_points == 0 {
                return Err(BridgeError::EmptyErosion);
            }
            (eroded, None, Some(kp), kp as f64 * eta)
        }
    };
    let mut verdict = PlantVerdict {
        mode,
        conclusion: Direction::Inconclusive { reason: String::new() },
        epsilon: eps,
        eta,
        mu: params.mu,
        k,
        k_prime,
        rho: if mode == Mode::Refute { rho } else { None },
        rho_hat,
        faults,
        finite: None,
        templates: None,
    };
    let ball = ball_of_points(model, &verdict.faults.points, eta, rho_hat);
    let spec = FaultSpec::new(verdict.faults.states.clone(), rho_hat).with_ball(ball);
    let finite = match check_diagnosability(model, &spec) {
        Ok(v) => v,
        Err(DiagnosisError::FaultMeetsInitial(i)) => {
            verdict.conclusion = Direction::Inconclusive {
                reason: format!("lattice fault set contains initial state {i}; refine eta or epsilon"),
            };
            return Ok(verdict);
        }
        Err(e) => return Err(e.into()),
    };
    verdict.conclusion = match (mode, finite.diagnosable) {
        (Mode::Prove, true) => Direction::DiagnosableForRhoAbove { bound: prove_bound(eps, eta, k.unwrap_or(0)) },
        (Mode::Prove, false) => Direction::Inconclusive {
            reason: "finite model is not diagnosable for the dilated fault set; try a larger k or finer parameters".into(),
        },
        (Mode::Refute, false) => Direction::NotDiagnosableForRho { rho: rho.unwrap_or(0.0) },
        (Mode::Refute, true) => Direction::Inconclusive {
            reason: "finite model is diagnosable for the eroded fault set; nothing follows by contraposition".into(),
        },
    };
    if let (Mode::Refute, Some(w)) = (mode, &finite.witness) {
        let w = unroll(w, w.faulty.len() + w.loop_start.map_or(0, |k| w.faulty.len() - k));
        verdict.templates = Some(Templates {
            faulty: w.faulty.iter().map(|&s| model.embed(s)).collect(),
            safe: w.safe.iter().map(|&s| model.embed(s)).collect(),
            radius: eps,
        });
    }
    verdict.finite = Some(finite);
    Ok(verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStrategy {
    Uniform,
    /// Holds a random vertex of the input box for a random number of steps.
    Vertices,
}

/// Two plant trajectories with equal quantized outputs, one entering `F`
/// and one staying further than `rho` from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: u64,
    pub strategy: InputStrategy,
    pub fault_time: usize,
    pub faulty: Vec<Vec<f64>>,
    pub safe: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Smallest distance from the safe trajectory to `F`.
    pub safe_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsifyReport {
    pub trials: u64,
    pub horizon: usize,
    pub seed: u64,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

fn random_inputs(sys: &SystemDef, rng: &mut ChaCha8Rng, horizon: usize, strategy: InputStrategy) -> Vec<Vec<f64>> {
    match strategy {
        InputStrategy::Uniform => (0..horizon).map(|_| sample_union(&sys.u, rng)).collect(),
        InputStrategy::Vertices => {
            let boxes: Vec<&AxisBox> = sys.u.boxes().iter().filter(|b| !b.is_empty()).collect();
            let mut out = Vec::with_capacity(horizon);
            while out.len() < horizon {
                let b = boxes[rng.gen_range(0..boxes.len())];
                let v: Vec<f64> = (0..b.dim()).map(|i| if rng.gen::<bool>() { b.upper[i] } else { b.lower[i] }).collect();
                let hold = rng.gen_range(1..=horizon.max(1));
                out.extend(std::iter::repeat_n(v, hold.min(horizon - out.len())));
            }
            out
        }
    }
}

fn trial(sys: &SystemDef, f: &BoxUnion, rho: f64, horizon: usize, seed: u64, index: u64) -> Option<Counterexample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let strategy = if index.is_multiple_of(2) { InputStrategy::Uniform } else { InputStrategy::Vertices };
    let x0 = sample_union(&sys.x0, &mut rng);
    // the twin shares the observed coordinates and differs in the hidden ones
    let mut y0 = sample_union(&sys.x0, &mut rng);
    y0[..sys.p].copy_from_slice(&x0[..sys.p]);
    if !sys.x0.contains(&y0).ok()? {
        return None;
    }
    let inputs = random_inputs(sys, &mut rng, horizon, strategy);
    let quant = |x: &[f64]| lattice::quantize_coords(&sys.output(x), sys.eta).ok();
    let (mut a, mut b) = (x0.clone(), y0.clone());
    let (mut faulty, mut safe) = (vec![a.clone()], vec![b.clone()]);
    let mut margin = f.distance_to(&b).ok()?;
    if margin <= rho || quant(&a)? != quant(&b)? {
        return None;
    }
    let mut fault_time = None;
    for u in &inputs {
        a = sys.step(&a, u).ok()?;
        b = sys.step(&b, u).ok()?;
        if quant(&a)? != quant(&b)? {
            return None;
        }
        margin = margin.min(f.distance_to(&b).ok()?);
        if margin <= rho {
            return None;
        }
        faulty.push(a.clone());
        safe.push(b.clone());
        if fault_time.is_none() && f.contains(&a).ok()? {
            fault_time = Some(faulty.len() - 1);
        }
    }
    Some(Counterexample { trial: index, strategy, fault_time: fault_time?, faulty, safe, inputs, safe_margin: margin })
}

/// Monte-Carlo search for plant trajectories refuting `(ρ, F)`-diagnosability
/// over a finite horizon. Trials run in parallel on independent streams of
/// one seed; the lowest successful trial index is returned, so the result
/// does not depend on the thread count.
pub fn falsify_plant(sys: &SystemDef, f: &BoxUnion, rho: f64, trials: u64, horizon: usize, seed: u64) -> Result<FalsifyReport, BridgeError> {
    if f.dim() != sys.n || !f.is_bounded() {
        return Err(BridgeError::BadFaultSet(sys.n));
    }
    let counterexample = (0..trials).into_par_iter().find_map_first(|i| trial(sys, f, rho, horizon, seed, i));
    Ok(FalsifyReport { trials, horizon, seed, rho, counterexample })
}

/// Re-checks a counterexample against the plant dynamics.
pub fn validate_counterexample(sys: &SystemDef, f: &BoxUnion, rho: f64, c: &Counterexample) -> Result<(), String> {
    let replay = |x0: &[f64]| -> Result<Vec<Vec<f64>>, String> {
        let mut x = x0.to_vec();
        let mut out = vec![x.clone()];
        for u in &c.inputs {
            x = sys.step(&x, u).map_err(|e| e.to_string())?;
            out.push(x.clone());
        }
        Ok(out)
    };
    let (a, b) = (replay(&c.faulty[0])?, replay(&c.safe[0])?);
    let qa = sys.quantized_output_trace(&a[0], &c.inputs).map_err(|e| e.to_string())?;
    let qb = sys.quantized_output_trace(&b[0], &c.inputs).map_err(|e| e.to_string())?;
    if qa != qb {
        return Err("quantized output traces differ".into());
    }
    if !a.iter().skip(1).any(|x| f.contains(x).unwrap_or(false)) || f.contains(&a[0]).unwrap_or(true) {
        return Err("faulty trajectory does not enter F after time 0".into());
    }
    for x in &b {
        if f.distance_to(x).map_err(|e| e.to_string())? <= rho {
            return Err("safe trajectory comes within rho of F".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{build_abstraction, BuildOptions};
    use crate::fixtures;

    fn cb(lo: &[f64], hi: &[f64]) -> BoxUnion {
        BoxUnion::single(AxisBox::closed(lo.to_vec(), hi.to_vec()).unwrap())
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(prove_bound(1.0, 0.1, 2), 2.0 * 1.0 + 2.0 * 0.1);
        assert!((prove_bound(1.0, 0.1, 2) - 2.2).abs() < 1e-15);
        assert_eq!(min_h(0.5, 0.2, 0.1), 9);
        assert_eq!(refute_k(0.5, 0.2, 0.1), 10);
        assert_eq!(default_k(1.0, 0.1), 20);
    }

    #[test]
    fn lattice_fault_examples() {
        let (sys, cert) = fixtures::e1();
        let p = AbstractionParams { epsilon: 6.0, eta: 0.5, mu: 0.5 };
        let model = build_abstraction(&sys, &cert, &p, &BuildOptions::default()).unwrap();
        let f = cb(&[0.95, 0.95], &[1.05, 1.05]);
        // F meets X0 = [-1,1]^2, so use a shifted initial set for the example
        let x0 = cb(&[-1.0, -1.0], &[-0.5, -0.5]);
        let d = fault_lattice_dilated(&f, 0.1, 0.5, &x0, &model).unwrap();
        assert_eq!(d.points, vec![vec![1, 1]]);
        let e = fault_lattice_eroded(&cb(&[0.0, 0.0], &[1.0, 1.0]), 0.2, 0.1, &cb(&[-1.0, -1.0], &[-0.5, -0.5]), &model).unwrap();
        assert_eq!(e.points.len(), 16);
        assert_eq!(e.points[0], vec![1, 1]);
        let tight = fault_lattice_eroded(&f, 0.2, 0.5, &x0, &model).unwrap();
        assert_eq!(tight.lattice_points, 0);
        assert!(matches!(fault_lattice_dilated(&f, 0.1, 0.5, &sys.x0, &model), Err(BridgeError::FaultMeetsInitial)));
    }

    #[test]
    fn sandwich_on_examples() {
        for (lo, hi, eps, eta) in [(0.0, 1.0, 0.2, 0.1), (0.95, 1.05, 0.1, 0.5), (-0.3, 0.7, 0.0, 0.05)] {
            assert!(sandwich_holds(&cb(&[lo, lo], &[hi, hi]), eps, eta).unwrap());
        }
    }
}
