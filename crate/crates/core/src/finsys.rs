//! Finite metric transition systems with embedded states.
//!
//! States are either points of a lattice `2θℤⁿ` (symbolic models) or raw
//! real vectors (hand-written automata). The metric is the infinity norm of
//! the embedding, and outputs are the first `p` embedded coordinates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{self, embed_coord};

pub const MODEL_FORMAT: &str = "approxdiag-model/1";

#[derive(Debug, Error)]
pub enum FinSysError {
    #[error("model is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error("{0}")]
    Invalid(String),
    #[error("index {index} out of range for {what} (size {size})")]
    OutOfRange { what: &'static str, index: usize, size: usize },
    #[error("step {step} of the run is not a transition: {from} -> {to}")]
    InvalidPath { step: usize, from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Lattice { theta: f64, coords: Vec<Vec<i64>> },
    Raw(Vec<Vec<f64>>),
}

/// Provenance of a symbolic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionInfo {
    pub eta: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub m: usize,
    /// Input lattice indices on the μ-grid.
    pub inputs: Vec<Vec<i64>>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum OutputKey {
    Lattice(Vec<i64>),
    Raw(Vec<u64>),
}

fn float_key(v: f64) -> u64 {
    // -0.0 and 0.0 are the same output
    (v + 0.0).to_bits()
}

#[derive(Debug, Clone)]
pub struct FiniteSystem {
    embedding: Embedding,
    n: usize,
    p: usize,
    initial: Vec<usize>,
    num_inputs: usize,
    /// CSR offsets indexed by `state * num_inputs + input`.
    offsets: Vec<usize>,
    targets: Vec<usize>,
    output_of: Vec<usize>,
    symbols: Vec<OutputKey>,
    symbol_index: HashMap<OutputKey, usize>,
    pub info: Option<AbstractionInfo>,
}

impl FiniteSystem {
    /// Deterministic lattice system with a flat successor table.
    pub fn lattice(
        theta: f64,
        p: usize,
        coords: Vec<Vec<i64>>,
        initial: Vec<usize>,
        num_inputs: usize,
        successors: Vec<usize>,
    ) -> Result<Self, FinSysError> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(FinSysError::Invalid(format!("lattice parameter must be positive, got {theta}")));
        }
        let s = coords.len();
        if successors.len() != s * num_inputs {
            return Err(FinSysError::Invalid(format!(
                "successor table has {} entries, expected {} states x {} inputs",
                successors.len(),
                s,
                num_inputs
            )));
        }
        let offsets = (0..=s * num_inputs).collect();
        Self::assemble(Embedding::Lattice { theta, coords }, p, initial, num_inputs, offsets, successors)
    }

    /// Possibly nondeterministic system over raw embeddings.
    pub fn raw(
        p: usize,
        states: Vec<Vec<f64>>,
        initial: Vec<usize>,
        num_inputs: usize,
        transitions: &[[usize; 3]],
    ) -> Result<Self, FinSysError> {
        let s = states.len();
        if let Some((axis, v)) = states.iter().flatten().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FinSysError::Invalid(format!("non-finite embedding value {v} (entry {axis})")));
        }
        let mut buckets = vec![Vec::new(); s * num_inputs];
        for &[from, input, to] in transitions {
            check(from, s, "transition source")?;
            check(input, num_inputs, "transition input")?;
            check(to, s, "transition target")?;
            buckets[from * num_inputs + input].push(to);
        }
        let mut offsets = Vec::with_capacity(buckets.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut b in buckets {
            b.sort_unstable();
            b.dedup();
            targets.extend(b);
            offsets.push(targets.len());
        }
        Self::assemble(Embedding::Raw(states), p, initial, num_inputs, offsets, targets)
    }

    fn assemble(
        embedding: Embedding,
        p: usize,
        mut initial: Vec<usize>,
        num_inputs: usize,
        offsets: Vec<usize>,
        targets: Vec<usize>,
    ) -> Result<Self, FinSysError> {
        let (s, n) = match &embedding {
            Embedding::Lattice { coords, .. } => (coords.len(), coords.first().map_or(0, Vec::len)),
            Embedding::Raw(v) => (v.len(), v.first().map_or(0, Vec::len)),
        };
        let same_dim = match &embedding {
            Embedding::Lattice { coords, .. } => coords.iter().all(|c| c.len() == n),
            Embedding::Raw(v) => v.iter().all(|c| c.len() == n),
        };
        if !same_dim {
            return Err(FinSysError::Invalid("state embeddings have differing dimensions".into()));
        }
        if p > n && s > 0 {
            return Err(FinSysError::Invalid(format!("output dimension {p} exceeds state dimension {n}")));
        }
        if num_inputs == 0 {
            return Err(FinSysError::Invalid("input alphabet is empty".into()));
        }
        for &t in &targets {
            check(t, s, "successor")?;
        }
        for &i in &initial {
            check(i, s, "initial state")?;
        }
        initial.sort_unstable();
        initial.dedup();

        let mut symbols = Vec::new();
        let mut symbol_index = HashMap::new();
        let mut output_of = Vec::with_capacity(s);
        for k in 0..s {
            let key = match &embedding {
                Embedding::Lattice { coords, .. } => OutputKey::Lattice(coords[k][..p].to_vec()),
                Embedding::Raw(v) => OutputKey::Raw(v[k][..p].iter().map(|&x| float_key(x)).collect()),
            };
            let id = *symbol_index.entry(key.clone()).or_insert_with(|| {
                symbols.push(key);
                symbols.len() - 1
            });
            output_of.push(id);
        }
        Ok(FiniteSystem { embedding, n, p, initial, num_inputs, offsets, targets, output_of, symbols, symbol_index, info: None })
    }

    pub fn num_states(&self) -> usize {
        self.output_of.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn successors(&self, state: usize, input: usize) -> &[usize] {
        let k = state * self.num_inputs + input;
        &self.targets[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Successors under any input, sorted and deduplicated.
    pub fn post(&self, state: usize) -> Vec<usize> {
        let k = state * self.num_inputs;
        let mut v = self.targets[self.offsets[k]..self.offsets[k + self.num_inputs]].to_vec();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn is_deterministic(&self) -> bool {
        self.offsets.windows(2).all(|w| w[1] - w[0] <= 1)
    }

    /// Interned output symbol of a state. Equal symbols mean exactly equal outputs.
    pub fn output_symbol(&self, state: usize) -> usize {
        self.output_of[state]
    }

    pub fn num_output_symbols(&self) -> usize {
        self.symbols.len()
    }

    /// The symbol of an observed output value, if any state produces it.
    ///
    /// Lattice systems quantize the value first, so both exact lattice
    /// outputs and raw measurements are accepted.
    pub fn symbol_of(&self, y: &[f64]) -> Option<usize> {
        if y.len() != self.p {
            return None;
        }
        let key = match &self.embedding {
            Embedding::Lattice { theta, .. } => {
                OutputKey::Lattice(lattice::quantize_coords(y, *theta).ok()?)
            }
            Embedding::Raw(_) => OutputKey::Raw(y.iter().map(|&x| float_key(x)).collect()),
        };
        self.symbol_index.get(&key).copied()
    }

    pub fn embed(&self, state: usize) -> Vec<f64> {
        match &self.embedding {
            Embedding::Lattice { theta, coords } => lattice::embed(&coords[state], *theta),
            Embedding::Raw(v) => v[state].clone(),
        }
    }

    pub fn output_value(&self, state: usize) -> Vec<f64> {
        self.embed(state)[..self.p].to_vec()
    }

    pub fn lattice_coords(&self, state: usize) -> Option<&[i64]> {
        match &self.embedding {
            Embedding::Lattice { coords, .. } => Some(&coords[state]),
            Embedding::Raw(_) => None,
        }
    }

    /// Lattice coordinates to state index; empty for raw systems.
    pub fn coord_index(&self) -> HashMap<Vec<i64>, usize> {
        match &self.embedding {
            Embedding::Lattice { coords, .. } => coords.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect(),
            Embedding::Raw(_) => HashMap::new(),
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match &self.embedding {
            Embedding::Lattice { theta, coords } => {
                let d = coords[a].iter().zip(&coords[b]).map(|(x, y)| (x - y).abs()).max().unwrap_or(0);
                embed_coord(d, *theta)
            }
            Embedding::Raw(v) => crate::system::inf_norm_diff(&v[a], &v[b]),
        }
    }

    /// States within distance `rho` of some state of `faults`, sorted.
    pub fn ball_states(&self, faults: &[usize], rho: f64) -> Vec<usize> {
        if faults.is_empty() {
            return Vec::new();
        }
        match &self.embedding {
            Embedding::Lattice { theta, coords } => {
                // integer Chebyshev radius; exact on lattice distances
                let r = lattice::snap(rho / (2.0 * theta)).floor();
                if r < 0.0 {
                    return Vec::new();
                }
                let r = r.min(i64::MAX as f64) as i64;
                (0..coords.len())
                    .filter(|&i| {
                        faults.iter().any(|&f| {
                            coords[i].iter().zip(&coords[f]).all(|(x, y)| (x - y).abs() <= r)
                        })
                    })
                    .collect()
            }
            Embedding::Raw(_) => {
                (0..self.num_states()).filter(|&i| faults.iter().any(|&f| self.distance(i, f) <= rho)).collect()
            }
        }
    }

    /// Pointwise outputs of a state run, after checking it is a path.
    pub fn output_run(&self, run: &[usize]) -> Result<Vec<Vec<f64>>, FinSysError> {
        for &s in run {
            check(s, self.num_states(), "run state")?;
        }
        for (step, w) in run.windows(2).enumerate() {
            if !self.post(w[0]).contains(&w[1]) {
                return Err(FinSysError::InvalidPath { step: step + 1, from: w[0], to: w[1] });
            }
        }
        Ok(run.iter().map(|&s| self.output_value(s)).collect())
    }

    /// Twin plant: pairs of states with equal outputs, inputs erased.
    pub fn synchronized_product(&self) -> Product {
        let post: Vec<Vec<usize>> = (0..self.num_states()).map(|s| self.post(s)).collect();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut initial = Vec::new();
        for &i in &self.initial {
            for &j in &self.initial {
                if self.output_of[i] == self.output_of[j] {
                    index.insert((i, j), pairs.len());
                    initial.push(pairs.len());
                    pairs.push((i, j));
                }
            }
        }
        let mut succ: Vec<Vec<usize>> = Vec::new();
        let mut k = 0;
        while k < pairs.len() {
            let (i, j) = pairs[k];
            let mut out = Vec::new();
            for &a in &post[i] {
                for &b in &post[j] {
                    if self.output_of[a] == self.output_of[b] {
                        let id = *index.entry((a, b)).or_insert_with(|| {
                            pairs.push((a, b));
                            pairs.len() - 1
                        });
                        out.push(id);
                    }
                }
            }
            succ.push(out);
            k += 1;
        }
        Product { pairs, initial, succ }
    }

    pub fn to_doc(&self) -> ModelDoc {
        let body = match (&self.embedding, &self.info) {
            (Embedding::Lattice { coords, .. }, Some(info)) => ModelBody::Lattice {
                eta: info.eta,
                mu: info.mu,
                epsilon: info.epsilon,
                n: self.n,
                m: info.m,
                p: self.p,
                states: coords.clone(),
                inputs: info.inputs.clone(),
                initial: self.initial.clone(),
                successors: self.targets.clone(),
                config_digest: info.config_digest.clone(),
            },
            _ => {
                let raw_states = (0..self.num_states()).map(|s| self.embed(s)).collect();
                let mut transitions = Vec::new();
                for s in 0..self.num_states() {
                    for u in 0..self.num_inputs {
                        transitions.extend(self.successors(s, u).iter().map(|&t| [s, u, t]));
                    }
                }
                ModelBody::Raw { p: self.p, raw_states, initial: self.initial.clone(), num_inputs: self.num_inputs, transitions }
            }
        };
        ModelDoc { format: MODEL_FORMAT.to_string(), body }
    }

    /// Compact JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self.to_doc()).expect("model serializes");
        serde_json::to_string(&value).expect("model serializes")
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self, FinSysError> {
        if doc.format != MODEL_FORMAT {
            return Err(FinSysError::Format(doc.format));
        }
        match doc.body {
            ModelBody::Lattice { eta, mu, epsilon, n, m, p, states, inputs, initial, successors, config_digest } => {
                if states.iter().any(|s| s.len() != n) {
                    return Err(FinSysError::Invalid(format!("lattice states must have {n} coordinates")));
                }
                if inputs.iter().any(|u| u.len() != m) {
                    return Err(FinSysError::Invalid(format!("inputs must have {m} coordinates")));
                }
                let mut sys = Self::lattice(eta, p, states, initial, inputs.len(), successors)?;
                sys.info = Some(AbstractionInfo { eta, mu, epsilon, m, inputs, config_digest });
                Ok(sys)
            }
            ModelBody::Raw { p, raw_states, initial, num_inputs, transitions } => {
                Self::raw(p, raw_states, initial, num_inputs, &transitions)
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self, FinSysError> {
        Self::from_doc(serde_json::from_str(s)?)
    }
}

fn check(index: usize, size: usize, what: &'static str) -> Result<(), FinSysError> {
    if index < size {
        Ok(())
    } else {
        Err(FinSysError::OutOfRange { what, index, size })
    }
}

/// Reachable part of the self-product synchronized on outputs.
#[derive(Debug, Clone)]
pub struct Product {
    pub pairs: Vec<(usize, usize)>,
    pub initial: Vec<usize>,
    pub succ: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format: String,
    #[serde(flatten)]
    pub body: ModelBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelBody {
    Lattice {
        eta: f64,
        mu: f64,
        epsilon: f64,
        n: usize,
        m: usize,
        p: usize,
        states: Vec<Vec<i64>>,
        inputs: Vec<Vec<i64>>,
        initial: Vec<usize>,
        /// Flat table indexed by `state * inputs.len() + input`.
        successors: Vec<usize>,
        config_digest: String,
    },
    Raw {
        p: usize,
        raw_states: Vec<Vec<f64>>,
        initial: Vec<usize>,
        num_inputs: usize,
        /// `[from, input, to]` triples.
        transitions: Vec<[usize; 3]>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn ball_examples() {
        let s = FiniteSystem::raw(1, vec![vec![0.0], vec![2.0], vec![4.0]], vec![0], 1, &[[0, 0, 1]]).unwrap();
        assert_eq!(s.ball_states(&[1], 0.0), vec![1]);
        assert_eq!(s.ball_states(&[1], 1.0), vec![1]);
        assert_eq!(s.ball_states(&[1], 2.0), vec![0, 1, 2]);
        assert_eq!(s.ball_states(&[1], 100.0), vec![0, 1, 2]);
        assert!(s.ball_states(&[], 100.0).is_empty());
    }

    #[test]
    fn lattice_ball_is_exact_on_decimal_radii() {
        // grid spacing 0.2; radius 0.6 reaches exactly 3 cells
        let coords: Vec<Vec<i64>> = (0..8).map(|k| vec![k]).collect();
        let succ: Vec<usize> = (0..8).collect();
        let s = FiniteSystem::lattice(0.1, 0, coords, vec![0], 1, succ).unwrap();
        assert_eq!(s.ball_states(&[0], 0.6), vec![0, 1, 2, 3]);
        assert_eq!(s.ball_states(&[0], 0.3), vec![0, 1]);
    }

    #[test]
    fn output_runs() {
        let d1 = fixtures::d1();
        assert_eq!(d1.output_run(&[0]).unwrap(), vec![vec![0.0]]);
        assert_eq!(d1.output_run(&[0, 1, 1, 1]).unwrap(), vec![vec![0.0], vec![2.0], vec![2.0], vec![2.0]]);
        assert!(matches!(d1.output_run(&[0, 0]), Err(FinSysError::InvalidPath { .. })));
        assert!(d1.output_run(&[9]).is_err());
    }

    #[test]
    fn product_examples() {
        let d1 = fixtures::d1();
        let prod = d1.synchronized_product();
        assert!(prod.pairs.iter().all(|(i, j)| i == j));
        let nd1 = fixtures::nd1();
        let prod = nd1.synchronized_product();
        assert!(prod.pairs.contains(&(1, 2)));
        let empty = FiniteSystem::raw(1, vec![vec![0.0], vec![1.0]], vec![], 1, &[[0, 0, 1]]).unwrap();
        assert!(empty.synchronized_product().pairs.is_empty());
    }

    #[test]
    fn json_round_trip() {
        for s in [fixtures::d1(), fixtures::nd1()] {
            let text = s.to_json();
            let back = FiniteSystem::from_json(&text).unwrap();
            assert_eq!(back.to_json(), text);
            assert_eq!(back.num_states(), s.num_states());
        }
        assert!(matches!(
            FiniteSystem::from_json(r#"{"format":"other","kind":"raw","p":0,"raw_states":[],"initial":[],"num_inputs":1,"transitions":[]}"#),
            Err(FinSysError::Format(_))
        ));
    }

    #[test]
    fn symbols_and_determinism() {
        let nd1 = fixtures::nd1();
        assert_eq!(nd1.output_symbol(1), nd1.output_symbol(2));
        assert_eq!(nd1.symbol_of(&[2.0]), Some(nd1.output_symbol(1)));
        assert_eq!(nd1.symbol_of(&[3.0]), None);
        assert!(!nd1.is_deterministic());
    }
}
