//! Bundled example systems.
//!
//! * E1: two-dimensional linear plant, one output, one input.
//! * D1: three states `a = 0`, `f = 2`, `c = 4` on a line; `a` branches to the
//!   fault `f` or to `c`, and the outputs tell them apart.
//! * ND1: the same automaton in the plane with `f = (2, 0)` and `c = (2, 5)`;
//!   both produce output `2`, so the fault can never be told apart from `c`.
//!
//! In D1 and ND1 the fault set is `{1}` (state `f`).

use crate::finsys::FiniteSystem;
use crate::system::{self, Certificate, SystemDef};

pub const E1_JSON: &str = include_str!("../fixtures/e1.json");
pub const D1_JSON: &str = include_str!("../fixtures/d1.json");
pub const ND1_JSON: &str = include_str!("../fixtures/nd1.json");

/// Index of the faulty state in D1 and ND1.
pub const FAULT: usize = 1;

pub fn e1() -> (SystemDef, Certificate) {
    system::parse_system(E1_JSON).expect("bundled E1 config is valid")
}

pub fn d1() -> FiniteSystem {
    FiniteSystem::from_json(D1_JSON).expect("bundled D1 model is valid")
}

pub fn nd1() -> FiniteSystem {
    FiniteSystem::from_json(ND1_JSON).expect("bundled ND1 model is valid")
}

/// A small random system with a fault specification, for oracle testing.
///
/// States live on a 5×2 integer grid in the plane with the first coordinate
/// as output (so at most two output symbols); every state/input pair has
/// one or two successors. Initial states are drawn outside the fault
/// neighbourhood.
pub fn random_instance<R: rand::Rng + ?Sized>(rng: &mut R) -> (FiniteSystem, crate::diagnosis::FaultSpec) {
    use crate::diagnosis::FaultSpec;
    loop {
        let k = rng.gen_range(3..=6);
        let inputs = rng.gen_range(1..=3);
        let states: Vec<Vec<f64>> =
            (0..k).map(|_| vec![rng.gen_range(0..2) as f64, rng.gen_range(0..5) as f64]).collect();
        let mut transitions = Vec::new();
        for s in 0..k {
            for u in 0..inputs {
                for _ in 0..rng.gen_range(1..=2) {
                    transitions.push([s, u, rng.gen_range(0..k)]);
                }
            }
        }
        let faults: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..k)).collect();
        let rho = rng.gen_range(0..=3) as f64;
        let probe = FiniteSystem::raw(1, states.clone(), vec![], inputs, &transitions).expect("valid random system");
        let ball = probe.ball_states(&faults, rho);
        let free: Vec<usize> = (0..k).filter(|s| !ball.contains(s)).collect();
        if free.is_empty() {
            continue;
        }
        let initial: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| free[rng.gen_range(0..free.len())]).collect();
        let s = FiniteSystem::raw(1, states, initial, inputs, &transitions).expect("valid random system");
        return (s, FaultSpec::new(faults, rho));
    }
}
