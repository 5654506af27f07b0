//! Abstraction size and time across state dimensions.
//!
//! The family is the decoupled contraction `x_i⁺ = x_i / 2` on `X0 = [-1, 1]ⁿ`
//! with `η = μ = 0.5`: every axis reaches exactly the three lattice values
//! `{-1, 0, 1}`, so the accessible model has `3ⁿ` states.

use std::time::Instant;

use serde::Serialize;

use crate::abstraction::{build_abstraction, solve_epsilon, AbstractionError, AbstractionParams, BuildOptions};
use crate::expr;
use crate::kfun::KFunction;
use crate::regions::{AxisBox, BoxUnion};
use crate::system::{Certificate, SystemDef};

pub const BENCH_ETA: f64 = 0.5;
pub const BENCH_MU: f64 = 0.5;
/// Lattice values reached on each axis.
pub const AXIS_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub epsilon: f64,
    pub states: usize,
    pub transitions: usize,
    pub expected_states: usize,
    pub wall_ms: f64,
}

/// The `n`-dimensional member of the benchmark family.
pub fn family(n: usize) -> (SystemDef, Certificate) {
    let f = (1..=n).map(|i| expr::parse(&format!("0.5*x{i}"), n, 1).expect("bench dynamics parse")).collect();
    let x0 = BoxUnion::single(AxisBox::closed(vec![-1.0; n], vec![1.0; n]).expect("box"));
    let u = BoxUnion::single(AxisBox::closed(vec![-0.1], vec![0.1]).expect("box"));
    let sys = SystemDef::new(n, 1, n - 1, f, x0, u, BENCH_ETA).expect("bench system is valid");
    let cert = Certificate {
        alpha_lo: KFunction::identity(),
        alpha_hi: KFunction::identity(),
        lambda: KFunction::Linear { a: 0.5 },
        sigma: KFunction::identity(),
        lipschitz: 1.0,
        weights: vec![1.0; n],
        explore_bound: AxisBox::closed(vec![-4.0; n], vec![4.0; n]).expect("box"),
    };
    (sys, cert)
}

pub fn bench_scaling(dims: &[usize]) -> Result<Vec<BenchRow>, AbstractionError> {
    dims.iter()
        .map(|&n| {
            let (sys, cert) = family(n);
            let epsilon = solve_epsilon(&cert, BENCH_ETA, BENCH_MU)?;
            let params = AbstractionParams { epsilon, eta: BENCH_ETA, mu: BENCH_MU };
            let start = Instant::now();
            let model = build_abstraction(&sys, &cert, &params, &BuildOptions::default())?;
            Ok(BenchRow {
                n,
                epsilon,
                states: model.num_states(),
                transitions: model.num_transitions(),
                expected_states: AXIS_WIDTH.pow(n as u32),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}
