//! Fixtures shared by the criterion benches.

use logode_core::vector_field::PolyTerm;
use logode_core::{PiecewiseLinearPath, TruncatedTensor, VectorFieldSystem};

/// Planar spiral with `samples + 1` points on [0, 1].
pub fn spiral(samples: usize) -> PiecewiseLinearPath {
    let times: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let points = times
        .iter()
        .map(|&t| {
            let (s, c) = (std::f64::consts::TAU * t).sin_cos();
            vec![0.5 * (1.0 + t) * c, 0.5 * (1.0 + t) * s]
        })
        .collect();
    PiecewiseLinearPath::new(times, points).expect("valid spiral")
}

/// Deterministic tensor with all levels populated and a unit scalar.
pub fn tensor(dim: usize, depth: usize) -> TruncatedTensor {
    let levels = (1..=depth)
        .map(|k| {
            (0..dim.pow(k as u32))
                .map(|i| (0.7 * (i + 3 * k) as f64).sin() / k as f64)
                .collect()
        })
        .collect();
    TruncatedTensor::from_levels(dim, depth, 1.0, levels).expect("valid tensor")
}

/// Signature of a short spiral arc, a typical log-ODE step increment.
pub fn step_increment(depth: usize) -> TruncatedTensor {
    let path = spiral(64);
    logode_core::signature::path_signature(&path, 0.0, 1.0 / 16.0, depth).expect("valid interval")
}

/// Two noncommuting linear fields on R^2.
pub fn linear_field() -> VectorFieldSystem {
    VectorFieldSystem::linear(
        vec![vec![vec![0.2, 1.0], vec![-0.5, 0.1]], vec![vec![-0.3, 0.4], vec![1.0, 0.2]]],
        vec![vec![0.0, 0.0], vec![0.1, -0.2]],
        10.0,
        1.0,
    )
    .expect("valid field")
}

/// Quadratic fields on R^2, which exercise the jet path.
pub fn quadratic_field() -> VectorFieldSystem {
    let term = |input, output, exponents: [u32; 2], coeff| PolyTerm {
        input,
        output,
        exponents: exponents.to_vec(),
        coeff,
    };
    let terms = vec![
        term(0, 0, [0, 1], 1.0),
        term(0, 1, [2, 0], -0.5),
        term(1, 0, [1, 1], 0.3),
        term(1, 1, [0, 0], 1.0),
        term(1, 1, [1, 0], 0.2),
    ];
    VectorFieldSystem::polynomial(2, 2, terms, 10.0, 1.0).expect("valid field")
}
