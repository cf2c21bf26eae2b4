//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use logode_core::harness::{
    dimension_sweep, fit_slope, global_error, taylor_transport_error, FieldFamily, Source, SweepConfig,
};
use logode_core::schemes::{
    euler_integral_step, euler_step, integral_reference, log_ode_step, reference_solve, solve_global,
    DEFAULT_SUBSTEPS,
};
use logode_core::signature::{one_variation, p_variation_level1, path_signature, segment_signature};
use logode_core::vector_field::{apply_operator, elementary_differential, MapTerm, PolyTerm};
use logode_core::{
    Driver, LogOdeVariant, PiecewiseLinearPath, PolynomialMap, Scheme, SchemeConfig, TruncatedTensor,
    VectorFieldSystem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, ok: bool, detail: String) {
    println!("criterion {criterion:>2}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rel_err(a: &TruncatedTensor, b: &TruncatedTensor) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1e-300);
    a.sub(b).unwrap().max_abs() / scale
}

/// Growing spiral `r(t) (cos 2πt, sin 2πt)` with `r(t) = scale (1 + t)`.
fn spiral(samples: usize, scale: f64) -> PiecewiseLinearPath {
    let times: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let points = times
        .iter()
        .map(|&t| {
            let r = scale * (1.0 + t);
            vec![r * (2.0 * PI * t).cos(), r * (2.0 * PI * t).sin()]
        })
        .collect();
    PiecewiseLinearPath::new(times, points).unwrap()
}

fn scaled(path: &PiecewiseLinearPath, lambda: f64) -> PiecewiseLinearPath {
    let points = path
        .points()
        .iter()
        .map(|x| x.iter().map(|v| v * lambda).collect())
        .collect();
    PiecewiseLinearPath::new(path.times().to_vec(), points).unwrap()
}

/// Two noncommuting linear fields on R^2.
fn noncommuting() -> VectorFieldSystem {
    VectorFieldSystem::homogeneous_linear(
        vec![
            vec![vec![0.2, 1.0], vec![-0.5, 0.1]],
            vec![vec![-0.3, 0.4], vec![1.0, 0.2]],
        ],
        6.0,
        1.0,
    )
    .unwrap()
}

fn random_path(rng: &mut ChaCha8Rng, dim: usize, samples: usize) -> PiecewiseLinearPath {
    let mut x = vec![0.0; dim];
    let mut points = vec![x.clone()];
    for _ in 1..samples {
        for v in x.iter_mut() {
            *v += rng.gen_range(-1.0..1.0);
        }
        points.push(x.clone());
    }
    PiecewiseLinearPath::new((0..samples).map(|i| i as f64).collect(), points).unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, dim: usize, depth: usize, scalar: f64) -> TruncatedTensor {
    let levels = (1..=depth)
        .map(|k| (0..dim.pow(k as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    TruncatedTensor::from_levels(dim, depth, scalar, levels).unwrap()
}

fn signature_of(path: &PiecewiseLinearPath, depth: usize) -> TruncatedTensor {
    path_signature(path, path.start(), path.end(), depth).unwrap()
}

#[test]
fn criterion_01_algebraic_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 5];
    for _ in 0..1000 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let samples = rng.gen_range(2..=6);
        let path = random_path(&mut rng, d, samples);
        let g = signature_of(&path, n);
        let h = signature_of(&random_path(&mut rng, d, 3), n);

        // exp/log both ways
        let x = random_tensor(&mut rng, d, n, 0.0);
        let roundtrip = rel_err(&g.log().unwrap().exp().unwrap(), &g)
            .max(rel_err(&x.exp().unwrap().log().unwrap(), &x));
        worst[0] = worst[0].max(roundtrip);

        let (a, b, c) = (
            random_tensor(&mut rng, d, n, 1.0),
            random_tensor(&mut rng, d, n, 1.0),
            random_tensor(&mut rng, d, n, 1.0),
        );
        let assoc = rel_err(
            &a.product(&b).unwrap().product(&c).unwrap(),
            &a.product(&b.product(&c).unwrap()).unwrap(),
        );
        worst[1] = worst[1].max(assoc);

        let one = TruncatedTensor::unit(d, n).unwrap();
        let inv = g.inverse().unwrap();
        worst[2] = worst[2].max(rel_err(&g.product(&inv).unwrap(), &one).max(rel_err(&inv.product(&g).unwrap(), &one)));

        let lambda = rng.gen_range(-3.0..3.0);
        // a dilated path has the dilated signature
        let dilation = rel_err(&signature_of(&scaled(&path, lambda), n), &g.dilate(lambda)).max(rel_err(
            &g.product(&h).unwrap().dilate(lambda),
            &g.dilate(lambda).product(&h.dilate(lambda)).unwrap(),
        ));
        worst[3] = worst[3].max(dilation);

        let u = rng.gen_range(path.start()..path.end());
        let chen = rel_err(
            &path_signature(&path, path.start(), u, n)
                .unwrap()
                .product(&path_signature(&path, u, path.end(), n).unwrap())
                .unwrap(),
            &g,
        );
        worst[4] = worst[4].max(chen);
    }
    let elapsed = started.elapsed();
    let ok = worst.iter().all(|&w| w <= 1e-12) && elapsed < Duration::from_secs(10);
    report(
        1,
        ok,
        format!(
            "5000 cases, worst relative errors roundtrip {:.1e} assoc {:.1e} inverse {:.1e} dilation {:.1e} chen {:.1e}, {:.2?}",
            worst[0], worst[1], worst[2], worst[3], worst[4], elapsed
        ),
    );
}

#[test]
fn criterion_02_quarter_circle_level_two() {
    let n = 64;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let points: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| vec![(0.5 * PI * t).cos(), (0.5 * PI * t).sin()])
        .collect();
    let path = PiecewiseLinearPath::new(times, points.clone()).unwrap();
    let sig = signature_of(&path, 2);

    // ∫_0^1 (x^i_u − x^i_0) dx^j_u by 2-point Gauss–Legendre on each straight piece
    let nodes = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut oracle = [[0.0; 2]; 2];
    for w in points.windows(2) {
        let delta = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        for &s in &nodes {
            for i in 0..2 {
                let xi = w[0][i] + s * delta[i] - points[0][i];
                for j in 0..2 {
                    oracle[i][j] += 0.5 * xi * delta[j];
                }
            }
        }
    }
    let worst = (0..4)
        .map(|k| (sig.level(2)[k] - oracle[k / 2][k % 2]).abs())
        .fold(0.0, f64::max);
    report(2, worst <= 1e-10, format!("max deviation from quadrature {worst:.2e}"));
}

#[test]
fn criterion_03_local_order() {
    let started = Instant::now();
    let f = noncommuting();
    let base = spiral(64, 0.5);
    let base_var = one_variation(&base, 0.0, 1.0).unwrap();
    let y0 = [1.0, 0.5];
    let hs: Vec<f64> = (3..=9).map(|k| 2f64.powi(-k)).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for depth in [2usize, 3] {
        let window = (depth as f64 + 0.7, depth as f64 + 1.3);
        let mut euler_err = Vec::new();
        let mut logode_err = Vec::new();
        for &h in &hs {
            // the same curved path shrunk to 1-variation h
            let step = scaled(&base, h / base_var);
            let g = signature_of(&step, depth);
            let exact = reference_solve(&f, &step, &y0, &[0.0, 1.0], DEFAULT_SUBSTEPS).unwrap();
            euler_err.push(dist(&euler_step(&f, &g, &y0).unwrap(), &exact[1]));
            let lo = log_ode_step(&f, &g, &y0, LogOdeVariant::TopLevelInInitialCondition, DEFAULT_SUBSTEPS).unwrap();
            logode_err.push(dist(&lo, &exact[1]));
        }
        for (name, errs) in [("euler", &euler_err), ("logode", &logode_err)] {
            let slope = fit_slope(&hs, errs).unwrap_or(f64::NAN);
            ok &= slope >= window.0 && slope <= window.1;
            lines.push(format!("{name} N={depth} slope {slope:.3}"));
        }
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    report(3, ok, format!("{}, {elapsed:.2?}", lines.join(", ")));
}

#[test]
fn criterion_04_global_order() {
    let f = noncommuting();
    let path = spiral(4096, 0.15);
    let y0 = [1.0, 0.5];
    let meshes = [8usize, 16, 32, 64, 128, 256, 512];
    let hs: Vec<f64> = meshes.iter().map(|&m| 1.0 / m as f64).collect();
    let mut ok = true;
    let mut lines = Vec::new();
    for depth in 1..=3 {
        let errs: Vec<f64> = meshes
            .iter()
            .map(|&m| global_error(&f, &path, &y0, Scheme::Euler, depth, m, DEFAULT_SUBSTEPS).unwrap())
            .collect();
        let slope = fit_slope(&hs, &errs).unwrap_or(f64::NAN);
        ok &= (slope - depth as f64).abs() <= 0.3;
        lines.push(format!("euler N={depth} slope {slope:.3}"));
    }

    // dy = y dx, x(t) = t, ten Euler steps: (1 + 1/10)^10
    let line = PiecewiseLinearPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
    let scalar = VectorFieldSystem::homogeneous_linear(vec![vec![vec![1.0]]], 2.0, 1.0).unwrap();
    let cfg = SchemeConfig::uniform(Scheme::Euler, 1, 10).unwrap();
    let y_t = solve_global(&scalar, Driver::Path(&line), &[1.0], &cfg).unwrap().last()[0];
    let closed = 1.1f64.powi(10);
    ok &= (y_t - closed).abs() <= 1e-12 && (y_t - 2.5937425).abs() < 1e-7;
    lines.push(format!("scalar y_T {y_t:.9} vs 1.1^10 {closed:.9}"));
    report(4, ok, lines.join(", "));
}

#[test]
fn criterion_05_flow_composition() {
    let f = noncommuting();
    let depth = 2;
    let g = signature_of(&spiral(16, 0.3).restrict(0.0, 0.5).unwrap(), depth);
    let h = signature_of(&PiecewiseLinearPath::new(
        vec![0.0, 1.0, 2.0, 3.0],
        vec![vec![0.0, 0.0], vec![0.4, -0.1], vec![0.1, 0.5], vec![-0.3, 0.2]],
    )
    .unwrap(), depth);
    let y0 = [1.0, 0.5];
    let variant = LogOdeVariant::TopLevelInInitialCondition;
    let lambdas: Vec<f64> = (1..=6).map(|k| 2f64.powi(-k)).collect();
    let errs: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let (gl, hl) = (g.dilate(l), h.dilate(l));
            let mid = log_ode_step(&f, &gl, &y0, variant, DEFAULT_SUBSTEPS).unwrap();
            let two = log_ode_step(&f, &hl, &mid, variant, DEFAULT_SUBSTEPS).unwrap();
            let one = log_ode_step(&f, &gl.product(&hl).unwrap(), &y0, variant, DEFAULT_SUBSTEPS).unwrap();
            dist(&two, &one)
        })
        .collect();
    let slope = fit_slope(&lambdas, &errs).unwrap_or(f64::NAN);
    report(5, (slope - 3.0).abs() <= 0.3, format!("two-step vs one-step slope {slope:.3} (target 3)"));
}

/// Polynomial test function `r: R^e → R^2` with quadratic and cubic terms.
fn test_function(rng: &mut ChaCha8Rng, e: usize) -> PolynomialMap {
    let mut terms = Vec::new();
    for output in 0..2 {
        for l in 0..e {
            for m in l..e {
                let mut exponents = vec![0; e];
                exponents[l] += 1;
                exponents[m] += 1;
                terms.push(MapTerm { output, exponents, coeff: rng.gen_range(-1.0..1.0) });
            }
            let mut exponents = vec![0; e];
            exponents[l] = 3;
            terms.push(MapTerm { output, exponents, coeff: rng.gen_range(-0.5..0.5) });
        }
    }
    PolynomialMap::new(e, 2, terms).unwrap()
}

/// Two fields on R^2 mixing linear and quadratic terms.
fn quadratic_fields(rng: &mut ChaCha8Rng) -> VectorFieldSystem {
    let mut terms = Vec::new();
    for input in 0..2 {
        for output in 0..2 {
            for exponents in [vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]] {
                terms.push(PolyTerm { input, output, exponents, coeff: rng.gen_range(-1.0..1.0) });
            }
        }
    }
    VectorFieldSystem::polynomial(2, 2, terms, 4.0, 1.0).unwrap()
}

#[test]
fn criterion_06_first_order_on_brackets() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let f = if case % 2 == 0 { noncommuting() } else { quadratic_fields(&mut rng) };
        // bracket elements from log-signatures of random PL paths (levels 2 and 3)
        let path = random_path(&mut rng, 2, 5);
        let log = signature_of(&path, 3).log().unwrap();
        let v = if case % 3 == 0 { log.projection(3) } else { log.projection(2).add(&log.projection(3)).unwrap() };
        let r = test_function(&mut rng, 2);
        let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let lhs = apply_operator(&f, &v, &r, &y).unwrap();
        let rhs = r.differential(&y, &elementary_differential(&f, &v, &y).unwrap());
        let scale = lhs.iter().chain(&rhs).map(|x| x.abs()).fold(1.0, f64::max);
        worst = worst.max(dist(&lhs, &rhs) / scale);
    }
    report(6, worst <= 1e-8, format!("200 bracket elements, worst deviation {worst:.2e}"));
}

#[test]
fn criterion_07_taylor_transport() {
    let f = noncommuting();
    let depth = 3;
    let g = signature_of(&spiral(16, 0.4), depth);
    let xi = [1.0, 0.5];
    let lambdas: Vec<f64> = (1..=6).map(|k| 2f64.powi(-k)).collect();
    let mut ok = true;
    let mut lines = Vec::new();
    for k in [1usize, 2] {
        let block: Vec<f64> = (0..2usize.pow(k as u32)).map(|i| 0.3 + 0.2 * i as f64).collect();
        let v = TruncatedTensor::from_level(2, depth, k, block).unwrap();
        let errs: Vec<f64> = lambdas
            .iter()
            .map(|&l| taylor_transport_error(&f, &g.dilate(l), &v, &xi).unwrap())
            .collect();
        let slope = fit_slope(&lambdas, &errs).unwrap_or(f64::NAN);
        let target = (depth + 1 - k) as f64;
        ok &= (slope - target).abs() <= 0.3;
        lines.push(format!("k={k} slope {slope:.3} (target {target})"));
    }
    report(7, ok, lines.join(", "));
}

#[test]
fn criterion_08_dimension_sweep() {
    let path = spiral(4096, 0.15);
    let cfg = SweepConfig {
        dims: vec![2, 4, 8, 16],
        family: FieldFamily::ConjugatedNilpotent,
        seed: 0,
        path: Source::Inline(path.clone()),
        scheme: Scheme::LogOde,
        depth: 2,
        steps: 32,
        substeps: DEFAULT_SUBSTEPS,
        max_ratio: 3.0,
    };
    let sweep = dimension_sweep(&cfg, &path).unwrap();
    let ratio = sweep.errors.iter().copied().fold(0.0, f64::max)
        / sweep.errors.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        8,
        ratio <= 3.0,
        format!("errors {:?} for d = {:?}, max/min {ratio:.3}", sweep.errors, sweep.dims),
    );
}

#[test]
fn criterion_09_integral_expansion() {
    // f(x) = x^2 over the segment 1 → 1.1
    let square = VectorFieldSystem::polynomial_with_state(
        1,
        1,
        1,
        vec![PolyTerm { input: 0, output: 0, exponents: vec![2], coeff: 1.0 }],
        3.0,
        1.0,
    )
    .unwrap();
    let g = segment_signature(&[0.1], 3).unwrap();
    let value = euler_integral_step(&square, &g, &[1.0], &[0.0]).unwrap()[0];
    let closed = (1.1f64.powi(3) - 1.0) / 3.0;
    let mut ok = (value - closed).abs() <= 1e-12;
    let mut detail = format!("x^2 step {value:.15} vs {closed:.15}");

    // quintic integrand on R^2 with values in R^2, N = 2 and 3, along shrunk curved paths
    let mut terms = Vec::new();
    for (n, exponents) in [vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 1], vec![0, 3], vec![3, 2], vec![1, 4]]
        .into_iter()
        .enumerate()
    {
        for input in 0..2 {
            let coeff = 0.5 + 0.25 * ((n + 3 * input) % 5) as f64;
            terms.push(PolyTerm { input, output: (n + input) % 2, exponents: exponents.clone(), coeff });
        }
    }
    let f = VectorFieldSystem::polynomial_with_state(2, 2, 2, terms, 6.0, 1.0).unwrap();
    let base = spiral(48, 0.5);
    let base_var = one_variation(&base, 0.0, 1.0).unwrap();
    let hs: Vec<f64> = (3..=9).map(|k| 2f64.powi(-k)).collect();
    let x_s = [0.3, -0.2];
    for depth in [2usize, 3] {
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let shape = scaled(&base, h / base_var);
                let start = shape.points()[0].clone();
                let points = shape
                    .points()
                    .iter()
                    .map(|p| vec![p[0] - start[0] + x_s[0], p[1] - start[1] + x_s[1]])
                    .collect();
                let step = PiecewiseLinearPath::new(shape.times().to_vec(), points).unwrap();
                let g = signature_of(&step, depth);
                let approx = euler_integral_step(&f, &g, &x_s, &[0.0, 0.0]).unwrap();
                dist(&approx, &integral_reference(&f, &step, 0.0, 1.0).unwrap())
            })
            .collect();
        let slope = fit_slope(&hs, &errs).unwrap_or(f64::NAN);
        ok &= (slope - (depth + 1) as f64).abs() <= 0.3;
        detail.push_str(&format!(", N={depth} slope {slope:.3}"));
    }
    report(9, ok, detail);
}

/// Largest `Σ |x_{t_{j+1}} − x_{t_j}|^p` over every subset of sample points.
fn p_variation_by_enumeration(points: &[Vec<f64>], p: f64) -> f64 {
    let n = points.len();
    let term = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt().powf(p);
    (0u32..1 << (n - 2))
        .map(|mask| {
            let mut chosen = vec![0];
            chosen.extend((1..n - 1).filter(|j| mask & (1 << (j - 1)) != 0));
            chosen.push(n - 1);
            chosen.windows(2).fold(0.0, |acc, w| acc + term(&points[w[0]], &points[w[1]]))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_10_p_variation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..500 {
        let dim = rng.gen_range(1..=3);
        let samples = rng.gen_range(2..=12);
        let p = rng.gen_range(1.0..4.0);
        let path = random_path(&mut rng, dim, samples);
        if p_variation_level1(&path, p).unwrap() != p_variation_by_enumeration(path.points(), p) {
            mismatches += 1;
        }
    }
    report(10, mismatches == 0, format!("500 random paths, {mismatches} mismatches"));
}
