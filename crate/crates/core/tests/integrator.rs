use hocp::hybrid::{CrossingDirection, Manifold};
use hocp::integrator::{integrate_costate, integrate_phase, interpolate, EventSpec, TimeGrid};
use hocp::model::{adjoint_rhs, vector_field, EpiModel, Mode, Phase};

fn decay(h: f64) -> f64 {
    let grid = TimeGrid::new(0.0, 1.0, h).unwrap();
    let seg = integrate_phase(|x, _| vec![-x[0]], &[1.0], &grid, |_| vec![0.0], None).unwrap();
    seg.last_state()[0]
}

#[test]
fn decay_matches_exponential() {
    assert!((decay(0.01) - (-1.0f64).exp()).abs() < 1e-9);
}

#[test]
fn halving_the_step_divides_error_by_sixteen() {
    let exact = (-1.0f64).exp();
    let ratio = (decay(0.1) - exact).abs() / (decay(0.05) - exact).abs();
    assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn hermite_midpoint_is_accurate() {
    let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
    let seg = integrate_phase(|x, _| vec![-x[0]], &[1.0], &grid, |_| vec![0.0], None).unwrap();
    for t in [0.005, 0.505, 0.995] {
        let (x, _) = interpolate(&seg, t).unwrap();
        assert!((x[0] - (-t).exp()).abs() < 1e-8);
    }
    assert!(interpolate(&seg, 1.5).is_err());
}

#[test]
fn rising_crossing_localized() {
    let m = Manifold::coordinate("x - 0.3", 1, 0, 0.3, CrossingDirection::Rising);
    let grid = TimeGrid::new(0.0, 1.0, 0.07).unwrap();
    let seg = integrate_phase(
        |_, _| vec![1.0],
        &[0.0],
        &grid,
        |_| vec![0.0],
        Some(EventSpec::new(&m)),
    )
    .unwrap();
    assert!((seg.t_last() - 0.3).abs() <= 1e-8);
}

#[test]
fn falling_crossing_of_exponential() {
    // x = e^{-t} hits 0.5 at ln 2.
    let m = Manifold::coordinate("x - 0.5", 1, 0, 0.5, CrossingDirection::Falling);
    let grid = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
    let seg = integrate_phase(
        |x, _| vec![-x[0]],
        &[1.0],
        &grid,
        |_| vec![0.0],
        Some(EventSpec::new(&m)),
    )
    .unwrap();
    assert!((seg.t_last() - 2f64.ln()).abs() <= 1e-8);
}

/// `e^{M tau}` for lower-triangular `M = [[a, 0], [c, b]]`, `a != b`.
fn expm_lower(a: f64, b: f64, c: f64, tau: f64) -> [[f64; 2]; 2] {
    let (ea, eb) = ((a * tau).exp(), (b * tau).exp());
    [[ea, 0.0], [c * (ea - eb) / (a - b), eb]]
}

#[test]
fn linear_costate_matches_closed_form() {
    // x' = A x with running cost q.x on [0, T]; lambda' = -q - A^T lambda,
    // lambda(T) = 0, so lambda(t) = (A^T)^{-1} (e^{A^T (T - t)} - I) q.
    let a = [[-1.0, 0.5], [0.0, -2.0]];
    let q = [1.0, 3.0];
    let t_end = 2.0;
    let grid = TimeGrid::new(0.0, t_end, 0.01).unwrap();
    let seg = integrate_phase(
        |x, _| {
            vec![
                a[0][0] * x[0] + a[0][1] * x[1],
                a[1][0] * x[0] + a[1][1] * x[1],
            ]
        },
        &[1.0, 1.0],
        &grid,
        |_| vec![0.0],
        None,
    )
    .unwrap();
    let lambdas = integrate_costate(&seg, &[0.0, 0.0], |_, _, l| {
        vec![
            -q[0] - (a[0][0] * l[0] + a[1][0] * l[1]),
            -q[1] - (a[0][1] * l[0] + a[1][1] * l[1]),
        ]
    })
    .unwrap();
    // A^T = [[-1, 0], [0.5, -2]]; its inverse is [[-1, 0], [-0.25, -0.5]].
    let inv = [[-1.0, 0.0], [-0.25, -0.5]];
    for (k, t) in seg.times.iter().enumerate() {
        let e = expm_lower(-1.0, -2.0, 0.5, t_end - t);
        let v = [
            (e[0][0] - 1.0) * q[0] + e[0][1] * q[1],
            e[1][0] * q[0] + (e[1][1] - 1.0) * q[1],
        ];
        let exact = [
            inv[0][0] * v[0] + inv[0][1] * v[1],
            inv[1][0] * v[0] + inv[1][1] * v[1],
        ];
        for i in 0..2 {
            assert!((lambdas[k][i] - exact[i]).abs() <= 1e-7, "t = {t}");
        }
    }
    // lambda(0) is the gradient of the cost with respect to x0.
    let cost = |x0: [f64; 2]| {
        let s = integrate_phase(
            |x, _| {
                vec![
                    a[0][0] * x[0] + a[0][1] * x[1],
                    a[1][0] * x[0] + a[1][1] * x[1],
                ]
            },
            &x0,
            &grid,
            |_| vec![0.0],
            None,
        )
        .unwrap();
        let vals: Vec<f64> = s.states.iter().map(|x| q[0] * x[0] + q[1] * x[1]).collect();
        hocp::solver::integrate_samples(&s.times, &vals)
    };
    let d = 1e-3;
    let fd = (cost([1.0 + d, 1.0]) - cost([1.0 - d, 1.0])) / (2.0 * d);
    assert!((fd - lambdas[0][0]).abs() / fd.abs() < 1e-5);
}

#[test]
fn wfh_pool_costate_grows_linearly() {
    let model = EpiModel::default();
    let duration = 3.5;
    let grid = TimeGrid::new(13.0, 13.0 + duration, 0.01).unwrap();
    let x0 = [0.0, 0.0, 0.09, 0.67, 0.04, 0.043, 0.012, 0.145];
    let u = vec![0.04, 0.2, 0.2];
    let seg = integrate_phase(
        |x, u| vector_field(Mode::Wfh, x, u, &model.params),
        &x0,
        &grid,
        |_| u.clone(),
        None,
    )
    .unwrap();
    let lambdas = integrate_costate(&seg, &[0.0; 8], |x, u, l| {
        adjoint_rhs(Phase::Wfh, x, l, u, &model.params, &model.weights)
    })
    .unwrap();
    let expected = model.weights.wfh.a_hv * duration;
    assert!(
        (lambdas[0][0] - expected).abs() < 1e-9,
        "{} vs {expected}",
        lambdas[0][0]
    );
}
