//! Fixed-step RK4 with switching-manifold event localization, cubic Hermite
//! dense output, and backward costate integration along stored trajectories.
//!
//! Grid nodes are anchored to a global origin (`t0 + k h`), so a phase that
//! starts at an event time begins with one short step and then stays on the
//! shared grid. This keeps node sets stable when switching times move.

use crate::error::{Error, Result};
use crate::hybrid::Manifold;

/// Default event tolerance on `|m(x)|` at a localized crossing.
pub const EVENT_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 60;

/// Integration window on a grid `origin + k * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    pub origin: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, step: f64) -> Result<Self> {
        let grid = Self::anchored(t_start, t_end, step, t_start)?;
        if step > t_end - t_start {
            return Err(Error::InvalidInput(format!(
                "step {step} longer than the window {t_start} .. {t_end}"
            )));
        }
        Ok(grid)
    }

    /// Window on the grid anchored at `origin`; the window may be shorter
    /// than one step.
    pub fn anchored(t_start: f64, t_end: f64, step: f64, origin: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidInput(format!(
                "time window requires t_start < t_end (got {t_start} .. {t_end})"
            )));
        }
        if !(step.is_finite() && step > 0.0 && origin.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step must be positive (got {step})"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            step,
            origin,
        })
    }

    /// Node times: the window start, every anchored grid point strictly
    /// inside the window, and the window end. Grid points closer than
    /// `1e-6 * step` to either end are dropped to avoid degenerate steps.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step;
        let eps = 1e-6 * h;
        let mut out = vec![self.t_start];
        let mut k = ((self.t_start - self.origin) / h).floor() as i64;
        loop {
            let t = self.origin + k as f64 * h;
            k += 1;
            if t <= self.t_start + eps {
                continue;
            }
            if t >= self.t_end - eps {
                break;
            }
            out.push(t);
        }
        out.push(self.t_end);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    EndOfWindow,
    ManifoldCrossing,
}

/// Samples of one phase: times, states, state derivatives (for Hermite
/// interpolation) and the controls applied at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub terminated_by: SegmentEnd,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().expect("non-empty segment")
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("non-empty segment")
    }

    /// Index `k` of the interval `[t_k, t_{k+1}]` containing `t`.
    fn interval(&self, t: f64) -> Result<usize> {
        let (a, b) = (self.t_first(), self.t_last());
        let slack = 1e-12 * (1.0 + b.abs());
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::OutOfRange {
                t,
                start: a,
                end: b,
            });
        }
        let n = self.times.len();
        if n == 1 {
            return Ok(0);
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(n - 2))
    }

    fn hermite_on(&self, k: usize, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.states[0].clone();
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (x0, x1) = (&self.states[k], &self.states[k + 1]);
        let (d0, d1) = (&self.derivatives[k], &self.derivatives[k + 1]);
        (0..x0.len())
            .map(|i| h00 * x0[i] + h10 * h * d0[i] + h01 * x1[i] + h11 * h * d1[i])
            .collect()
    }

    fn linear_control_on(&self, k: usize, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.controls[0].clone();
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        lerp(&self.controls[k], &self.controls[k + 1], s)
    }
}

pub(crate) fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Cubic Hermite state and linearly interpolated control at time `t`.
pub fn interpolate(segment: &TrajectorySegment, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = segment.interval(t)?;
    Ok((segment.hermite_on(k, t), segment.linear_control_on(k, t)))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

/// One classical RK4 step of length `h` from `(t, x)`.
fn rk4_step<F, C>(rhs: &F, controls: &C, t: f64, x: &[f64], k1: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
    C: Fn(f64) -> Vec<f64>,
{
    let tm = t + 0.5 * h;
    let um = controls(tm);
    let k2 = rhs(&axpy(x, 0.5 * h, k1), &um);
    let k3 = rhs(&axpy(x, 0.5 * h, &k2), &um);
    let k4 = rhs(&axpy(x, h, &k3), &controls(t + h));
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Event to watch for during a forward integration.
#[derive(Debug, Clone, Copy)]
pub struct EventSpec<'a> {
    pub manifold: &'a Manifold,
    pub tol: f64,
}

impl<'a> EventSpec<'a> {
    pub fn new(manifold: &'a Manifold) -> Self {
        Self {
            manifold,
            tol: EVENT_TOL,
        }
    }
}

/// Integrates `x' = rhs(x, u(t))` over `grid` with classical RK4.
///
/// With an event, the first step across which the manifold value changes
/// sign in the watched direction is shortened so that the segment ends on
/// the manifold. The crossing is located by bisection on the step length
/// of a partial RK4 step from the bracketing node, which is the scheme's
/// own order-4 continuous extension.
pub fn integrate_phase<F, C>(
    rhs: F,
    x0: &[f64],
    grid: &TimeGrid,
    controls: C,
    event: Option<EventSpec<'_>>,
) -> Result<TrajectorySegment>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
    C: Fn(f64) -> Vec<f64>,
{
    if let Some(ev) = &event {
        if ev.manifold.gradient.len() != x0.len() {
            return Err(Error::DimensionMismatch {
                context: "integrate_phase event",
                expected: x0.len(),
                got: ev.manifold.gradient.len(),
            });
        }
    }
    let nodes = grid.nodes();
    let mut times = Vec::with_capacity(nodes.len());
    let mut states = Vec::with_capacity(nodes.len());
    let mut derivs = Vec::with_capacity(nodes.len());
    let mut ctrls = Vec::with_capacity(nodes.len());

    let mut x = x0.to_vec();
    let mut u = controls(nodes[0]);
    let mut dx = rhs(&x, &u);
    times.push(nodes[0]);
    states.push(x.clone());
    derivs.push(dx.clone());
    ctrls.push(u);

    let mut m_prev = event.map(|ev| ev.manifold.value(&x));

    for w in nodes.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        let x_next = rk4_step(&rhs, &controls, t, &x, &dx, h);

        if let (Some(ev), Some(m0)) = (event, m_prev) {
            let m1 = ev.manifold.value(&x_next);
            if ev.manifold.crossed(m0, m1) {
                let (tau, x_ev) = localize(&rhs, &controls, ev, t, &x, &dx, h);
                let t_ev = t + tau;
                let u_ev = controls(t_ev);
                let d_ev = rhs(&x_ev, &u_ev);
                let last = times.len() - 1;
                if tau <= 1e-9 * h.max(1e-300) && last > 0 {
                    // Crossing sits on the previous node: end there.
                    times[last] = t_ev;
                    states[last] = x_ev;
                    derivs[last] = d_ev;
                    ctrls[last] = u_ev;
                } else {
                    times.push(t_ev);
                    states.push(x_ev);
                    derivs.push(d_ev);
                    ctrls.push(u_ev);
                }
                return Ok(TrajectorySegment {
                    times,
                    states,
                    derivatives: derivs,
                    controls: ctrls,
                    terminated_by: SegmentEnd::ManifoldCrossing,
                });
            }
            m_prev = Some(m1);
        }

        x = x_next;
        u = controls(t_next);
        dx = rhs(&x, &u);
        times.push(t_next);
        states.push(x.clone());
        derivs.push(dx.clone());
        ctrls.push(u);
    }

    if let (Some(ev), Some(m)) = (event, m_prev) {
        return Err(Error::NoCrossing {
            manifold: ev.manifold.name.clone(),
            t_end: grid.t_end,
            final_value: m,
        });
    }

    Ok(TrajectorySegment {
        times,
        states,
        derivatives: derivs,
        controls: ctrls,
        terminated_by: SegmentEnd::EndOfWindow,
    })
}

fn localize<F, C>(
    rhs: &F,
    controls: &C,
    ev: EventSpec<'_>,
    t: f64,
    x: &[f64],
    dx: &[f64],
    h: f64,
) -> (f64, Vec<f64>)
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
    C: Fn(f64) -> Vec<f64>,
{
    let m = |tau: f64| {
        let y = rk4_step(rhs, controls, t, x, dx, tau);
        (ev.manifold.value(&y), y)
    };
    // Invariant: crossed(value at lo, value at hi).
    let (mut lo, mut hi) = (0.0_f64, h);
    let (mut m_hi, mut x_hi) = m(hi);
    let mut m_lo = ev.manifold.value(x);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (m_mid, x_mid) = m(mid);
        if ev.manifold.crossed(m_lo, m_mid) {
            hi = mid;
            m_hi = m_mid;
            x_hi = x_mid;
        } else {
            lo = mid;
            m_lo = m_mid;
        }
        if m_hi.abs() <= ev.tol * 1e-4 {
            break;
        }
    }
    (hi, x_hi)
}

/// Integrates a costate backward along `forward`, starting from `lambda_end`
/// at the segment's last node. `rhs(x, u, lambda)` returns `lambda'`; the
/// forward state and control at RK4 midpoints come from [`interpolate`].
/// Returns costates aligned with the forward nodes.
pub fn integrate_costate<G>(
    forward: &TrajectorySegment,
    lambda_end: &[f64],
    rhs: G,
) -> Result<Vec<Vec<f64>>>
where
    G: Fn(&[f64], &[f64], &[f64]) -> Vec<f64>,
{
    let n = forward.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty forward segment".into()));
    }
    let dim = forward.states[0].len();
    if lambda_end.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "integrate_costate",
            expected: dim,
            got: lambda_end.len(),
        });
    }
    let mut out = vec![Vec::new(); n];
    out[n - 1] = lambda_end.to_vec();
    for k in (0..n - 1).rev() {
        let (t0, t1) = (forward.times[k], forward.times[k + 1]);
        let h = t1 - t0;
        let l = &out[k + 1];
        let tm = 0.5 * (t0 + t1);
        let xm = forward.hermite_on(k, tm);
        let um = forward.linear_control_on(k, tm);
        let k1 = rhs(&forward.states[k + 1], &forward.controls[k + 1], l);
        let k2 = rhs(&xm, &um, &axpy(l, -0.5 * h, &k1));
        let k3 = rhs(&xm, &um, &axpy(l, -0.5 * h, &k2));
        let k4 = rhs(&forward.states[k], &forward.controls[k], &axpy(l, -h, &k3));
        out[k] = (0..dim)
            .map(|i| l[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::CrossingDirection;

    fn decay(x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![-x[0]]
    }

    fn no_controls(_t: f64) -> Vec<f64> {
        Vec::new()
    }

    #[test]
    fn exponential_decay_accuracy() {
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let seg = integrate_phase(decay, &[1.0], &grid, no_controls, None).unwrap();
        assert_eq!(seg.terminated_by, SegmentEnd::EndOfWindow);
        assert_eq!(seg.len(), 101);
        assert!((seg.last_state()[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn linear_crossing_time() {
        let m = Manifold::coordinate("x - 0.5", 1, 0, 0.5, CrossingDirection::Rising);
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let seg = integrate_phase(
            |_x: &[f64], _u: &[f64]| vec![1.0],
            &[0.0],
            &grid,
            no_controls,
            Some(EventSpec::new(&m)),
        )
        .unwrap();
        assert_eq!(seg.terminated_by, SegmentEnd::ManifoldCrossing);
        assert!((seg.t_last() - 0.5).abs() <= 1e-10);
        assert!(m.value(seg.last_state()).abs() <= EVENT_TOL);
    }

    #[test]
    fn missing_crossing_is_reported() {
        let m = Manifold::coordinate("x - 2", 1, 0, 2.0, CrossingDirection::Rising);
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let err = integrate_phase(
            |_x: &[f64], _u: &[f64]| vec![1.0],
            &[0.0],
            &grid,
            no_controls,
            Some(EventSpec::new(&m)),
        )
        .unwrap_err();
        match err {
            Error::NoCrossing { final_value, .. } => assert!((final_value + 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn falling_event_ignores_rising_start() {
        // x starts below the threshold and rises through it before falling back.
        let m = Manifold::coordinate("x - 0.5", 2, 0, 0.5, CrossingDirection::Falling);
        let grid = TimeGrid::new(0.0, 4.0, 0.01).unwrap();
        // x = sin(t) via (x, y)' = (y, -x)
        let seg = integrate_phase(
            |x: &[f64], _u: &[f64]| vec![x[1], -x[0]],
            &[0.0, 1.0],
            &grid,
            no_controls,
            Some(EventSpec::new(&m)),
        )
        .unwrap();
        let expected = std::f64::consts::PI - (0.5f64).asin();
        assert!((seg.t_last() - expected).abs() < 1e-8);
    }

    #[test]
    fn anchored_nodes_include_short_first_step() {
        let grid = TimeGrid::anchored(0.025, 0.06, 0.01, 0.0).unwrap();
        let nodes = grid.nodes();
        let expected = [0.025, 0.03, 0.04, 0.05, 0.06];
        assert_eq!(nodes.len(), expected.len());
        for (a, b) in nodes.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_decay() {
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let seg = integrate_phase(decay, &[1.0], &grid, |_t| vec![0.3], None).unwrap();
        let (x, u) = interpolate(&seg, seg.times[17]).unwrap();
        assert_eq!(x, seg.states[17]);
        assert_eq!(u, vec![0.3]);
        for k in 0..100 {
            let t = (k as f64 + 0.5) * 0.01;
            let (x, u) = interpolate(&seg, t).unwrap();
            assert!((x[0] - (-t).exp()).abs() < 1e-8);
            assert_eq!(u, vec![0.3]);
        }
        assert!(matches!(
            interpolate(&seg, 1.5),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_degenerate_windows() {
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn zero_costate_dynamics_stay_zero() {
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let seg = integrate_phase(decay, &[1.0], &grid, no_controls, None).unwrap();
        let l = integrate_costate(&seg, &[0.0], |_x, _u, l| vec![-l[0]]).unwrap();
        assert!(l.iter().all(|v| v[0] == 0.0));
    }
}
