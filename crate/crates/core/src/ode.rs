//! Classical explicit Runge-Kutta for autonomous-in-form systems.

use nalgebra::{DMatrix, DVector};

/// Integration stopped because the state became non-finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonFinite {
    pub time: f64,
}

/// One RK4 step of `ẋ = f(t, x)`.
pub fn rk4_step(f: &mut impl FnMut(f64, &DVector<f64>) -> DVector<f64>, t: f64, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// Integrates `steps` steps and returns all `steps + 1` states as columns.
pub fn rk4(
    mut f: impl FnMut(f64, &DVector<f64>) -> DVector<f64>,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<DMatrix<f64>, NonFinite> {
    let mut out = DMatrix::zeros(x0.len(), steps + 1);
    out.set_column(0, x0);
    let mut x = x0.clone();
    for s in 0..steps {
        let t = s as f64 * dt;
        x = rk4_step(&mut f, t, &x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NonFinite {
                time: (s + 1) as f64 * dt,
            });
        }
        out.set_column(s + 1, &x);
    }
    Ok(out)
}

/// Number of steps of size `dt` covering `[0, horizon]`, if it is integral.
pub fn step_count(horizon: f64, dt: f64) -> Option<usize> {
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
        return None;
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    ((ratio - steps).abs() <= 1e-9 * ratio.max(1.0)).then_some(steps as usize)
}
