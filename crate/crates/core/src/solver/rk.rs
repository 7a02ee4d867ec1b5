//! Explicit Runge-Kutta steppers on flat state vectors.

use crate::error::{Error, Result};

fn check_finite(v: &[f64], what: &str, t: f64) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite {what} at t = {t}")));
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta with reusable stage buffers.
#[derive(Clone, Debug, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances `y` from `t` by `h` into `out`.
    pub fn step<F>(
        &mut self,
        field: &mut F,
        t: f64,
        y: &[f64],
        h: f64,
        out: &mut [f64],
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        for buf in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
        ] {
            buf.resize(n, 0.0);
        }

        field(t, y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        check_finite(&self.tmp, "stage 2 input", t)?;
        field(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        check_finite(&self.tmp, "stage 3 input", t)?;
        field(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        check_finite(&self.tmp, "stage 4 input", t)?;
        field(t + h, &self.tmp, &mut self.k4)?;

        for i in 0..n {
            out[i] =
                y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        check_finite(out, "state", t + h)
    }
}

/// One RK4 step of `field` from `(t, y)`.
pub fn step_rk4<F>(field: &mut F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::Usage(format!("step size must be > 0, got {dt}")));
    }
    let mut out = vec![0.0; y.len()];
    Rk4::new().step(field, t, y, dt, &mut out)?;
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand-Prince 5(4) stepper with an embedded error estimate.
#[derive(Clone, Debug, Default)]
pub struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attempts a step of size `h`, writing the fifth-order solution to
    /// `out`. Returns the RMS error norm scaled by
    /// `abs_tol + rel_tol * max(|y|, |out|)`; a step is acceptable when the
    /// norm is at most one.
    #[allow(clippy::too_many_arguments)]
    pub fn try_step<F>(
        &mut self,
        field: &mut F,
        t: f64,
        y: &[f64],
        h: f64,
        abs_tol: f64,
        rel_tol: f64,
        out: &mut [f64],
    ) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        for buf in self.k.iter_mut() {
            buf.resize(n, 0.0);
        }
        self.tmp.resize(n, 0.0);

        field(t, y, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let acc: f64 = (0..s).map(|j| A[s][j] * self.k[j][i]).sum();
                self.tmp[i] = y[i] + h * acc;
            }
            check_finite(&self.tmp, "stage input", t)?;
            field(t + C[s] * h, &self.tmp, &mut self.k[s])?;
        }
        // stage 7 was evaluated at the fifth-order solution
        out.copy_from_slice(&self.tmp);
        check_finite(out, "state", t + h)?;

        let mut sq = 0.0;
        for i in 0..n {
            let err: f64 = h * (0..7).map(|j| E[j] * self.k[j][i]).sum::<f64>();
            let scale = abs_tol + rel_tol * y[i].abs().max(out[i].abs());
            sq += (err / scale).powi(2);
        }
        Ok((sq / n.max(1) as f64).sqrt())
    }
}
