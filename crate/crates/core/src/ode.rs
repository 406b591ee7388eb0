//! Explicit Runge-Kutta integrators over complex state vectors.

use crate::units::au_to_fs;
use crate::{Error, Result, C64};

/// Tolerances for the embedded Dormand-Prince 5(4) pair.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            initial_step: 1.0,
            min_step: 1e-8,
            max_step: f64::INFINITY,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

/// Adaptive Dormand-Prince integrator with first-same-as-last reuse.
pub struct Dopri5 {
    opts: AdaptiveOptions,
    h: f64,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(dim: usize, opts: AdaptiveOptions) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            h: opts.initial_step,
            opts,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z,
            fsal_valid: false,
        }
    }

    /// Advance `y` from `t` to `t_end`; `f(t, y, dy)` writes the derivative.
    pub fn advance<F>(&mut self, f: &mut F, t: &mut f64, y: &mut [C64], t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        if t_end <= *t {
            return Ok(());
        }
        let n = y.len();
        if !self.fsal_valid {
            f(*t, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        while *t < t_end {
            let mut h = self.h.min(self.opts.max_step);
            let last = *t + h >= t_end;
            if last {
                h = t_end - *t;
            }
            let t0 = *t;
            {
                let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
                let tmp = &mut self.tmp;
                for i in 0..n {
                    tmp[i] = y[i] + k1[i] * (h * A21);
                }
                f(t0 + C2 * h, tmp, k2);
                for i in 0..n {
                    tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
                }
                f(t0 + C3 * h, tmp, k3);
                for i in 0..n {
                    tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
                }
                f(t0 + C4 * h, tmp, k4);
                for i in 0..n {
                    tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
                }
                f(t0 + C5 * h, tmp, k5);
                for i in 0..n {
                    tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
                }
                f(t0 + h, tmp, k6);
                for i in 0..n {
                    tmp[i] = y[i] + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
                }
                f(t0 + h, tmp, k7);
            }
            let [k1, _, k3, k4, k5, k6, k7] = &self.k;
            let mut err = 0.0_f64;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
                let sc = self.opts.abs_tol + self.opts.rel_tol * y[i].norm().max(self.tmp[i].norm());
                err = err.max(e.norm() / sc);
            }
            if err <= 1.0 {
                *t = if last { t_end } else { t0 + h };
                y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || grow < 1.0 {
                    self.h = h * grow;
                }
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if self.h < self.opts.min_step {
                    return Err(Error::StepSize {
                        t_fs: au_to_fs(*t),
                        reason: format!("step {:e} a.u. below minimum with error ratio {err:e}", self.h),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Classic fourth-order Runge-Kutta with preallocated stage buffers.
pub struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// One step of size `h` for an autonomous system `f(y, dy)`.
    pub fn step<F>(&mut self, f: &mut F, y: &mut [C64], h: f64)
    where
        F: FnMut(&[C64], &mut [C64]),
    {
        let n = y.len();
        f(y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + self.k1[i] * (0.5 * h);
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + self.k2[i] * (0.5 * h);
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + self.k3[i] * h;
        }
        f(&self.tmp, &mut self.k4);
        let h6 = h / 6.0;
        for i in 0..n {
            y[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * h6;
        }
    }
}
