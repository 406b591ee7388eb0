//! Globally adaptive Gauss-Kronrod (7/15) quadrature for smooth complex-valued
//! integrands on finite and semi-infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result, C64};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    let value = k * h;
    let error = ((k - g) * h).norm();
    Segment { a, b, value, error }
}

/// Integrate `f` over [a, b], starting from `initial_panels` equal panels.
pub fn integrate<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    initial_panels: usize,
    opts: QuadOptions,
) -> Result<QuadResult> {
    let panels = initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(panels * 2);
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        let seg = kronrod(&mut f, lo, hi);
        total += seg.value;
        err += seg.error;
        heap.push(seg);
    }
    let mut count = panels;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.norm());
        if err <= tol {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: count,
            });
        }
        if count >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "[{a:e}, {b:e}]: error estimate {err:e} above tolerance {tol:e} after {count} intervals"
            )));
        }
        let worst = heap.pop().expect("heap holds every segment");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Quadrature(format!(
                "interval [{:e}, {:e}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        count += 1;
    }
}

/// Integrate `f` over [a, ∞) through the substitution x = a + s/u − s, u ∈ (0, 1].
///
/// `scale` sets where the mapping places the bulk of the interval; the
/// integrand must decay faster than 1/x.
pub fn integrate_to_infinity<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    scale: f64,
    initial_panels: usize,
    opts: QuadOptions,
) -> Result<QuadResult> {
    let g = move |u: f64| {
        if u <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let x = a + scale * (1.0 / u - 1.0);
        f(x) * (scale / (u * u))
    };
    integrate(g, 0.0, 1.0, initial_panels, opts)
}

pub fn integrate_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    initial_panels: usize,
    opts: QuadOptions,
) -> Result<f64> {
    integrate(|x| C64::new(f(x), 0.0), a, b, initial_panels, opts).map(|r| r.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_real(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1, QuadOptions::default()).unwrap();
        assert!((r - (8.0 + 1.0 - 1.5 + 6.0)).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integral() {
        // ∫₀^{10} e^{i 50 x} dx = (e^{500 i} − 1)/(50 i)
        let r = integrate(|x| C64::new(0.0, 50.0 * x).exp(), 0.0, 10.0, 40, QuadOptions::default()).unwrap();
        let exact = (C64::new(0.0, 500.0).exp() - 1.0) / C64::new(0.0, 50.0);
        assert!((r.value - exact).norm() < 1e-10);
    }

    #[test]
    fn lorentzian_to_infinity() {
        // ∫₀^∞ dx / (x² + 1) = π/2
        let r = integrate_to_infinity(|x| C64::new(1.0 / (x * x + 1.0), 0.0), 0.0, 1.0, 4, QuadOptions::default())
            .unwrap();
        assert!((r.value.re - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..Default::default()
        };
        assert!(integrate_real(|x| (1.0 / x).sin(), 1e-6, 1.0, 1, opts).is_err());
    }
}
