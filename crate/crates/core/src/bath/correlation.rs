use std::f64::consts::PI;
use std::io::Write;

use super::BathSpec;
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::units::{bose, fs_to_au};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Pole separation below which the residue formulas are refused.
pub const POLE_COLLISION_TOL: f64 = 1e-12;

/// One exponential term of C(t) = Σ α_k e^{iγ_k t}, with α̃_k the amplitude
/// of the same exponential in C*(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub alpha: C64,
    pub alpha_tilde: C64,
    pub gamma: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationExpansion {
    pub terms: Vec<ExpTerm>,
    pub n_poles: usize,
    pub n_matsubara: usize,
}

impl CorrelationExpansion {
    pub fn n_cor(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.terms.iter().map(|k| k.alpha * (I * k.gamma * t).exp()).sum()
    }

    pub fn eval_conj(&self, t: f64) -> C64 {
        self.terms.iter().map(|k| k.alpha_tilde * (I * k.gamma * t).exp()).sum()
    }

    /// Γ(ω) = ∫₀^∞ C(t) e^{iωt} dt, term by term α_k i/(γ_k + ω).
    pub fn half_fourier(&self, omega: f64) -> C64 {
        self.terms.iter().map(|k| k.alpha * I / (k.gamma + omega)).sum()
    }

    /// Coefficient table: one row per term with columns
    /// Re α, Im α, Re α̃, Im α̃, Re γ, Im γ (a.u.).
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# correlation expansion C(t) = sum_k alpha_k exp(i gamma_k t), atomic units")?;
        writeln!(out, "# poles: {}  matsubara: {}", self.n_poles, self.n_matsubara)?;
        writeln!(out, "# re_alpha im_alpha re_alpha_tilde im_alpha_tilde re_gamma im_gamma")?;
        for k in &self.terms {
            writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                k.alpha.re, k.alpha.im, k.alpha_tilde.re, k.alpha_tilde.im, k.gamma.re, k.gamma.im
            )?;
        }
        Ok(())
    }

    pub fn read_table(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let (mut n_poles, mut n_matsubara) = (None, None);
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# poles:") {
                let mut it = rest.split_whitespace();
                n_poles = it.next().and_then(|s| s.parse().ok());
                n_matsubara = it.nth(1).and_then(|s| s.parse().ok());
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad coefficient row '{line}': {e}")))?;
            if vals.len() != 6 {
                return Err(Error::Config(format!("coefficient row needs 6 columns: '{line}'")));
            }
            terms.push(ExpTerm {
                alpha: C64::new(vals[0], vals[1]),
                alpha_tilde: C64::new(vals[2], vals[3]),
                gamma: C64::new(vals[4], vals[5]),
            });
        }
        let n_poles = n_poles.unwrap_or(terms.len());
        Ok(Self {
            n_matsubara: n_matsubara.unwrap_or(terms.len() - n_poles),
            n_poles,
            terms,
        })
    }
}

/// C(t) = (1/π) ∫₀^∞ J(ω) [coth(βω/2) cos ωt − i sin ωt] dω by adaptive
/// quadrature. This is the reference the exponential expansion is checked
/// against.
pub fn correlation_quadrature(bath: &BathSpec, t: f64) -> Result<C64> {
    bath.sd.validate()?;
    if bath.sd.amplitude == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    correlation_quadrature_scaled(bath, t, correlation_scale(bath)?)
}

/// ∫ J coth, the scale of C(0) that sets the absolute accuracy.
fn correlation_scale(bath: &BathSpec) -> Result<f64> {
    let sd = &bath.sd;
    let beta = bath.beta();
    let magnitude = |w: f64| {
        if w == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(sd.eval(w) * (1.0 + 2.0 * bose(beta, w)), 0.0)
        }
    };
    let rough = QuadOptions {
        rel_tol: 1e-4,
        ..Default::default()
    };
    let cutoff = sd.quadrature_cutoff();
    Ok(integrate(magnitude, 0.0, cutoff, sd.initial_panels(cutoff, 0.0), rough)?.value.re)
}

fn correlation_quadrature_scaled(bath: &BathSpec, t: f64, scale: f64) -> Result<C64> {
    if t < 0.0 {
        return Ok(correlation_quadrature_scaled(bath, -t, scale)?.conj());
    }
    let sd = &bath.sd;
    let beta = bath.beta();
    let f = |w: f64| {
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let coth = 1.0 + 2.0 * bose(beta, w);
        let j = sd.eval(w);
        let (s, c) = (w * t).sin_cos();
        C64::new(j * coth * c, -j * s)
    };
    let cutoff = sd.quadrature_cutoff();
    // C(t) decays by orders of magnitude, so accuracy is set relative to the
    // scale of C(0) rather than to C(t) itself
    let opts = QuadOptions {
        abs_tol: 1e-12 * scale,
        rel_tol: 1e-10,
        ..Default::default()
    };
    let body = integrate(f, 0.0, cutoff, sd.initial_panels(cutoff, t), opts)?;
    // the tail beyond 20 peak scales is ~1e-5 of the total; only a loose
    // absolute accuracy is needed there
    let tail_opts = QuadOptions {
        abs_tol: 1e-9 * scale,
        rel_tol: 1e-8,
        max_intervals: 50_000,
    };
    let tail = if cutoff * t >= 200.0 {
        oscillatory_tail(sd, beta, cutoff, t)
    } else {
        integrate_to_infinity(f, cutoff, cutoff, 64, tail_opts)?.value
    };
    Ok((body.value + tail) / PI)
}

/// ∫_c^∞ J(ω)[coth cos ωt − i sin ωt] dω from two rounds of integration by
/// parts; the neglected term is O((ct)⁻²) relative to an already small tail.
fn oscillatory_tail(sd: &super::SpectralDensity, beta: f64, c: f64, t: f64) -> C64 {
    let a = |w: f64| sd.eval(w) * (1.0 + 2.0 * bose(beta, w));
    let b = |w: f64| sd.eval(w);
    let h = 1e-4 * c;
    let da = (a(c + h) - a(c - h)) / (2.0 * h);
    let db = (b(c + h) - b(c - h)) / (2.0 * h);
    let (s, co) = (c * t).sin_cos();
    let re = -a(c) * s / t - da * co / (t * t);
    let im = b(c) * co / t - db * s / (t * t);
    C64::new(re, -im)
}

/// Decompose C(t) into exponentials by closing the contour in the upper half
/// plane: one term per pole of J at ±Ω_k + iΓ_k and one per Matsubara
/// frequency ν_j = 2πj/β, j = 1..n_matsubara.
pub fn expand_correlation(bath: &BathSpec) -> Result<CorrelationExpansion> {
    let sd = &bath.sd;
    sd.validate()?;
    if !(bath.temperature > 0.0) {
        return Err(Error::InvalidBath(format!("temperature {} must be positive", bath.temperature)));
    }
    sd.check_distinct_poles(POLE_COLLISION_TOL)?;
    let beta = bath.beta();
    let poles = sd.upper_poles();

    // a pole of J on the imaginary axis would merge with a Matsubara pole
    for z in &poles {
        let j = z.im * beta / (2.0 * PI);
        if z.re.abs() <= POLE_COLLISION_TOL && (j - j.round()).abs() * 2.0 * PI / beta <= POLE_COLLISION_TOL {
            return Err(Error::DegeneratePoles(format!("spectral pole {z} meets a Matsubara frequency")));
        }
    }

    let mut terms = Vec::with_capacity(poles.len() + bath.n_matsubara);
    for (k, &z) in poles.iter().enumerate() {
        let res = sd.residue_of_power(k, 3);
        let n = C64::new(1.0, 0.0) / ((z * beta).exp() - 1.0);
        terms.push(ExpTerm {
            alpha: 2.0 * I * res * n,
            alpha_tilde: C64::new(0.0, 0.0),
            gamma: z,
        });
    }
    // conjugate-side amplitudes: the partner of Ω + iΓ is −Ω + iΓ
    for pair in 0..poles.len() / 2 {
        let (a, b) = (2 * pair, 2 * pair + 1);
        terms[a].alpha_tilde = terms[b].alpha.conj();
        terms[b].alpha_tilde = terms[a].alpha.conj();
    }
    for j in 1..=bath.n_matsubara {
        let nu = 2.0 * PI * j as f64 / beta;
        let z = C64::new(0.0, nu);
        let alpha = 2.0 * I * sd.eval_complex(z) / beta;
        // J(iν) is purely imaginary, so α is real
        let alpha = C64::new(alpha.re, 0.0);
        terms.push(ExpTerm {
            alpha,
            alpha_tilde: alpha,
            gamma: z,
        });
    }
    Ok(CorrelationExpansion {
        terms,
        n_poles: poles.len(),
        n_matsubara: bath.n_matsubara,
    })
}

/// Relative sup-norm error of an expansion against quadrature samples.
#[derive(Debug, Clone)]
pub struct ExpansionCheck {
    pub n_matsubara: usize,
    /// max_t |C_exp(t) − C_quad(t)| / |C_quad(0)|
    pub error: f64,
}

/// Quadrature samples of C(t) on a uniform grid.
#[derive(Debug, Clone)]
pub struct CorrelationSamples {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationSamples {
    pub fn compute(bath: &BathSpec, t_max_fs: f64, n_points: usize) -> Result<Self> {
        let n_points = n_points.max(2);
        let t_max = fs_to_au(t_max_fs);
        let times: Vec<f64> = (0..n_points).map(|i| t_max * i as f64 / (n_points - 1) as f64).collect();
        bath.sd.validate()?;
        let values = if bath.sd.amplitude == 0.0 {
            vec![C64::new(0.0, 0.0); n_points]
        } else {
            let scale = correlation_scale(bath)?;
            times
                .iter()
                .map(|&t| correlation_quadrature_scaled(bath, t, scale))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { times, values })
    }

    pub fn relative_error(&self, expansion: &CorrelationExpansion) -> f64 {
        let c0 = self.values[0].norm();
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &c)| (expansion.eval(t) - c).norm())
            .fold(0.0, f64::max)
            / c0
    }
}

/// Expand with the smallest Matsubara count ≥ `bath.n_matsubara` whose
/// relative sup-norm error on [0, t_max] is below `tolerance`.
pub fn expand_converged(
    bath: &BathSpec,
    samples: &CorrelationSamples,
    tolerance: f64,
    cap: usize,
) -> Result<(CorrelationExpansion, ExpansionCheck)> {
    let mut trial = bath.clone();
    let mut last = f64::INFINITY;
    for n in bath.n_matsubara.max(1)..=cap {
        trial.n_matsubara = n;
        let exp = expand_correlation(&trial)?;
        let err = samples.relative_error(&exp);
        last = err;
        if err < tolerance {
            return Ok((
                exp,
                ExpansionCheck {
                    n_matsubara: n,
                    error: err,
                },
            ));
        }
    }
    Err(Error::ExpansionNotConverged {
        tolerance,
        cap,
        achieved: last,
    })
}

/// Rate kernel K(ω) = ∫ C(t) e^{iωt} dt = 2 J(ω)(n(ω) + 1), for either sign of ω.
pub fn rate_kernel(bath: &BathSpec, omega: f64) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    let beta = bath.beta();
    2.0 * bath.sd.eval(omega) * (bose(beta, omega) + 1.0)
}

/// Γ(ω) = ∫₀^∞ C(t) e^{iωt} dt from the spectral density directly:
/// Re Γ = J(ω)(n(ω)+1) and Im Γ = (1/π) P∫ J(x)n(x)/(x + ω) dx, the principal
/// value taken by symmetric folding about x = −ω.
pub fn half_fourier_quadrature(bath: &BathSpec, omega: f64) -> Result<C64> {
    let sd = &bath.sd;
    let beta = bath.beta();
    let weight = |x: f64| -> f64 {
        if x == 0.0 {
            0.0
        } else {
            sd.eval(x) * bose(beta, x)
        }
    };
    let a = -omega;
    let g = |u: f64| C64::new((weight(a + u) - weight(a - u)) / u, 0.0);
    let cutoff = sd.quadrature_cutoff() + omega.abs();
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-14 * sd.amplitude.max(1e-300),
        ..Default::default()
    };
    let body = integrate(g, 0.0, cutoff, sd.initial_panels(cutoff, 0.0), opts)?;
    let tail = integrate_to_infinity(g, cutoff, cutoff, 16, opts)?;
    let pv = body.value.re + tail.value.re;
    Ok(C64::new(rate_kernel(bath, omega) / 2.0, pv / PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::spectral::{SpectralDensity, P_REF};

    fn bath(sd: SpectralDensity, temperature: f64, n_matsubara: usize) -> BathSpec {
        BathSpec::from_amplitude_only(sd, temperature, n_matsubara)
    }

    #[test]
    fn equal_time_correlation_is_real_positive() {
        for t in [77.0, 298.0, 1e4] {
            let c0 = correlation_quadrature(&bath(SpectralDensity::thin(P_REF), t, 1), 0.0).unwrap();
            assert!(c0.re > 0.0);
            assert!(c0.im.abs() < 1e-14 * c0.re);
        }
    }

    #[test]
    fn asymptotic_tail_matches_numeric_tail() {
        for (sd, temp) in [(SpectralDensity::thin(P_REF), 298.0), (SpectralDensity::broad(P_REF), 1e4)] {
            let b = bath(sd, temp, 1);
            let beta = b.beta();
            let c = b.sd.quadrature_cutoff();
            let scale = correlation_scale(&b).unwrap();
            for ct in [200.0, 450.0, 2000.0] {
                let t = ct / c;
                let f = |w: f64| {
                    let (s, co) = (w * t).sin_cos();
                    C64::new(b.sd.eval(w) * (1.0 + 2.0 * bose(beta, w)) * co, -b.sd.eval(w) * s)
                };
                let opts = QuadOptions {
                    abs_tol: 1e-13 * scale,
                    rel_tol: 1e-10,
                    max_intervals: 200_000,
                };
                let numeric = integrate_to_infinity(f, c, c, 256, opts).unwrap().value;
                let asym = oscillatory_tail(&b.sd, beta, c, t);
                assert!((numeric - asym).norm() < 1e-10 * scale, "ct = {ct}: {numeric} vs {asym}");
            }
        }
    }

    #[test]
    fn negative_time_is_conjugate() {
        let b = bath(SpectralDensity::broad(P_REF), 298.0, 1);
        for t in [10.0, 500.0, 3000.0] {
            let plus = correlation_quadrature(&b, t).unwrap();
            let minus = correlation_quadrature(&b, -t).unwrap();
            assert!((plus.conj() - minus).norm() < 1e-14 * plus.norm());
        }
    }

    #[test]
    fn term_count_and_pairing() {
        let exp = expand_correlation(&bath(SpectralDensity::thin(P_REF), 298.0, 10)).unwrap();
        assert_eq!(exp.n_cor(), 14);
        let t = &exp.terms;
        assert_eq!(t[0].alpha_tilde, t[1].alpha.conj());
        assert_eq!(t[1].alpha_tilde, t[0].alpha.conj());
        assert_eq!(t[2].alpha_tilde, t[3].alpha.conj());
        assert_eq!(t[3].alpha_tilde, t[2].alpha.conj());
        for m in &t[4..] {
            assert_eq!(m.alpha_tilde, m.alpha);
        }
        for k in t {
            assert!(k.gamma.im > 0.0);
        }
    }

    #[test]
    fn conjugate_side_reproduces_conjugate_correlation() {
        let exp = expand_correlation(&bath(SpectralDensity::broad(P_REF), 298.0, 12)).unwrap();
        for t in [0.0, 100.0, 2500.0, 10_000.0] {
            assert!((exp.eval_conj(t) - exp.eval(t).conj()).norm() < 1e-12 * exp.eval(0.0).norm());
        }
    }

    #[test]
    fn sum_of_amplitudes_is_equal_time_value() {
        let b = bath(SpectralDensity::thin(P_REF), 298.0, 40);
        let exp = expand_correlation(&b).unwrap();
        let sum: C64 = exp.terms.iter().map(|k| k.alpha).sum();
        let c0 = correlation_quadrature(&b, 0.0).unwrap();
        assert!((sum - c0).norm() / c0.norm() < 1e-6);
    }

    #[test]
    fn half_fourier_routes_agree() {
        let b = bath(SpectralDensity::thin(P_REF), 298.0, 40);
        let exp = expand_correlation(&b).unwrap();
        let scale = rate_kernel(&b, 4.5e-3);
        for w in [-5e-3, -1e-3, 3e-4, 4.2e-3, 4.9e-3, 1e-2] {
            let a = exp.half_fourier(w);
            let q = half_fourier_quadrature(&b, w).unwrap();
            assert!((a - q).norm() < 1e-6 * scale, "ω = {w}: {a} vs {q}");
        }
    }

    #[test]
    fn rate_kernel_detailed_balance() {
        let b = bath(SpectralDensity::thin(P_REF), 298.0, 1);
        let beta = b.beta();
        for i in 1..=40 {
            let w = 20.0 / beta * i as f64 / 40.0;
            let ratio = rate_kernel(&b, -w) / rate_kernel(&b, w);
            assert!((ratio / (-beta * w).exp() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn table_round_trip() {
        let exp = expand_correlation(&bath(SpectralDensity::thin(P_REF), 298.0, 3)).unwrap();
        let mut buf = Vec::new();
        exp.write_table(&mut buf).unwrap();
        let back = CorrelationExpansion::read_table(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, exp);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut sd = SpectralDensity::thin(P_REF);
        sd.peaks[1] = sd.peaks[0];
        assert!(matches!(
            expand_correlation(&bath(sd, 298.0, 2)),
            Err(Error::DegeneratePoles(_))
        ));
        assert!(expand_correlation(&bath(SpectralDensity::thin(P_REF), 0.0, 2)).is_err());
    }
}
