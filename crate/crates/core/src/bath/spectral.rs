use std::f64::consts::PI;
use std::fmt;

use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::{Error, Result, C64};

/// One Lorentzian factor Λ(Ω, Γ) = [(ω+Ω)² + Γ²][(ω−Ω)² + Γ²].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub omega: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Thin,
    Broad,
    Custom,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Thin => "thin",
            Shape::Broad => "broad",
            Shape::Custom => "custom",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thin" => Ok(Shape::Thin),
            "broad" => Ok(Shape::Broad),
            "custom" => Ok(Shape::Custom),
            other => Err(Error::Config(format!("unknown spectral shape '{other}'"))),
        }
    }
}

/// Reference amplitude of the tabulated parameter sets; `p = P_REF · f`.
pub const P_REF: f64 = 1.95e-14;

/// Superohmic spectral density J(ω) = p ω³ / ∏_k Λ_k(Ω_k, Γ_k), all in a.u.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub amplitude: f64,
    pub peaks: Vec<Peak>,
    pub shape: Shape,
}

impl SpectralDensity {
    /// Sharp peak at the bright-dark gap.
    pub fn thin(amplitude: f64) -> Self {
        Self {
            amplitude,
            peaks: vec![
                Peak {
                    omega: 9.562e-4,
                    width: 6.3537e-3,
                },
                Peak {
                    omega: 4.5639e-3,
                    width: 2.7188e-4,
                },
            ],
            shape: Shape::Thin,
        }
    }

    pub fn broad(amplitude: f64) -> Self {
        Self {
            amplitude,
            peaks: vec![
                Peak {
                    omega: 2.762e-3,
                    width: 1.6554e-3,
                },
                Peak {
                    omega: 6.4639e-3,
                    width: 2.5319e-3,
                },
            ],
            shape: Shape::Broad,
        }
    }

    pub fn with_shape(shape: Shape, amplitude: f64) -> Option<Self> {
        match shape {
            Shape::Thin => Some(Self::thin(amplitude)),
            Shape::Broad => Some(Self::broad(amplitude)),
            Shape::Custom => None,
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self {
            amplitude,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::InvalidBath("spectral density needs at least one peak".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidBath(format!("amplitude {} must be finite and non-negative", self.amplitude)));
        }
        for pk in &self.peaks {
            if !(pk.width > 0.0) || !(pk.omega >= 0.0) {
                return Err(Error::InvalidBath(format!(
                    "peak (Ω = {}, Γ = {}) needs Ω ≥ 0 and Γ > 0",
                    pk.omega, pk.width
                )));
            }
        }
        Ok(())
    }

    /// J(ω); odd in ω.
    pub fn eval(&self, w: f64) -> f64 {
        let mut den = 1.0;
        for pk in &self.peaks {
            let g2 = pk.width * pk.width;
            den *= ((w + pk.omega).powi(2) + g2) * ((w - pk.omega).powi(2) + g2);
        }
        self.amplitude * w * w * w / den
    }

    /// The same rational function at complex argument.
    pub fn eval_complex(&self, z: C64) -> C64 {
        let mut den = C64::new(1.0, 0.0);
        for pk in &self.peaks {
            let g2 = pk.width * pk.width;
            den *= ((z + pk.omega).powi(2) + g2) * ((z - pk.omega).powi(2) + g2);
        }
        z * z * z * self.amplitude / den
    }

    /// Poles in the upper half-plane, ordered Ω₁+iΓ₁, −Ω₁+iΓ₁, Ω₂+iΓ₂, …
    pub fn upper_poles(&self) -> Vec<C64> {
        self.peaks
            .iter()
            .flat_map(|pk| [C64::new(pk.omega, pk.width), C64::new(-pk.omega, pk.width)])
            .collect()
    }

    fn all_poles(&self) -> Vec<C64> {
        let mut poles = self.upper_poles();
        poles.extend(self.upper_poles().iter().map(|z| z.conj()));
        poles
    }

    /// Fails if any two poles of J coincide to within `tol` (a.u.).
    pub fn check_distinct_poles(&self, tol: f64) -> Result<()> {
        let poles = self.all_poles();
        for i in 0..poles.len() {
            for j in 0..i {
                if (poles[i] - poles[j]).norm() <= tol {
                    return Err(Error::DegeneratePoles(format!("{} ≈ {}", poles[i], poles[j])));
                }
            }
        }
        Ok(())
    }

    /// Residue of p zᵐ/∏(z − z_j) at the upper pole `index`.
    pub(crate) fn residue_of_power(&self, index: usize, power: i32) -> C64 {
        let poles = self.all_poles();
        let z = poles[index];
        let mut den = C64::new(1.0, 0.0);
        for (j, zj) in poles.iter().enumerate() {
            if j != index {
                den *= z - zj;
            }
        }
        z.powi(power) * self.amplitude / den
    }

    /// Largest Ω + Γ over the peaks: the scale past which J decays as ω⁻⁵.
    pub fn frequency_scale(&self) -> f64 {
        self.peaks.iter().map(|p| p.omega + p.width).fold(0.0, f64::max)
    }

    pub fn narrowest_width(&self) -> f64 {
        self.peaks.iter().map(|p| p.width).fold(f64::INFINITY, f64::min)
    }

    /// Location of the maximum of J on ω > 0, by golden-section refinement of
    /// a grid search.
    pub fn peak_location(&self) -> f64 {
        let hi = 4.0 * self.frequency_scale();
        let n = 20_000;
        let (mut best, mut best_w) = (f64::NEG_INFINITY, 0.0);
        for i in 1..=n {
            let w = hi * i as f64 / n as f64;
            let v = self.eval(w);
            if v > best {
                best = v;
                best_w = w;
            }
        }
        let step = hi / n as f64;
        let (mut a, mut b) = ((best_w - step).max(0.0), best_w + step);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if self.eval(c) > self.eval(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    /// Upper limit of the finite quadrature range; the remainder is mapped.
    pub(crate) fn quadrature_cutoff(&self) -> f64 {
        20.0 * self.frequency_scale()
    }

    pub(crate) fn initial_panels(&self, cutoff: f64, oscillation: f64) -> usize {
        let mut width = 0.5 * self.narrowest_width();
        if oscillation > 0.0 {
            width = width.min(2.0 * PI / oscillation);
        }
        ((cutoff / width).ceil() as usize).max(8)
    }
}

/// λ = −(1/π) ∫₀^∞ J(ω)/ω dω by adaptive quadrature (relative tolerance 1e-10).
///
/// The sign is negative: the shift lowers the noise-coupled site.
pub fn reorganization_energy(sd: &SpectralDensity) -> Result<f64> {
    sd.validate()?;
    if sd.amplitude == 0.0 {
        return Ok(0.0);
    }
    let cutoff = sd.quadrature_cutoff();
    let opts = QuadOptions {
        rel_tol: 1e-11,
        ..Default::default()
    };
    let f = |w: f64| C64::new(if w == 0.0 { 0.0 } else { sd.eval(w) / w }, 0.0);
    let body = integrate(f, 0.0, cutoff, sd.initial_panels(cutoff, 0.0), opts)?;
    let tail = integrate_to_infinity(f, cutoff, cutoff, 8, opts)?;
    let total = body.value.re + tail.value.re;
    let err = body.error + tail.error;
    if !(err <= 1e-8 * total.abs()) {
        return Err(Error::Quadrature(format!(
            "reorganization integral {total:e} has error estimate {err:e}"
        )));
    }
    Ok(-total / PI)
}
