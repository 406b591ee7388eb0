//! Spectral density, reorganization energy, the thermal correlation function
//! and its exponential decomposition.

pub mod correlation;
pub mod spectral;

pub use correlation::{
    correlation_quadrature, expand_converged, expand_correlation, half_fourier_quadrature, rate_kernel,
    CorrelationExpansion, CorrelationSamples, ExpTerm, ExpansionCheck,
};
pub use spectral::{reorganization_energy, Peak, Shape, SpectralDensity, P_REF};

use crate::model::{build_hamiltonian, diagonalize, effective_hamiltonian, ExcitonNetwork};
use crate::units::{beta_from_kelvin, bose};
use crate::{Error, Result};

/// A spectral density at a temperature, with the derived coupling measures.
///
/// `lambda` is the signed reorganization energy (negative) and `eta` is
/// |λ| / E_BD₊, the gap taken from the λ-shifted Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub sd: SpectralDensity,
    /// Kelvin.
    pub temperature: f64,
    pub n_matsubara: usize,
    pub lambda: f64,
    pub eta: f64,
}

impl BathSpec {
    pub fn beta(&self) -> f64 {
        beta_from_kelvin(self.temperature)
    }

    /// Bath with λ computed from the amplitude but no η (no network given).
    pub fn from_amplitude_only(sd: SpectralDensity, temperature: f64, n_matsubara: usize) -> Self {
        let lambda = reorganization_energy(&sd).unwrap_or(0.0);
        Self {
            sd,
            temperature,
            n_matsubara,
            lambda,
            eta: f64::NAN,
        }
    }

    /// Bath with a given amplitude; λ and η derived for `net`.
    pub fn from_amplitude(sd: SpectralDensity, net: &ExcitonNetwork, temperature: f64, n_matsubara: usize) -> Result<Self> {
        let lambda = reorganization_energy(&sd)?;
        let gap = bright_dplus_gap(net, lambda)?;
        Ok(Self {
            sd,
            temperature,
            n_matsubara: n_matsubara.max(1),
            lambda,
            eta: lambda.abs() / gap,
        })
    }
}

/// E_B − E_D₊ of H_S + λ|s⟩⟨s|.
pub fn bright_dplus_gap(net: &ExcitonNetwork, lambda: f64) -> Result<f64> {
    let h = effective_hamiltonian(&build_hamiltonian(net)?, lambda, net.noise_site)?;
    Ok(diagonalize(&h, &net.coupling_operator())?.gap_bright_dplus())
}

pub const ETA_TOLERANCE: f64 = 1e-10;
const ETA_MAX_ITER: usize = 100;

/// Rescale the amplitude of `sd` so that |λ|/E_BD₊ = `eta_target`, with the
/// gap taken self-consistently from the λ-shifted Hamiltonian.
pub fn set_eta(
    sd: &SpectralDensity,
    eta_target: f64,
    net: &ExcitonNetwork,
    temperature: f64,
    n_matsubara: usize,
) -> Result<BathSpec> {
    if !(eta_target > 0.0 && eta_target.is_finite()) {
        return Err(Error::InvalidBath(format!("eta must be positive, got {eta_target}")));
    }
    // λ is linear in p: λ(p) = p · λ(1)
    let unit = reorganization_energy(&sd.with_amplitude(1.0))?;
    if unit == 0.0 {
        return Err(Error::InvalidBath("spectral density has zero reorganization energy".into()));
    }
    let mut lambda = 0.0;
    let mut eta = f64::NAN;
    for _ in 0..ETA_MAX_ITER {
        let gap = bright_dplus_gap(net, lambda)?;
        let next = -eta_target * gap;
        eta = lambda.abs() / gap;
        if (eta - eta_target).abs() <= ETA_TOLERANCE * eta_target.max(1.0) && lambda != 0.0 {
            let p = lambda / unit;
            return Ok(BathSpec {
                sd: sd.with_amplitude(p),
                temperature,
                n_matsubara: n_matsubara.max(1),
                lambda,
                eta,
            });
        }
        lambda = next;
    }
    Err(Error::EtaNotConverged {
        iterations: ETA_MAX_ITER,
        last: eta,
    })
}

/// High-temperature bath at `t_high` whose golden-rule downhill rate
/// J(E)(n(E) + 1) at the B–D₊ gap equals that of `bath`.
///
/// λ and η are recomputed for the rescaled amplitude.
pub fn classical_limit(bath: &BathSpec, net: &ExcitonNetwork, t_high: f64) -> Result<BathSpec> {
    if !(t_high > 0.0) {
        return Err(Error::InvalidBath(format!("temperature {t_high} must be positive")));
    }
    let gap = bright_dplus_gap(net, bath.lambda)?;
    let factor = (bose(bath.beta(), gap) + 1.0) / (bose(beta_from_kelvin(t_high), gap) + 1.0);
    let sd = bath.sd.with_amplitude(bath.sd.amplitude * factor);
    let lambda = bath.lambda * factor;
    let eta = lambda.abs() / bright_dplus_gap(net, lambda)?;
    Ok(BathSpec {
        sd,
        temperature: t_high,
        n_matsubara: bath.n_matsubara,
        lambda,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::au_to_cm;

    fn net() -> ExcitonNetwork {
        ExcitonNetwork::canonical_matched(SpectralDensity::thin(1.0).peaks[1].omega)
    }

    #[test]
    fn eta_calibration_is_self_consistent() {
        let net = net();
        for eta in [1e-4, 1e-3, 0.01, 0.04, 0.16] {
            let b = set_eta(&SpectralDensity::thin(1.0), eta, &net, 298.0, 10).unwrap();
            let gap = bright_dplus_gap(&net, b.lambda).unwrap();
            assert!((b.lambda.abs() / gap - eta).abs() < 1e-10);
            assert!(b.lambda < 0.0);
            let lam = reorganization_energy(&b.sd).unwrap();
            assert!((lam / b.lambda - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fifteen_wavenumbers_at_optimum() {
        let b = set_eta(&SpectralDensity::thin(1.0), 0.015, &net(), 298.0, 10).unwrap();
        let lam_cm = au_to_cm(b.lambda.abs());
        assert!((lam_cm - 15.0).abs() < 1.0, "{lam_cm}");
        // f = p / 1.95e-14 tracks η
        let f = b.sd.amplitude / P_REF;
        assert!((f / 0.015 - 1.0).abs() < 0.1, "f = {f}");
    }

    #[test]
    fn vanishing_eta_vanishing_amplitude() {
        let a = set_eta(&SpectralDensity::thin(1.0), 1e-8, &net(), 298.0, 1).unwrap();
        let b = set_eta(&SpectralDensity::thin(1.0), 1e-6, &net(), 298.0, 1).unwrap();
        assert!(a.sd.amplitude < b.sd.amplitude / 50.0);
        assert!(set_eta(&SpectralDensity::thin(1.0), 0.0, &net(), 298.0, 1).is_err());
    }

    #[test]
    fn classical_rate_matching() {
        let net = net();
        let quantum = set_eta(&SpectralDensity::thin(1.0), 0.01, &net, 298.0, 1).unwrap();
        let classical = classical_limit(&quantum, &net, 1e4).unwrap();
        let gap = bright_dplus_gap(&net, quantum.lambda).unwrap();
        let before = rate_kernel(&quantum, gap);
        let after = rate_kernel(&classical, gap);
        assert!((after / before - 1.0).abs() < 1e-6);
        // uphill and downhill nearly equal at high temperature
        let ratio = rate_kernel(&classical, -gap) / rate_kernel(&classical, gap);
        assert!((ratio - 1.0).abs() < 0.15, "{ratio}");
        assert!(classical.eta < quantum.eta / 5.0);
    }
}
