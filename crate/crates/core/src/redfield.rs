//! Bloch-Redfield tensor in the eigenbasis of H_eff and its propagation.

use log::warn;

use crate::bath::{half_fourier_quadrature, BathSpec, CorrelationExpansion};
use crate::model::{Basis, DensityMatrix, EigenSystem, StateLabel};
use crate::observables::{RunMeta, TrajectoryRecord};
use crate::ode::{AdaptiveOptions, Dopri5};
use crate::units::{au_to_fs, fs_to_au};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Source of the half-Fourier transforms Γ(ω) = ∫₀^∞ C(t) e^{iωt} dt.
pub enum BathKernel<'a> {
    /// Analytic, term by term from the exponential expansion.
    Expansion(&'a CorrelationExpansion),
    /// Spectral-density quadrature (real part closed form, imaginary part a
    /// principal-value integral).
    Quadrature(&'a BathSpec),
}

impl BathKernel<'_> {
    fn half_fourier(&self, omega: f64) -> Result<C64> {
        match self {
            BathKernel::Expansion(e) => Ok(e.half_fourier(omega)),
            BathKernel::Quadrature(b) => half_fourier_quadrature(b, omega),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorOptions {
    /// Keep the imaginary (Lamb-shift) parts of Γ(ω).
    pub lamb_shift: bool,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self { lamb_shift: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedfieldMode {
    Secular,
    NonSecular,
}

impl RedfieldMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RedfieldMode::Secular => "secular",
            RedfieldMode::NonSecular => "nonsecular",
        }
    }
}

/// R_{nmjk} with dρ_nm/dt = −iω_nm ρ_nm + Σ_jk R_nmjk ρ_jk (Schrödinger picture).
#[derive(Debug, Clone)]
pub struct RedfieldTensor {
    dim: usize,
    data: Vec<C64>,
    pub energies: Vec<f64>,
    /// Elements with ω_nm = ω_jk.
    pub secular_mask: Vec<bool>,
}

impl RedfieldTensor {
    fn idx(&self, n: usize, m: usize, j: usize, k: usize) -> usize {
        ((n * self.dim + m) * self.dim + j) * self.dim + k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, n: usize, m: usize, j: usize, k: usize) -> C64 {
        self.data[self.idx(n, m, j, k)]
    }

    pub fn set(&mut self, n: usize, m: usize, j: usize, k: usize, value: C64) {
        let i = self.idx(n, m, j, k);
        self.data[i] = value;
    }

    pub fn zeros(energies: &[f64]) -> Self {
        let dim = energies.len();
        let mut t = Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim.pow(4)],
            energies: energies.to_vec(),
            secular_mask: Vec::new(),
        };
        t.secular_mask = secular_mask(energies);
        t
    }

    /// max_jk |Σ_n R_nnjk|.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for j in 0..d {
            for k in 0..d {
                let s: C64 = (0..d).map(|n| self.get(n, n, j, k)).sum();
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// Named rates of the three-state model, R_{D₊D₊BB}, R_{D₋D₋BB},
    /// R_{D₊D₋BB} and the uphill R_{BBD₋D₋}, R_{BBD₊D₊}.
    pub fn named_rates(&self, es: &EigenSystem) -> Option<NamedRates> {
        let b = es.index_of(StateLabel::Bright)?;
        let p = es.index_of(StateLabel::DPlus)?;
        let m = es.index_of(StateLabel::DMinus)?;
        Some(NamedRates {
            dplus_from_b: self.get(p, p, b, b).re,
            dminus_from_b: self.get(m, m, b, b).re,
            coherence_from_b: self.get(p, m, b, b),
            b_from_dminus: self.get(b, b, m, m).re,
            b_from_dplus: self.get(b, b, p, p).re,
        })
    }
}

/// Population-transfer and population-to-coherence rates (a.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NamedRates {
    pub dplus_from_b: f64,
    pub dminus_from_b: f64,
    pub coherence_from_b: C64,
    pub b_from_dminus: f64,
    pub b_from_dplus: f64,
}

impl NamedRates {
    /// max/min − 1 over R_{D₊D₊BB}, R_{D₋D₋BB}, |R_{D₊D₋BB}|.
    pub fn relative_spread(&self) -> f64 {
        let v = [self.dplus_from_b, self.dminus_from_b, self.coherence_from_b.norm()];
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo - 1.0
    }
}

fn secular_mask(energies: &[f64]) -> Vec<bool> {
    let d = energies.len();
    let scale = energies.iter().fold(0.0_f64, |a, e| a.max(e.abs())).max(1e-300);
    let tol = 1e-9 * scale;
    let mut mask = vec![false; d.pow(4)];
    for n in 0..d {
        for m in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let w = (energies[n] - energies[m]) - (energies[j] - energies[k]);
                    mask[((n * d + m) * d + j) * d + k] = w.abs() <= tol;
                }
            }
        }
    }
    mask
}

/// Redfield tensor for H_SB = S ⊗ X with C(t) = ⟨X(t)X(0)⟩.
///
/// With Λ_ab = V_ab Γ(ω_ba) the dissipator is
/// −[S, Λρ] + [S, ρΛ†], which in components gives
/// R_nmjk = −(VΛ)_nj δ_mk + Λ_nj V_km + V_nj Λ†_km − δ_nj (Λ†V)_km.
pub fn build_tensor(es: &EigenSystem, kernel: BathKernel<'_>, opts: TensorOptions) -> Result<RedfieldTensor> {
    let d = es.dim();
    let e: Vec<f64> = es.energies.iter().copied().collect();
    let v = &es.v;
    let mut lam = vec![C64::new(0.0, 0.0); d * d];
    for a in 0..d {
        for b in 0..d {
            let mut g = kernel.half_fourier(e[b] - e[a])?;
            if !opts.lamb_shift {
                g.im = 0.0;
            }
            lam[a * d + b] = g * v[(a, b)];
        }
    }
    let lam_at = |a: usize, b: usize| lam[a * d + b];
    let lam_dag = |a: usize, b: usize| lam[b * d + a].conj();
    let mut vl = vec![C64::new(0.0, 0.0); d * d];
    let mut ldv = vec![C64::new(0.0, 0.0); d * d];
    for a in 0..d {
        for b in 0..d {
            vl[a * d + b] = (0..d).map(|c| lam_at(c, b) * v[(a, c)]).sum();
            ldv[a * d + b] = (0..d).map(|c| lam_dag(a, c) * v[(c, b)]).sum();
        }
    }
    let mut r = RedfieldTensor::zeros(&e);
    for n in 0..d {
        for m in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut x = lam_at(n, j) * v[(k, m)] + lam_dag(k, m) * v[(n, j)];
                    if m == k {
                        x -= vl[n * d + j];
                    }
                    if n == j {
                        x -= ldv[k * d + m];
                    }
                    r.set(n, m, j, k, x);
                }
            }
        }
    }
    Ok(r)
}

/// Tolerances and diagnostics for [`propagate_redfield`].
#[derive(Debug, Clone, Copy)]
pub struct RedfieldOptions {
    pub integrator: AdaptiveOptions,
    /// Eigenvalues of ρ below −`positivity_tol` are reported once as a warning.
    pub positivity_tol: f64,
}

impl Default for RedfieldOptions {
    fn default() -> Self {
        Self {
            integrator: AdaptiveOptions::default(),
            positivity_tol: 1e-8,
        }
    }
}

/// Integrate the interaction-picture master equation
/// dρ̃_nm/dt = Σ_jk R_nmjk ρ̃_jk e^{i(ω_nm − ω_jk)t}
/// and return ρ(t) in the Schrödinger picture on `times_fs`.
///
/// Secular mode drops every element with ω_nm ≠ ω_jk.
pub fn propagate_redfield(
    rho0: &DensityMatrix,
    tensor: &RedfieldTensor,
    mode: RedfieldMode,
    times_fs: &[f64],
    opts: RedfieldOptions,
    meta: RunMeta,
) -> Result<TrajectoryRecord> {
    if rho0.basis != Basis::Eigen {
        return Err(Error::BasisMismatch {
            expected: Basis::Eigen.as_str(),
            got: rho0.basis.as_str(),
        });
    }
    let d = tensor.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho0.dim(),
        });
    }
    check_grid(times_fs)?;
    let e = &tensor.energies;
    let omega = |a: usize, b: usize| e[a] - e[b];

    // sparse list of retained couplings (row, column, rate, Bohr-frequency offset)
    struct Link {
        row: usize,
        col: usize,
        rate: C64,
        freq: f64,
    }
    let mut links = Vec::new();
    for n in 0..d {
        for m in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let idx = ((n * d + m) * d + j) * d + k;
                    if mode == RedfieldMode::Secular && !tensor.secular_mask[idx] {
                        continue;
                    }
                    let rate = tensor.data[idx];
                    if rate == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let freq = if tensor.secular_mask[idx] { 0.0 } else { omega(n, m) - omega(j, k) };
                    links.push(Link {
                        row: n * d + m,
                        col: j * d + k,
                        rate,
                        freq,
                    });
                }
            }
        }
    }

    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        dy.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for l in &links {
            let phase = if l.freq == 0.0 { C64::new(1.0, 0.0) } else { (I * (l.freq * t)).exp() };
            dy[l.row] += l.rate * phase * y[l.col];
        }
    };

    let mut y: Vec<C64> = rho0.data.transpose().iter().copied().collect();
    let mut t = fs_to_au(times_fs[0]);
    // initial condition is taken at t = times_fs[0] with ρ̃ = ρ there
    let t_origin = t;
    let mut solver = Dopri5::new(d * d, opts.integrator);
    let mut states = Vec::with_capacity(times_fs.len());
    let mut warned = false;
    for &tf in times_fs {
        let target = fs_to_au(tf) - t_origin;
        let mut local_t = t - t_origin;
        solver.advance(&mut |s, yy, dy| rhs(s, yy, dy), &mut local_t, &mut y, target)?;
        t = local_t + t_origin;
        let mut rho = nalgebra::DMatrix::from_fn(d, d, |a, b| y[a * d + b]);
        // back to the Schrödinger picture: ρ_nm = ρ̃_nm e^{−iω_nm t}
        for a in 0..d {
            for b in 0..d {
                rho[(a, b)] *= (-I * (omega(a, b) * local_t)).exp();
            }
        }
        let dm = DensityMatrix::new(rho, Basis::Eigen);
        if !warned && dm.min_eigenvalue() < -opts.positivity_tol {
            warn!(
                "Redfield density matrix lost positivity at t = {:.1} fs (min eigenvalue {:e})",
                au_to_fs(t),
                dm.min_eigenvalue()
            );
            warned = true;
        }
        states.push(dm);
    }
    Ok(TrajectoryRecord::new(times_fs.to_vec(), states, meta))
}

pub(crate) fn check_grid(times_fs: &[f64]) -> Result<()> {
    if times_fs.is_empty() {
        return Err(Error::TimeGrid("time grid is empty".into()));
    }
    if times_fs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::TimeGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Golden-rule rate matrix of the secular populations: W_nm = R_nnmm.
pub fn population_rate_matrix(tensor: &RedfieldTensor) -> nalgebra::DMatrix<f64> {
    let d = tensor.dim();
    nalgebra::DMatrix::from_fn(d, d, |n, m| tensor.get(n, n, m, m).re)
}
