//! Quantities derived from trajectories: populations, coherences, purity,
//! beat frequencies and the Bloch-volume non-Markovianity measure.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::heom::{propagate_heom, HeomOptions, HeomSolver};
use crate::model::{to_site_basis, Basis, DensityMatrix, EigenSystem};
use crate::{Error, Result, C64};

/// Run parameters attached to a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub eta: f64,
    pub temperature: f64,
    pub shape: String,
    pub solver: String,
    pub level: Option<usize>,
}

/// Density matrices on a strictly increasing time grid (fs).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times_fs: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub meta: RunMeta,
}

impl TrajectoryRecord {
    pub fn new(times_fs: Vec<f64>, states: Vec<DensityMatrix>, meta: RunMeta) -> Self {
        debug_assert_eq!(times_fs.len(), states.len());
        Self { times_fs, states, meta }
    }

    pub fn len(&self) -> usize {
        self.times_fs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_fs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.dim())
    }

    /// Population of basis state `i` over time.
    pub fn population(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.data[(i, i)].re).collect()
    }

    pub fn element(&self, a: usize, b: usize) -> Vec<C64> {
        self.states.iter().map(|s| s.data[(a, b)]).collect()
    }

    /// Largest deviation of the trace from one.
    pub fn trace_error(&self) -> f64 {
        self.states.iter().map(|s| (s.trace() - 1.0).norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.states.iter().map(|s| s.hermiticity_error()).fold(0.0, f64::max)
    }

    /// Index of the first sample at or after `t_fs`.
    pub fn index_at(&self, t_fs: f64) -> Option<usize> {
        self.times_fs.iter().position(|&t| t >= t_fs - 1e-9)
    }
}

/// |ρ_ab(t)| for an eigenbasis trajectory.
pub fn coherence_modulus(traj: &TrajectoryRecord, pair: (usize, usize)) -> Result<Vec<f64>> {
    let d = traj.dim();
    if pair.0 >= d || pair.1 >= d || pair.0 == pair.1 {
        return Err(Error::InvalidPair(pair.0, pair.1, d));
    }
    if let Some(s) = traj.states.first() {
        if s.basis != Basis::Eigen {
            return Err(Error::BasisMismatch {
                expected: Basis::Eigen.as_str(),
                got: s.basis.as_str(),
            });
        }
    }
    Ok(traj.states.iter().map(|s| s.data[pair].norm()).collect())
}

/// Tr ρ² per time point.
pub fn purity(traj: &TrajectoryRecord) -> Vec<f64> {
    traj.states.iter().map(|s| s.purity()).collect()
}

/// Diagonal of U ρ U† per time point: one vector of site populations per time.
pub fn site_populations(traj: &TrajectoryRecord, es: &EigenSystem) -> Result<Vec<Vec<f64>>> {
    traj.states
        .iter()
        .map(|s| match s.basis {
            Basis::Site => Ok(s.populations()),
            Basis::Eigen => Ok(to_site_basis(s, es)?.populations()),
        })
        .collect()
}

/// Purity of the Boltzmann distribution over `energies` at inverse temperature `beta`.
pub fn boltzmann_purity(energies: &[f64], beta: f64) -> f64 {
    let p = boltzmann_populations(energies, beta);
    p.iter().map(|x| x * x).sum()
}

pub fn boltzmann_populations(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Dominant frequency (cycles per fs) of a uniformly sampled real signal over
/// [t_start, t_end], from a Hann-windowed Fourier transform scanned on a
/// frequency grid of `n_freq` points up to `f_max`, refined by golden section.
pub fn dominant_frequency(times_fs: &[f64], signal: &[f64], t_start: f64, t_end: f64, f_max: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times_fs
        .iter()
        .zip(signal)
        .filter(|(t, _)| **t >= t_start - 1e-9 && **t <= t_end + 1e-9)
        .map(|(t, x)| (*t, *x))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let span = t1 - t0;
    let windowed: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(t, x)| {
            let w = 0.5 - 0.5 * (2.0 * PI * (t - t0) / span).cos();
            (t, (x - mean) * w)
        })
        .collect();
    let power = |f: f64| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(t, x) in &windowed {
            acc += C64::from_polar(x, -2.0 * PI * f * t);
        }
        acc.norm_sqr()
    };
    // resolution of the record is 1/span; oversample by 20
    let df = 1.0 / (20.0 * span);
    let n = (f_max / df).ceil() as usize;
    let (mut best_f, mut best_p) = (0.0, f64::NEG_INFINITY);
    for i in 1..=n {
        let f = i as f64 * df;
        let p = power(f);
        if p > best_p {
            best_p = p;
            best_f = f;
        }
    }
    let (mut a, mut b) = ((best_f - df).max(0.0), best_f + df);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if power(c) > power(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Some(0.5 * (a + b))
}

/// Generalized Gell-Mann basis orthonormal under Tr(G_m G_n) = δ_mn.
///
/// Order: G₀ = 1/√d, then for each pair j < k (row-major) the symmetric
/// (E_jk + E_kj)/√2 and antisymmetric −i(E_jk − E_kj)/√2 matrices, then the
/// diagonal matrices (Σ_{j<l} E_jj − l E_ll)/√(l(l+1)) for l = 1..d−1.
pub fn gell_mann_basis(d: usize) -> Vec<DMatrix<C64>> {
    let mut basis = Vec::with_capacity(d * d);
    let zero = C64::new(0.0, 0.0);
    basis.push(DMatrix::from_diagonal_element(d, d, C64::new(1.0 / (d as f64).sqrt(), 0.0)));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = DMatrix::from_element(d, d, zero);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            basis.push(sym);
            let mut anti = DMatrix::from_element(d, d, zero);
            anti[(j, k)] = C64::new(0.0, -s);
            anti[(k, j)] = C64::new(0.0, s);
            basis.push(anti);
        }
    }
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut m = DMatrix::from_element(d, d, zero);
        for j in 0..l {
            m[(j, j)] = C64::new(norm, 0.0);
        }
        m[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        basis.push(m);
    }
    basis
}

/// Dynamical map in the Gell-Mann basis at each time, F_mn(t) = Tr(G_m φ_t[G_n]).
#[derive(Debug, Clone)]
pub struct BlochMap {
    pub times_fs: Vec<f64>,
    pub maps: Vec<DMatrix<f64>>,
    /// det of the (d²−1)×(d²−1) block acting on traceless operators.
    pub volume_affine: Vec<f64>,
    /// det of the full d²×d² matrix.
    pub volume_full: Vec<f64>,
    /// Largest |Im F_mn| encountered (zero for a Hermiticity-preserving map).
    pub max_imaginary: f64,
}

impl BlochMap {
    /// Assemble F(t) from the images φ_t[G_n], given per time as a vector
    /// over n.
    pub fn from_images(times_fs: Vec<f64>, images: &[Vec<DMatrix<C64>>]) -> Self {
        let d = images.first().map_or(0, |v| v[0].nrows());
        let basis = gell_mann_basis(d);
        let dd = d * d;
        let mut maps = Vec::with_capacity(times_fs.len());
        let mut volume_affine = Vec::with_capacity(times_fs.len());
        let mut volume_full = Vec::with_capacity(times_fs.len());
        let mut max_imaginary = 0.0_f64;
        for ti in 0..times_fs.len() {
            let mut f = DMatrix::zeros(dd, dd);
            for n in 0..dd {
                let img = &images[n][ti];
                for (m, g) in basis.iter().enumerate() {
                    let val: C64 = (g * img).trace();
                    max_imaginary = max_imaginary.max(val.im.abs());
                    f[(m, n)] = val.re;
                }
            }
            volume_full.push(f.determinant());
            volume_affine.push(f.view((1, 1), (dd - 1, dd - 1)).determinant());
            maps.push(f);
        }
        Self {
            times_fs,
            maps,
            volume_affine,
            volume_full,
            max_imaginary,
        }
    }

    /// Largest increase V(t_{i+1}) − V(t_i) of the affine volume.
    pub fn max_increase(&self) -> f64 {
        self.volume_affine.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_fs,V_affine,V_full")?;
        for i in 0..self.times_fs.len() {
            writeln!(
                out,
                "{:.6},{:.12e},{:.12e}",
                self.times_fs[i], self.volume_affine[i], self.volume_full[i]
            )?;
        }
        Ok(())
    }
}

/// Propagate every basis operator G_n through the HEOM dynamical map (top
/// ADO = G_n, all others zero) and assemble the Bloch volume series.
///
/// The basis operators are taken in the site basis, where the solver works;
/// the determinant is invariant under the unitary change to the eigenbasis.
pub fn bloch_volume(solver: &HeomSolver, times_fs: &[f64], opts: &HeomOptions) -> Result<BlochMap> {
    let d = solver.dim();
    let basis = gell_mann_basis(d);
    let runs: Vec<Result<Vec<DMatrix<C64>>>> = basis
        .par_iter()
        .map(|g| {
            let rho0 = DensityMatrix::new(g.clone(), Basis::Site);
            let out = propagate_heom(solver, &rho0, times_fs, opts)?;
            Ok(out.site_states.into_iter().map(|s| s.data).collect())
        })
        .collect();
    let images = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BlochMap::from_images(times_fs.to_vec(), &images))
}

/// Per-trajectory CSV with eigenbasis and site-basis observables.
///
/// Columns: time_fs, pop_B, pop_D+, pop_D−, |rho_D+D−|, Re rho_D+D−,
/// Im rho_D+D−, Re rho_BD+, Re rho_BD−, purity, site1, site2, site3.
pub fn write_trajectory_csv<W: Write>(traj: &TrajectoryRecord, es: &EigenSystem, mut out: W) -> Result<()> {
    if traj.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: traj.dim(),
        });
    }
    let sites = site_populations(traj, es)?;
    writeln!(
        out,
        "time_fs,pop_B,pop_D+,pop_D-,abs_rho_D+D-,re_rho_D+D-,im_rho_D+D-,re_rho_BD+,re_rho_BD-,purity,site1,site2,site3"
    )?;
    for (i, s) in traj.states.iter().enumerate() {
        let r = &s.data;
        writeln!(
            out,
            "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            traj.times_fs[i],
            r[(2, 2)].re,
            r[(1, 1)].re,
            r[(0, 0)].re,
            r[(1, 0)].norm(),
            r[(1, 0)].re,
            r[(1, 0)].im,
            r[(2, 1)].re,
            r[(2, 0)].re,
            s.purity(),
            sites[i][0],
            sites[i][1],
            sites[i][2],
        )?;
    }
    Ok(())
}
