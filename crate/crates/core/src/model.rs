//! Site-basis Hamiltonian, reorganization shift and eigenbasis quantities.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

/// A network of sites in the single-excitation sector.
///
/// `couplings` must be symmetric with zero diagonal. `noise_site` is a
/// zero-based index of the site carrying the bath coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitonNetwork {
    pub site_energies: Vec<f64>,
    pub couplings: DMatrix<f64>,
    pub noise_site: usize,
}

impl ExcitonNetwork {
    pub fn new(site_energies: Vec<f64>, couplings: DMatrix<f64>, noise_site: usize) -> Result<Self> {
        let net = Self {
            site_energies,
            couplings,
            noise_site,
        };
        net.validate()?;
        Ok(net)
    }

    /// The bright/dark three-site model: ε₁ = ε₂ = 0, ε₃ = −J₁₂,
    /// J₂₃ = J₁₂/10, J₁₃ = 0, noise on site 2.
    pub fn canonical(j12: f64) -> Self {
        let mut couplings = DMatrix::zeros(3, 3);
        couplings[(0, 1)] = j12;
        couplings[(1, 0)] = j12;
        couplings[(1, 2)] = j12 / 10.0;
        couplings[(2, 1)] = j12 / 10.0;
        Self {
            site_energies: vec![0.0, 0.0, -j12],
            couplings,
            noise_site: 1,
        }
    }

    /// Canonical model with J₁₂ chosen so that the dissipation-free gap
    /// E_B − (E_D₊ + E_D₋)/2 equals `gap`.
    pub fn canonical_matched(gap: f64) -> Self {
        // every energy scales linearly with J₁₂
        let unit = Self::canonical(1.0);
        let h = build_hamiltonian(&unit).expect("canonical model is valid");
        let e = SymmetricEigen::new(h).eigenvalues;
        let mut e: Vec<f64> = e.iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        let unit_gap = e[2] - 0.5 * (e[0] + e[1]);
        Self::canonical(gap / unit_gap)
    }

    pub fn n_sites(&self) -> usize {
        self.site_energies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.site_energies.len();
        if n == 0 {
            return Err(Error::InvalidModel("network has no sites".into()));
        }
        if self.couplings.nrows() != n || self.couplings.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.couplings.nrows().max(self.couplings.ncols()),
            });
        }
        for i in 0..n {
            if self.couplings[(i, i)] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "coupling matrix has non-zero diagonal at site {}",
                    i + 1
                )));
            }
            for j in 0..i {
                if self.couplings[(i, j)] != self.couplings[(j, i)] {
                    return Err(Error::InvalidModel(format!(
                        "coupling matrix is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if self.noise_site >= n {
            return Err(Error::InvalidModel(format!(
                "noise site {} outside 1..={n}",
                self.noise_site + 1
            )));
        }
        Ok(())
    }

    /// Site projector |s⟩⟨s| on the noise site: the system coupling operator.
    pub fn coupling_operator(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        let mut s = DMatrix::zeros(n, n);
        s[(self.noise_site, self.noise_site)] = 1.0;
        s
    }
}

/// H_S = Σ ε_n |n⟩⟨n| + Σ_{n≠m} J_nm |n⟩⟨m|.
pub fn build_hamiltonian(net: &ExcitonNetwork) -> Result<DMatrix<f64>> {
    net.validate()?;
    let mut h = net.couplings.clone();
    for (i, e) in net.site_energies.iter().enumerate() {
        h[(i, i)] = *e;
    }
    Ok(h)
}

/// H_eff = H_S + λ |s⟩⟨s|.
pub fn effective_hamiltonian(h_s: &DMatrix<f64>, lambda: f64, noise_site: usize) -> Result<DMatrix<f64>> {
    if !h_s.is_square() {
        return Err(Error::DimensionMismatch {
            expected: h_s.nrows(),
            got: h_s.ncols(),
        });
    }
    if noise_site >= h_s.nrows() {
        return Err(Error::InvalidModel(format!(
            "noise site {} outside 1..={}",
            noise_site + 1,
            h_s.nrows()
        )));
    }
    let mut h = h_s.clone();
    h[(noise_site, noise_site)] += lambda;
    Ok(h)
}

/// Names of the three eigenstates of the bright/dark model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateLabel {
    DMinus,
    DPlus,
    Bright,
}

impl StateLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StateLabel::DMinus => "D-",
            StateLabel::DPlus => "D+",
            StateLabel::Bright => "B",
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Analytic |D₋⟩, |D₊⟩, |B⟩ of the three-site model, in the site basis.
pub fn reference_states() -> [[f64; 3]; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [0.5, -0.5, -s],
        [0.5, -0.5, s],
        [s, s, 0.0],
    ]
}

/// Eigen-decomposition of H_eff with the coupling operator in the eigenbasis.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Ascending eigenvalues.
    pub energies: DVector<f64>,
    /// Columns are eigenvectors in the site basis.
    pub u: DMatrix<f64>,
    /// Coupling operator in the eigenbasis, V = U† S U.
    pub v: DMatrix<f64>,
    /// Present for three-site systems: D₋, D₊, B in ascending order.
    pub labels: Option<[StateLabel; 3]>,
}

const DEGENERACY_TOL: f64 = 1e-12;

/// Diagonalize `h_eff` and transform `s` into the eigenbasis.
///
/// Eigenvalues are ascending. Each eigenvector is fixed so that its
/// largest-magnitude component is positive. For three sites, exactly
/// degenerate eigenvalues are ordered by descending overlap with the analytic
/// D₋, D₊, B vectors.
pub fn diagonalize(h_eff: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<EigenSystem> {
    let d = h_eff.nrows();
    if !h_eff.is_square() || s.nrows() != d || s.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.nrows(),
        });
    }
    let eig = SymmetricEigen::new(h_eff.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut energies = DVector::zeros(d);
    let mut u = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        energies[col] = eig.eigenvalues[k];
        let mut v = eig.eigenvectors.column(k).clone_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        u.set_column(col, &v);
    }

    if d == 3 {
        break_ties(&mut energies, &mut u);
    }

    let v = u.transpose() * s * &u;
    let labels = (d == 3).then_some([StateLabel::DMinus, StateLabel::DPlus, StateLabel::Bright]);
    Ok(EigenSystem {
        energies,
        u,
        v,
        labels,
    })
}

fn break_ties(energies: &mut DVector<f64>, u: &mut DMatrix<f64>) {
    let refs = reference_states();
    let scale = energies.camax().max(1e-300);
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && (energies[end] - energies[start]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            // assign slots start..end to the vectors with highest overlap to each reference
            let mut cols: Vec<usize> = (start..end).collect();
            let mut chosen = Vec::with_capacity(end - start);
            for slot in start..end {
                let r = &refs[slot];
                let (pos, _) = cols
                    .iter()
                    .enumerate()
                    .map(|(p, &c)| {
                        let ov: f64 = (0..3).map(|i| u[(i, c)] * r[i]).sum();
                        (p, ov.abs())
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                chosen.push(cols.remove(pos));
            }
            let snapshot = u.clone();
            for (slot, c) in (start..end).zip(chosen) {
                u.set_column(slot, &snapshot.column(c));
            }
        }
        start = end;
    }
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Index of a labelled state (three-site systems only).
    pub fn index_of(&self, label: StateLabel) -> Option<usize> {
        self.labels?.iter().position(|&l| l == label)
    }

    /// E_B − E_D₊: the gap between the two highest states.
    pub fn gap_bright_dplus(&self) -> f64 {
        let d = self.dim();
        self.energies[d - 1] - self.energies[d.saturating_sub(2)]
    }

    /// E_B − E_D₋: the gap between the highest and lowest state.
    pub fn gap_bright_dminus(&self) -> f64 {
        self.energies[self.dim() - 1] - self.energies[0]
    }

    /// E_D₊ − E_D₋.
    pub fn doublet_splitting(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    pub fn u_complex(&self) -> DMatrix<C64> {
        self.u.map(|x| C64::new(x, 0.0))
    }

    /// Pure-state density matrix |m⟩⟨m| of eigenstate `m`, in the eigenbasis.
    pub fn eigenstate(&self, m: usize) -> DensityMatrix {
        let d = self.dim();
        let mut rho = DMatrix::zeros(d, d);
        rho[(m, m)] = C64::new(1.0, 0.0);
        DensityMatrix::new(rho, Basis::Eigen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Site,
    Eigen,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Site => "site",
            Basis::Eigen => "eigen",
        }
    }
}

/// A d×d density matrix tagged with its basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub data: DMatrix<C64>,
    pub basis: Basis,
}

impl DensityMatrix {
    pub fn new(data: DMatrix<C64>, basis: Basis) -> Self {
        Self { data, basis }
    }

    /// Pure state |ψ⟩⟨ψ| (ψ need not be normalized).
    pub fn pure(psi: &[C64], basis: Basis) -> Self {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let v = DVector::from_iterator(psi.len(), psi.iter().map(|c| c / norm));
        Self::new(&v * v.adjoint(), basis)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)].re).collect()
    }

    pub fn purity(&self) -> f64 {
        (&self.data * &self.data).trace().re
    }

    /// max |ρ − ρ†|.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut err = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                err = err.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn expect_basis(&self, basis: Basis) -> Result<()> {
        if self.basis != basis {
            return Err(Error::BasisMismatch {
                expected: basis.as_str(),
                got: self.basis.as_str(),
            });
        }
        Ok(())
    }
}

/// ρ_site = U ρ_eigen U†.
pub fn to_site_basis(rho: &DensityMatrix, es: &EigenSystem) -> Result<DensityMatrix> {
    rho.expect_basis(Basis::Eigen)?;
    check_dim(rho, es)?;
    let u = es.u_complex();
    Ok(DensityMatrix::new(&u * &rho.data * u.adjoint(), Basis::Site))
}

/// ρ_eigen = U† ρ_site U.
pub fn to_eigen_basis(rho: &DensityMatrix, es: &EigenSystem) -> Result<DensityMatrix> {
    rho.expect_basis(Basis::Site)?;
    check_dim(rho, es)?;
    let u = es.u_complex();
    Ok(DensityMatrix::new(u.adjoint() * &rho.data * &u, Basis::Eigen))
}

fn check_dim(rho: &DensityMatrix, es: &EigenSystem) -> Result<()> {
    if rho.dim() != es.dim() {
        return Err(Error::DimensionMismatch {
            expected: es.dim(),
            got: rho.dim(),
        });
    }
    Ok(())
}
