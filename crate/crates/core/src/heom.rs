//! Hierarchical equations of motion over auxiliary density operators (ADOs).
//!
//! The hierarchy is propagated in the Schrödinger picture with a
//! time-independent coupling operator S:
//!
//! ```text
//! dρ_n/dt = −i[H, ρ_n] + i Σ_k n_k γ_k ρ_n
//!           − i Σ_k c⁺_nk [S, ρ_{n+k}]
//!           − i Σ_k c⁻_nk (α_k S ρ_{n−k} − α̃_k ρ_{n−k} S)
//! ```
//!
//! with ADOs rescaled by ∏_k (n_k! |α_k|^{n_k})^{1/2}, so that
//! c⁺ = √((n_k+1)|α_k|) and c⁻ = √(n_k/|α_k|). Conjugating by e^{iHt}
//! recovers the interaction-picture form with S(t) = e^{iHt} S e^{−iHt}.

use std::collections::HashMap;
use std::io::{Read, Write};

use log::{debug, info};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bath::{CorrelationExpansion, ExpTerm};
use crate::model::{to_eigen_basis, Basis, DensityMatrix, EigenSystem, StateLabel};
use crate::observables::{RunMeta, TrajectoryRecord};
use crate::ode::Rk4;
use crate::redfield::check_grid;
use crate::units::{au_to_fs, fs_to_au};
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Default upper bound on the number of ADOs.
pub const DEFAULT_ADO_CAP: usize = 2_000_000;

/// C(n + k, k) without overflow for the sizes of interest.
pub fn hierarchy_count(n_cor: usize, level: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=level as u128 {
        c = c * (n_cor as u128 + i) / i;
    }
    c
}

/// Occupation vectors with Σ n_k ≤ L, enumerated level by level; within a
/// level, in lexicographic order of the sorted multiset of term indices.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    n_cor: usize,
    level: usize,
    occ: Vec<u16>,
    levels: Vec<usize>,
    // n_cor entries per ADO, −1 outside the truncation
    plus: Vec<i64>,
    minus: Vec<i64>,
    rank: HashMap<Vec<u16>, usize>,
}

impl Hierarchy {
    pub fn new(n_cor: usize, level: usize, cap: usize) -> Result<Self> {
        let count = hierarchy_count(n_cor, level);
        if count > cap as u128 {
            return Err(Error::HierarchyTooLarge { count, cap });
        }
        let count = count as usize;
        let mut occ = Vec::with_capacity(count * n_cor);
        let mut levels = Vec::with_capacity(count);
        let top = if n_cor == 0 { 0 } else { level };
        for l in 0..=top {
            let mut combo = vec![0usize; l];
            loop {
                let mut n = vec![0u16; n_cor];
                for &k in &combo {
                    n[k] += 1;
                }
                occ.extend_from_slice(&n);
                levels.push(l);
                // next non-decreasing sequence
                match (0..l).rev().find(|&i| combo[i] + 1 < n_cor) {
                    Some(i) => {
                        let v = combo[i] + 1;
                        for c in &mut combo[i..] {
                            *c = v;
                        }
                    }
                    None => break,
                }
            }
        }
        debug_assert_eq!(levels.len(), count);
        let rank: HashMap<Vec<u16>, usize> = (0..count).map(|i| (occ[i * n_cor..(i + 1) * n_cor].to_vec(), i)).collect();
        let mut plus = vec![-1i64; count * n_cor];
        let mut minus = vec![-1i64; count * n_cor];
        let mut buf = vec![0u16; n_cor];
        for i in 0..count {
            for k in 0..n_cor {
                buf.copy_from_slice(&occ[i * n_cor..(i + 1) * n_cor]);
                buf[k] += 1;
                if let Some(&j) = rank.get(&buf) {
                    plus[i * n_cor + k] = j as i64;
                }
                if occ[i * n_cor + k] > 0 {
                    buf[k] -= 2;
                    minus[i * n_cor + k] = rank[&buf] as i64;
                }
            }
        }
        Ok(Self {
            n_cor,
            level,
            occ,
            levels,
            plus,
            minus,
            rank,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn n_cor(&self) -> usize {
        self.n_cor
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn occupation(&self, i: usize) -> &[u16] {
        &self.occ[i * self.n_cor..(i + 1) * self.n_cor]
    }

    pub fn level_of(&self, i: usize) -> usize {
        self.levels[i]
    }

    pub fn rank(&self, n: &[u16]) -> Option<usize> {
        self.rank.get(n).copied()
    }

    pub fn plus(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.plus[i * self.n_cor + k];
        (j >= 0).then_some(j as usize)
    }

    pub fn minus(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.minus[i * self.n_cor + k];
        (j >= 0).then_some(j as usize)
    }
}

#[derive(Debug, Clone, Copy)]
enum LinkKind {
    Plus,
    Minus(usize),
}

#[derive(Debug, Clone, Copy)]
struct Link {
    target: usize,
    coef: f64,
    kind: LinkKind,
}

/// Precomputed hierarchy generator for a fixed Hamiltonian, coupling
/// operator and correlation expansion.
#[derive(Debug, Clone)]
pub struct HeomSolver {
    pub h: DMatrix<C64>,
    pub s: DMatrix<C64>,
    pub expansion: CorrelationExpansion,
    pub hierarchy: Hierarchy,
    d: usize,
    damp: Vec<C64>,
    // CSR over ADOs
    link_start: Vec<usize>,
    links: Vec<Link>,
    // Some when S is diagonal: sparse (entry, weight) patterns for the
    // commutator and for each α_k S· − α̃_k ·S
    diag: Option<DiagPatterns>,
    h_flat: Vec<C64>,
}

#[derive(Debug, Clone)]
struct DiagPatterns {
    commutator: Vec<(usize, C64)>,
    anti: Vec<Vec<(usize, C64)>>,
}

impl HeomSolver {
    pub fn new(h: &DMatrix<f64>, s: &DMatrix<f64>, expansion: CorrelationExpansion, level: usize, cap: usize) -> Result<Self> {
        let d = h.nrows();
        if !h.is_square() || s.nrows() != d || s.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.nrows() });
        }
        let n_cor = expansion.n_cor();
        let hierarchy = Hierarchy::new(n_cor, level, cap)?;
        let n = hierarchy.len();
        let terms = &expansion.terms;
        let mut damp = Vec::with_capacity(n);
        let mut link_start = Vec::with_capacity(n + 1);
        let mut links = Vec::new();
        for i in 0..n {
            let occ = hierarchy.occupation(i);
            damp.push(I * occ.iter().zip(terms).map(|(&nk, t)| t.gamma * nk as f64).sum::<C64>());
            link_start.push(links.len());
            for (k, t) in terms.iter().enumerate() {
                let a = t.alpha.norm();
                if a == 0.0 {
                    continue;
                }
                let nk = occ[k] as f64;
                if let Some(j) = hierarchy.plus(i, k) {
                    links.push(Link {
                        target: j,
                        coef: ((nk + 1.0) * a).sqrt(),
                        kind: LinkKind::Plus,
                    });
                }
                if let Some(j) = hierarchy.minus(i, k) {
                    links.push(Link {
                        target: j,
                        coef: (nk / a).sqrt(),
                        kind: LinkKind::Minus(k),
                    });
                }
            }
        }
        link_start.push(links.len());

        let is_diag = (0..d).all(|a| (0..d).all(|b| a == b || s[(a, b)] == 0.0));
        let diag = is_diag.then(|| {
            let sd: Vec<f64> = (0..d).map(|a| s[(a, a)]).collect();
            let mut commutator = Vec::new();
            for a in 0..d {
                for b in 0..d {
                    let w = -I * (sd[a] - sd[b]);
                    if w != C64::new(0.0, 0.0) {
                        commutator.push((a * d + b, w));
                    }
                }
            }
            let anti = terms
                .iter()
                .map(|t: &ExpTerm| {
                    let mut p = Vec::new();
                    for a in 0..d {
                        for b in 0..d {
                            let w = -I * (t.alpha * sd[a] - t.alpha_tilde * sd[b]);
                            if w != C64::new(0.0, 0.0) {
                                p.push((a * d + b, w));
                            }
                        }
                    }
                    p
                })
                .collect();
            DiagPatterns { commutator, anti }
        });
        let hc = h.map(|x| C64::new(x, 0.0));
        let h_flat = (0..d * d).map(|ab| hc[(ab / d, ab % d)]).collect();
        Ok(Self {
            h: hc,
            s: s.map(|x| C64::new(x, 0.0)),
            expansion,
            hierarchy,
            d,
            damp,
            link_start,
            links,
            diag,
            h_flat,
        })
    }

    /// Same generator, forcing the dense-S code path.
    pub fn without_fast_path(mut self) -> Self {
        self.diag = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_ados(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn state_len(&self) -> usize {
        self.n_ados() * self.d * self.d
    }

    /// Crude bound on the spectral radius of the generator (a.u.), used to
    /// keep fixed-step RK4 inside its stability region.
    pub fn stiffness_bound(&self) -> f64 {
        let d = self.d;
        let h_norm = (0..d).map(|a| (0..d).map(|b| self.h[(a, b)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let s_norm = (0..d).map(|a| (0..d).map(|b| self.s[(a, b)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let mut worst = 0.0_f64;
        for i in 0..self.n_ados() {
            let couple: f64 = self.links[self.link_start[i]..self.link_start[i + 1]]
                .iter()
                .map(|l| match l.kind {
                    LinkKind::Plus => 2.0 * l.coef * s_norm,
                    LinkKind::Minus(k) => {
                        let t = &self.expansion.terms[k];
                        l.coef * (t.alpha.norm() + t.alpha_tilde.norm()) * s_norm
                    }
                })
                .sum();
            worst = worst.max(self.damp[i].norm() + couple);
        }
        2.0 * h_norm + worst
    }

    fn ado_rhs(&self, i: usize, y: &[C64], out: &mut [C64]) {
        let d = self.d;
        let dd = d * d;
        let rho = &y[i * dd..(i + 1) * dd];
        let h = &self.h_flat;
        let damp = self.damp[i];
        for a in 0..d {
            for b in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..d {
                    acc += h[a * d + c] * rho[c * d + b] - rho[a * d + c] * h[c * d + b];
                }
                out[a * d + b] = -I * acc + damp * rho[a * d + b];
            }
        }
        let links = &self.links[self.link_start[i]..self.link_start[i + 1]];
        match &self.diag {
            Some(p) => {
                for l in links {
                    let src = &y[l.target * dd..(l.target + 1) * dd];
                    let pattern = match l.kind {
                        LinkKind::Plus => &p.commutator,
                        LinkKind::Minus(k) => &p.anti[k],
                    };
                    for &(ab, w) in pattern {
                        out[ab] += w * l.coef * src[ab];
                    }
                }
            }
            None => {
                let mut sum_plus = DMatrix::<C64>::zeros(d, d);
                let mut sum_a = DMatrix::<C64>::zeros(d, d);
                let mut sum_b = DMatrix::<C64>::zeros(d, d);
                for l in links {
                    let src = &y[l.target * dd..(l.target + 1) * dd];
                    match l.kind {
                        LinkKind::Plus => {
                            for ab in 0..dd {
                                sum_plus[(ab / d, ab % d)] += src[ab] * l.coef;
                            }
                        }
                        LinkKind::Minus(k) => {
                            let t = &self.expansion.terms[k];
                            let (ca, cb) = (t.alpha * l.coef, t.alpha_tilde * l.coef);
                            for ab in 0..dd {
                                sum_a[(ab / d, ab % d)] += src[ab] * ca;
                                sum_b[(ab / d, ab % d)] += src[ab] * cb;
                            }
                        }
                    }
                }
                let s = &self.s;
                let m = (s * &sum_plus - &sum_plus * s) + s * sum_a - sum_b * s;
                for ab in 0..dd {
                    out[ab] += -I * m[(ab / d, ab % d)];
                }
            }
        }
    }

    /// Time derivative of the full ADO vector (ordinal-major, each ADO
    /// row-major d×d).
    pub fn rhs(&self, y: &[C64], dy: &mut [C64]) {
        let dd = self.d * self.d;
        if self.n_ados() >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
            dy.par_chunks_mut(dd).enumerate().for_each(|(i, out)| self.ado_rhs(i, y, out));
        } else {
            for (i, out) in dy.chunks_mut(dd).enumerate() {
                self.ado_rhs(i, y, out);
            }
        }
    }

    pub fn initial_state(&self, rho0: &DensityMatrix, t_fs: f64) -> Result<HierarchyState> {
        if rho0.basis != Basis::Site {
            return Err(Error::BasisMismatch {
                expected: Basis::Site.as_str(),
                got: rho0.basis.as_str(),
            });
        }
        if rho0.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: rho0.dim(),
            });
        }
        let mut ados = vec![C64::new(0.0, 0.0); self.state_len()];
        for a in 0..self.d {
            for b in 0..self.d {
                ados[a * self.d + b] = rho0.data[(a, b)];
            }
        }
        Ok(HierarchyState {
            ados,
            level: self.hierarchy.level(),
            dim: self.d,
            t_fs,
        })
    }

    fn top(&self, state: &HierarchyState) -> DensityMatrix {
        let d = self.d;
        DensityMatrix::new(DMatrix::from_fn(d, d, |a, b| state.ados[a * d + b]), Basis::Site)
    }

    /// Largest Frobenius norm per hierarchy level.
    pub fn level_norms(&self, state: &HierarchyState) -> Vec<f64> {
        let dd = self.d * self.d;
        let mut norms = vec![0.0_f64; self.hierarchy.level() + 1];
        for (i, ado) in state.ados.chunks(dd).enumerate() {
            let nrm = ado.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let l = self.hierarchy.level_of(i);
            norms[l] = if nrm.is_finite() { norms[l].max(nrm) } else { f64::NAN };
        }
        norms
    }
}

const PARALLEL_THRESHOLD: usize = 256;

/// All ADOs at time `t_fs`; the first d×d block is the reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub ados: Vec<C64>,
    pub level: usize,
    pub dim: usize,
    pub t_fs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HeomOptions {
    /// Nominal RK4 step (fs); reduced automatically if the generator is too
    /// stiff for it.
    pub dt_fs: f64,
    /// Repeat the run at half the step and report the deviation.
    pub step_check: bool,
    pub record_norms: bool,
    pub blowup_norm: f64,
}

impl Default for HeomOptions {
    fn default() -> Self {
        Self {
            dt_fs: 0.1,
            step_check: false,
            record_norms: false,
            blowup_norm: 1e6,
        }
    }
}

// RK4's stability interval on the negative real axis is 2.78; on the
// imaginary axis 2.83.
const RK4_STABLE: f64 = 2.5;

#[derive(Debug, Clone)]
pub struct HeomOutput {
    pub times_fs: Vec<f64>,
    /// Reduced density matrices in the site basis.
    pub site_states: Vec<DensityMatrix>,
    /// Per output time, the largest ADO norm at each level.
    pub ado_norms: Option<Vec<Vec<f64>>>,
    /// Sup-norm difference of the reduced density matrix against a run at
    /// half the step.
    pub step_halving_delta: Option<f64>,
    pub final_state: HierarchyState,
    /// Step actually used (fs).
    pub dt_fs: f64,
}

impl HeomOutput {
    pub fn to_trajectory(&self, es: &EigenSystem, meta: RunMeta) -> Result<TrajectoryRecord> {
        let states = self
            .site_states
            .iter()
            .map(|s| to_eigen_basis(s, es))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryRecord::new(self.times_fs.clone(), states, meta))
    }
}

/// Step (fs) used on an interval: at most `dt_fs`, within the RK4 stability
/// region for `solver`.
pub fn effective_step(solver: &HeomSolver, dt_fs: f64) -> f64 {
    let rate = solver.stiffness_bound();
    let limit = au_to_fs(RK4_STABLE / rate);
    if limit < dt_fs {
        debug!("step reduced from {dt_fs} fs to {limit:.4} fs for stability");
        limit
    } else {
        dt_fs
    }
}

/// Propagate ρ₀ (top ADO, all others zero) over `times_fs`.
pub fn propagate_heom(solver: &HeomSolver, rho0: &DensityMatrix, times_fs: &[f64], opts: &HeomOptions) -> Result<HeomOutput> {
    check_grid(times_fs)?;
    let state = solver.initial_state(rho0, times_fs[0])?;
    propagate_state(solver, state, times_fs, opts)
}

/// Continue from an existing hierarchy state; `times_fs[0]` must equal its time.
pub fn propagate_state(
    solver: &HeomSolver,
    state: HierarchyState,
    times_fs: &[f64],
    opts: &HeomOptions,
) -> Result<HeomOutput> {
    check_grid(times_fs)?;
    if state.ados.len() != solver.state_len() || state.level != solver.hierarchy.level() {
        return Err(Error::Checkpoint(format!(
            "state holds {} values at level {}, solver expects {} at level {}",
            state.ados.len(),
            state.level,
            solver.state_len(),
            solver.hierarchy.level()
        )));
    }
    if (state.t_fs - times_fs[0]).abs() > 1e-9 * times_fs[0].abs().max(1.0) {
        return Err(Error::TimeGrid(format!(
            "grid starts at {} fs but the state is at {} fs",
            times_fs[0], state.t_fs
        )));
    }
    if !(opts.dt_fs > 0.0) {
        return Err(Error::TimeGrid(format!("step {} fs must be positive", opts.dt_fs)));
    }
    let dt = effective_step(solver, opts.dt_fs);
    let (states, norms, final_state) = integrate(solver, state.clone(), times_fs, dt, opts)?;
    let step_halving_delta = if opts.step_check {
        let (fine, _, _) = integrate(solver, state, times_fs, dt / 2.0, &HeomOptions { record_norms: false, ..*opts })?;
        Some(
            states
                .iter()
                .zip(&fine)
                .map(|(a, b)| (&a.data - &b.data).iter().map(|z| z.norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(HeomOutput {
        times_fs: times_fs.to_vec(),
        site_states: states,
        ado_norms: opts.record_norms.then_some(norms),
        step_halving_delta,
        final_state,
        dt_fs: dt,
    })
}

type Integrated = (Vec<DensityMatrix>, Vec<Vec<f64>>, HierarchyState);

fn integrate(solver: &HeomSolver, mut state: HierarchyState, times_fs: &[f64], dt_fs: f64, opts: &HeomOptions) -> Result<Integrated> {
    let mut rk = Rk4::new(solver.state_len());
    let mut f = |y: &[C64], dy: &mut [C64]| solver.rhs(y, dy);
    let mut out = vec![solver.top(&state)];
    let mut norms = Vec::new();
    if opts.record_norms {
        norms.push(solver.level_norms(&state));
    }
    let mut step = 0usize;
    for w in times_fs.windows(2) {
        let span = w[1] - w[0];
        let n = ((span / dt_fs) - 1e-9).ceil().max(1.0) as usize;
        let h = fs_to_au(span / n as f64);
        for _ in 0..n {
            rk.step(&mut f, &mut state.ados, h);
            step += 1;
        }
        state.t_fs = w[1];
        let level_norms = solver.level_norms(&state);
        if let Some((level, &norm)) = level_norms
            .iter()
            .enumerate()
            .find(|(_, &x)| !x.is_finite() || x > opts.blowup_norm)
        {
            return Err(Error::BlowUp {
                t_fs: w[1],
                step,
                level,
                norm,
            });
        }
        if opts.record_norms {
            norms.push(level_norms);
        }
        out.push(solver.top(&state));
    }
    Ok((out, norms, state))
}

/// Runs at each truncation level, and the sup-norm change of Re ρ_{D₋D₊}
/// (eigenbasis) between consecutive levels.
#[derive(Debug, Clone)]
pub struct ConvergenceScan {
    pub levels: Vec<usize>,
    pub records: Vec<TrajectoryRecord>,
    pub deltas: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn convergence_scan(
    h_eff: &DMatrix<f64>,
    s: &DMatrix<f64>,
    expansion: &CorrelationExpansion,
    es: &EigenSystem,
    levels: &[usize],
    rho0: &DensityMatrix,
    times_fs: &[f64],
    opts: &HeomOptions,
    meta: &RunMeta,
) -> Result<ConvergenceScan> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("levels must be a non-empty ascending list".into()));
    }
    let (dm, dp) = match (es.index_of(StateLabel::DMinus), es.index_of(StateLabel::DPlus)) {
        (Some(a), Some(b)) => (a, b),
        _ => (0, 1),
    };
    let runs: Vec<Result<TrajectoryRecord>> = levels
        .par_iter()
        .map(|&l| {
            let solver = HeomSolver::new(h_eff, s, expansion.clone(), l, DEFAULT_ADO_CAP)?;
            info!("convergence scan: L = {l}, {} ADOs", solver.n_ados());
            let out = propagate_heom(&solver, rho0, times_fs, opts)?;
            out.to_trajectory(
                es,
                RunMeta {
                    level: Some(l),
                    ..meta.clone()
                },
            )
        })
        .collect();
    let records = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let deltas = records
        .windows(2)
        .map(|w| {
            w[0].states
                .iter()
                .zip(&w[1].states)
                .map(|(a, b)| (a.data[(dm, dp)].re - b.data[(dm, dp)].re).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(ConvergenceScan {
        levels: levels.to_vec(),
        records,
        deltas,
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"EXHEOMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A hierarchy snapshot restored from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub expansion: CorrelationExpansion,
    pub state: HierarchyState,
}

fn put_c64<W: Write>(w: &mut W, z: C64) -> std::io::Result<()> {
    w.write_all(&z.re.to_le_bytes())?;
    w.write_all(&z.im.to_le_bytes())
}

/// Binary layout, little-endian: magic "EXHEOMCK", u32 version, u32 d,
/// u32 L, u32 n_poles, u32 n_matsubara, f64 t (fs), then per term
/// (α, α̃, γ) as complex pairs, u64 ADO count, and all ADOs ordinal-major,
/// each d×d row-major as (re, im) pairs.
pub fn write_checkpoint<W: Write>(mut w: W, expansion: &CorrelationExpansion, state: &HierarchyState) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for v in [
        CHECKPOINT_VERSION,
        state.dim as u32,
        state.level as u32,
        expansion.n_poles as u32,
        expansion.n_matsubara as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&state.t_fs.to_le_bytes())?;
    for t in &expansion.terms {
        put_c64(&mut w, t.alpha)?;
        put_c64(&mut w, t.alpha_tilde)?;
        put_c64(&mut w, t.gamma)?;
    }
    let dd = state.dim * state.dim;
    w.write_all(&((state.ados.len() / dd.max(1)) as u64).to_le_bytes())?;
    for z in &state.ados {
        put_c64(&mut w, *z)?;
    }
    Ok(())
}

fn take<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

fn get_c64<R: Read>(r: &mut R) -> Result<C64> {
    Ok(C64::new(get_f64(r)?, get_f64(r)?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let magic: [u8; 8] = take(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a hierarchy checkpoint".into()));
    }
    let version = get_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let dim = get_u32(&mut r)? as usize;
    let level = get_u32(&mut r)? as usize;
    let n_poles = get_u32(&mut r)? as usize;
    let n_matsubara = get_u32(&mut r)? as usize;
    let t_fs = get_f64(&mut r)?;
    let mut terms = Vec::with_capacity(n_poles + n_matsubara);
    for _ in 0..n_poles + n_matsubara {
        terms.push(ExpTerm {
            alpha: get_c64(&mut r)?,
            alpha_tilde: get_c64(&mut r)?,
            gamma: get_c64(&mut r)?,
        });
    }
    let count = u64::from_le_bytes(take(&mut r)?) as u128;
    let expected = hierarchy_count(terms.len(), level);
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {count} ADOs, expected C({}+{level}, {level}) = {expected}",
            terms.len()
        )));
    }
    let len = count as usize * dim * dim;
    let mut ados = Vec::with_capacity(len);
    for _ in 0..len {
        ados.push(get_c64(&mut r)?);
    }
    Ok(Checkpoint {
        expansion: CorrelationExpansion {
            terms,
            n_poles,
            n_matsubara,
        },
        state: HierarchyState { ados, level, dim, t_fs },
    })
}
