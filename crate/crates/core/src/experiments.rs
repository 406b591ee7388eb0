//! Resolution of a configuration into a physical run, the named experiments
//! and everything they write to disk.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bath::{
    classical_limit, expand_correlation, set_eta, BathSpec, CorrelationExpansion, CorrelationSamples, ExpansionCheck,
    SpectralDensity,
};
use crate::config::{ExperimentConfig, InitialState, Matsubara, RedfieldModeSetting, SolverKind};
use crate::heom::{
    convergence_scan, propagate_heom, propagate_state, read_checkpoint, write_checkpoint, HeomOptions, HeomOutput,
    HeomSolver,
};
use crate::model::{build_hamiltonian, diagonalize, effective_hamiltonian, EigenSystem, ExcitonNetwork, StateLabel};
use crate::observables::{bloch_volume, purity, write_trajectory_csv, BlochMap, RunMeta, TrajectoryRecord};
use crate::redfield::{
    build_tensor, propagate_redfield, BathKernel, RedfieldMode, RedfieldOptions, TensorOptions,
};
use crate::units::{au_to_cm, bose, beta_from_kelvin};
use crate::{Error, Result};

/// Window and resolution of the expansion-vs-quadrature check.
pub const CHECK_WINDOW_FS: f64 = 2000.0;
pub const CHECK_POINTS: usize = 801;

/// Everything a run needs, derived from a configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub net: ExcitonNetwork,
    pub h_eff: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub es: EigenSystem,
    pub bath: BathSpec,
    pub expansion: CorrelationExpansion,
    pub check: ExpansionCheck,
    /// For classical runs: the amplitude at the reference temperature with
    /// the same golden-rule downhill rate.
    pub reference_amplitude: Option<f64>,
    pub level: usize,
}

impl Resolved {
    pub fn meta(&self) -> RunMeta {
        RunMeta {
            eta: self.bath.eta,
            temperature: self.bath.temperature,
            shape: self.config.bath.shape.clone(),
            solver: solver_name(&self.config).into(),
            level: (self.config.solver.kind == SolverKind::Heom).then_some(self.level),
        }
    }

    pub fn initial_index(&self) -> usize {
        let label = match self.config.solver.initial {
            InitialState::Bright => StateLabel::Bright,
            InitialState::Dplus => StateLabel::DPlus,
            InitialState::Dminus => StateLabel::DMinus,
        };
        self.es.index_of(label).unwrap_or(self.es.dim() - 1)
    }
}

fn solver_name(c: &ExperimentConfig) -> &'static str {
    match (c.solver.kind, c.solver.redfield_mode) {
        (SolverKind::Heom, _) => "heom",
        (SolverKind::Redfield, RedfieldModeSetting::Secular) => "redfield-secular",
        (SolverKind::Redfield, RedfieldModeSetting::Nonsecular) => "redfield-nonsecular",
    }
}

/// Hierarchy depth used when the configuration leaves it open: deep enough
/// for the coupling regime at hand.
pub fn default_level(eta: f64, classical: bool) -> usize {
    if classical {
        if eta >= 5e-3 {
            8
        } else if eta >= 5e-4 {
            5
        } else {
            3
        }
    } else if eta > 0.05 {
        5
    } else if eta > 0.02 {
        4
    } else {
        3
    }
}

type SampleKey = (Vec<u64>, u64);

fn sample_cache() -> &'static Mutex<HashMap<SampleKey, Arc<CorrelationSamples>>> {
    static CACHE: OnceLock<Mutex<HashMap<SampleKey, Arc<CorrelationSamples>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Quadrature samples of C(t) at unit amplitude; the relative error of an
/// expansion does not depend on the amplitude, so these are shared.
pub fn unit_samples(sd: &SpectralDensity, temperature: f64) -> Result<Arc<CorrelationSamples>> {
    let key: SampleKey = (
        sd.peaks.iter().flat_map(|p| [p.omega.to_bits(), p.width.to_bits()]).collect(),
        temperature.to_bits(),
    );
    if let Some(s) = sample_cache().lock().unwrap().get(&key) {
        return Ok(s.clone());
    }
    let unit = BathSpec::from_amplitude_only(sd.with_amplitude(1.0), temperature, 1);
    let samples = Arc::new(CorrelationSamples::compute(&unit, CHECK_WINDOW_FS, CHECK_POINTS)?);
    sample_cache().lock().unwrap().insert(key, samples.clone());
    Ok(samples)
}

/// Expansion of `bath` with its Matsubara count fixed or chosen as the
/// smallest meeting `tolerance`.
pub fn expansion_for(bath: &BathSpec, setting: Matsubara, tolerance: f64, cap: usize) -> Result<(CorrelationExpansion, ExpansionCheck)> {
    let samples = unit_samples(&bath.sd, bath.temperature)?;
    let unit = BathSpec {
        sd: bath.sd.with_amplitude(1.0),
        ..bath.clone()
    };
    let n = match setting.fixed() {
        Some(n) => n,
        None => {
            let trial = BathSpec { n_matsubara: 1, ..unit.clone() };
            crate::bath::expand_converged(&trial, &samples, tolerance, cap)?.1.n_matsubara
        }
    };
    let unit_exp = expand_correlation(&BathSpec { n_matsubara: n, ..unit })?;
    let error = samples.relative_error(&unit_exp);
    let exp = expand_correlation(&BathSpec {
        n_matsubara: n,
        ..bath.clone()
    })?;
    Ok((exp, ExpansionCheck { n_matsubara: n, error }))
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    config.validate()?;
    let sd = config.spectral_density()?;
    let net = config.network()?;
    let b = &config.bath;
    let nm = b.n_matsubara.fixed().unwrap_or(1);
    let (bath, reference_amplitude) = match (b.classical, b.eta, b.p) {
        (false, Some(eta), _) => (set_eta(&sd, eta, &net, b.temperature, nm)?, None),
        (false, None, Some(p)) => (BathSpec::from_amplitude(sd.with_amplitude(p), &net, b.temperature, nm)?, None),
        (true, Some(eta), _) => {
            // η refers to the rescaled bath; the reference amplitude is the
            // one with the same downhill rate at the reference temperature
            let hot = set_eta(&sd, eta, &net, b.t_high, nm)?;
            let gap = crate::bath::bright_dplus_gap(&net, hot.lambda)?;
            let factor = (bose(beta_from_kelvin(b.temperature), gap) + 1.0) / (bose(beta_from_kelvin(b.t_high), gap) + 1.0);
            let reference = hot.sd.amplitude / factor;
            (hot, Some(reference))
        }
        (true, None, Some(p)) => {
            let cold = BathSpec::from_amplitude(sd.with_amplitude(p), &net, b.temperature, nm)?;
            (classical_limit(&cold, &net, b.t_high)?, Some(p))
        }
        (_, None, None) => unreachable!("validated"),
    };
    let (expansion, check) = expansion_for(&bath, b.n_matsubara, b.expansion_tolerance, b.matsubara_cap)?;
    if check.error >= b.expansion_tolerance {
        warn!(
            "expansion with {} Matsubara terms deviates from quadrature by {:.3e} (tolerance {:.1e})",
            check.n_matsubara, check.error, b.expansion_tolerance
        );
    }
    let bath = BathSpec {
        n_matsubara: check.n_matsubara,
        ..bath
    };
    let h_eff = effective_hamiltonian(&build_hamiltonian(&net)?, bath.lambda, net.noise_site)?;
    let s = net.coupling_operator();
    let es = diagonalize(&h_eff, &s)?;
    let label_eta = b.eta.unwrap_or(bath.eta);
    let level = config.solver.level.unwrap_or_else(|| default_level(label_eta, b.classical));
    Ok(Resolved {
        config: config.clone(),
        net,
        h_eff,
        s,
        es,
        bath,
        expansion,
        check,
        reference_amplitude,
        level,
    })
}

/// Output of one propagation.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Eigenbasis trajectory.
    pub trajectory: TrajectoryRecord,
    pub heom: Option<HeomOutput>,
    pub volume: Option<BlochMap>,
}

pub fn heom_options(config: &ExperimentConfig) -> HeomOptions {
    HeomOptions {
        dt_fs: config.solver.dt_fs,
        step_check: config.solver.step_check,
        ..Default::default()
    }
}

pub fn heom_solver(r: &Resolved) -> Result<HeomSolver> {
    HeomSolver::new(&r.h_eff, &r.s, r.expansion.clone(), r.level, r.config.solver.ado_cap)
}

pub fn simulate(r: &Resolved) -> Result<Simulation> {
    let times = r.config.time_grid();
    let rho0 = r.es.eigenstate(r.initial_index());
    match r.config.solver.kind {
        SolverKind::Heom => {
            let solver = heom_solver(r)?;
            info!(
                "HEOM: {} exponential terms, L = {}, {} ADOs",
                r.expansion.n_cor(),
                r.level,
                solver.n_ados()
            );
            let opts = heom_options(&r.config);
            let out = match &r.config.solver.resume_from {
                Some(path) => {
                    let file = fs::File::open(path)
                        .map_err(|e| Error::Config(format!("solver.resume_from: {}: {e}", path.display())))?;
                    let ck = read_checkpoint(std::io::BufReader::new(file))?;
                    if ck.expansion != r.expansion || ck.state.level != r.level || ck.state.dim != r.es.dim() {
                        return Err(Error::Checkpoint(format!(
                            "{} was written for a different bath expansion or hierarchy",
                            path.display()
                        )));
                    }
                    let t0 = ck.state.t_fs;
                    let mut grid = vec![t0];
                    grid.extend(times.iter().copied().filter(|&t| t > t0 + 1e-9));
                    propagate_state(&solver, ck.state, &grid, &opts)?
                }
                None => {
                    let rho_site = crate::model::to_site_basis(&rho0, &r.es)?;
                    propagate_heom(&solver, &rho_site, &times, &opts)?
                }
            };
            let trajectory = out.to_trajectory(&r.es, r.meta())?;
            let volume = if r.config.outputs.bloch_volume {
                Some(bloch_volume(&solver, &times, &opts)?)
            } else {
                None
            };
            Ok(Simulation {
                trajectory,
                heom: Some(out),
                volume,
            })
        }
        SolverKind::Redfield => {
            let tensor = build_tensor(
                &r.es,
                BathKernel::Expansion(&r.expansion),
                TensorOptions {
                    lamb_shift: r.config.solver.lamb_shift,
                },
            )?;
            let mode = match r.config.solver.redfield_mode {
                RedfieldModeSetting::Secular => RedfieldMode::Secular,
                RedfieldModeSetting::Nonsecular => RedfieldMode::NonSecular,
            };
            let trajectory = propagate_redfield(&rho0, &tensor, mode, &times, RedfieldOptions::default(), r.meta())?;
            Ok(Simulation {
                trajectory,
                heom: None,
                volume: None,
            })
        }
    }
}

/// Headline numbers of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub peak_coherence: f64,
    pub time_to_peak_fs: f64,
    /// First time after the peak at which |ρ_D₊D₋| falls to half the peak.
    pub coherence_half_life_fs: Option<f64>,
    /// Mean purity over the final tenth of the run.
    pub asymptotic_purity: f64,
    /// First time the initial-state population drops below one half.
    pub initial_half_time_fs: Option<f64>,
}

pub fn summarize(traj: &TrajectoryRecord, es: &EigenSystem, initial: usize) -> Summary {
    let (p, m) = match (es.index_of(StateLabel::DPlus), es.index_of(StateLabel::DMinus)) {
        (Some(p), Some(m)) => (p, m),
        _ => (1, 0),
    };
    let coh: Vec<f64> = traj.states.iter().map(|s| s.data[(p, m)].norm()).collect();
    let (ipk, peak) = coh
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
    let half_life = coh[ipk..]
        .iter()
        .position(|&c| c < 0.5 * peak)
        .map(|k| traj.times_fs[ipk + k] - traj.times_fs[ipk]);
    let pur = purity(traj);
    let tail = (pur.len() / 10).max(1);
    let asymptotic_purity = pur[pur.len() - tail..].iter().sum::<f64>() / tail as f64;
    let initial_half_time_fs = traj
        .states
        .iter()
        .position(|s| s.data[(initial, initial)].re < 0.5)
        .map(|i| traj.times_fs[i]);
    Summary {
        peak_coherence: peak,
        time_to_peak_fs: traj.times_fs[ipk],
        coherence_half_life_fs: half_life,
        asymptotic_purity,
        initial_half_time_fs,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), |v| format!("{v:.3}"))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Derived quantities that, with the resolved configuration, pin down the run.
pub fn meta_text(r: &Resolved, sim: Option<&Simulation>) -> String {
    let mut resolved = r.config.clone();
    resolved.bath.n_matsubara = Matsubara::Fixed(r.check.n_matsubara);
    resolved.solver.level = Some(r.level);
    if resolved.model.j12_cm.is_none() {
        resolved.model.j12_cm = Some(au_to_cm(r.net.couplings[(0, 1)]));
    }
    let es = &r.es;
    let mut out = String::new();
    out.push_str("# resolved configuration; rerunning it reproduces this run\n");
    out.push_str(&resolved.to_toml());
    out.push_str("\n[derived]\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    let au_cm = |name: &str, x: f64, kv: &mut dyn FnMut(&str, String)| {
        kv(&format!("{name}_au"), format!("{x:.12e}"));
        kv(&format!("{name}_cm"), format!("{:.6}", au_to_cm(x)));
    };
    kv("eta", format!("{:.12e}", r.bath.eta));
    kv("p_au", format!("{:.12e}", r.bath.sd.amplitude));
    if let Some(p) = r.reference_amplitude {
        kv("reference_p_au", format!("{p:.12e}"));
    }
    kv("temperature_k", format!("{}", r.bath.temperature));
    au_cm("lambda", r.bath.lambda, &mut kv);
    au_cm("j12", r.net.couplings[(0, 1)], &mut kv);
    au_cm("j23", r.net.couplings[(1, 2)], &mut kv);
    au_cm("e_bd_plus", es.gap_bright_dplus(), &mut kv);
    au_cm("e_bd_minus", es.gap_bright_dminus(), &mut kv);
    au_cm("e_dplus_dminus", es.doublet_splitting(), &mut kv);
    kv(
        "eigenenergies_au",
        format!(
            "[{}]",
            es.energies.iter().map(|e| format!("{e:.12e}")).collect::<Vec<_>>().join(", ")
        ),
    );
    kv(
        "spectral_peaks_au",
        format!(
            "[{}]",
            r.bath
                .sd
                .peaks
                .iter()
                .map(|p| format!("[{:.6e}, {:.6e}]", p.omega, p.width))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    kv("n_matsubara", r.check.n_matsubara.to_string());
    kv("expansion_error", format!("{:.3e}", r.check.error));
    kv("solver", format!("\"{}\"", solver_name(&r.config)));
    if let Some(sim) = sim {
        kv("trace_error", format!("{:.3e}", sim.trajectory.trace_error()));
        kv("hermiticity_error", format!("{:.3e}", sim.trajectory.hermiticity_error()));
        if let Some(h) = &sim.heom {
            kv("level", r.level.to_string());
            kv("n_ados", crate::heom::hierarchy_count(r.expansion.n_cor(), r.level).to_string());
            kv("dt_used_fs", format!("{:.6e}", h.dt_fs));
            if let Some(d) = h.step_halving_delta {
                kv("step_halving_delta", format!("{d:.3e}"));
            }
        }
    }
    out
}

fn plot_script(volume: bool) -> String {
    let mut s = String::from(
        "# gnuplot script: gnuplot plot.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set key autotitle columnhead\n\
         set xlabel 'time (fs)'\n\
         set output 'populations.png'\n\
         set ylabel 'eigenstate population'\n\
         plot 'trajectory.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines\n\
         set output 'coherence.png'\n\
         set ylabel 'coherence / purity'\n\
         plot 'trajectory.csv' using 1:5 with lines, '' using 1:8 with lines, '' using 1:9 with lines, '' using 1:10 with lines\n\
         set output 'sites.png'\n\
         set ylabel 'site population'\n\
         plot 'trajectory.csv' using 1:11 with lines, '' using 1:12 with lines, '' using 1:13 with lines\n",
    );
    if volume {
        s.push_str(
            "set output 'volume.png'\n\
             set ylabel 'V(t)'\n\
             plot 'volume.csv' using 1:2 with lines, '' using 1:3 with lines\n",
        );
    }
    s
}

/// Write trajectory.csv, volume.csv, the expansion table, the checkpoint,
/// meta and plot.gp into `dir`.
pub fn write_run(dir: &Path, r: &Resolved, sim: &Simulation) -> Result<()> {
    fs::create_dir_all(dir)?;
    let o = &r.config.outputs;
    if o.trajectory {
        let mut w = create(&dir.join("trajectory.csv"))?;
        write_trajectory_csv(&sim.trajectory, &r.es, &mut w)?;
        w.flush()?;
    }
    if let Some(v) = &sim.volume {
        let mut w = create(&dir.join("volume.csv"))?;
        v.write_csv(&mut w)?;
        w.flush()?;
    }
    if o.coefficients {
        let mut w = create(&dir.join("expansion.tsv"))?;
        r.expansion.write_table(&mut w)?;
        w.flush()?;
    }
    if o.checkpoint {
        if let Some(h) = &sim.heom {
            let mut w = create(&dir.join("state.ckpt"))?;
            write_checkpoint(&mut w, &r.expansion, &h.final_state)?;
            w.flush()?;
        }
    }
    fs::write(dir.join("meta"), meta_text(r, Some(sim)))?;
    if o.plot_script {
        fs::write(dir.join("plot.gp"), plot_script(sim.volume.is_some()))?;
    }
    Ok(())
}

/// Resolve, propagate and write a single run.
pub fn run(config: &ExperimentConfig) -> Result<(Resolved, Simulation)> {
    let r = resolve(config)?;
    let sim = simulate(&r)?;
    write_run(&config.outputs.directory, &r, &sim)?;
    Ok((r, sim))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParam {
    Eta,
    Level,
    Temperature,
}

impl std::str::FromStr for ScanParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(ScanParam::Eta),
            "level" | "L" => Ok(ScanParam::Level),
            "temperature" | "T" => Ok(ScanParam::Temperature),
            other => Err(Error::Config(format!(
                "unknown scan parameter '{other}' (expected eta, level or temperature)"
            ))),
        }
    }
}

impl ScanParam {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanParam::Eta => "eta",
            ScanParam::Level => "level",
            ScanParam::Temperature => "temperature",
        }
    }

    fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self {
            ScanParam::Eta => {
                c.bath.p = None;
                c.bath.eta = Some(value);
            }
            ScanParam::Level => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("level must be a non-negative integer, got {value}")));
                }
                c.solver.level = Some(value as usize);
            }
            ScanParam::Temperature => c.bath.temperature = value,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct ScanEntry {
    pub value: f64,
    pub directory: PathBuf,
    pub result: std::result::Result<Summary, String>,
    pub trajectory: Option<TrajectoryRecord>,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub param: ScanParam,
    pub entries: Vec<ScanEntry>,
}

impl ScanReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.result.is_err()).count()
    }
}

fn value_label(v: f64) -> String {
    format!("{v}")
}

/// One sub-directory per value plus summary.csv; failures are recorded per
/// value and do not stop the others.
pub fn scan(config: &ExperimentConfig, param: ScanParam, values: &[f64], jobs: usize) -> Result<ScanReport> {
    if values.is_empty() {
        return Err(Error::Config("scan needs at least one value".into()));
    }
    let root = config.outputs.directory.clone();
    fs::create_dir_all(&root)?;
    let work = |&value: &f64| -> ScanEntry {
        let dir = root.join(format!("{}_{}", param.as_str(), value_label(value)));
        let outcome = param.apply(config, value).and_then(|mut c| {
            c.outputs.directory = dir.clone();
            let (r, sim) = run(&c)?;
            Ok((summarize(&sim.trajectory, &r.es, r.initial_index()), sim.trajectory))
        });
        match outcome {
            Ok((summary, traj)) => ScanEntry {
                value,
                directory: dir,
                result: Ok(summary),
                trajectory: Some(traj),
            },
            Err(e) => {
                warn!("{} = {value}: {e}", param.as_str());
                ScanEntry {
                    value,
                    directory: dir,
                    result: Err(e.to_string()),
                    trajectory: None,
                }
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let entries: Vec<ScanEntry> = pool.install(|| values.par_iter().map(work).collect());
    let report = ScanReport { param, entries };
    write_scan_summary(&root, &report)?;
    Ok(report)
}

fn write_scan_summary(root: &Path, report: &ScanReport) -> Result<()> {
    let mut w = create(&root.join("summary.csv"))?;
    writeln!(
        w,
        "{},peak_coherence,time_to_peak_fs,coherence_half_life_fs,asymptotic_purity,initial_half_time_fs,status",
        report.param.as_str()
    )?;
    for e in &report.entries {
        match &e.result {
            Ok(s) => writeln!(
                w,
                "{},{:.6},{:.3},{},{:.6},{},ok",
                value_label(e.value),
                s.peak_coherence,
                s.time_to_peak_fs,
                fmt_opt(s.coherence_half_life_fs),
                s.asymptotic_purity,
                fmt_opt(s.initial_half_time_fs)
            )?,
            Err(msg) => writeln!(
                w,
                "{},nan,nan,nan,nan,nan,\"failed: {}\"",
                value_label(e.value),
                msg.replace('"', "'")
            )?,
        }
    }
    w.flush()?;
    // long-format |ρ_D₊D₋|(t, value) for contour plots
    let mut w = create(&root.join("coherence_map.csv"))?;
    writeln!(w, "{},time_fs,abs_rho_D+D-", report.param.as_str())?;
    for e in &report.entries {
        if let Some(t) = &e.trajectory {
            for (time, s) in t.times_fs.iter().zip(&t.states) {
                writeln!(w, "{},{:.6},{:.12e}", value_label(e.value), time, s.data[(1, 0)].norm())?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    fs::write(
        root.join("plot.gp"),
        format!(
            "# gnuplot script: gnuplot plot.gp\n\
             set datafile separator ','\n\
             set terminal pngcairo size 900,600\n\
             set output 'summary.png'\n\
             set logscale x\n\
             set xlabel '{p}'\n\
             plot 'summary.csv' using 1:2 with linespoints title 'peak |rho_D+D-|', '' using 1:5 with linespoints title 'asymptotic purity'\n\
             unset logscale x\n\
             set output 'coherence_map.png'\n\
             set view map\n\
             set xlabel 'time (fs)'\n\
             set ylabel '{p}'\n\
             splot 'coherence_map.csv' using 2:1:3 with pm3d notitle\n",
            p = report.param.as_str()
        ),
    )?;
    Ok(())
}

/// Redfield rates at one coupling strength.
#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub eta: f64,
    pub lambda: f64,
    pub amplitude: f64,
    pub gap_bdplus: f64,
    pub rates: crate::redfield::NamedRates,
}

pub fn rates(config: &ExperimentConfig, etas: &[f64]) -> Result<Vec<RateRow>> {
    if etas.is_empty() {
        return Err(Error::Config("rates needs at least one eta value".into()));
    }
    etas.iter()
        .map(|&eta| {
            let mut c = config.clone();
            c.bath.p = None;
            c.bath.eta = Some(eta);
            let r = resolve(&c)?;
            let tensor = build_tensor(
                &r.es,
                BathKernel::Expansion(&r.expansion),
                TensorOptions {
                    lamb_shift: c.solver.lamb_shift,
                },
            )?;
            let rates = tensor
                .named_rates(&r.es)
                .ok_or_else(|| Error::InvalidModel("eigenstates could not be labelled".into()))?;
            Ok(RateRow {
                eta: r.bath.eta,
                lambda: r.bath.lambda,
                amplitude: r.bath.sd.amplitude,
                gap_bdplus: r.es.gap_bright_dplus(),
                rates,
            })
        })
        .collect()
}

pub fn write_rates<W: Write>(rows: &[RateRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "eta,lambda_cm,p_au,E_BD+_cm,R_D+D+BB_au,R_D-D-BB_au,re_R_D+D-BB_au,im_R_D+D-BB_au,R_BBD-D-_au,R_BBD+D+_au,spread"
    )?;
    for r in rows {
        let n = &r.rates;
        writeln!(
            w,
            "{:.6e},{:.6},{:.6e},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.6e}",
            r.eta,
            au_to_cm(r.lambda),
            r.amplitude,
            au_to_cm(r.gap_bdplus),
            n.dplus_from_b,
            n.dminus_from_b,
            n.coherence_from_b.re,
            n.coherence_from_b.im,
            n.b_from_dminus,
            n.b_from_dplus,
            n.relative_spread()
        )?;
    }
    Ok(())
}

/// Logarithmically spaced values, endpoints included.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone)]
pub struct ExpansionReportRow {
    pub shape: String,
    pub temperature: f64,
    pub check: ExpansionCheck,
    pub passed: bool,
}

/// Expansion-vs-quadrature comparison for the configured bath, or for
/// thin/broad at 298 K and 10⁴ K when `all` is set.
pub fn validate_expansion(config: &ExperimentConfig, all: bool) -> Result<Vec<ExpansionReportRow>> {
    let b = &config.bath;
    let cases: Vec<(SpectralDensity, String, f64)> = if all {
        let mut v = Vec::new();
        for sd in [SpectralDensity::thin(1.0), SpectralDensity::broad(1.0)] {
            for t in [298.0, 1e4] {
                v.push((sd.clone(), sd.shape.to_string(), t));
            }
        }
        v
    } else {
        let t = if b.classical { b.t_high } else { b.temperature };
        vec![(config.spectral_density()?, b.shape.clone(), t)]
    };
    cases
        .into_iter()
        .map(|(sd, shape, temperature)| {
            let bath = BathSpec::from_amplitude_only(sd, temperature, 1);
            let check = match expansion_for(&bath, b.n_matsubara, b.expansion_tolerance, b.matsubara_cap) {
                Ok((_, c)) => c,
                Err(Error::ExpansionNotConverged { cap, achieved, .. }) => ExpansionCheck {
                    n_matsubara: cap,
                    error: achieved,
                },
                Err(e) => return Err(e),
            };
            Ok(ExpansionReportRow {
                passed: check.error < b.expansion_tolerance,
                shape,
                temperature,
                check,
            })
        })
        .collect()
}

/// What a named experiment does with its base configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Run,
    Scan { param: ScanParam, values: Vec<f64> },
    Rates { etas: Vec<f64> },
    Levels { levels: Vec<usize> },
    CompareSolvers,
    CompareShapes,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ExperimentConfig,
    pub plan: Plan,
}

pub const PRESETS: [&str; 11] = [
    "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13",
];

pub fn preset(name: &str) -> Result<Preset> {
    let mut c = ExperimentConfig::default();
    c.bath.eta = Some(0.01);
    let (description, plan) = match name {
        "fig3" => {
            c.solver.lamb_shift = false;
            ("Redfield downhill rates versus eta at 298 K", Plan::Rates { etas: logspace(1e-4, 0.16, 25) })
        }
        "fig4" => (
            "eigenstate populations, quantum noise, weak and strong coupling",
            Plan::Scan { param: ScanParam::Eta, values: vec![0.01, 0.16] },
        ),
        "fig5" => (
            "doublet coherence map over eta, quantum noise",
            Plan::Scan {
                param: ScanParam::Eta,
                values: vec![1e-4, 1e-3, 5e-3, 0.01, 0.015, 0.02, 0.04, 0.08, 0.16],
            },
        ),
        "fig6" => (
            "coherence modulus and purity for selected couplings",
            Plan::Scan { param: ScanParam::Eta, values: vec![1e-4, 0.01, 0.04, 0.16] },
        ),
        "fig7" => ("site populations, quantum noise, eta = 0.01", Plan::Run),
        "fig8" => ("thin versus broad spectral density at eta = 0.01", Plan::CompareShapes),
        "fig9" => {
            c.bath.classical = true;
            (
                "classical noise: populations and coherence",
                Plan::Scan { param: ScanParam::Eta, values: vec![1e-4, 1e-3, 1e-2] },
            )
        }
        "fig10" => {
            c.bath.classical = true;
            c.bath.eta = Some(1e-3);
            ("site populations, classical noise, eta = 0.001", Plan::Run)
        }
        "fig11" => {
            c.outputs.bloch_volume = true;
            c.solver.t_end_fs = 500.0;
            (
                "Bloch volume of the dynamical map",
                Plan::Scan { param: ScanParam::Eta, values: vec![0.01, 0.16] },
            )
        }
        "fig12" => {
            c.bath.eta = Some(0.16);
            ("hierarchy truncation convergence", Plan::Levels { levels: vec![1, 2, 3, 4, 5] })
        }
        "fig13" => {
            c.solver.lamb_shift = false;
            ("non-secular Redfield versus HEOM at eta = 0.01", Plan::CompareSolvers)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown experiment '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    c.outputs.directory = PathBuf::from(format!("out/{name}"));
    let name = PRESETS.iter().find(|p| **p == name).copied().unwrap_or("custom");
    Ok(Preset {
        name,
        description,
        config: c,
        plan,
    })
}

/// Compare populations of two trajectories on a shared grid: sup-norm of
/// the eigenstate-population difference before and after `split_fs`.
pub fn population_deltas(a: &TrajectoryRecord, b: &TrajectoryRecord, split_fs: f64) -> (f64, f64) {
    let mut early = 0.0_f64;
    let mut late = 0.0_f64;
    for ((t, x), y) in a.times_fs.iter().zip(&a.states).zip(&b.states) {
        let d = (0..x.dim())
            .map(|i| (x.data[(i, i)].re - y.data[(i, i)].re).abs())
            .fold(0.0, f64::max);
        if *t < split_fs {
            early = early.max(d);
        } else {
            late = late.max(d);
        }
    }
    (early, late)
}

/// Execute a plan; returns the number of failed sub-runs.
pub fn execute(config: &ExperimentConfig, plan: &Plan, jobs: usize) -> Result<usize> {
    let root = config.outputs.directory.clone();
    match plan {
        Plan::Run => {
            run(config)?;
            Ok(0)
        }
        Plan::Scan { param, values } => Ok(scan(config, *param, values, jobs)?.failures()),
        Plan::Rates { etas } => {
            let rows = rates(config, etas)?;
            fs::create_dir_all(&root)?;
            let mut w = create(&root.join("rates.csv"))?;
            write_rates(&rows, &mut w)?;
            w.flush()?;
            fs::write(
                root.join("plot.gp"),
                "# gnuplot script: gnuplot plot.gp\n\
                 set datafile separator ','\n\
                 set terminal pngcairo size 900,600\n\
                 set output 'rates.png'\n\
                 set logscale x\n\
                 set key autotitle columnhead\n\
                 set xlabel 'eta'\n\
                 set ylabel 'rate (a.u.)'\n\
                 plot 'rates.csv' using 1:5 with lines, '' using 1:6 with lines, '' using 1:7 with lines\n",
            )?;
            Ok(0)
        }
        Plan::Levels { levels } => {
            let r = resolve(config)?;
            let times = config.time_grid();
            let rho0 = crate::model::to_site_basis(&r.es.eigenstate(r.initial_index()), &r.es)?;
            let scan = convergence_scan(
                &r.h_eff,
                &r.s,
                &r.expansion,
                &r.es,
                levels,
                &rho0,
                &times,
                &heom_options(config),
                &r.meta(),
            )?;
            fs::create_dir_all(&root)?;
            for (l, rec) in scan.levels.iter().zip(&scan.records) {
                let dir = root.join(format!("level_{l}"));
                fs::create_dir_all(&dir)?;
                let mut w = create(&dir.join("trajectory.csv"))?;
                write_trajectory_csv(rec, &r.es, &mut w)?;
                w.flush()?;
                fs::write(dir.join("plot.gp"), plot_script(false))?;
            }
            let mut w = create(&root.join("convergence.csv"))?;
            writeln!(w, "level_from,level_to,sup_delta_re_rho_D-D+")?;
            for (pair, d) in scan.levels.windows(2).zip(&scan.deltas) {
                writeln!(w, "{},{},{:.6e}", pair[0], pair[1], d)?;
            }
            w.flush()?;
            fs::write(root.join("meta"), meta_text(&r, None))?;
            Ok(0)
        }
        Plan::CompareSolvers => {
            let mut heom = config.clone();
            heom.solver.kind = SolverKind::Heom;
            heom.outputs.directory = root.join("heom");
            let mut red = config.clone();
            red.solver.kind = SolverKind::Redfield;
            red.solver.redfield_mode = RedfieldModeSetting::Nonsecular;
            red.outputs.directory = root.join("redfield");
            let (_, a) = run(&heom)?;
            let (_, b) = run(&red)?;
            let mut w = create(&root.join("compare.csv"))?;
            writeln!(w, "time_fs,heom_pop_B,heom_pop_D+,heom_pop_D-,redfield_pop_B,redfield_pop_D+,redfield_pop_D-")?;
            for (i, t) in a.trajectory.times_fs.iter().enumerate() {
                let (x, y) = (&a.trajectory.states[i].data, &b.trajectory.states[i].data);
                writeln!(
                    w,
                    "{t:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    x[(2, 2)].re,
                    x[(1, 1)].re,
                    x[(0, 0)].re,
                    y[(2, 2)].re,
                    y[(1, 1)].re,
                    y[(0, 0)].re
                )?;
            }
            w.flush()?;
            Ok(0)
        }
        Plan::CompareShapes => {
            let mut rows = Vec::new();
            for shape in ["thin", "broad"] {
                let mut c = config.clone();
                c.bath.shape = shape.into();
                c.bath.peaks_cm = None;
                c.outputs.directory = root.join(shape);
                let (r, sim) = run(&c)?;
                rows.push((shape, summarize(&sim.trajectory, &r.es, r.initial_index())));
            }
            let mut w = create(&root.join("compare.csv"))?;
            writeln!(w, "shape,initial_half_time_fs,peak_coherence,time_to_peak_fs,asymptotic_purity")?;
            for (shape, s) in rows {
                writeln!(
                    w,
                    "{shape},{},{:.6},{:.3},{:.6}",
                    fmt_opt(s.initial_half_time_fs),
                    s.peak_coherence,
                    s.time_to_peak_fs,
                    s.asymptotic_purity
                )?;
            }
            w.flush()?;
            Ok(0)
        }
    }
}
