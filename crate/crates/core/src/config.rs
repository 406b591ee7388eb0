//! Experiment configuration: a TOML document with `model`, `bath`, `solver`
//! and `outputs` tables. Every key can be overridden with `table.key=value`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bath::{Peak, Shape, SpectralDensity};
use crate::model::ExcitonNetwork;
use crate::units::{cm_to_au, HARTREE_IN_CM};
use crate::{Error, Result};

/// Ω₂ of the thin parameter set; the default J₁₂ puts the bright state this
/// far above the centre of the dark doublet.
pub const DEFAULT_GAP: f64 = 4.5639e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub bath: BathBlock,
    pub solver: SolverBlock,
    pub outputs: OutputsBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelBlock::default(),
            bath: BathBlock::default(),
            solver: SolverBlock::default(),
            outputs: OutputsBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    /// J₁₂ in cm⁻¹; when absent it is matched to the default gap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j12_cm: Option<f64>,
    /// J₂₃ / J₁₂.
    pub j23_ratio: f64,
    /// −ε₃ / J₁₂.
    pub detuning_ratio: f64,
    /// One-based.
    pub noise_site: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            j12_cm: None,
            j23_ratio: 0.1,
            detuning_ratio: 1.0,
            noise_site: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matsubara {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Matsubara {
    pub fn fixed(self) -> Option<usize> {
        match self {
            Matsubara::Fixed(n) => Some(n),
            Matsubara::Auto(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathBlock {
    /// thin, broad or custom.
    pub shape: String,
    /// (Ω, Γ) pairs in cm⁻¹; required for `custom`, replaces the tabulated
    /// peaks otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peaks_cm: Option<Vec<[f64; 2]>>,
    /// Coupling strength |λ|/E_BD₊. Exactly one of `eta` and `p`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Spectral amplitude (a.u.). With `classical`, the amplitude at
    /// `temperature` before rate-matched rescaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Kelvin.
    pub temperature: f64,
    /// Matsubara terms: a count or "auto" (smallest count meeting
    /// `expansion_tolerance`).
    pub n_matsubara: Matsubara,
    pub expansion_tolerance: f64,
    pub matsubara_cap: usize,
    /// Replace the bath by its rate-matched high-temperature counterpart.
    pub classical: bool,
    pub t_high: f64,
}

impl Default for BathBlock {
    fn default() -> Self {
        Self {
            shape: "thin".into(),
            peaks_cm: None,
            eta: None,
            p: None,
            temperature: 298.0,
            n_matsubara: Matsubara::Auto(AutoTag::Auto),
            expansion_tolerance: 1e-4,
            matsubara_cap: 64,
            classical: false,
            t_high: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Heom,
    Redfield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RedfieldModeSetting {
    Secular,
    Nonsecular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Bright,
    Dplus,
    Dminus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub kind: SolverKind,
    pub redfield_mode: RedfieldModeSetting,
    pub lamb_shift: bool,
    /// HEOM truncation level; chosen from the coupling regime when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub dt_fs: f64,
    pub t_end_fs: f64,
    pub dt_out_fs: f64,
    /// Repeat HEOM runs at half the step and report the deviation.
    pub step_check: bool,
    pub ado_cap: usize,
    pub initial: InitialState,
    /// Continue a HEOM run from a checkpoint file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume_from: Option<PathBuf>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            kind: SolverKind::Heom,
            redfield_mode: RedfieldModeSetting::Nonsecular,
            lamb_shift: true,
            level: None,
            dt_fs: 0.1,
            t_end_fs: 2000.0,
            dt_out_fs: 1.0,
            step_check: false,
            ado_cap: crate::heom::DEFAULT_ADO_CAP,
            initial: InitialState::Bright,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsBlock {
    pub directory: PathBuf,
    pub trajectory: bool,
    pub bloch_volume: bool,
    /// Export the exponential expansion table.
    pub coefficients: bool,
    /// Write the final hierarchy state.
    pub checkpoint: bool,
    pub plot_script: bool,
}

impl Default for OutputsBlock {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            trajectory: true,
            bloch_volume: false,
            coefficients: true,
            checkpoint: false,
            plot_script: true,
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parse, apply `table.key=value` overrides, and validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let config: Self = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            let normalized = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
            toml::from_str(&normalized).map_err(|e| Error::Config(format!("after overrides: {e}")))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if let Some(j) = m.j12_cm {
            if !(j > 0.0 && j.is_finite()) {
                return Err(field_error("model.j12_cm", format!("must be positive, got {j}")));
            }
        }
        if !m.j23_ratio.is_finite() {
            return Err(field_error("model.j23_ratio", "must be finite"));
        }
        if !m.detuning_ratio.is_finite() {
            return Err(field_error("model.detuning_ratio", "must be finite"));
        }
        if !(1..=3).contains(&m.noise_site) {
            return Err(field_error("model.noise_site", format!("must be 1, 2 or 3, got {}", m.noise_site)));
        }

        let b = &self.bath;
        let shape: Shape = b.shape.parse().map_err(|_| {
            field_error("bath.shape", format!("expected thin, broad or custom, got '{}'", b.shape))
        })?;
        if shape == Shape::Custom && b.peaks_cm.is_none() {
            return Err(field_error("bath.peaks_cm", "required for the custom shape"));
        }
        if let Some(peaks) = &b.peaks_cm {
            if peaks.is_empty() {
                return Err(field_error("bath.peaks_cm", "needs at least one peak"));
            }
            for (i, pk) in peaks.iter().enumerate() {
                if !(pk[0] >= 0.0 && pk[1] > 0.0 && pk[0].is_finite() && pk[1].is_finite()) {
                    return Err(field_error(
                        "bath.peaks_cm",
                        format!("peak {}: need Ω ≥ 0 and Γ > 0, got {:?}", i + 1, pk),
                    ));
                }
            }
        }
        match (b.eta, b.p) {
            (Some(_), Some(_)) => return Err(field_error("bath", "give exactly one of eta and p, not both")),
            (None, None) => return Err(field_error("bath", "one of eta or p is required")),
            (Some(e), None) if !(e > 0.0 && e.is_finite()) => {
                return Err(field_error("bath.eta", format!("must be positive, got {e}")))
            }
            (None, Some(p)) if !(p >= 0.0 && p.is_finite()) => {
                return Err(field_error("bath.p", format!("must be non-negative, got {p}")))
            }
            _ => {}
        }
        if !(b.temperature > 0.0 && b.temperature.is_finite()) {
            return Err(field_error("bath.temperature", format!("must be positive, got {}", b.temperature)));
        }
        if b.classical && !(b.t_high > 0.0 && b.t_high.is_finite()) {
            return Err(field_error("bath.t_high", format!("must be positive, got {}", b.t_high)));
        }
        if !(b.expansion_tolerance > 0.0) {
            return Err(field_error("bath.expansion_tolerance", "must be positive"));
        }
        if b.matsubara_cap == 0 {
            return Err(field_error("bath.matsubara_cap", "must be at least 1"));
        }
        if let Some(n) = b.n_matsubara.fixed() {
            if n == 0 {
                return Err(field_error("bath.n_matsubara", "must be at least 1 or \"auto\""));
            }
        }

        let s = &self.solver;
        if !(s.dt_fs > 0.0 && s.dt_fs.is_finite()) {
            return Err(field_error("solver.dt_fs", format!("must be positive, got {}", s.dt_fs)));
        }
        if !(s.t_end_fs > 0.0 && s.t_end_fs.is_finite()) {
            return Err(field_error("solver.t_end_fs", format!("must be positive, got {}", s.t_end_fs)));
        }
        if !(s.dt_out_fs >= s.dt_fs) {
            return Err(field_error(
                "solver.dt_out_fs",
                format!("must be at least dt_fs = {}, got {}", s.dt_fs, s.dt_out_fs),
            ));
        }
        if s.dt_out_fs > s.t_end_fs {
            return Err(field_error("solver.dt_out_fs", "exceeds t_end_fs"));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.bath.shape.parse().unwrap_or(Shape::Thin)
    }

    /// Spectral density with unit amplitude.
    pub fn spectral_density(&self) -> Result<SpectralDensity> {
        let shape = self.shape();
        let mut sd = match shape {
            Shape::Thin => SpectralDensity::thin(1.0),
            Shape::Broad => SpectralDensity::broad(1.0),
            Shape::Custom => SpectralDensity {
                amplitude: 1.0,
                peaks: Vec::new(),
                shape: Shape::Custom,
            },
        };
        if let Some(peaks) = &self.bath.peaks_cm {
            sd.peaks = peaks
                .iter()
                .map(|pk| Peak {
                    omega: cm_to_au(pk[0]),
                    width: cm_to_au(pk[1]),
                })
                .collect();
            sd.shape = Shape::Custom;
        }
        sd.validate()?;
        Ok(sd)
    }

    pub fn network(&self) -> Result<ExcitonNetwork> {
        let m = &self.model;
        let j12 = match m.j12_cm {
            Some(j) => cm_to_au(j),
            None => ExcitonNetwork::canonical_matched(DEFAULT_GAP).couplings[(0, 1)],
        };
        let mut couplings = nalgebra::DMatrix::zeros(3, 3);
        couplings[(0, 1)] = j12;
        couplings[(1, 0)] = j12;
        couplings[(1, 2)] = m.j23_ratio * j12;
        couplings[(2, 1)] = m.j23_ratio * j12;
        ExcitonNetwork::new(vec![0.0, 0.0, -m.detuning_ratio * j12], couplings, m.noise_site - 1)
    }

    /// Time grid from 0 to t_end in steps of dt_out (the last point is
    /// t_end even if it is not a multiple of dt_out).
    pub fn time_grid(&self) -> Vec<f64> {
        let s = &self.solver;
        let n = (s.t_end_fs / s.dt_out_fs + 1e-9).floor() as usize;
        let mut t: Vec<f64> = (0..=n).map(|i| i as f64 * s.dt_out_fs).collect();
        if s.t_end_fs - t[n] > 1e-9 * s.t_end_fs {
            t.push(s.t_end_fs);
        }
        t
    }
}

/// J₁₂ in cm⁻¹ for the default matched model.
pub fn default_j12_cm() -> f64 {
    ExcitonNetwork::canonical_matched(DEFAULT_GAP).couplings[(0, 1)] * HARTREE_IN_CM
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `table.key=value`; the value is read as a TOML literal, falling
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form table.key=value")))?;
    let path = path.trim();
    let (section, key) = path
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key '{path}' must be table.key")))?;
    if !["model", "bath", "solver", "outputs"].contains(&section) {
        return Err(Error::Config(format!("override '{path}': unknown table '{section}'")));
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sub = entry
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("'{section}' is not a table")))?;
    sub.insert(key.trim().to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Drop any `eta`/`p` so that an override of the other can take effect.
pub fn clear_coupling(config: &mut ExperimentConfig) {
    config.bath.eta = None;
    config.bath.p = None;
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[bath]\neta = 0.01\n";

    #[test]
    fn defaults_and_minimal_config() {
        let c = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        assert_eq!(c.bath.eta, Some(0.01));
        assert_eq!(c.bath.temperature, 298.0);
        assert_eq!(c.bath.n_matsubara, Matsubara::Auto(AutoTag::Auto));
        assert_eq!(c.solver.kind, SolverKind::Heom);
        assert_eq!(c.time_grid().len(), 2001);
        assert!((default_j12_cm() - 499.9).abs() < 0.5);
        let net = c.network().unwrap();
        assert_eq!(net.noise_site, 1);
    }

    #[test]
    fn eta_and_p_are_exclusive() {
        let both = ExperimentConfig::from_toml("[bath]\neta = 0.01\np = 1e-16\n", &[]);
        assert!(matches!(both, Err(Error::Config(m)) if m.contains("exactly one")));
        let none = ExperimentConfig::from_toml("", &[]);
        assert!(matches!(none, Err(Error::Config(m)) if m.contains("required")));
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let err = ExperimentConfig::from_toml("[bath]\neta = 0.01\n[solver]\nlevle = 3\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("levle") && msg.contains("line 4"), "{msg}");
        assert_eq!(err.exit_code(), 1);
        let err = ExperimentConfig::from_toml("[bath]\neta = \n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn grid_constraints() {
        let bad = ExperimentConfig::from_toml("[bath]\neta = 0.01\n[solver]\ndt_fs = 1.0\ndt_out_fs = 0.5\n", &[]);
        assert!(matches!(bad, Err(Error::Config(m)) if m.contains("solver.dt_out_fs")));
        let bad = ExperimentConfig::from_toml("[bath]\neta = 0.01\n[solver]\nt_end_fs = 0\n", &[]);
        assert!(matches!(bad, Err(Error::Config(m)) if m.contains("solver.t_end_fs")));
    }

    #[test]
    fn overrides_reach_every_table() {
        let c = ExperimentConfig::from_toml(
            MINIMAL,
            &[
                "solver.level=4".into(),
                "bath.shape=broad".into(),
                "bath.n_matsubara=7".into(),
                "outputs.directory=/tmp/x".into(),
                "model.j12_cm=500".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.solver.level, Some(4));
        assert_eq!(c.bath.shape, "broad");
        assert_eq!(c.bath.n_matsubara, Matsubara::Fixed(7));
        assert_eq!(c.outputs.directory, PathBuf::from("/tmp/x"));
        assert_eq!(c.model.j12_cm, Some(500.0));
        assert!(ExperimentConfig::from_toml(MINIMAL, &["nonsense".into()]).is_err());
        assert!(ExperimentConfig::from_toml(MINIMAL, &["foo.bar=1".into()]).is_err());
        assert!(ExperimentConfig::from_toml(MINIMAL, &["solver.nope=1".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL, &["bath.classical=true".into()]).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn custom_shape_needs_peaks() {
        assert!(ExperimentConfig::from_toml("[bath]\neta = 0.01\nshape = \"custom\"\n", &[]).is_err());
        let c = ExperimentConfig::from_toml(
            "[bath]\neta = 0.01\nshape = \"custom\"\npeaks_cm = [[1000.0, 60.0]]\n",
            &[],
        )
        .unwrap();
        let sd = c.spectral_density().unwrap();
        assert_eq!(sd.peaks.len(), 1);
        assert!(ExperimentConfig::from_toml("[bath]\neta = 0.01\nshape = \"wide\"\n", &[]).is_err());
    }
}
