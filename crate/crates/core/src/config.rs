//! Run configuration: TOML parsing, validation with field-precise errors,
//! default materialization (including the spectral-bound default for the
//! projector list length) and environment-variable overrides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, Boundary, LatticeGeometry, ModelParams, RunMode};
use crate::noneq::ProtocolParams;
use crate::oracle;
use crate::tensors::ConnectionTensorKind;

/// Environment prefix recognized by the CLI: `SREQMC_<SECTION>_<KEY>`.
pub const ENV_PREFIX: &str = "SREQMC_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Sre,
    Ere,
    Pre,
}

impl Quantity {
    pub fn tensor_kind(&self) -> ConnectionTensorKind {
        match self {
            Quantity::Sre => ConnectionTensorKind::SreTensor,
            Quantity::Ere => ConnectionTensorKind::EreCyclic,
            Quantity::Pre => ConnectionTensorKind::PreDiagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeCfg {
    pub dims: Vec<usize>,
    pub bc: Vec<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCfg {
    #[serde(rename = "J")]
    pub coupling: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCfg {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// "explicit", "spectral_bound" or "extrapolated_bound".
    pub m_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiCfg {
    pub n: u32,
    pub quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoneqCfg {
    pub d_lambda: f64,
    pub intervals: usize,
    pub paths_per_interval: usize,
    pub sweeps_per_step: usize,
    pub endpoint_refinement: bool,
    pub burn_in_sweeps: usize,
    pub snapshot_every: usize,
    pub init_therm_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngCfg {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCfg {
    pub directory: String,
    pub formats: Vec<String>,
}

/// Fully validated configuration with every default materialized; the
/// serialized form is the config echo in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub lattice: LatticeCfg,
    pub model: ModelCfg,
    pub mode: ModeCfg,
    pub renyi: RenyiCfg,
    pub noneq: NoneqCfg,
    pub rng: RngCfg,
    pub output: OutputCfg,
}

// --- raw (pre-validation) layer -------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lattice: Option<RawLattice>,
    model: Option<RawModel>,
    mode: Option<RawMode>,
    renyi: Option<RawRenyi>,
    #[serde(default)]
    noneq: RawNoneq,
    #[serde(default)]
    rng: RawRng,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    dims: Option<Vec<usize>>,
    bc: Option<Vec<Boundary>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "J")]
    coupling: Option<f64>,
    h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    kind: Option<String>,
    beta: Option<f64>,
    m: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRenyi {
    n: Option<u32>,
    quantity: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoneq {
    d_lambda: Option<f64>,
    intervals: Option<usize>,
    paths_per_interval: Option<usize>,
    sweeps_per_step: Option<usize>,
    endpoint_refinement: Option<bool>,
    burn_in_sweeps: Option<usize>,
    snapshot_every: Option<usize>,
    init_therm_sweeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRng {
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    formats: Option<Vec<String>>,
}

/// Parse and validate a TOML configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_overrides(text, std::iter::empty())
}

/// Parse a TOML document, apply `SREQMC_<SECTION>_<KEY>` overrides, then
/// validate.
pub fn parse_config_with_overrides<I>(text: &str, overrides: I) -> Result<RunConfig>
where
    I: Iterator<Item = (String, String)>,
{
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::config("<document>", format!("TOML parse error: {e}")))?;
    for (key, value) in overrides {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let Some((section, field)) = rest.split_once('_') else {
            return Err(Error::config(
                key.clone(),
                "expected SREQMC_<SECTION>_<KEY>",
            ));
        };
        let section = section.to_ascii_lowercase();
        let field = field.to_ascii_lowercase();
        let parsed: toml::Value = parse_scalar(&value);
        table
            .entry(section)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::config(&key, "section is not a table"))?
            .insert(field, parsed);
    }
    let raw: RawConfig = table
        .try_into()
        .map_err(|e| Error::config("<document>", e.to_string()))?;
    validate(raw)
}

fn parse_scalar(s: &str) -> toml::Value {
    if let Ok(b) = s.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = s.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return toml::Value::Float(f);
    }
    // arrays and strings round-trip through a scratch document
    if let Ok(t) = format!("v = {s}").parse::<toml::Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(s.to_string())
}

fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(key, "missing required key"))
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let lattice = require(raw.lattice, "lattice")?;
    let dims = require(lattice.dims, "lattice.dims")?;
    let bc = require(lattice.bc, "lattice.bc")?;
    let geometry = build_lattice(&dims, &bc)?;

    let model = require(raw.model, "model")?;
    let coupling = require(model.coupling, "model.J")?;
    let field = require(model.h, "model.h")?;
    let renyi = require(raw.renyi, "renyi")?;
    let n = renyi.n.unwrap_or(2);
    let quantity = renyi.quantity.unwrap_or(Quantity::Sre);
    let params = ModelParams::new(coupling, field, n)?;
    if quantity == Quantity::Sre && n % 2 != 0 {
        return Err(Error::config(
            "renyi.n",
            "quantity \"sre\" requires an even Renyi order (the sampler's \
             cluster flips only preserve the stabilizer tensor for even n)",
        ));
    }

    let mode_raw = require(raw.mode, "mode")?;
    let kind_str = require(mode_raw.kind, "mode.kind")?;
    let (mode, mode_cfg) = match kind_str.as_str() {
        "finite_t" => {
            let beta = require(mode_raw.beta, "mode.beta")?;
            if mode_raw.m.is_some() {
                return Err(Error::config("mode.m", "m is a projector-mode key"));
            }
            let mode = RunMode::FiniteT { beta };
            mode.validate()?;
            (
                mode,
                ModeCfg {
                    kind: kind_str,
                    beta: Some(beta),
                    m: None,
                    m_source: "n/a".into(),
                },
            )
        }
        "projector" => {
            if mode_raw.beta.is_some() {
                return Err(Error::config("mode.beta", "beta is a finite_t-mode key"));
            }
            let (m, m_source) = match mode_raw.m {
                Some(m) => (m, "explicit".to_string()),
                None => {
                    let (m, source) = default_projector_length(&geometry, &params)?;
                    (m, source.to_string())
                }
            };
            let mode = RunMode::Projector { m };
            mode.validate()?;
            (
                mode,
                ModeCfg {
                    kind: kind_str,
                    beta: None,
                    m: Some(m),
                    m_source,
                },
            )
        }
        other => {
            return Err(Error::config(
                "mode.kind",
                format!("unknown mode \"{other}\" (expected finite_t or projector)"),
            ))
        }
    };

    let defaults = ProtocolParams::defaults(geometry.sites, &mode);
    let noneq = NoneqCfg {
        d_lambda: raw.noneq.d_lambda.unwrap_or(defaults.d_lambda),
        intervals: raw.noneq.intervals.unwrap_or(defaults.n_intervals),
        paths_per_interval: raw
            .noneq
            .paths_per_interval
            .unwrap_or(defaults.paths_per_interval),
        sweeps_per_step: raw.noneq.sweeps_per_step.unwrap_or(defaults.sweeps_per_step),
        endpoint_refinement: raw
            .noneq
            .endpoint_refinement
            .unwrap_or(defaults.endpoint_refinement),
        burn_in_sweeps: raw.noneq.burn_in_sweeps.unwrap_or(defaults.burn_in_sweeps),
        snapshot_every: raw.noneq.snapshot_every.unwrap_or(defaults.snapshot_every),
        init_therm_sweeps: raw
            .noneq
            .init_therm_sweeps
            .unwrap_or(defaults.init_therm_sweeps),
    };

    let output = OutputCfg {
        directory: raw.output.directory.unwrap_or_else(|| "out".into()),
        formats: raw
            .output
            .formats
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]),
    };
    for f in &output.formats {
        if f != "csv" && f != "json" {
            return Err(Error::config(
                "output.formats",
                format!("unknown format \"{f}\" (expected csv or json)"),
            ));
        }
    }

    let cfg = RunConfig {
        lattice: LatticeCfg { dims, bc },
        model: ModelCfg { coupling, h: field },
        mode: mode_cfg,
        renyi: RenyiCfg { n, quantity },
        noneq,
        rng: RngCfg {
            seed: raw.rng.seed.unwrap_or(0),
        },
        output,
    };
    // cross-check every module precondition the sections feed into
    cfg.protocol()?.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn geometry(&self) -> Result<LatticeGeometry> {
        build_lattice(&self.lattice.dims, &self.lattice.bc)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.coupling, self.model.h, self.renyi.n)
    }

    pub fn run_mode(&self) -> Result<RunMode> {
        match self.mode.kind.as_str() {
            "finite_t" => Ok(RunMode::FiniteT {
                beta: self.mode.beta.expect("validated"),
            }),
            "projector" => Ok(RunMode::Projector {
                m: self.mode.m.expect("validated"),
            }),
            other => Err(Error::config("mode.kind", format!("unknown mode {other}"))),
        }
    }

    pub fn tensor_kind(&self) -> ConnectionTensorKind {
        self.renyi.quantity.tensor_kind()
    }

    pub fn protocol(&self) -> Result<ProtocolParams> {
        let p = ProtocolParams {
            d_lambda: self.noneq.d_lambda,
            n_intervals: self.noneq.intervals,
            paths_per_interval: self.noneq.paths_per_interval,
            sweeps_per_step: self.noneq.sweeps_per_step,
            endpoint_refinement: self.noneq.endpoint_refinement,
            burn_in_sweeps: self.noneq.burn_in_sweeps,
            snapshot_every: self.noneq.snapshot_every,
            init_therm_sweeps: self.noneq.init_therm_sweeps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn wants_format(&self, fmt: &str) -> bool {
        self.output.formats.iter().any(|f| f == fmt)
    }
}

/// Projector list length from the spectral bound at delta_r = 1e-2, r0 and
/// the gap taken from the dense spectrum when the system fits, otherwise
/// extrapolated from the largest same-shape reference system (energy
/// density constant, gap closing like 1/N, M_n density from the largest
/// Pauli-enumerable reference). Heuristic by construction; `mode.m`
/// overrides it.
pub fn default_projector_length(
    geometry: &LatticeGeometry,
    params: &ModelParams,
) -> Result<(usize, &'static str)> {
    const DELTA_R: f64 = 1e-2;
    let n_sites = geometry.sites;
    if n_sites <= 10 {
        let h = oracle::build_dense_hamiltonian(geometry, params)?;
        let trial = oracle::basis_state(0, n_sites).map(|c| c.re);
        let spec = oracle::spectral_data(&h, &trial)?;
        let m_n = if n_sites <= oracle::MAX_PAULI_QUBITS {
            let ground = oracle::projected_ground_state(&h, &trial)?;
            let state =
                oracle::DenseState::pure_normalized(ground.map(|x| oracle::C64::new(x, 0.0)))?;
            oracle::exact_m_n(&state, params.renyi_n)?
        } else {
            m_n_density_reference(geometry, params)? * n_sites as f64
        };
        let bound =
            crate::estimators::min_projector_length(&spec, params.renyi_n, DELTA_R, m_n.max(1e-3))?;
        Ok((bound.m, "spectral_bound"))
    } else {
        let ref_geom = reference_geometry(geometry, 10)?;
        let h = oracle::build_dense_hamiltonian(&ref_geom, params)?;
        let trial = oracle::basis_state(0, ref_geom.sites).map(|c| c.re);
        let spec_ref = oracle::spectral_data(&h, &trial)?;
        let scale = n_sites as f64 / ref_geom.sites as f64;
        let spec = crate::estimators::SpectralData {
            ground_energy: spec_ref.ground_energy * scale,
            gap: spec_ref.gap / scale,
            r0: spec_ref.r0,
        };
        let m_n = m_n_density_reference(geometry, params)? * n_sites as f64;
        let bound =
            crate::estimators::min_projector_length(&spec, params.renyi_n, DELTA_R, m_n.max(1e-3))?;
        Ok((bound.m, "extrapolated_bound"))
    }
}

/// M_n per site of the projected ground state on the largest
/// Pauli-enumerable reference lattice of the same dimensionality.
fn m_n_density_reference(geometry: &LatticeGeometry, params: &ModelParams) -> Result<f64> {
    let ref_geom = reference_geometry(geometry, oracle::MAX_PAULI_QUBITS)?;
    let h = oracle::build_dense_hamiltonian(&ref_geom, params)?;
    let trial = oracle::basis_state(0, ref_geom.sites).map(|c| c.re);
    let ground = oracle::projected_ground_state(&h, &trial)?;
    let state = oracle::DenseState::pure_normalized(ground.map(|x| oracle::C64::new(x, 0.0)))?;
    Ok(oracle::exact_m_n(&state, params.renyi_n)?.max(1e-3) / ref_geom.sites as f64)
}

/// Largest lattice of the same dimensionality with at most `cap` sites.
/// Periodic dimensions shorter than 3 in the reference fall back to open.
fn reference_geometry(geometry: &LatticeGeometry, cap: usize) -> Result<LatticeGeometry> {
    let dims: Vec<usize> = match geometry.dims.len() {
        1 => vec![geometry.dims[0].min(cap)],
        _ => {
            let mut l = 1usize;
            while (l + 1) * (l + 1) <= cap {
                l += 1;
            }
            vec![
                geometry.dims[0].min(l.max(2)),
                geometry.dims[1].min(cap / l.max(2)).max(2),
            ]
        }
    };
    let bc: Vec<Boundary> = geometry
        .bc
        .iter()
        .zip(&dims)
        .map(|(&b, &d)| {
            if b == Boundary::Periodic && d < 3 {
                Boundary::Open
            } else {
                b
            }
        })
        .collect();
    build_lattice(&dims, &bc)
}
