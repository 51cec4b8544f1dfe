//! Run configuration.
//!
//! Precedence, lowest first: built-in defaults, the TOML file given with
//! `--config`, command-line flags. The hash written into every output header
//! is the SHA-256 of the effective configuration re-serialized to TOML, with
//! the output directory blanked so that moving a run does not change it.

use std::fs;
use std::path::{Path, PathBuf};

use bdgchain::disorder::Observable;
use bdgchain::models::{
    adiabatic_eliminate_with, build_model_i_with, build_model_ii_full_with, Boundary, CouplingSet, ModelIIParams,
    ModelIParams,
};
use bdgchain::quadrature::QuadratureSpec;
use bdgchain::validate::SuiteConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[value(name = "model_i")]
    ModelI,
    #[value(name = "model_ii_full")]
    ModelIiFull,
    #[value(name = "model_ii_effective")]
    ModelIiEffective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Params {
    ModelI(ModelIParams),
    ModelII(ModelIIParams),
}

impl Params {
    fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::ModelI => Params::ModelI(ModelIParams::default()),
            _ => Params::ModelII(ModelIIParams::default()),
        }
    }

    fn fits(&self, kind: ModelKind) -> bool {
        matches!(
            (self, kind),
            (Params::ModelI(_), ModelKind::ModelI) | (Params::ModelII(_), ModelKind::ModelIiFull | ModelKind::ModelIiEffective)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl OmegaGrid {
    pub fn points(&self) -> Vec<f64> {
        let d = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| if i + 1 == self.count { self.max } else { self.min + d * i as f64 }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderConfig {
    pub w_grid: Vec<f64>,
    pub n_r: usize,
    /// Falls back to the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub observable: Observable,
    /// Edge modes below the singular gap used for the rescaled axis.
    #[serde(default = "one")]
    pub n_edge: usize,
    #[serde(default = "five")]
    pub smooth_window: usize,
}

fn one() -> usize {
    1
}

fn five() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationsConfig {
    /// Frequencies at which full matrices are written.
    pub omegas: Vec<f64>,
    pub equal_time: bool,
}

impl Default for CorrelationsConfig {
    fn default() -> Self {
        Self {
            omegas: vec![0.0],
            equal_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumConfig {
    /// k-points per band minimum for periodic chains.
    pub k_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { k_points: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindingConfig {
    pub refine_tol: f64,
}

impl Default for WindingConfig {
    fn default() -> Self {
        Self {
            refine_tol: bdgchain::topology::DEFAULT_REFINE_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub dir: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelKind,
    pub boundary: Boundary,
    pub params: Params,
    pub omega_grid: OmegaGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderConfig>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub winding: WindingConfig,
    #[serde(default)]
    pub correlations: CorrelationsConfig,
    #[serde(default)]
    pub validate: SuiteConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelKind::ModelI,
            boundary: Boundary::Obc,
            params: Params::default_for(ModelKind::ModelI),
            omega_grid: OmegaGrid {
                min: -3.0,
                max: 3.0,
                count: 121,
            },
            disorder: None,
            quadrature: QuadratureSpec::default(),
            spectrum: SpectrumConfig::default(),
            winding: WindingConfig::default(),
            correlations: CorrelationsConfig::default(),
            validate: SuiteConfig::default(),
            outputs: Outputs::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub gamma: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_count: Option<usize>,
    pub boundary: Option<Boundary>,
    pub n_sites: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn parse(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let (mut cfg, from_file) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            (parse(&text, p)?, true)
        }
        None => (RunConfig::default(), false),
    };
    if let Some(kind) = ov.model {
        cfg.model = kind;
    }
    if !cfg.params.fits(cfg.model) {
        if from_file {
            return Err(ConfigError::Invalid(format!(
                "params do not match model {:?}: model_i takes n_sites, model_ii_* take n_cells",
                cfg.model
            )));
        }
        cfg.params = Params::default_for(cfg.model);
    }
    if let Some(g) = ov.gamma {
        match &mut cfg.params {
            Params::ModelI(p) => p.gamma = g,
            Params::ModelII(p) => p.gamma = g,
        }
    }
    if let Some(n) = ov.n_sites {
        match (&mut cfg.params, cfg.model) {
            (Params::ModelI(p), _) => p.n_sites = n,
            (Params::ModelII(p), ModelKind::ModelIiFull) => {
                if n % 2 != 0 {
                    return Err(ConfigError::Invalid(format!("model_ii_full has two sites per cell; --n-sites {n} is odd")));
                }
                p.n_cells = n / 2;
            }
            (Params::ModelII(p), _) => p.n_cells = n,
        }
    }
    if let Some(b) = ov.boundary {
        cfg.boundary = b;
    }
    if let Some(v) = ov.omega_min {
        cfg.omega_grid.min = v;
    }
    if let Some(v) = ov.omega_max {
        cfg.omega_grid.max = v;
    }
    if let Some(v) = ov.omega_count {
        cfg.omega_grid.count = v;
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(o) = &ov.out {
        cfg.outputs.dir = o.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let g = &self.omega_grid;
        if g.count < 2 {
            return Err(ConfigError::Invalid(format!("omega_grid.count = {} < 2", g.count)));
        }
        if !(g.min.is_finite() && g.max.is_finite() && g.min < g.max) {
            return Err(ConfigError::Invalid(format!("omega_grid needs finite min < max, got [{}, {}]", g.min, g.max)));
        }
        if let Some(d) = &self.disorder {
            if d.n_r == 0 || d.w_grid.is_empty() || d.w_grid.iter().any(|w| !(*w >= 0.0)) {
                return Err(ConfigError::Invalid("disorder needs n_r >= 1 and a non-empty grid of W >= 0".into()));
            }
        }
        if self.spectrum.k_points < 2 {
            return Err(ConfigError::Invalid("spectrum.k_points must be >= 2".into()));
        }
        match &self.params {
            Params::ModelI(p) => p.validate(),
            Params::ModelII(p) => p.validate(),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs.dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn chain(&self) -> bdgchain::Result<CouplingSet> {
        self.chain_with(self.boundary)
    }

    pub fn chain_with(&self, boundary: Boundary) -> bdgchain::Result<CouplingSet> {
        match (&self.params, self.model) {
            (Params::ModelI(p), _) => build_model_i_with(p, boundary),
            (Params::ModelII(p), ModelKind::ModelIiFull) => build_model_ii_full_with(p, boundary),
            (Params::ModelII(p), _) => adiabatic_eliminate_with(p, boundary),
        }
    }

    pub fn disorder_seed(&self) -> u64 {
        self.disorder.as_ref().and_then(|d| d.seed).unwrap_or(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
model = "model_ii_effective"
boundary = "obc"

[params]
n_cells = 20
j = 1.0
g_s = 0.1
g_c = 0.1
g_c_prime = 3.0
delta = 0.0
phi = 1.5707963267948966
gamma = 3.0
gamma_prime = 30.0

[omega_grid]
min = -2.0
max = 2.0
count = 5

[disorder]
w_grid = [0.0, 0.5]
n_r = 4
observable = { kind = "r", omega = 0.0 }
"#;

    #[test]
    fn sample_parses_and_round_trips() {
        let cfg = parse(SAMPLE, Path::new("sample.toml")).unwrap();
        assert_eq!(cfg.model, ModelKind::ModelIiEffective);
        assert!(matches!(cfg.params, Params::ModelII(ref p) if p.n_cells == 20 && p.validity_ratio == 5.0));
        assert_eq!(cfg.disorder.as_ref().unwrap().n_edge, 1);
        let again = parse(&cfg.to_toml(), Path::new("again")).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(parse(&cfg.to_toml(), Path::new("d")).unwrap(), cfg);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, SAMPLE).unwrap();
        let ov = Overrides {
            gamma: Some(4.0),
            n_sites: Some(12),
            omega_count: Some(9),
            seed: Some(99),
            ..Default::default()
        };
        let cfg = load(Some(&path), &ov).unwrap();
        let Params::ModelII(p) = &cfg.params else { panic!() };
        assert_eq!((p.gamma, p.n_cells, cfg.omega_grid.count, cfg.seed), (4.0, 12, 9, 99));
        assert_eq!(cfg.disorder_seed(), 99);
    }

    #[test]
    fn mismatched_model_is_rejected_only_for_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, SAMPLE).unwrap();
        let ov = Overrides {
            model: Some(ModelKind::ModelI),
            ..Default::default()
        };
        assert!(matches!(load(Some(&path), &ov), Err(ConfigError::Invalid(_))));
        let cfg = load(None, &ov).unwrap();
        assert!(matches!(cfg.params, Params::ModelI(_)));
        let full = Overrides {
            model: Some(ModelKind::ModelIiFull),
            n_sites: Some(11),
            ..Default::default()
        };
        assert!(load(None, &full).is_err());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        for ov in [
            Overrides {
                omega_count: Some(1),
                ..Default::default()
            },
            Overrides {
                omega_min: Some(2.0),
                omega_max: Some(1.0),
                ..Default::default()
            },
        ] {
            assert!(load(None, &ov).is_err());
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.outputs.dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_hits_both_ends() {
        let g = OmegaGrid {
            min: -1.0,
            max: 0.3,
            count: 7,
        };
        let p = g.points();
        assert_eq!((p[0], p[6], p.len()), (-1.0, 0.3, 7));
    }
}
