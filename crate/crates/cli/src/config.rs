//! Experiment configuration, read from TOML. Unknown keys are rejected and
//! every field is validated before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rkm_core::cluster::{DeltaSource, ThresholdRule, DEFAULT_C1};
use rkm_core::kernels::{smoothed_distance_kernel, Kernel};
use rkm_core::model::{figure1_model, Covariance, GaussianComponent, MixtureModel, SampleSize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sample,
    Figure1,
    GapScan,
    KpcaCluster,
    CovCluster,
    GramCheck,
    DiagCh,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Figure1 => "figure1",
            ExperimentKind::GapScan => "gap-scan",
            ExperimentKind::KpcaCluster => "kpca-cluster",
            ExperimentKind::CovCluster => "cov-cluster",
            ExperimentKind::GramCheck => "gram-check",
            ExperimentKind::DiagCh => "diag-ch",
        }
    }
}

/// Mixture to sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// The two-component isotropic mixture with opposite anisotropy.
    Figure1 { n: usize, s: f64 },
    /// One standard Gaussian in dimension `n`.
    SingleGaussian { n: usize },
    /// Two unit-variance Gaussians whose means are `distance` apart.
    TwoGaussians { n: usize, distance: f64 },
    /// Isotropic components `N(meanᵢ, σᵢ² I)`.
    Isotropic {
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Diagonal components; `variances[i]` is the diagonal of component `i`.
    Diagonal {
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Figure1 { n, .. }
            | ModelConfig::SingleGaussian { n }
            | ModelConfig::TwoGaussians { n, .. } => *n,
            ModelConfig::Isotropic { means, .. } | ModelConfig::Diagonal { means, .. } => {
                means.first().map_or(0, Vec::len)
            }
        }
    }

    pub fn build(&self) -> CliResult<MixtureModel> {
        let equal = |k: usize| vec![1.0 / k as f64; k];
        let model = match self {
            ModelConfig::Figure1 { n, s } => figure1_model(*n, *s)?,
            ModelConfig::SingleGaussian { n } => {
                MixtureModel::isotropic(vec![vec![0.0; *n]], &[1.0])?
            }
            ModelConfig::TwoGaussians { n, distance } => {
                if *n == 0 {
                    return Err(CliError::Config("n must be positive".into()));
                }
                let mut far = vec![0.0; *n];
                far[0] = *distance;
                MixtureModel::isotropic(vec![vec![0.0; *n], far], &[1.0, 1.0])?
            }
            ModelConfig::Isotropic {
                means,
                variances,
                weights,
            } => {
                if variances.len() != means.len() {
                    return Err(CliError::Config("one variance per mean is required".into()));
                }
                let w = weights.clone().unwrap_or_else(|| equal(means.len()));
                let comps = components(means, &w, |i| Covariance::Isotropic(variances[i]))?;
                MixtureModel::new(self.dim(), comps)?
            }
            ModelConfig::Diagonal {
                means,
                variances,
                weights,
            } => {
                if variances.len() != means.len() {
                    return Err(CliError::Config(
                        "one variance vector per mean is required".into(),
                    ));
                }
                let w = weights.clone().unwrap_or_else(|| equal(means.len()));
                let comps = components(means, &w, |i| Covariance::Diagonal(variances[i].clone()))?;
                MixtureModel::new(self.dim(), comps)?
            }
        };
        Ok(model)
    }
}

fn components(
    means: &[Vec<f64>],
    weights: &[f64],
    cov: impl Fn(usize) -> Covariance,
) -> CliResult<Vec<GaussianComponent>> {
    if weights.len() != means.len() {
        return Err(CliError::Config("one weight per mean is required".into()));
    }
    Ok(means
        .iter()
        .enumerate()
        .map(|(i, m)| GaussianComponent::new(weights[i], m.clone(), cov(i)))
        .collect())
}

/// Radial kernel; the dimension of the cosine kernel and the default
/// Gaussian width `√n` come from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
    Distance,
    SmoothedDistance {
        r0: f64,
    },
    Cosine {
        t: f64,
    },
}

impl KernelConfig {
    pub fn build(&self, dim: usize) -> CliResult<Kernel> {
        Ok(match self {
            KernelConfig::Gaussian { tau } => Kernel::gaussian(tau.unwrap_or((dim as f64).sqrt()))?,
            KernelConfig::Distance => Kernel::Distance,
            KernelConfig::SmoothedDistance { r0 } => smoothed_distance_kernel(*r0)?,
            KernelConfig::Cosine { t } => Kernel::cosine(*t, dim)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub n: usize,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Exact Δ of the configured model.
    Model,
    /// Plug-in estimate from the labelled sample.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_c1")]
    pub c1: f64,
    /// Fixed `C₂`; when absent the threshold sits at the largest relative
    /// gap of the spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_override: Option<f64>,
    #[serde(default = "default_delta_mode")]
    pub delta: DeltaMode,
}

fn default_k() -> usize {
    2
}

fn default_c1() -> f64 {
    DEFAULT_C1
}

fn default_delta_mode() -> DeltaMode {
    DeltaMode::Model
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            c1: default_c1(),
            c2: None,
            delta_override: None,
            delta: default_delta_mode(),
        }
    }
}

impl ClusterConfig {
    pub fn threshold(&self) -> ThresholdRule {
        match self.c2 {
            Some(c2) => ThresholdRule::Fixed { c2 },
            None => ThresholdRule::AdaptiveGap,
        }
    }

    pub fn delta_source<'a>(&self, model: &'a MixtureModel) -> DeltaSource<'a> {
        match (self.delta_override, self.delta) {
            (Some(d), _) => DeltaSource::Override(d),
            (None, DeltaMode::Model) => DeltaSource::Model(model),
            (None, DeltaMode::PlugIn) => DeltaSource::PlugIn,
        }
    }
}

/// One experiment. Fields a command does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    /// Sample size; defaults depend on the command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSize>,
    /// figure1 panels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub panels: Vec<Panel>,
    /// `t` of the cosine kernel for figure1 and the Gram check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Dimensions scanned by the spectral gap scan.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_values: Vec<usize>,
    /// Gap scan sample size per dimension, `N = points_per_dim · n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterConfig>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// figure1 panels run without `--large`.
pub const FIGURE1_PANELS: [Panel; 3] = [
    Panel { n: 10, s: 0.9 },
    Panel { n: 100, s: 0.6 },
    Panel { n: 1000, s: 0.33 },
];

/// The panel that needs `--large`.
pub const FIGURE1_LARGE_PANEL: Panel = Panel { n: 10000, s: 0.2 };

/// Largest sample (total points) a command builds a dense matrix for
/// without `--large`.
pub const DESK_SCALE_POINTS: usize = 8000;

impl ExperimentConfig {
    /// Defaults for a command run without a config file.
    pub fn defaults_for(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment: Some(kind),
            seeds: default_seeds(),
            output: default_output(),
            model: None,
            kernel: None,
            sample: None,
            panels: Vec::new(),
            t: None,
            n_values: Vec::new(),
            points_per_dim: None,
            cluster: None,
        };
        match kind {
            ExperimentKind::Sample | ExperimentKind::CovCluster => {
                cfg.model = Some(ModelConfig::Figure1 { n: 100, s: 0.6 });
                if kind == ExperimentKind::CovCluster {
                    cfg.seeds = (0..10).collect();
                    cfg.cluster = Some(ClusterConfig::default());
                }
            }
            ExperimentKind::Figure1 => cfg.t = Some(0.1),
            ExperimentKind::GapScan => {
                cfg.seeds = (0..5).collect();
                cfg.n_values = vec![50, 200, 800];
                cfg.points_per_dim = Some(10);
                cfg.kernel = Some(KernelConfig::Distance);
            }
            ExperimentKind::KpcaCluster => {
                cfg.seeds = (0..10).collect();
                cfg.model = Some(ModelConfig::TwoGaussians {
                    n: 200,
                    distance: 10.0,
                });
                cfg.kernel = Some(KernelConfig::Gaussian { tau: None });
                cfg.sample = Some(SampleSize::PerComponent(vec![200, 200]));
                cfg.cluster = Some(ClusterConfig::default());
            }
            ExperimentKind::GramCheck => {
                cfg.model = Some(ModelConfig::Figure1 { n: 100, s: 0.6 });
                cfg.kernel = Some(KernelConfig::Cosine { t: 0.1 });
                cfg.sample = Some(SampleSize::PerComponent(vec![2000, 2000]));
            }
            ExperimentKind::DiagCh => {
                cfg.model = Some(ModelConfig::Figure1 { n: 100, s: 0.6 });
                cfg.kernel = Some(KernelConfig::Gaussian { tau: None });
            }
        }
        cfg
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills fields the file left out with the command's defaults.
    pub fn with_defaults(mut self, kind: ExperimentKind) -> Self {
        let d = Self::defaults_for(kind);
        self.experiment = Some(kind);
        self.model = self.model.or(d.model);
        self.kernel = self.kernel.or(d.kernel);
        self.sample = self.sample.or(d.sample);
        self.t = self.t.or(d.t);
        self.points_per_dim = self.points_per_dim.or(d.points_per_dim);
        self.cluster = self.cluster.or(d.cluster);
        if self.n_values.is_empty() {
            self.n_values = d.n_values;
        }
        self
    }

    pub fn model(&self) -> CliResult<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("a [model] table is required".into()))
    }

    pub fn kernel(&self) -> CliResult<&KernelConfig> {
        self.kernel
            .as_ref()
            .ok_or_else(|| CliError::Config("a [kernel] table is required".into()))
    }

    pub fn cluster(&self) -> ClusterConfig {
        self.cluster.clone().unwrap_or_default()
    }

    /// Sample size used for the configured model: the explicit setting, or
    /// `n` points per component.
    pub fn sample_size(&self, model: &MixtureModel) -> SampleSize {
        self.sample
            .clone()
            .unwrap_or_else(|| SampleSize::PerComponent(vec![model.dim(); model.k()]))
    }

    pub fn panels(&self, large: bool) -> Vec<Panel> {
        if !self.panels.is_empty() {
            return self.panels.clone();
        }
        let mut panels = FIGURE1_PANELS.to_vec();
        if large {
            panels.push(FIGURE1_LARGE_PANEL);
        }
        panels
    }

    /// Checks every precondition the selected command depends on, so that
    /// bad input fails before any work is done.
    pub fn validate(&self, kind: ExperimentKind, large: bool) -> CliResult<()> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(CliError::Config(format!(
                    "config is for `{}` but `{}` was run",
                    declared.name(),
                    kind.name()
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        let needs_model = !matches!(kind, ExperimentKind::Figure1 | ExperimentKind::GapScan);
        if needs_model {
            let model = self.model()?.build()?;
            if let Some(SampleSize::PerComponent(counts)) = &self.sample {
                if counts.len() != model.k() {
                    return Err(CliError::Config(format!(
                        "sample lists {} counts for {} components",
                        counts.len(),
                        model.k()
                    )));
                }
            }
            if let Some(kernel) = &self.kernel {
                kernel.build(model.dim())?;
            }
        }
        if let Some(t) = self.t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("t must be positive, got {t}")));
            }
        }
        match kind {
            ExperimentKind::Figure1 => {
                for p in self.panels(large) {
                    figure1_model(p.n, p.s)?;
                    if 2 * p.n > DESK_SCALE_POINTS && !large {
                        return Err(CliError::Config(format!(
                            "panel n = {} needs a {}-point dense matrix; pass --large to run it",
                            p.n,
                            2 * p.n
                        )));
                    }
                }
            }
            ExperimentKind::GapScan => {
                self.kernel()?;
                if self.n_values.contains(&0) {
                    return Err(CliError::Config("n_values must be positive".into()));
                }
                if self.sample.is_none() && self.points_per_dim == Some(0) {
                    return Err(CliError::Config("points_per_dim must be positive".into()));
                }
            }
            ExperimentKind::KpcaCluster | ExperimentKind::CovCluster => {
                let c = self.cluster();
                if c.k == 0 {
                    return Err(CliError::Config("k must be positive".into()));
                }
                if kind == ExperimentKind::CovCluster {
                    if c.k < 2 {
                        return Err(CliError::Config(
                            "covariance clustering needs k >= 2".into(),
                        ));
                    }
                    if !(c.c1 > 0.0) || c.c2.is_some_and(|c2| !(c2 > 0.0)) {
                        return Err(CliError::Config("C1 and C2 must be positive".into()));
                    }
                } else {
                    self.kernel()?;
                }
            }
            ExperimentKind::GramCheck | ExperimentKind::DiagCh => {
                self.kernel()?;
            }
            ExperimentKind::Sample => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
experiment = "cov_cluster"
seeds = [1, 2, 3]
output = "results"
t = 0.1
n_values = [50, 200]
points_per_dim = 10
sample = { per_component = [100, 100] }

[model]
kind = "figure1"
n = 100
s = 0.6

[kernel]
kind = "cosine"
t = 0.1

[cluster]
k = 2
c1 = 0.08333333333333333
c2 = 0.0019
delta = "plug_in"

[[panels]]
n = 10
s = 0.9
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.model, Some(ModelConfig::Figure1 { n: 100, s: 0.6 }));
        assert_eq!(cfg.cluster().delta, DeltaMode::PlugIn);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn defaults_round_trip() {
        for kind in [
            ExperimentKind::Sample,
            ExperimentKind::Figure1,
            ExperimentKind::GapScan,
            ExperimentKind::KpcaCluster,
            ExperimentKind::CovCluster,
            ExperimentKind::GramCheck,
            ExperimentKind::DiagCh,
        ] {
            let cfg = ExperimentConfig::defaults_for(kind);
            cfg.validate(kind, false).unwrap();
            assert_eq!(
                ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(),
                cfg
            );
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("seedz = [1]").is_err());
        assert!(ExperimentConfig::from_toml(
            "[model]\nkind = \"figure1\"\nn = 4\ns = 0.5\nextra = 1"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml("[cluster]\nc3 = 1.0").is_err());
    }

    #[test]
    fn validation_names_the_failed_precondition() {
        let cfg =
            ExperimentConfig::from_toml("[model]\nkind = \"figure1\"\nn = 5\ns = 0.5").unwrap();
        let err = cfg.validate(ExperimentKind::Sample, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("even"), "{err}");

        let cfg = ExperimentConfig::from_toml("experiment = \"sample\"").unwrap();
        assert!(cfg.validate(ExperimentKind::GapScan, false).is_err());

        let mut cfg = ExperimentConfig::defaults_for(ExperimentKind::Figure1);
        cfg.panels = vec![FIGURE1_LARGE_PANEL];
        assert!(cfg.validate(ExperimentKind::Figure1, false).is_err());
        assert!(cfg.validate(ExperimentKind::Figure1, true).is_ok());
    }

    #[test]
    fn large_flag_adds_the_big_panel() {
        let cfg = ExperimentConfig::defaults_for(ExperimentKind::Figure1);
        assert_eq!(cfg.panels(false).len(), 3);
        assert_eq!(cfg.panels(true).last(), Some(&FIGURE1_LARGE_PANEL));
    }

    #[test]
    fn model_variants_build() {
        let iso = ModelConfig::Isotropic {
            means: vec![vec![0.0; 3], vec![1.0; 3]],
            variances: vec![1.0, 2.0],
            weights: Some(vec![0.25, 0.75]),
        };
        assert_eq!(iso.build().unwrap().weights(), vec![0.25, 0.75]);
        let diag = ModelConfig::Diagonal {
            means: vec![vec![0.0; 2]],
            variances: vec![vec![1.0, 2.0]],
            weights: None,
        };
        assert_eq!(diag.build().unwrap().k(), 1);
        let bad = ModelConfig::Isotropic {
            means: vec![vec![0.0; 3]],
            variances: vec![1.0, 2.0],
            weights: None,
        };
        assert!(bad.build().is_err());
        assert_eq!(
            ModelConfig::TwoGaussians {
                n: 4,
                distance: 2.0
            }
            .build()
            .unwrap()
            .dim(),
            4
        );
    }
}
