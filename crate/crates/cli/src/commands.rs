//! Subcommand implementations. Each writes its files under the configured
//! output directory and returns the lines to print on stdout.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use rkm_core::cluster::{
    align_and_score, covariance_cluster, kernel_pca_cluster, second_singular_vector, sign_labels,
    CovarianceClusterParams,
};
use rkm_core::gram::{
    closed_form_gram, empirical_gram_from_data, gram_ht_second_order, ComponentGram,
};
use rkm_core::kernels::{c_h_diagnostic, kernel_matrix, Geometry, Kernel};
use rkm_core::linalg::{top_singular_values, EigenOrder};
use rkm_core::model::{figure1_model, project_to_sphere, sample, MixtureModel, SampleSize};
use rkm_core::structure::{approximant_b, residual_norm};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};
use crate::io::{write_dataset_binary, write_dataset_csv, write_text};
use crate::svg::index_scatter;

/// Number of singular values reported by the gap scan.
pub const GAP_SCAN_VALUES: usize = 5;

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, large: bool) -> CliResult<Vec<String>> {
    cfg.validate(kind, large)?;
    match kind {
        ExperimentKind::Sample => cmd_sample(cfg),
        ExperimentKind::Figure1 => cmd_figure1(cfg, large),
        ExperimentKind::GapScan => cmd_gap_scan(cfg),
        ExperimentKind::KpcaCluster => cmd_kpca_cluster(cfg),
        ExperimentKind::CovCluster => cmd_cov_cluster(cfg),
        ExperimentKind::GramCheck => cmd_gram_check(cfg),
        ExperimentKind::DiagCh => cmd_diag_ch(cfg),
    }
}

fn out_path(cfg: &ExperimentConfig, name: impl AsRef<Path>) -> PathBuf {
    cfg.output.join(name)
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

pub fn cmd_sample(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let model = cfg.model()?.build()?;
    let size = cfg.sample_size(&model);
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let data = sample(&model, &size, seed)?;
        let stem = format!("dataset_seed{seed}");
        let csv = out_path(cfg, format!("{stem}.csv"));
        let bin = out_path(cfg, format!("{stem}.bin"));
        write_dataset_csv(&csv, &data)?;
        write_dataset_binary(&bin, &data)?;
        lines.push(format!(
            "seed {seed}: {} points in dimension {} -> {}, {}",
            data.len(),
            data.dim(),
            csv.display(),
            bin.display()
        ));
    }
    Ok(lines)
}

fn panel_stem(n: usize, s: f64, seed: u64) -> String {
    format!("figure1_n{n}_s{s}_seed{seed}")
}

pub fn cmd_figure1(cfg: &ExperimentConfig, large: bool) -> CliResult<Vec<String>> {
    let t = cfg.t.unwrap_or(0.1);
    let mut summary = String::from("n,s,t,seed,accuracy\n");
    let mut lines = Vec::new();
    for panel in cfg.panels(large) {
        let model = figure1_model(panel.n, panel.s)?;
        for &seed in &cfg.seeds {
            let data = sample(
                &model,
                &SampleSize::PerComponent(vec![panel.n, panel.n]),
                seed,
            )?;
            let v = second_singular_vector(&data, t, EigenOrder::Magnitude)?;
            let accuracy = align_and_score(&sign_labels(&v), data.labels())?;
            let mut csv = String::new();
            if panel.s == 0.0 {
                csv.push_str("# warning: s = 0, the two components are identical; the sign split is arbitrary\n");
            } else if accuracy < 0.6 {
                csv.push_str(
                    "# warning: the sign split is close to chance; no separation detected\n",
                );
            }
            let _ = writeln!(
                csv,
                "# n = {}, s = {}, t = {t}, seed = {seed}, accuracy = {accuracy}",
                panel.n, panel.s
            );
            csv.push_str("index,value,label\n");
            for (i, (x, l)) in v.iter().zip(data.labels()).enumerate() {
                let _ = writeln!(csv, "{i},{},{l}", fmt_float(*x));
            }
            let stem = panel_stem(panel.n, panel.s, seed);
            write_text(&out_path(cfg, format!("{stem}.csv")), &csv)?;
            let title = format!(
                "second singular vector, n = {}, s = {}, t = {t}, seed {seed}",
                panel.n, panel.s
            );
            write_text(
                &out_path(cfg, format!("{stem}.svg")),
                &index_scatter(&v, data.labels(), &title),
            )?;
            let _ = writeln!(summary, "{},{},{t},{seed},{accuracy}", panel.n, panel.s);
            lines.push(format!(
                "n={} s={} seed={seed}: sign accuracy {accuracy:.4}",
                panel.n, panel.s
            ));
        }
    }
    write_text(&out_path(cfg, "figure1_summary.csv"), &summary)?;
    Ok(lines)
}

pub fn cmd_gap_scan(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let kernel_cfg = cfg.kernel()?;
    let mut csv = String::from("n,seed,N");
    for i in 1..=GAP_SCAN_VALUES {
        let _ = write!(csv, ",sigma{i}");
    }
    csv.push_str(",ratio\n");
    let mut lines = Vec::new();
    // Runs are sequential: at the largest sizes the dense matrix dominates
    // memory, and the matrix build is itself parallel.
    for &n in &cfg.n_values {
        let model = MixtureModel::isotropic(vec![vec![0.0; n]], &[1.0])?;
        let size = cfg
            .sample
            .clone()
            .unwrap_or(SampleSize::Fixed(cfg.points_per_dim.unwrap_or(10) * n));
        let kernel = kernel_cfg.build(n)?;
        let mut ratios = Vec::new();
        for &seed in &cfg.seeds {
            let data = sample(&model, &size, seed)?;
            let km = kernel_matrix(&data, &kernel)?;
            let sv = top_singular_values(&km.matrix, GAP_SCAN_VALUES.min(km.len()))?;
            let _ = write!(csv, "{n},{seed},{}", km.len());
            for i in 0..GAP_SCAN_VALUES {
                match sv.get(i) {
                    Some(v) => {
                        let _ = write!(csv, ",{}", fmt_float(*v));
                    }
                    None => csv.push(','),
                }
            }
            if sv.len() >= 2 && sv[0] > 0.0 {
                let r = sv[1] / sv[0];
                ratios.push(r);
                let _ = writeln!(csv, ",{}", fmt_float(r));
            } else {
                csv.push_str(",\n");
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        lines.push(format!(
            "n={n}: mean sigma2/sigma1 = {mean:.4e} over {} seeds",
            ratios.len()
        ));
    }
    write_text(&out_path(cfg, "gap_scan.csv"), &csv)?;
    Ok(lines)
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    version: &'static str,
    experiment: &'static str,
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    median_accuracy: f64,
    runs: Vec<R>,
}

fn write_report<R: Serialize>(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    runs: Vec<R>,
    accuracies: &[f64],
) -> CliResult<PathBuf> {
    let report = Report {
        version: env!("CARGO_PKG_VERSION"),
        experiment: kind.name(),
        config: cfg,
        seeds: &cfg.seeds,
        median_accuracy: median(accuracies),
        runs,
    };
    let path = out_path(
        cfg,
        format!("{}_report.json", kind.name().replace('-', "_")),
    );
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&path, &text)?;
    Ok(path)
}

#[derive(Serialize)]
struct ClusterRun {
    seed: u64,
    accuracy: f64,
    diagnostics: BTreeMap<String, f64>,
}

pub fn cmd_kpca_cluster(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let model = cfg.model()?.build()?;
    let kernel = cfg.kernel()?.build(model.dim())?;
    let size = cfg.sample_size(&model);
    let k = cfg.cluster().k;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = sample(&model, &size, seed)?;
            let res = kernel_pca_cluster(&data, &kernel, k, seed)?;
            Ok(ClusterRun {
                seed,
                accuracy: res.accuracy,
                diagnostics: res.diagnostics,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    finish_cluster_report(cfg, ExperimentKind::KpcaCluster, runs)
}

fn finish_cluster_report(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    runs: Vec<ClusterRun>,
) -> CliResult<Vec<String>> {
    let keys: Vec<String> = runs
        .first()
        .map(|r| r.diagnostics.keys().cloned().collect())
        .unwrap_or_default();
    let mut csv = String::from("seed,accuracy");
    for k in &keys {
        let _ = write!(csv, ",{k}");
    }
    csv.push('\n');
    let mut lines = Vec::new();
    for r in &runs {
        let _ = write!(csv, "{},{}", r.seed, r.accuracy);
        for k in &keys {
            let _ = write!(
                csv,
                ",{}",
                r.diagnostics.get(k).copied().unwrap_or(f64::NAN)
            );
        }
        csv.push('\n');
        lines.push(format!("seed {}: accuracy {:.4}", r.seed, r.accuracy));
    }
    let accuracies: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    write_text(
        &out_path(cfg, format!("{}.csv", kind.name().replace('-', "_"))),
        &csv,
    )?;
    let report = write_report(cfg, kind, runs, &accuracies)?;
    lines.push(format!(
        "median accuracy {:.4}; report {}",
        median(&accuracies),
        report.display()
    ));
    Ok(lines)
}

pub fn cmd_cov_cluster(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let model = cfg.model()?.build()?;
    let size = cfg.sample_size(&model);
    let cluster = cfg.cluster();
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = sample(&model, &size, seed)?;
            let params = CovarianceClusterParams {
                c1: cluster.c1,
                threshold: cluster.threshold(),
                ..CovarianceClusterParams::new(cluster.k, cluster.delta_source(&model), seed)
            };
            let mut res = covariance_cluster(&data, &params)?;
            let projected = project_to_sphere(&data)?;
            let km = kernel_matrix(
                &projected,
                &Kernel::cosine(res.diagnostics["t"], data.dim())?,
            )?;
            let residual = residual_norm(&km, &approximant_b(&km)?)?;
            res.diagnostics.insert("residual_norm_b".into(), residual);
            Ok(ClusterRun {
                seed,
                accuracy: res.accuracy,
                diagnostics: res.diagnostics,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    finish_cluster_report(cfg, ExperimentKind::CovCluster, runs)
}

fn gram_rows(
    csv: &mut String,
    seed: u64,
    reference: &ComponentGram,
    empirical: &ComponentGram,
    k: usize,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let (r, e) = (reference.get(i, j), empirical.get(i, j));
            worst = worst.max((r - e).abs());
            let _ = writeln!(
                csv,
                "{seed},{i},{j},{},{},{}",
                fmt_float(r),
                fmt_float(e),
                fmt_float((r - e).abs())
            );
        }
    }
    worst
}

pub fn cmd_gram_check(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let model = cfg.model()?.build()?;
    let kernel = cfg.kernel()?.build(model.dim())?;
    let size = cfg.sample_size(&model);
    let reference = match kernel {
        Kernel::Gaussian { tau } => closed_form_gram(&model, tau)?,
        Kernel::Cosine { t, .. } => gram_ht_second_order(&model, t)?,
        _ => {
            return Err(CliError::Config(
                "gram-check compares against a reference only for gaussian and cosine kernels"
                    .into(),
            ))
        }
    };
    let on_sphere = matches!(kernel, Kernel::Cosine { .. });
    let mut csv = String::from("seed,i,j,reference,empirical,abs_diff\n");
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let mut data = sample(&model, &size, seed)?;
        if on_sphere {
            data = project_to_sphere(&data)?;
        }
        let empirical = empirical_gram_from_data(&data, &kernel)?;
        let worst = gram_rows(&mut csv, seed, &reference, &empirical, model.k());
        lines.push(format!(
            "seed {seed}: max |reference - empirical| = {worst:.3e}; det reference {:.6e}, empirical {:.6e}",
            reference.determinant()?,
            empirical.determinant()?
        ));
    }
    write_text(&out_path(cfg, "gram_check.csv"), &csv)?;
    Ok(lines)
}

pub fn cmd_diag_ch(cfg: &ExperimentConfig) -> CliResult<Vec<String>> {
    let model = cfg.model()?.build()?;
    let kernel = cfg.kernel()?.build(model.dim())?;
    let radius = model.radius();
    let mut csv = String::from("geometry,radius,dim,c_h\n");
    let mut lines = Vec::new();
    for (name, geometry) in [
        ("euclidean", Geometry::Euclidean),
        ("spherical", Geometry::Spherical),
    ] {
        let c = c_h_diagnostic(&kernel, radius, model.dim(), geometry)?;
        let _ = writeln!(
            csv,
            "{name},{},{},{}",
            fmt_float(radius),
            model.dim(),
            fmt_float(c)
        );
        lines.push(format!(
            "{name}: c_h = {c:.6e} (R = {radius:.4}, n = {})",
            model.dim()
        ));
    }
    write_text(&out_path(cfg, "diag_ch.csv"), &csv)?;
    Ok(lines)
}
