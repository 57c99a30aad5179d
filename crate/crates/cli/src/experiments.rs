//! Orchestration of each experiment: replicates, per-run artifacts and
//! cross-replicate aggregates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geosmc::geodesic::{geodesic_between, straight_line_path, two_stage_path};
use geosmc::models::GaussianPathSequence;
use geosmc::population::geometric_schedule;
use geosmc::presets::{self, PriorKind};
use geosmc::rng::RngStreams;
use geosmc::smc::{drift_only_run, PopulationDiagnostics, SmcConfig, SmcResult, Summary};
use geosmc::{run, KernelChoice, TargetSequence, Tempered};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{DriftSetting, ExperimentName, ExperimentSpec, PathKind};
use crate::error::{CliError, CliResult};
use crate::output::{self, ManifestWriter, ReplicateEntry, RunManifest};
use crate::plot;

pub const UNI_PARAMS: [&str; 2] = ["mu", "sigma"];
pub const FN_PARAMS: [&str; 3] = ["a", "b", "c"];
pub const LV_PARAMS: [&str; 4] = ["alpha", "beta", "gamma", "delta"];
pub const PATH_PARAMS: [&str; 1] = ["x"];

/// One SMC run inside a replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub replicate: usize,
    pub label: String,
    pub seed: u64,
    pub parameters: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub correlation: Vec<f64>,
    pub ess: f64,
    pub diagnostics: Vec<PopulationDiagnostics>,
}

/// A unit of work: which sequence, kernel and schedule length, written under `dir`.
#[derive(Debug, Clone)]
struct Job {
    label: String,
    kernel: KernelChoice,
    populations: usize,
    path: Option<PathKind>,
}

fn version() -> String {
    format!("geosmc-cli {}", env!("CARGO_PKG_VERSION"))
}

fn replicate_dir(r: usize) -> PathBuf {
    PathBuf::from(format!("rep-{r:03}"))
}

/// Distinct labels for the compared kernels.
fn kernel_tags(kernels: &[KernelChoice]) -> Vec<String> {
    kernels
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let dup = kernels.iter().filter(|o| o.label() == k.label()).count() > 1;
            if dup {
                format!("{}-{i}", k.label())
            } else {
                k.label().to_string()
            }
        })
        .collect()
}

fn jobs(spec: &ExperimentSpec) -> Vec<Job> {
    use ExperimentName::*;
    let s = &spec.sampler;
    let single = |label: &str| vec![Job { label: label.into(), kernel: s.kernel, populations: s.populations, path: None }];
    match spec.experiment {
        GeodesicEss => spec
            .paths
            .iter()
            .map(|p| Job { label: p.as_str().into(), kernel: s.kernel, populations: s.populations, path: Some(*p) })
            .collect(),
        UniInfer => single("uni"),
        FnInfer => single("fn"),
        LvInfer => single("lv"),
        KernelRobustness => {
            let tags = kernel_tags(&spec.kernels);
            let mut out = Vec::new();
            for (k, tag) in spec.kernels.iter().zip(&tags) {
                for p in &spec.population_counts {
                    out.push(Job { label: format!("{tag}-p{p}"), kernel: *k, populations: *p, path: None });
                }
            }
            out
        }
        EssTrace => {
            let tags = kernel_tags(&spec.kernels);
            spec.kernels
                .iter()
                .zip(tags)
                .map(|(k, tag)| Job { label: tag, kernel: *k, populations: s.populations, path: None })
                .collect()
        }
        UniDrift | FnDrift => Vec::new(),
    }
}

fn job_files(r: usize, job: &Job) -> [PathBuf; 2] {
    let d = replicate_dir(r).join(&job.label);
    [d.join("diagnostics.csv"), d.join("particles.csv")]
}

/// Data shared by all replicates.
enum Problem {
    Path,
    Uni(Vec<f64>),
    Fn(Vec<Vec<f64>>),
    Lv(Vec<Vec<f64>>),
}

impl Problem {
    fn build(spec: &ExperimentSpec) -> CliResult<Self> {
        use ExperimentName::*;
        let seed = spec.model.data_seed;
        Ok(match spec.experiment {
            GeodesicEss => Problem::Path,
            UniInfer | UniDrift => Problem::Uni(presets::uni_data(seed)),
            FnInfer | FnDrift => Problem::Fn(presets::fn_data(seed)?),
            LvInfer | KernelRobustness | EssTrace => Problem::Lv(presets::lv_data(seed)?),
        })
    }

    fn params(&self) -> &'static [&'static str] {
        match self {
            Problem::Path => &PATH_PARAMS,
            Problem::Uni(_) => &UNI_PARAMS,
            Problem::Fn(_) => &FN_PARAMS,
            Problem::Lv(_) => &LV_PARAMS,
        }
    }
}

fn execute<S: TargetSequence>(seq: &S, cfg: &SmcConfig) -> CliResult<SmcResult> {
    Ok(run(cfg, seq)?)
}

fn run_job(spec: &ExperimentSpec, problem: &Problem, job: &Job, replicate: usize, seed: u64) -> CliResult<RunRecord> {
    let s = &spec.sampler;
    let cfg = s.smc_config(job.kernel, seed);
    let schedule = || geometric_schedule(job.populations, s.phi2);
    let prior = spec.model.prior;
    let result = match problem {
        Problem::Path => {
            let (a, b) = (
                spec.model.path_start.ok_or_else(|| CliError::Config("missing path_start".into()))?,
                spec.model.path_end.ok_or_else(|| CliError::Config("missing path_end".into()))?,
            );
            let pts = match job.path.unwrap_or(PathKind::Geodesic) {
                PathKind::Geodesic => geodesic_between(a, b, job.populations)?,
                PathKind::StraightLine => straight_line_path(a, b, job.populations)?,
                PathKind::TwoStage => two_stage_path(a, b, job.populations)?,
            };
            execute(&GaussianPathSequence::new(pts)?, &cfg)?
        }
        Problem::Uni(d) => execute(&Tempered::new(presets::uni_model(d.clone())?, schedule()?), &cfg)?,
        Problem::Fn(d) => execute(&Tempered::new(presets::fn_model(d.clone(), prior)?, schedule()?), &cfg)?,
        Problem::Lv(d) => execute(&Tempered::new(presets::lv_model(d.clone(), prior)?, schedule()?), &cfg)?,
    };
    let [diag_path, part_path] = job_files(replicate, job).map(|p| spec.out_dir.join(p));
    output::write_diagnostics(&diag_path, &result.diagnostics)?;
    let params = problem.params();
    if result.history.is_empty() {
        let (xs, ws) = (result.positions(), result.weights());
        output::write_particles(&part_path, params, [(job.populations, xs.as_slice(), ws.as_slice())])?;
    } else {
        output::write_particles(
            &part_path,
            params,
            result.history.iter().map(|h| (h.population, h.positions.as_slice(), h.weights.as_slice())),
        )?;
    }
    let Summary { mean, sd, correlation, ess } = result.summary.clone();
    Ok(RunRecord {
        replicate,
        label: job.label.clone(),
        seed,
        parameters: params.iter().map(|p| p.to_string()).collect(),
        mean,
        sd,
        correlation,
        ess,
        diagnostics: result.diagnostics,
    })
}

fn pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

/// Run the experiment described by `spec`, writing every artifact under
/// `spec.out_dir`. The manifest is written before any replicate starts.
pub fn run_experiment(spec: &ExperimentSpec) -> CliResult<RunManifest> {
    spec.validate()?;
    output::create_dir(&spec.out_dir)?;
    match spec.experiment {
        ExperimentName::UniDrift | ExperimentName::FnDrift => run_drift(spec),
        _ => run_smc_experiment(spec),
    }
}

fn run_smc_experiment(spec: &ExperimentSpec) -> CliResult<RunManifest> {
    let streams = RngStreams::new(spec.seed);
    let seeds: Vec<u64> = (0..spec.replicates).map(|r| streams.child_seed(r as u64)).collect();
    let jobs = jobs(spec);
    let entries = seeds
        .iter()
        .enumerate()
        .map(|(r, seed)| ReplicateEntry {
            index: r,
            seed: *seed,
            files: jobs.iter().flat_map(|j| job_files(r, j)).collect(),
            completed: false,
        })
        .collect();
    let manifest = ManifestWriter::create(
        spec.out_dir.join("manifest.json"),
        RunManifest { version: version(), seed: spec.seed, config: spec.to_value(), replicates: entries },
    )?;
    let problem = Problem::build(spec)?;
    let records: Vec<Vec<RunRecord>> = pool(spec.threads)?.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let recs = jobs.iter().map(|j| run_job(spec, &problem, j, r, seeds[r])).collect::<CliResult<Vec<_>>>()?;
                manifest.complete(r)?;
                Ok(recs)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let records: Vec<RunRecord> = records.into_iter().flatten().collect();
    let aggregate = aggregate(spec, &records, problem.params())?;
    output::write_json(
        &spec.out_dir.join("summary.json"),
        &json!({
            "experiment": spec.experiment,
            "seed": spec.seed,
            "version": version(),
            "config": spec.to_value(),
            "runs": records,
            "aggregate": aggregate,
        }),
    )?;
    Ok(manifest.into_inner())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; zero for a single value.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Per-label, per-population mean of a diagnostic across replicates.
fn mean_trace(records: &[RunRecord], label: &str, f: impl Fn(&PopulationDiagnostics) -> f64) -> Vec<f64> {
    let runs: Vec<&RunRecord> = records.iter().filter(|r| r.label == label).collect();
    let p = runs.first().map_or(0, |r| r.diagnostics.len());
    (0..p).map(|a| mean(&runs.iter().map(|r| f(&r.diagnostics[a])).collect::<Vec<_>>())).collect()
}

/// First population whose ESS falls below `threshold`, if any.
pub fn first_crossing(diagnostics: &[PopulationDiagnostics], threshold: f64) -> Option<usize> {
    diagnostics.iter().find(|d| d.ess < threshold).map(|d| d.population)
}

fn trace_table(out: &Path, name: &str, labels: &[String], traces: &[Vec<f64>]) -> CliResult<()> {
    let mut header = vec!["population".to_string()];
    header.extend(labels.iter().cloned());
    let p = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..p)
        .map(|a| {
            let mut row = vec![(a + 1).to_string()];
            row.extend(traces.iter().map(|t| t.get(a).map_or(String::new(), |v| v.to_string())));
            row
        })
        .collect();
    output::write_table(&out.join(name), &header, &rows)
}

fn series(labels: &[String], traces: &[Vec<f64>]) -> Vec<(String, Vec<(f64, f64)>)> {
    labels
        .iter()
        .zip(traces)
        .map(|(l, t)| (l.clone(), t.iter().enumerate().map(|(a, v)| ((a + 1) as f64, *v)).collect()))
        .collect()
}

fn aggregate(spec: &ExperimentSpec, records: &[RunRecord], params: &[&str]) -> CliResult<Value> {
    use ExperimentName::*;
    let out = &spec.out_dir;
    let labels: Vec<String> = jobs(spec).into_iter().map(|j| j.label).collect();
    match spec.experiment {
        GeodesicEss | EssTrace => {
            let ess: Vec<Vec<f64>> = labels.iter().map(|l| mean_trace(records, l, |d| d.ess)).collect();
            let acc: Vec<Vec<f64>> = labels.iter().map(|l| mean_trace(records, l, |d| d.acceptance_rate)).collect();
            trace_table(out, "mean_ess.csv", &labels, &ess)?;
            trace_table(out, "mean_acceptance.csv", &labels, &acc)?;
            let svg = out.join("ess.svg");
            plot::best_effort(plot::line_plot(&svg, "Mean ESS per population", "population", "ESS", &series(&labels, &ess)), &svg);
            let svg = out.join("acceptance.svg");
            plot::best_effort(
                plot::line_plot(&svg, "Mean acceptance rate", "population", "acceptance", &series(&labels, &acc)),
                &svg,
            );
            let threshold = spec.sampler.ess_fraction * spec.sampler.n_particles as f64;
            let mut per_label = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                let runs: Vec<&RunRecord> = records.iter().filter(|r| &r.label == l).collect();
                per_label.insert(
                    l.clone(),
                    json!({
                        "mean_ess": ess[i],
                        "mean_acceptance": acc[i],
                        "final_ess": runs.iter().map(|r| r.ess).collect::<Vec<_>>(),
                        "first_crossing": runs.iter().map(|r| first_crossing(&r.diagnostics, threshold)).collect::<Vec<_>>(),
                    }),
                );
            }
            Ok(json!({ "ess_threshold": threshold, "traces": per_label }))
        }
        KernelRobustness => {
            let tags = kernel_tags(&spec.kernels);
            let mut rows = Vec::new();
            let mut table = Vec::new();
            let mut plot_series = Vec::new();
            for tag in &tags {
                let mut pts = Vec::new();
                for p in &spec.population_counts {
                    let label = format!("{tag}-p{p}");
                    let runs: Vec<&RunRecord> = records.iter().filter(|r| r.label == label).collect();
                    for (k, name) in params.iter().enumerate() {
                        let means: Vec<f64> = runs.iter().map(|r| r.mean[k]).collect();
                        let var = sample_variance(&means);
                        if k == 0 {
                            pts.push((*p as f64, var));
                        }
                        table.push(vec![tag.clone(), p.to_string(), name.to_string(), mean(&means).to_string(), var.to_string()]);
                        rows.push(json!({
                            "kernel": tag, "populations": p, "parameter": name,
                            "mean_of_means": mean(&means), "variance_of_means": var, "means": means,
                        }));
                    }
                }
                plot_series.push((tag.clone(), pts));
            }
            let header: Vec<String> =
                ["kernel", "populations", "parameter", "mean_of_means", "variance_of_means"].iter().map(|s| s.to_string()).collect();
            output::write_table(&out.join("robustness.csv"), &header, &table)?;
            let svg = out.join("robustness.svg");
            let title = format!("Across-replicate variance of the {} estimate", params[0]);
            plot::best_effort(plot::line_plot(&svg, &title, "populations", "variance", &plot_series), &svg);
            Ok(json!({ "robustness": rows }))
        }
        UniInfer | FnInfer | LvInfer => {
            if let Some(first) = records.first() {
                let part = out.join(job_files(0, &jobs(spec)[0])[1].clone());
                plot_marginals(out, &part, params, spec.sampler.populations);
                let svg = out.join("ess.svg");
                let t = vec![first.diagnostics.iter().map(|d| d.ess).collect::<Vec<_>>()];
                plot::best_effort(plot::line_plot(&svg, "ESS per population", "population", "ESS", &series(&labels, &t)), &svg);
            }
            let per_param: BTreeMap<&str, Value> = params
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let means: Vec<f64> = records.iter().map(|r| r.mean[k]).collect();
                    (*name, json!({ "mean_of_means": mean(&means), "variance_of_means": sample_variance(&means) }))
                })
                .collect();
            Ok(json!({ "parameters": per_param }))
        }
        UniDrift | FnDrift => Ok(Value::Null),
    }
}

/// Weighted histograms of the final population, read back from the CSV.
fn plot_marginals(out: &Path, particles: &Path, params: &[&str], last: usize) {
    let Ok(mut rdr) = csv::Reader::from_path(particles) else { return };
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); params.len()];
    let mut weights = Vec::new();
    for rec in rdr.records().flatten() {
        let pop: usize = rec.get(0).and_then(|v| v.parse().ok()).unwrap_or(0);
        if pop != last {
            continue;
        }
        weights.push(rec.get(2).and_then(|v| v.parse().ok()).unwrap_or(0.0));
        for (k, c) in cols.iter_mut().enumerate() {
            c.push(rec.get(3 + k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN));
        }
    }
    for (k, name) in params.iter().enumerate() {
        let svg = out.join(format!("hist-{name}.svg"));
        plot::best_effort(plot::histogram(&svg, &format!("Posterior of {name}"), name, &cols[k], &weights, 40), &svg);
    }
}

fn drift_file(prior: Option<PriorKind>, d: &DriftSetting) -> PathBuf {
    let tag = match prior {
        Some(PriorKind::Normal) => "normal-",
        Some(PriorKind::Uniform) => "uniform-",
        None => "",
    };
    PathBuf::from(format!("drift-{tag}eps{}-p{}.csv", d.eps, d.populations))
}

fn with_eps(kernel: KernelChoice, eps: f64) -> KernelChoice {
    match kernel {
        KernelChoice::MmalaEuler { drift, .. } => KernelChoice::MmalaEuler { eps, drift },
        KernelChoice::MmalaSimplified { .. } => KernelChoice::MmalaSimplified { eps },
        KernelChoice::MmalaOzaki { drift, .. } => KernelChoice::MmalaOzaki { eps, drift },
        other => other,
    }
}

/// Deterministic drift paths; the output does not depend on the seed, so a
/// single replicate is run regardless of `replicates`.
fn run_drift(spec: &ExperimentSpec) -> CliResult<RunManifest> {
    let priors: Vec<Option<PriorKind>> = match spec.experiment {
        ExperimentName::FnDrift if !spec.priors.is_empty() => spec.priors.iter().map(|p| Some(*p)).collect(),
        ExperimentName::FnDrift => vec![Some(spec.model.prior)],
        _ => vec![None],
    };
    let files: Vec<PathBuf> =
        priors.iter().flat_map(|p| spec.drift_settings.iter().map(move |d| drift_file(*p, d))).collect();
    let manifest = ManifestWriter::create(
        spec.out_dir.join("manifest.json"),
        RunManifest {
            version: version(),
            seed: spec.seed,
            config: spec.to_value(),
            replicates: vec![ReplicateEntry { index: 0, seed: spec.seed, files, completed: false }],
        },
    )?;
    let problem = Problem::build(spec)?;
    let params = problem.params();
    let mut settings = Vec::new();
    pool(spec.threads)?.install(|| -> CliResult<()> {
        for prior in &priors {
            for d in &spec.drift_settings {
                let kernel = with_eps(spec.sampler.kernel, d.eps);
                let schedule = geometric_schedule(d.populations, spec.sampler.phi2)?;
                let (trace, marker) = match &problem {
                    Problem::Uni(data) => {
                        let seq = Tempered::new(presets::uni_model(data.clone())?, schedule);
                        let m = (presets::UNI_TRUE_MEAN, presets::UNI_TRUE_SD);
                        (drift_only_run(&kernel, &seq, &presets::uni_drift_grid())?, vec![m.0, m.1])
                    }
                    Problem::Fn(data) => {
                        let seq = Tempered::new(presets::fn_model(data.clone(), prior.unwrap_or_default())?, schedule);
                        (drift_only_run(&kernel, &seq, &presets::fn_drift_grid())?, presets::FN_TRUTH.to_vec())
                    }
                    _ => return Err(CliError::Config("drift runs need the univariate or FitzHugh-Nagumo model".into())),
                };
                let file = drift_file(*prior, d);
                let mut header: Vec<String> = vec!["particle_index".into(), "population".into()];
                header.extend(params.iter().map(|s| s.to_string()));
                let rows: Vec<Vec<String>> = trace
                    .paths
                    .iter()
                    .enumerate()
                    .flat_map(|(i, path)| {
                        path.iter().enumerate().map(move |(a, x)| {
                            let mut row = vec![i.to_string(), (a + 1).to_string()];
                            row.extend(x.iter().map(|v| v.to_string()));
                            row
                        })
                    })
                    .collect();
                output::write_table(&spec.out_dir.join(&file), &header, &rows)?;
                for (i, j) in projections(params.len()) {
                    let svg = spec.out_dir.join(file.with_extension("").to_string_lossy().into_owned() + &format!("-{}-{}.svg", params[i], params[j]));
                    let paths: Vec<Vec<(f64, f64)>> =
                        trace.paths.iter().map(|p| p.iter().map(|x| (x[i], x[j])).collect()).collect();
                    let title = format!("Drift paths, eps = {}, p = {}", d.eps, d.populations);
                    plot::best_effort(plot::path_plot(&svg, &title, params[i], params[j], &paths, Some((marker[i], marker[j]))), &svg);
                }
                settings.push(json!({
                    "prior": prior,
                    "eps": d.eps,
                    "populations": d.populations,
                    "file": file,
                    "truncated": trace.truncated,
                    "endpoints": trace.endpoints().iter().map(|e: &DVector<f64>| e.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                }));
            }
        }
        Ok(())
    })?;
    manifest.complete(0)?;
    output::write_json(
        &spec.out_dir.join("summary.json"),
        &json!({
            "experiment": spec.experiment,
            "seed": spec.seed,
            "version": version(),
            "config": spec.to_value(),
            "parameters": params,
            "drift": settings,
        }),
    )?;
    Ok(manifest.into_inner())
}

fn projections(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            out.push((i, j));
        }
    }
    out
}
