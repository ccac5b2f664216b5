use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ipp_core::baselines::{aligned_embedding, averaged_embedding, snapshots, WindowedEmbedding};
use ipp_core::evaluate::{
    bias_variance_sweep, coherence_metrics, estimate_set, identical_node_pairs,
    identical_time_pairs, lemma1_check, population_spectrum, trajectory_error, CoherenceSpec,
    PopulationOptions, SweepOptions,
};
use ipp_core::events::{load_events, EventLog, LoadOptions};
use ipp_core::intensity::bin_midpoint;
use ipp_core::reduce::dynamic_pca;
use ipp_core::simulate::{simulate_model, IntensityModel};
use ipp_core::subspace::{
    build_unfolded, fit, scree, scree_from_values, spectrum, EmbeddingModel, FitOptions, SvdOptions,
};
use ipp_core::trajectory::{
    default_times, read_trajectories_csv, unit_normalize, write_trajectories_csv, Projector,
    Sample, Trajectory,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;

/// Everything needed to repeat a run, saved next to its output.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub command: Command,
}

fn config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn save_config(out: &Path, command: &Command, threads: Option<usize>) -> Result<()> {
    let config = RunConfig {
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        command: command.clone(),
    };
    let path = config_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(&config)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn population(kind: ModelKind, params: &ModelParams) -> Result<Box<dyn IntensityModel>> {
    Ok(match kind {
        ModelKind::Bbm => {
            let p = params.bbm();
            p.validate()?;
            Box::new(p)
        }
        ModelKind::Cosine => {
            let p = params.cosine();
            p.validate()?;
            Box::new(p)
        }
    })
}

fn load_model(path: &Path) -> Result<EmbeddingModel> {
    EmbeddingModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_for_model(path: &Path, model: &EmbeddingModel) -> Result<EventLog> {
    let options = LoadOptions {
        horizon: Some(model.horizon()),
        nodes: Some(model.n()),
        labels: Some(model.labels().to_vec()),
    };
    load_events(path, &options).with_context(|| format!("loading events {}", path.display()))
}

fn load_input(input: &EventArgs) -> Result<EventLog> {
    let options = LoadOptions {
        horizon: input.horizon,
        nodes: input.nodes,
        labels: None,
    };
    load_events(&input.events, &options)
        .with_context(|| format!("loading events {}", input.events.display()))
}

fn even_grid(horizon: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        bail!("--count must be positive");
    }
    Ok((1..=count)
        .map(|k| k as f64 * horizon / count as f64)
        .collect())
}

fn emit(report: &ReportArgs, value: &impl Serialize, csv_rows: Vec<Vec<String>>) -> Result<()> {
    let body = match report.format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in csv_rows {
                w.write_record(&row)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    match &report.out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(std::io::stdout().write_all(body.as_bytes())?),
    }
}

fn row<I: IntoIterator<Item = T>, T: ToString>(items: I) -> Vec<String> {
    items.into_iter().map(|x| x.to_string()).collect()
}

pub fn run(command: &Command, threads: Option<usize>) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a)?,
        Command::Fit(a) => fit_model(a)?,
        Command::Project(a) => project(a)?,
        Command::Snapshot(a) => snapshot(a)?,
        Command::Reduce(a) => reduce(a)?,
        Command::Baseline(a) => baseline(a)?,
        Command::Eval(e) => eval(e)?,
        Command::Info(a) => info(a)?,
        Command::Rerun(a) => return rerun(a),
    }
    if let Some(out) = output_path(command) {
        save_config(out, command, threads)?;
    }
    Ok(())
}

fn output_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Simulate(a) => Some(&a.out),
        Command::Fit(a) => Some(&a.out),
        Command::Project(a) => Some(&a.out),
        Command::Snapshot(a) => Some(&a.out),
        Command::Reduce(a) => Some(&a.out),
        Command::Baseline(a) => Some(&a.out),
        Command::Eval(EvalCommand::Lemma1(a)) => a.report.out.as_deref(),
        Command::Eval(EvalCommand::TheoremMetric(a)) => a.report.out.as_deref(),
        Command::Eval(EvalCommand::Coherence(a)) => a.report.out.as_deref(),
        Command::Eval(EvalCommand::BiasVariance(a)) => a.report.out.as_deref(),
        Command::Info(a) => a.report.out.as_deref(),
        Command::Rerun(_) => None,
    }
}

fn rerun(args: &RerunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config: RunConfig = serde_json::from_str(&text).context("parsing run config")?;
    if matches!(config.command, Command::Rerun(_)) {
        bail!("a run config cannot itself be a rerun");
    }
    run(&config.command, config.threads)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let model = population(a.model, &a.params)?;
    let log = simulate_model(model.as_ref(), a.seed)?;
    log::info!("simulated {} events on {} nodes", log.len(), log.n());
    log.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))
}

fn fit_model(a: &FitArgs) -> Result<()> {
    let log = load_input(&a.input)?;
    let estimator = a.estimator.config()?;
    let mut options = FitOptions::new(a.slices, a.dim).with_seed(a.seed);
    options.svd.method = a.svd.into();
    let model = fit(&log, &estimator, &options)?;
    for w in &model.diagnostics().warnings {
        log::warn!("{w}");
    }
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))
}

fn node_indices(labels: &[String], wanted: &[String]) -> Result<Vec<usize>> {
    if wanted.is_empty() {
        return Ok((0..labels.len()).collect());
    }
    wanted
        .iter()
        .map(|w| {
            labels
                .iter()
                .position(|l| l == w)
                .ok_or_else(|| anyhow::anyhow!("unknown node `{w}`"))
        })
        .collect()
}

fn normalize_in_place(trajectories: &mut [Trajectory]) {
    let mut zeros = 0;
    for traj in trajectories.iter_mut() {
        let xs: Vec<Vec<f64>> = traj.samples.iter().map(|s| s.x.clone()).collect();
        let (unit, flags) = unit_normalize(&xs);
        zeros += flags.iter().filter(|&&f| f).count();
        for (s, x) in traj.samples.iter_mut().zip(unit) {
            s.x = x;
        }
    }
    if zeros > 0 {
        log::warn!("{zeros} zero positions left at the origin");
    }
}

fn project(a: &ProjectArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let log = load_for_model(&a.events, &model)?;
    let projector = Projector::new(&model, &log)?.allow_extension(a.extend);
    let times = if a.times.times.is_empty() {
        default_times(&model, a.times.count)
    } else {
        a.times.times.clone()
    };
    let mut trajectories = node_indices(model.labels(), &a.nodes)?
        .into_iter()
        .map(|i| projector.node(i, &times))
        .collect::<ipp_core::Result<Vec<_>>>()?;
    if a.normalize {
        normalize_in_place(&mut trajectories);
    }
    write_trajectories_csv(create(&a.out)?, model.labels(), &trajectories)?;
    Ok(())
}

fn snapshot(a: &SnapshotArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let log = load_for_model(&a.events, &model)?;
    let positions = Projector::new(&model, &log)?
        .allow_extension(a.extend)
        .snapshot(a.at)?;
    let trajectories: Vec<Trajectory> = positions
        .row_iter()
        .enumerate()
        .map(|(i, r)| Trajectory {
            node: i,
            samples: vec![Sample {
                t: a.at,
                x: r.iter().copied().collect(),
            }],
        })
        .collect();
    write_trajectories_csv(create(&a.out)?, model.labels(), &trajectories)?;
    Ok(())
}

fn reduce(a: &ReduceArgs) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (labels, mut trajectories) = read_trajectories_csv(file)?;
    if a.normalize {
        normalize_in_place(&mut trajectories);
    }
    let write_reduced = |k: usize, path: &Path| -> Result<()> {
        let projector = dynamic_pca(&trajectories, k)?;
        let reduced = trajectories
            .iter()
            .map(|t| projector.project_trajectory(t))
            .collect::<ipp_core::Result<Vec<_>>>()?;
        write_trajectories_csv(create(path)?, &labels, &reduced)?;
        Ok(())
    };
    write_reduced(a.k, &a.out)?;
    if let Some(init) = &a.export_init {
        let d = trajectories.first().map_or(0, Trajectory::dim);
        write_reduced(d.min(2), init)?;
    }
    Ok(())
}

fn baseline_embedding(
    method: BaselineKind,
    log: &EventLog,
    windows: usize,
    dim: usize,
) -> Result<WindowedEmbedding> {
    let snaps = snapshots(log, windows)?;
    let emb = match method {
        BaselineKind::Aligned => aligned_embedding(&snaps, dim)?,
        BaselineKind::Averaged => averaged_embedding(&snaps, dim)?,
    };
    for w in &emb.warnings {
        log::warn!("{w}");
    }
    Ok(emb)
}

fn baseline(a: &BaselineArgs) -> Result<()> {
    let log = load_input(&a.input)?;
    let emb = baseline_embedding(a.method, &log, a.windows, a.dim)?;
    let times = if a.times.times.is_empty() {
        even_grid(log.horizon(), a.times.count)?
    } else {
        a.times.times.clone()
    };
    if times.iter().any(|&t| !(t > 0.0 && t <= log.horizon())) {
        bail!("query times must lie in (0, {}]", log.horizon());
    }
    let trajectories = (0..log.n())
        .map(|i| emb.trajectory(i, &times))
        .collect::<ipp_core::Result<Vec<_>>>()?;
    write_trajectories_csv(create(&a.out)?, log.labels(), &trajectories)?;
    Ok(())
}

fn eval(command: &EvalCommand) -> Result<()> {
    match command {
        EvalCommand::Lemma1(a) => lemma1(a),
        EvalCommand::TheoremMetric(a) => theorem_metric(a),
        EvalCommand::Coherence(a) => coherence(a),
        EvalCommand::BiasVariance(a) => bias_variance(a),
    }
}

fn lemma1(a: &Lemma1Args) -> Result<()> {
    let model = load_model(&a.model)?;
    let log = load_for_model(&a.events, &model)?;
    let unfolded = build_unfolded(&log, model.estimator(), model.grid().len())?;
    let report = lemma1_check(&unfolded, model.basis(), a.frames, a.seed)?;
    let mut rows = vec![
        row(["frame", "rss"]),
        row(["fit".to_string(), report.rss_fit.to_string()]),
    ];
    rows.extend(
        report
            .rss_random
            .iter()
            .enumerate()
            .map(|(k, r)| row([k.to_string(), r.to_string()])),
    );
    emit(&a.report, &report, rows)
}

fn check_population(model: &EmbeddingModel, pop: &dyn IntensityModel) -> Result<()> {
    if pop.n() != model.n() || pop.horizon() != model.horizon() {
        bail!(
            "population has n = {}, T = {} but the model has n = {}, T = {}",
            pop.n(),
            pop.horizon(),
            model.n(),
            model.horizon()
        );
    }
    Ok(())
}

fn population_options(p: &PopulationArgs) -> PopulationOptions {
    PopulationOptions {
        quad_points: p.quad_points,
        check_quadrature: true,
    }
}

fn theorem_metric(a: &TheoremArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let log = load_for_model(&a.events, &model)?;
    let pop = population(a.population.population, &a.population.params)?;
    check_population(&model, pop.as_ref())?;
    let spectrum = population_spectrum(
        pop.as_ref(),
        model.dim(),
        &population_options(&a.population),
    )?;
    if spectrum.quadrature_converged() == Some(false) {
        log::warn!(
            "quadrature changed by {:e} when doubled",
            spectrum.quadrature_change.unwrap_or(0.0)
        );
    }
    let grid = even_grid(model.horizon(), a.count)?;
    let truth = spectrum.trajectories(pop.as_ref(), &grid);
    let est = estimate_set(&model, &log, &grid)?;
    let error = trajectory_error(&est, &truth)?;
    let mut rows = vec![row(["node", "max_error"])];
    rows.extend(
        error
            .per_node
            .iter()
            .enumerate()
            .map(|(i, e)| row([model.labels()[i].clone(), e.to_string()])),
    );
    emit(
        &a.report,
        &json!({ "error": error, "population": spectrum }),
        rows,
    )
}

fn coherence(a: &CoherenceArgs) -> Result<()> {
    let pop = population(a.population.population, &a.population.params)?;
    let horizon = pop.horizon();
    let midpoints: Vec<f64> = (0..a.windows)
        .map(|m| bin_midpoint(m, a.windows, horizon))
        .collect();
    let structural_times = if a.structural_times.is_empty() {
        midpoints.iter().take(2).copied().collect()
    } else {
        a.structural_times.clone()
    };
    let temporal_times = if a.temporal_times.is_empty() {
        midpoints.clone()
    } else {
        a.temporal_times.clone()
    };
    let spec = CoherenceSpec {
        node_pairs: identical_node_pairs(pop.as_ref(), &structural_times),
        node_pair_times: structural_times,
        time_pairs: identical_time_pairs(pop.as_ref(), &temporal_times),
        time_pair_nodes: (0..pop.n()).collect(),
    };
    let scores = match a.method {
        CoherenceMethod::Ipp => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("--model is required for --method ipp"))?;
            let model = load_model(path)?;
            check_population(&model, pop.as_ref())?;
            let log = load_for_model(&a.events, &model)?;
            coherence_metrics(&Projector::new(&model, &log)?, &spec)?
        }
        method => {
            let log = load_events(
                &a.events,
                &LoadOptions {
                    horizon: Some(horizon),
                    nodes: Some(pop.n()),
                    labels: None,
                },
            )?;
            let kind = if method == CoherenceMethod::Aligned {
                BaselineKind::Aligned
            } else {
                BaselineKind::Averaged
            };
            coherence_metrics(&baseline_embedding(kind, &log, a.windows, a.dim)?, &spec)?
        }
    };
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let rows = vec![
        row([
            "structural",
            "temporal",
            "scale",
            "node_pairs",
            "time_pairs",
        ]),
        vec![
            opt(scores.structural),
            opt(scores.temporal),
            scores.scale.to_string(),
            spec.node_pairs.len().to_string(),
            spec.time_pairs.len().to_string(),
        ],
    ];
    let report = json!({
        "method": a.method,
        "scores": scores,
        "node_pairs": spec.node_pairs.len(),
        "time_pairs": spec.time_pairs.len(),
    });
    emit(&a.report, &report, rows)
}

fn bias_variance(a: &BiasVarianceArgs) -> Result<()> {
    let pop = population(a.population.population, &a.population.params)?;
    let mut options = SweepOptions::new(a.bins.clone(), a.dim, a.seeds.clone());
    options.eval_points = a.eval_points;
    options.population = PopulationOptions {
        quad_points: a.population.quad_points,
        check_quadrature: false,
    };
    let table = bias_variance_sweep(pop.as_ref(), &options)?;
    let mut rows = vec![row([
        "bins",
        "bias_max",
        "variance_max",
        "total_max",
        "bias_mean",
        "variance_mean",
        "total_mean",
    ])];
    for r in &table {
        rows.push(row([
            r.bins.to_string(),
            r.bias.max.to_string(),
            r.variance.max.to_string(),
            r.total.max.to_string(),
            r.bias.mean.to_string(),
            r.variance.mean.to_string(),
            r.total.mean.to_string(),
        ]));
    }
    emit(&a.report, &table, rows)
}

fn info(a: &InfoArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut report = match (&a.events, a.top) {
        (Some(events), Some(top)) => {
            let log = load_for_model(events, &model)?;
            let unfolded = build_unfolded(&log, model.estimator(), model.grid().len())?;
            scree_from_values(
                &spectrum(&unfolded, top, &SvdOptions::default())?,
                model.dim(),
            )
        }
        _ => scree(&model),
    };
    if let Some(top) = a.top {
        report.entries.truncate(top);
    }
    let mut summary = json!({
        "n": model.n(),
        "dim": model.dim(),
        "horizon": model.horizon(),
        "estimator": model.estimator(),
        "slices": model.grid().len(),
        "diagnostics": model.diagnostics(),
        "scree": report,
    });
    if let Some(events) = &a.events {
        let log = load_for_model(events, &model)?;
        let n = log.n() as f64;
        summary["events"] = json!({
            "count": log.len(),
            "active_pairs": log.active_pairs(),
            "density": log.active_pairs() as f64 / (n * (n - 1.0) / 2.0),
        });
    }
    let mut rows = vec![row(["k", "singular_value", "ratio", "gap"])];
    rows.extend(report.entries.iter().map(|e| {
        row([
            e.k.to_string(),
            e.singular_value.to_string(),
            e.ratio.to_string(),
            e.gap.map_or(String::new(), |g| g.to_string()),
        ])
    }));
    emit(&a.report, &summary, rows)
}
