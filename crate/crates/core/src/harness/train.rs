use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};

use super::config::{ExperimentConfig, MetricKind};
use super::layout::OutputLayout;
use crate::error::{Error, Result};
use crate::metrics::{c2st, lmd, mmd, nlog, read_metric_csv, write_metric_csv, MetricRecord};
use crate::nn::Mdn;
use crate::parallel::{map_indexed_seq, try_map_indexed};
use crate::rng::{stream, Domain};
use crate::simulators::ModelSpec;
use crate::smcabc::{reference_posterior, ReferencePosterior};
use crate::snpe::{posterior_samples, Costs, RoundDiagnostics, RoundRecord, Snpe, SnpeCheckpoint};
use crate::transform::ParamSpace;

const COSTS_HEADER: &str =
    "round,seed,forward_passes,simulator_calls,resimulations,proposal_draws,out_of_support,defensive_mixtures,learned_proposals";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub layout: OutputLayout,
    /// Metric rows of the seeds run in this call, in seed order.
    pub records: Vec<MetricRecord>,
    /// Per seed, the cost counters after each round.
    pub costs: Vec<(u64, Vec<Costs>)>,
    pub diagnostics: Vec<(u64, Vec<RoundDiagnostics>)>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec(value)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn load_reference(cfg: &ExperimentConfig) -> Option<ReferencePosterior> {
    if !cfg.metrics.iter().any(|m| m.needs_reference()) {
        return None;
    }
    match &cfg.reference {
        None => {
            warn!("no reference posterior configured; C2ST and MMD are skipped");
            None
        }
        Some(p) => match ReferencePosterior::load(p) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("cannot load reference posterior {}: {e}; C2ST and MMD are skipped", p.display());
                None
            }
        },
    }
}

/// Posterior draws for round `round` plus the configured metrics.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_round(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    space: &ParamSpace,
    mdn: &Mdn,
    params: &[f64],
    seed: u64,
    round: usize,
    reference: Option<&ReferencePosterior>,
) -> Result<(Vec<MetricRecord>, Vec<Vec<f64>>)> {
    let mut rng = stream(seed, Domain::PosteriorSample, round as u64, 0);
    let samples = posterior_samples(mdn, params, space, &model.s_obs, cfg.posterior_samples, &mut rng)?;
    let mut rows = Vec::new();
    let row = |metric: &str, value: f64| MetricRecord { round, metric: metric.to_string(), value, seed };
    for &m in &cfg.metrics {
        let value = match m {
            MetricKind::Lmd => lmd(&samples, model, seed, round as u64)?,
            MetricKind::Nlog => nlog(mdn, params, &space.transform, &model.s_obs, &model.theta_star)?,
            MetricKind::C2st | MetricKind::Mmd => {
                let Some(r) = reference else {
                    rows.push(row(&format!("{m}_skipped"), f64::NAN));
                    continue;
                };
                let k = samples.len().min(r.samples.len());
                if m == MetricKind::C2st && k < 100 {
                    warn!("C2ST needs 100 draws per side, have {k}; skipped");
                    rows.push(row(&format!("{m}_skipped"), f64::NAN));
                    continue;
                }
                let (a, b) = (&samples[..k], &r.samples[..k]);
                if m == MetricKind::C2st {
                    c2st(a, b, seed)?
                } else {
                    mmd(a, b)?
                }
            }
        };
        rows.push(row(m.name(), value));
    }
    Ok((rows, samples))
}

fn write_samples(path: &Path, samples: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = String::new();
    for s in samples {
        text.push_str(&serde_json::to_string(s)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn costs_line(round: usize, seed: u64, c: &Costs) -> String {
    format!(
        "{round},{seed},{},{},{},{},{},{},{}",
        c.forward_passes,
        c.simulator_calls,
        c.resimulations,
        c.proposal_draws,
        c.out_of_support,
        c.defensive_mixtures,
        c.learned_proposals
    )
}

fn write_costs(path: &Path, seed: u64, costs: &[Costs]) -> Result<()> {
    let mut text = format!("{COSTS_HEADER}\n");
    for (i, c) in costs.iter().enumerate() {
        text.push_str(&costs_line(i + 1, seed, c));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_costs(path: &Path) -> Result<Vec<Costs>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<u64> = l.split(',').map(|f| f.parse().map_err(|_| Error::Config(format!("bad costs row `{l}`")))).collect::<Result<_>>()?;
            if v.len() != 9 {
                return Err(Error::Config(format!("bad costs row `{l}`")));
            }
            Ok(Costs {
                forward_passes: v[2],
                simulator_calls: v[3],
                resimulations: v[4],
                proposal_draws: v[5],
                out_of_support: v[6],
                defensive_mixtures: v[7],
                learned_proposals: v[8],
            })
        })
        .collect()
}

fn latest_round(layout: &OutputLayout, seed: u64) -> usize {
    let mut r = 0;
    while layout.checkpoint(seed, r + 1).exists() && layout.round_record(seed, r + 1).exists() {
        r += 1;
    }
    r
}

struct SeedResult {
    records: Vec<MetricRecord>,
    costs: Vec<Costs>,
    diagnostics: Vec<RoundDiagnostics>,
}

fn run_seed(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    layout: &OutputLayout,
    seed: u64,
    reference: Option<&ReferencePosterior>,
    resume: bool,
) -> Result<SeedResult> {
    fs::create_dir_all(layout.seed_dir(seed))?;
    let done = if resume { latest_round(layout, seed) } else { 0 };
    let (mut snpe, mut records, mut costs) = if done > 0 {
        info!("seed {seed}: resuming after round {done}");
        let ck: SnpeCheckpoint = read_json(&layout.checkpoint(seed, done))?;
        if ck.config != cfg.train || ck.model != *model || ck.seed != seed {
            return Err(Error::Config("checkpoint does not match the configuration".into()));
        }
        let recs: Vec<RoundRecord> =
            (1..=done).map(|r| read_json(&layout.round_record(seed, r))).collect::<Result<_>>()?;
        let rows: Vec<MetricRecord> = read_metric_csv(&fs::read_to_string(layout.seed_metrics(seed))?)?
            .into_iter()
            .filter(|r| r.round <= done)
            .collect();
        let mut c = read_costs(&layout.seed_costs(seed))?;
        c.truncate(done);
        (Snpe::restore(ck, recs)?, rows, c)
    } else {
        (Snpe::new(model.clone(), cfg.train.clone(), seed)?, Vec::new(), Vec::new())
    };

    while !snpe.is_finished() {
        snpe.run_round()?;
        let r = snpe.rounds_done();
        write_json(&layout.round_record(seed, r), &snpe.store().rounds()[r - 1])?;
        write_json(&layout.checkpoint(seed, r), &snpe.checkpoint())?;
        let (rows, samples) =
            evaluate_round(cfg, model, snpe.space(), snpe.mdn(), snpe.params(), seed, r, reference)?;
        write_samples(&layout.samples(seed, r), &samples)?;
        records.extend(rows);
        costs.push(snpe.costs().clone());
        // rewrite after every round so an interrupted run can resume
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &records)?;
        fs::write(layout.seed_metrics(seed), buf)?;
        write_costs(&layout.seed_costs(seed), seed, &costs)?;
    }
    Ok(SeedResult { records, costs, diagnostics: snpe.diagnostics().to_vec() })
}

/// Concatenates every seed's files under the layout into the top-level CSVs.
fn merge_outputs(layout: &OutputLayout) -> Result<()> {
    let mut all = Vec::new();
    let mut costs = format!("{COSTS_HEADER}\n");
    for seed in layout.seeds_present() {
        let path = layout.seed_metrics(seed);
        if path.exists() {
            all.extend(read_metric_csv(&fs::read_to_string(path)?)?);
        }
        let cpath = layout.seed_costs(seed);
        if cpath.exists() {
            for l in fs::read_to_string(cpath)?.lines().skip(1).filter(|l| !l.is_empty()) {
                costs.push_str(l);
                costs.push('\n');
            }
        }
    }
    let mut f = fs::File::create(layout.metrics())?;
    let mut buf = Vec::new();
    write_metric_csv(&mut buf, &all)?;
    f.write_all(&buf)?;
    fs::write(layout.costs(), costs)?;
    Ok(())
}

fn prepare_layout(cfg: &ExperimentConfig, out: &Path) -> Result<OutputLayout> {
    let layout = OutputLayout::new(out, &cfg.hash());
    fs::create_dir_all(&layout.root)?;
    let stored = ExperimentConfig { seeds: Vec::new(), out: None, seed_parallel: false, ..cfg.clone() };
    fs::write(layout.config(), stored.to_toml()?)?;
    Ok(layout)
}

/// Trains every seed for all rounds, evaluating the configured metrics after
/// each round. Output goes to `out/<config-hash>/`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, resume: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = cfg.model_spec()?;
    let reference = load_reference(cfg);
    let layout = prepare_layout(cfg, out)?;
    info!("writing to {}", layout.root.display());
    let run = |i: usize| run_seed(cfg, &model, &layout, cfg.seeds[i], reference.as_ref(), resume);
    let results = if cfg.seed_parallel {
        try_map_indexed(cfg.seeds.len(), run)?
    } else {
        map_indexed_seq(cfg.seeds.len(), run).into_iter().collect::<Result<Vec<_>>>()?
    };
    merge_outputs(&layout)?;
    let mut outcome = TrainOutcome { layout, records: Vec::new(), costs: Vec::new(), diagnostics: Vec::new() };
    for (seed, r) in cfg.seeds.iter().zip(results) {
        outcome.records.extend(r.records);
        outcome.costs.push((*seed, r.costs));
        outcome.diagnostics.push((*seed, r.diagnostics));
    }
    Ok(outcome)
}

/// Recomputes the metric files from stored checkpoints.
pub fn cmd_metrics(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricRecord>> {
    let model = cfg.model_spec()?;
    let reference = load_reference(cfg);
    let layout = OutputLayout::new(out, &cfg.hash());
    let seeds = if cfg.seeds.is_empty() { layout.seeds_present() } else { cfg.seeds.clone() };
    if seeds.is_empty() {
        return Err(Error::Config(format!("no runs found under {}", layout.root.display())));
    }
    let space = ParamSpace::new(model.prior.clone(), cfg.train.pst)?;
    let mut all = Vec::new();
    for seed in seeds {
        let mut rows = Vec::new();
        let mut r = 1;
        while layout.checkpoint(seed, r).exists() {
            let ck: SnpeCheckpoint = read_json(&layout.checkpoint(seed, r))?;
            let mdn = Mdn::new(ck.architecture)?;
            let (recs, _) = evaluate_round(cfg, &model, &space, &mdn, &ck.params, seed, r, reference.as_ref())?;
            rows.extend(recs);
            r += 1;
        }
        if r == 1 {
            return Err(Error::Config(format!("no checkpoints for seed {seed}")));
        }
        fs::create_dir_all(layout.seed_dir(seed))?;
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &rows)?;
        fs::write(layout.seed_metrics(seed), buf)?;
        all.extend(rows);
    }
    merge_outputs(&layout)?;
    Ok(all)
}

/// Runs SMC-ABC and stores `count` equally weighted draws at `path`.
pub fn cmd_reference(
    model: &str,
    count: usize,
    population: usize,
    budget: usize,
    seed: u64,
    path: &Path,
) -> Result<ReferencePosterior> {
    let spec = ModelSpec::by_name(model)?;
    let r = reference_posterior(&spec, count, population, budget, seed)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    r.save(path)?;
    Ok(r)
}
