use rayon::prelude::*;
use serde_json::json;

use iic_core::estimators::{
    cluster_tail_probe, estimate_pc, fit_exponent, j_lambda_frequency, triangle_from_curve, triangle_sum_probe,
    two_point_probe, volume_recursion_check, Model, PcOptions, TriangleReport,
};
use iic_core::graph::{GraphSample, GraphSampler};
use iic_core::lattice::{LatticeSpec, Vertex};
use iic_core::lattice_iic::{sample_iic_ball, sample_iic_two_point, LatticeIic};
use iic_core::resistance::{lane_report, nash_williams_bound, resistance_to_level};
use iic_core::rng::derive_seed;
use iic_core::stats::{chunked_trials, median, Moments};
use iic_core::tree_iic::{kesten_level_sizes, KestenTree, TreeSpec};
use iic_core::walk::{annealed_return_curve, simulate_walk, WalkPlan};
use iic_core::{ExploreStatus, Error};

use crate::config::{ExperimentConfig, Kind, ModelConfig};
use crate::output::Table;
use crate::{Deadline, Flags, RunError, RunOutput};

fn f(x: f64) -> String {
    x.to_string()
}

fn u(x: impl Into<u64>) -> String {
    x.into().to_string()
}

fn output(table: Table, seeds: u64) -> RunOutput {
    RunOutput {
        table,
        flags: Flags::default(),
        summary: json!({}),
        seeds,
        graphs: Vec::new(),
        failure: None,
    }
}

struct TreeSampler {
    spec: TreeSpec,
    guard: usize,
}

impl GraphSampler for TreeSampler {
    fn sample(&self, radius: u32, seed: u64) -> iic_core::Result<GraphSample> {
        Ok(KestenTree::sample_guarded(&self.spec, radius, seed, self.guard)?.graph)
    }
}

fn sampler(config: &ExperimentConfig) -> Result<Box<dyn GraphSampler>, RunError> {
    match config.model()? {
        ModelConfig::Tree { ell } => {
            Ok(Box::new(TreeSampler { spec: TreeSpec::new(*ell)?, guard: config.guards.max_vertices }))
        }
        m @ ModelConfig::LatticeIic { .. } => Ok(Box::new(LatticeIic {
            spec: m.lattice_spec().unwrap(),
            max_attempts: config.guards.max_attempts,
            budget: config.guards.vertex_budget,
        })),
        _ => Err(RunError::Schema("a tree or lattice-iic model is required".into())),
    }
}

fn cluster_model(config: &ExperimentConfig) -> Result<Model, RunError> {
    let spec = config.model()?.cluster_model().ok_or_else(|| RunError::Schema("a lattice or bethe model is required".into()))?;
    Ok(Model::new(&spec)?)
}

/// Runs `f` for samples `0..n` in parallel batches, checking the deadline
/// between batches. Stops at the first error and keeps earlier results.
fn over_samples<T, F>(n: u64, deadline: &Deadline, f: F) -> (Vec<T>, Option<RunError>)
where
    T: Send,
    F: Fn(u64) -> Result<T, RunError> + Sync,
{
    let batch = (2 * rayon::current_num_threads()) as u64;
    let mut done = Vec::with_capacity(n as usize);
    let mut start = 0;
    while start < n {
        if let Err(e) = deadline.check() {
            return (done, Some(e));
        }
        let end = (start + batch).min(n);
        let results: Vec<Result<T, RunError>> = (start..end).into_par_iter().map(&f).collect();
        for r in results {
            match r {
                Ok(v) => done.push(v),
                Err(e) => return (done, Some(e)),
            }
        }
        start = end;
    }
    (done, None)
}

pub(crate) fn dispatch(kind: Kind, config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    match kind {
        Kind::BallStats => ball_stats(config),
        Kind::OneArm => one_arm(config),
        Kind::ClusterTail => cluster_tail(config),
        Kind::TwoPoint => two_point(config),
        Kind::Triangle => triangle(config),
        Kind::VolumeRecursion => volume_recursion(config),
        Kind::PcEstimate => pc_estimate(config),
        Kind::IicTree => iic_tree(config),
        Kind::IicLattice => iic_lattice(config),
        Kind::Resistance => resistance(config),
        Kind::Lanes => lanes(config),
        Kind::Walk => walk(config),
        Kind::ReturnCurve => return_curve(config),
        Kind::JLambda => j_lambda(config),
        Kind::Fit => fit(config),
    }
}

/// Mean volume and boundary size per radius.
fn ball_stats(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let trials = config.trials()?;
    let r_list = config.r_list()?;
    let r_max = *r_list.last().unwrap();
    let seed = config.master_seed;
    let budget = config.guards.vertex_budget;
    // per trial: level sizes up to r_max, or None when the trial is unusable
    let levels = |i: u64| -> Result<Option<Vec<u64>>, RunError> {
        let s = derive_seed(seed, i);
        Ok(match config.model()? {
            ModelConfig::Tree { ell } => Some(kesten_level_sizes(&TreeSpec::new(*ell)?, r_max, s)?),
            ModelConfig::LatticeIic { .. } => Some(sampler(config)?.sample(r_max, s)?.level_sizes()),
            _ => {
                let st = cluster_model(config)?.profile(s, r_max, budget)?;
                (st.status == ExploreStatus::Complete).then_some(st.level_sizes)
            }
        })
    };
    let parts = chunked_trials(trials, |range| -> Result<(Vec<Moments>, u64), RunError> {
        let mut m = vec![Moments::default(); 2 * r_list.len()];
        let mut skipped = 0;
        for i in range {
            let Some(sizes) = levels(i)? else {
                skipped += 1;
                continue;
            };
            for (j, &r) in r_list.iter().enumerate() {
                let vol: u64 = sizes.iter().take(r as usize + 1).sum();
                m[2 * j].push(vol as f64);
                m[2 * j + 1].push(sizes.get(r as usize).copied().unwrap_or(0) as f64);
            }
        }
        Ok((m, skipped))
    });
    let mut m = vec![Moments::default(); 2 * r_list.len()];
    let mut skipped = 0;
    for part in parts {
        let (pm, s) = part?;
        skipped += s;
        for (a, b) in m.iter_mut().zip(&pm) {
            a.merge(b);
        }
    }
    let mut table = Table::new(&["r", "trials", "mean_volume", "stderr_volume", "mean_boundary", "stderr_boundary"]);
    for (j, &r) in r_list.iter().enumerate() {
        let (v, b) = (&m[2 * j], &m[2 * j + 1]);
        table.push(vec![u(r), u(v.count), f(v.mean()), f(v.stderr()), f(b.mean()), f(b.stderr())]);
    }
    let mut out = output(table, trials);
    out.flags.budget_exceeded = skipped;
    Ok(out)
}

fn one_arm(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cluster_model(config)?;
    let trials = config.trials()?;
    let r_list = config.r_list()?;
    let r_max = *r_list.last().unwrap();
    let parts = chunked_trials(trials, |range| -> Result<(Vec<u64>, u64), RunError> {
        let mut hits = vec![0u64; r_list.len()];
        let mut over = 0;
        for i in range {
            let st = model.profile(derive_seed(config.master_seed, i), r_max, config.guards.vertex_budget)?;
            over += (st.status == ExploreStatus::BudgetExceeded) as u64;
            for (h, &r) in hits.iter_mut().zip(r_list) {
                *h += (st.reached >= r) as u64;
            }
        }
        Ok((hits, over))
    });
    let mut hits = vec![0u64; r_list.len()];
    let mut over = 0;
    for part in parts {
        let (h, o) = part?;
        over += o;
        hits.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    let mut table = Table::new(&["r", "trials", "hits", "p_hat", "stderr", "r_times_p_hat"]);
    for (&r, &h) in r_list.iter().zip(&hits) {
        let p = iic_core::stats::Proportion::new(h, trials);
        table.push(vec![u(r), u(trials), u(h), f(p.estimate()), f(p.stderr()), f(r as f64 * p.estimate())]);
    }
    let mut out = output(table, trials);
    out.flags.budget_exceeded = over;
    Ok(out)
}

fn cluster_tail(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cluster_model(config)?;
    let trials = config.trials()?;
    let curve = cluster_tail_probe(&model, config.n_list()?, trials, config.master_seed)?;
    let mut table = Table::new(&["n", "trials", "hits", "p_hat", "stderr"]);
    for p in &curve.points {
        table.push(vec![u(p.scale as u64), u(p.trials), u(p.hits), f(p.estimate), f(p.stderr)]);
    }
    let mut out = output(table, trials);
    out.summary = json!({ "cap": curve.cap, "capped": curve.capped, "cutoff": curve.cutoff });
    Ok(out)
}

fn targets(config: &ExperimentConfig) -> Vec<Vertex> {
    config.x_list.iter().flatten().map(|x| Vertex::new(x.clone())).collect()
}

fn lattice_spec(config: &ExperimentConfig) -> Result<LatticeSpec, RunError> {
    config.model()?.lattice_spec().ok_or_else(|| RunError::Schema("a lattice model is required".into()))
}

fn two_point(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let trials = config.trials()?;
    let xs = targets(config);
    let curve = two_point_probe(&lattice_spec(config)?, &xs, trials, config.master_seed, config.guards.vertex_budget)?;
    let mut table = Table::new(&["x", "norm", "trials", "hits", "p_hat", "stderr", "undecided"]);
    for ((x, p), &und) in xs.iter().zip(&curve.points).zip(&curve.undecided) {
        let coords: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
        table.push(vec![coords.join(" "), f(p.scale), u(p.trials), u(p.hits), f(p.estimate), f(p.stderr), u(und)]);
    }
    let mut out = output(table, trials);
    out.flags.budget_exceeded = curve.undecided.iter().sum();
    Ok(out)
}

fn triangle(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let shells = config.triangle.as_ref().map_or(10, |t| t.shells);
    let (report, seeds): (TriangleReport, u64) = match config.triangle.as_ref().and_then(|t| t.synthetic.as_ref()) {
        Some(s) => (triangle_sum_probe(s.dim, s.amplitude, s.exponent, shells)?, 0),
        None => {
            let spec = lattice_spec(config)?;
            let trials = config.trials()?;
            let curve = two_point_probe(&spec, &targets(config), trials, config.master_seed, config.guards.vertex_budget)?;
            (triangle_from_curve(spec.dim, &curve, shells)?, trials)
        }
    };
    let mut table = Table::new(&["k", "radius", "increment", "partial_sum"]);
    for s in &report.shells {
        table.push(vec![u(s.k), u(s.radius), f(s.increment), f(s.partial_sum)]);
    }
    let mut out = output(table, seeds);
    out.summary = json!({
        "amplitude": report.amplitude,
        "exponent": report.exponent,
        "increment_exponent": report.increment_exponent,
        "converging": report.converging,
    });
    Ok(out)
}

fn volume_recursion(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let trials = config.trials()?;
    let v = volume_recursion_check(&cluster_model(config)?, config.r_list()?, trials, config.master_seed, config.guards.vertex_budget)?;
    let mut table = Table::new(&["r", "g_r", "stderr_g_r", "g_2r", "stderr_g_2r", "ratio"]);
    for row in &v.rows {
        table.push(vec![u(row.r), f(row.g_r), f(row.stderr_g_r), f(row.g_2r), f(row.stderr_g_2r), f(row.ratio)]);
    }
    let mut out = output(table, trials);
    out.flags.budget_exceeded = v.budget_exceeded;
    Ok(out)
}

fn pc_estimate(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let pc = config.pc.as_ref().ok_or_else(|| RunError::Schema("pc section is required".into()))?;
    let trials = config.trials()?;
    let opts = PcOptions {
        r_probe: pc.r_probe,
        trials,
        seed: config.master_seed,
        bracket: pc.bracket,
        statistic: pc.statistic,
        tolerance: pc.tolerance,
        budget: config.guards.vertex_budget,
    };
    let est = estimate_pc(&cluster_model(config)?, &opts)?;
    let mut table = Table::new(&[
        "p_hat",
        "uncertainty",
        "statistic",
        "r_probe",
        "bracket_lo",
        "bracket_hi",
        "statistic_stderr",
        "statistic_slope",
        "evaluations",
    ]);
    table.push(vec![
        f(est.p_hat),
        f(est.uncertainty),
        format!("{:?}", pc.statistic),
        u(pc.r_probe),
        f(est.bracket.0),
        f(est.bracket.1),
        f(est.statistic_stderr),
        f(est.statistic_slope),
        u(est.evaluations as u64),
    ]);
    let mut out = output(table, trials);
    out.flags.budget_exceeded = est.budget_exceeded;
    out.summary = json!({ "method": est.method });
    Ok(out)
}

fn iic_tree(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let ModelConfig::Tree { ell } = config.model()? else {
        return Err(RunError::Schema("iic-tree needs a tree model".into()));
    };
    let spec = TreeSpec::new(*ell)?;
    let radius = config.radius.unwrap_or(1);
    let samples = config.samples()?;
    let deadline = Deadline::new(config.guards.wall_clock_secs);
    let (trees, failure) = over_samples(samples, &deadline, |i| {
        Ok(KestenTree::sample_guarded(&spec, radius, derive_seed(config.master_seed, i), config.guards.max_vertices)?)
    });
    let mut table = Table::new(&["sample", "seed", "vertices", "edges", "boundary"]);
    let mut out = output(Table::default(), samples);
    for (i, t) in trees.into_iter().enumerate() {
        let g = t.graph;
        let seed = derive_seed(config.master_seed, i as u64);
        table.push(vec![u(i as u64), u(seed), u(g.n() as u64), u(g.edge_count() as u64), u(*g.level_sizes().last().unwrap())]);
        if config.write_graphs {
            out.graphs.push((format!("tree_{i}"), g));
        }
    }
    out.table = table;
    out.failure = failure;
    Ok(out)
}

fn iic_lattice(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let spec = lattice_spec(config)?;
    let samples = config.samples()?;
    let g = &config.guards;
    let deadline = Deadline::new(g.wall_clock_secs);
    let xs = targets(config);
    let (draws, failure) = over_samples(samples, &deadline, |i| {
        let seed = derive_seed(config.master_seed, i);
        Ok(match (config.radius, xs.first()) {
            (Some(r), _) => sample_iic_ball(&spec, r, g.max_attempts, seed, g.vertex_budget)?,
            (None, Some(x)) => {
                let box_radius = config.box_radius.unwrap_or(2 * x.sup_norm());
                sample_iic_two_point(&spec, x, box_radius, g.max_attempts, seed, g.vertex_budget)?
            }
            (None, None) => return Err(RunError::Schema("iic-lattice needs radius or x_list".into())),
        })
    });
    let mut table = Table::new(&["sample", "config_seed", "attempts", "undecided", "vertices", "edges", "depth"]);
    let mut out = output(Table::default(), samples);
    for (i, s) in draws.into_iter().enumerate() {
        out.flags.budget_exceeded += s.undecided;
        table.push(vec![
            u(i as u64),
            u(s.config_seed),
            u(s.attempts),
            u(s.undecided),
            u(s.graph.n() as u64),
            u(s.graph.edge_count() as u64),
            u(s.graph.max_depth()),
        ]);
        if config.write_graphs {
            out.graphs.push((format!("lattice_{i}"), s.graph));
        }
    }
    out.table = table;
    out.failure = failure;
    out.summary = json!({ "seed_rule_attempts": "attempt j of sample i uses derive_seed(seed_i, j)" });
    Ok(out)
}

fn resistance(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let sampler = sampler(config)?;
    let r_list = config.r_list()?;
    let r_max = *r_list.last().unwrap();
    let samples = config.samples()?;
    let deadline = Deadline::new(config.guards.wall_clock_secs);
    // per sample and radius: (exact or None on solver failure, Nash-Williams)
    let (per_sample, failure) = over_samples(samples, &deadline, |i| {
        let g = sampler.sample(r_max, derive_seed(config.master_seed, i))?;
        r_list
            .iter()
            .map(|&r| {
                let exact = match resistance_to_level(&g, r) {
                    Ok(res) => Some(res.r_eff),
                    Err(Error::SolverFailure { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                Ok((exact, nash_williams_bound(&g, r)?.r_eff))
            })
            .collect::<Result<Vec<_>, RunError>>()
    });
    let mut table = Table::new(&[
        "r",
        "samples",
        "median_r_eff_over_r",
        "mean_r_eff",
        "stderr_r_eff",
        "mean_nash_williams",
        "nash_williams_below_exact",
    ]);
    let mut out = output(Table::default(), samples);
    for (j, &r) in r_list.iter().enumerate() {
        let mut ratios = Vec::new();
        let mut exact = Moments::default();
        let mut nw = Moments::default();
        let mut below = 0u64;
        for s in &per_sample {
            let (e, b) = s[j];
            nw.push(b);
            match e {
                Some(e) => {
                    exact.push(e);
                    ratios.push(e / r as f64);
                    below += (b <= e * (1.0 + 1e-9)) as u64;
                }
                None => out.flags.solver_failure += 1,
            }
        }
        table.push(vec![
            u(r),
            u(exact.count),
            f(median(&mut ratios)),
            f(exact.mean()),
            f(exact.stderr()),
            f(nw.mean()),
            u(below),
        ]);
    }
    out.table = table;
    out.failure = failure;
    Ok(out)
}

fn lanes(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let sampler = sampler(config)?;
    let r_list = config.r_list()?;
    let r_max = *r_list.last().unwrap();
    let samples = config.samples()?;
    let lambdas = config.lambda_list.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
    let deadline = Deadline::new(config.guards.wall_clock_secs);
    let (reports, failure) = over_samples(samples, &deadline, |i| {
        let g = sampler.sample(r_max, derive_seed(config.master_seed, i))?;
        Ok(r_list.iter().map(|&r| lane_report(&g, r)).collect::<Vec<_>>())
    });
    let mut table = Table::new(&["r", "lambda", "samples", "lane_rich_fraction", "mean_lanes", "stderr_lanes", "mean_lanes_per_level"]);
    for (j, &r) in r_list.iter().enumerate() {
        let totals: Moments = reports.iter().map(|rep| rep[j].total() as f64).collect();
        let levels = reports.first().map_or(0, |rep| rep[j].levels.len()).max(1) as f64;
        for &lambda in &lambdas {
            let rich = reports.iter().filter(|rep| rep[j].lane_rich(lambda)).count() as f64;
            table.push(vec![
                u(r),
                f(lambda),
                u(reports.len() as u64),
                f(rich / reports.len().max(1) as f64),
                f(totals.mean()),
                f(totals.stderr()),
                f(totals.mean() / levels),
            ]);
        }
    }
    let mut out = output(table, samples);
    out.failure = failure;
    Ok(out)
}

fn walk(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let sampler = sampler(config)?;
    let samples = config.samples()?;
    let trials = config.trials()? as usize;
    let hit_depths = config.r_list.clone().unwrap_or_default();
    let range_times = config.n_list.clone().unwrap_or_default();
    let radius = match (config.radius, hit_depths.last()) {
        (Some(r), _) => r,
        (None, Some(&d)) if range_times.is_empty() => d,
        _ => return Err(RunError::Schema("walk with range times needs radius".into())),
    };
    let max_steps = config.max_steps.unwrap_or(if hit_depths.is_empty() { *range_times.last().unwrap() } else { u64::MAX });
    let plan = WalkPlan { max_steps, hit_depths: hit_depths.clone(), range_times: range_times.clone(), stop_when_done: true };
    let deadline = Deadline::new(config.guards.wall_clock_secs);
    let (stats, failure) = over_samples(samples, &deadline, |i| {
        let seed = derive_seed(config.master_seed, i);
        let g = sampler.sample(radius, seed)?;
        Ok(simulate_walk(&g, &plan, trials, seed)?)
    });
    let mut table = Table::new(&["quantity", "scale", "samples", "mean", "stderr", "censored", "truncation_hits"]);
    let truncation: u64 = stats.iter().map(|s| s.truncation_hits as u64).sum();
    for (k, &d) in hit_depths.iter().enumerate() {
        let m: Moments = stats.iter().filter(|s| s.tau[k].count > 0).map(|s| s.tau[k].mean()).collect();
        let censored: u64 = stats.iter().map(|s| s.tau_censored[k] as u64).sum();
        table.push(vec!["tau".into(), u(d), u(m.count), f(m.mean()), f(m.stderr()), u(censored), u(truncation)]);
    }
    for (k, &n) in range_times.iter().enumerate() {
        let m: Moments = stats.iter().filter(|s| s.range[k].count > 0).map(|s| s.range[k].mean()).collect();
        let censored: u64 = stats.iter().map(|s| (s.trials as u64) - s.range[k].count).sum();
        table.push(vec!["range".into(), u(n), u(m.count), f(m.mean()), f(m.stderr()), u(censored), u(truncation)]);
    }
    let mut out = output(table, samples);
    out.flags.truncation_hit = truncation;
    out.failure = failure;
    Ok(out)
}

fn return_curve(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let sampler = sampler(config)?;
    let samples = config.samples()?;
    let r0 = config.radius.unwrap_or(1);
    let r_max = config.r_max.unwrap_or(8 * r0);
    let c = annealed_return_curve(sampler.as_ref(), r0, r_max, config.n_list()?, samples as usize, config.master_seed)?;
    let mut table = Table::new(&["n", "samples", "mean_p2n", "stderr_p2n"]);
    for ((&n, &m), &s) in c.n.iter().zip(&c.mean).zip(&c.stderr) {
        table.push(vec![u(n), u(samples), f(m), f(s)]);
    }
    let mut out = output(table, samples);
    out.flags.truncation_hit = c.flagged as u64;
    let mut radii = std::collections::BTreeMap::new();
    for r in &c.radii {
        *radii.entry(r.to_string()).or_insert(0u64) += 1;
    }
    out.summary = json!({ "final_radius_counts": radii });
    Ok(out)
}

fn j_lambda(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let sampler = sampler(config)?;
    let samples = config.samples()?;
    let t = j_lambda_frequency(sampler.as_ref(), config.r_list()?, config.lambda_list()?, samples, config.master_seed)?;
    let mut table = Table::new(&["r", "lambda", "samples", "hits", "frequency", "stderr"]);
    for row in &t.rows {
        table.push(vec![u(row.r), f(row.lambda), u(row.samples), u(row.hits), f(row.frequency), f(row.stderr)]);
    }
    let mut out = output(table, samples);
    out.flags.solver_failure = t.solver_failures;
    Ok(out)
}

fn fit(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let fc = config.fit.as_ref().ok_or_else(|| RunError::Schema("fit section is required".into()))?;
    let e = fit_exponent(&fc.points, &fc.policy)?;
    let mut table =
        Table::new(&["slope", "stderr_slope", "intercept", "fit_min", "fit_max", "points", "policy_id", "chi2_per_dof"]);
    table.push(vec![
        f(e.slope),
        f(e.stderr_slope),
        f(e.intercept),
        f(e.fit_range[0]),
        f(e.fit_range[1]),
        u(e.points.len() as u64),
        e.policy_id.clone(),
        f(e.chi2_per_dof),
    ]);
    Ok(output(table, 0))
}
