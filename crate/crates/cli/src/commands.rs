use std::fmt;
use std::path::Path;

use adyn_core::esc::certify_esc;
use adyn_core::excursions::ExcursionLaw;
use adyn_core::lnk::{after_fixation_profile, run_lnk};
use adyn_core::meta_graph::{build_l_scale_graph, build_meta_graph, check_no_cycles, sample_jump_chain};
use adyn_core::model::{load_model_file, TraitGraphModel, TraitSet};
use adyn_core::rates::exit_law;
use adyn_core::EscDescriptor;
use adyn_sim::simulator::{default_band_constant, esc_initial_counts, EscBand, FixWatch, RecordOptions};
use adyn_sim::validation::{
    estimate_exit_law, estimate_mutant_arrivals, exit_law_trend, ReplicateBudget, Thresholds,
};
use adyn_sim::{simulate, SimConfig, StopCondition};
use anyhow::{anyhow, bail, Result};
use serde_json::json;

use crate::manifest::{OutDir, RunManifest};
use crate::{Command, Format, ModelArgs, StopMode};

/// A Monte Carlo verdict failed under `--strict`.
#[derive(Debug)]
pub struct StatisticalFailure(pub Vec<String>);

impl fmt::Display for StatisticalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "statistical acceptance failed: {}", self.0.join("; "))
    }
}

impl std::error::Error for StatisticalFailure {}

fn load(args: &ModelArgs, command: &str) -> Result<(TraitGraphModel, RunManifest)> {
    let mut model = load_model_file(&args.model)?;
    let mut manifest = RunManifest::new(command);
    if let Some(alpha) = args.alpha {
        let mut cfg = model.to_config();
        cfg.alpha = alpha;
        model = TraitGraphModel::from_config(&cfg)?;
        manifest.overrides.insert("alpha".into(), alpha.to_string());
    }
    Ok((model.clone(), manifest.with_model(&args.model, &model)))
}

fn certify(model: &TraitGraphModel, list: &str) -> Result<EscDescriptor> {
    let set = model.parse_set(list)?;
    certify_esc(model, &set).map_err(|r| anyhow!(r.to_error(model, &set)))
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn out_dir(path: &Path, manifest: &mut RunManifest) -> Result<OutDir> {
    manifest.output_dir = Some(path.display().to_string());
    OutDir::create(path.to_path_buf())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::ValidateModel(args) => {
            let (m, _) = load(&args, "validate-model")?;
            let edges: usize = (0..m.n()).map(|v| m.out_edges(v).len()).sum();
            println!("ok: {} traits, {} edges, alpha = {}", m.n(), edges, m.alpha());
            Ok(())
        }
        Command::Analyze { model, levels, from, out } => {
            let (m, manifest) = load(&model, "analyze")?;
            let start = from.as_deref().map(|s| m.parse_set(s)).transpose()?;
            let mut manifest = manifest.param("levels", format!("{levels:?}"));
            if let Some(s) = &from {
                manifest = manifest.param("from", s);
            }
            let dir = out_dir(&out.out, &mut manifest)?;
            let g = build_meta_graph(&m, start.as_ref())?;
            dir.write("g_esc.json", &manifest.json(g.to_json(&m)))?;
            dir.write("g_esc.dot", &manifest.dot(&g.to_dot(&m)))?;
            let mut failed = Vec::new();
            for level in levels {
                let verdict = check_no_cycles(&g, &m, level)?;
                if !verdict.holds {
                    failed.push(format!("no-trapping assumption {}", verdict.describe(&g, &m)));
                    continue;
                }
                let gl = build_l_scale_graph(&g, &m, level)?;
                dir.write(&format!("g{level}.json"), &manifest.json(gl.to_json(&m)))?;
                dir.write(&format!("g{level}.dot"), &manifest.dot(&gl.to_dot(&m)))?;
            }
            if !failed.is_empty() {
                bail!("{}", failed.join("; "));
            }
            Ok(())
        }
        Command::Rates { model, resident } => {
            let (m, manifest) = load(&model, "rates")?;
            let esc = certify(&m, &resident)?;
            let law = exit_law(&m, &esc)?;
            print!("{}", manifest.param("resident", &resident).json(law.to_json(&m)));
            Ok(())
        }
        Command::Lnk { model, beta, resident, after_fixation, out } => {
            let (m, mut manifest) = load(&model, "lnk")?;
            let initial = match (beta, resident) {
                (Some(b), _) => {
                    manifest = manifest.param("beta", format!("{b:?}"));
                    b
                }
                (None, Some(r)) => {
                    let esc = certify(&m, &r)?;
                    manifest = manifest.param("resident", &r);
                    match after_fixation {
                        Some(w) => {
                            let w_idx = m.vertex(&w)?;
                            if !esc.mutant_candidates.contains(w_idx) {
                                bail!("{w} is not a mutant candidate of {}", m.format_set(&esc.resident));
                            }
                            manifest = manifest.param("after_fixation", &w);
                            after_fixation_profile(&m, &esc, w_idx)
                        }
                        None => esc.beta_profile.clone(),
                    }
                }
                (None, None) => bail!("one of --beta or --resident is required"),
            };
            if initial.len() != m.n() {
                bail!("--beta needs {} values, got {}", m.n(), initial.len());
            }
            let traj = run_lnk(&m, &initial)?;
            let dir = out_dir(&out.out, &mut manifest)?;
            dir.write("lnk.csv", &manifest.csv(&traj.to_csv(&m)))?;
            dir.write("lnk.json", &manifest.json(traj.summary_json(&m)))?;
            Ok(())
        }
        Command::Simulate {
            model,
            k,
            seed,
            resident,
            counts,
            horizon,
            stop,
            target,
            band_c,
            stride,
            grid,
            max_events,
            out,
        } => {
            let (m, manifest) = load(&model, "simulate")?;
            let seed = seed_or_fresh(seed);
            let esc = resident.as_deref().map(|r| certify(&m, r)).transpose()?;
            let initial = match (&counts, &esc) {
                (Some(c), _) => c.clone(),
                (None, Some(e)) => esc_initial_counts(&m, e, k),
                (None, None) => bail!("one of --counts or --resident is required"),
            };
            let fix = esc.as_ref().map(|e| FixWatch::new(&m, e, k));
            let mut stop_condition = match stop {
                StopMode::Horizon => StopCondition::horizon(horizon),
                StopMode::Fixation => {
                    StopCondition::at_fixation(horizon, fix.ok_or_else(|| anyhow!("--stop fixation needs --resident"))?)
                }
                StopMode::Esc => {
                    let t = certify(&m, target.as_deref().ok_or_else(|| anyhow!("--stop esc needs --target"))?)?;
                    let c = band_c.unwrap_or_else(|| default_band_constant(&t));
                    StopCondition::at_esc(horizon, fix, EscBand::new(&m, &t, k, c))
                }
            };
            if let Some(n) = max_events {
                stop_condition = stop_condition.with_max_events(n);
            }
            let config = SimConfig {
                k,
                stop: stop_condition,
                record: RecordOptions { stride, grid, ..RecordOptions::default() },
            };
            let record = simulate(&m, &config, &initial, seed)?;
            let mut manifest = manifest
                .param("k", k)
                .param("horizon", horizon)
                .param("stop", format!("{stop:?}").to_lowercase())
                .param("stride", stride);
            manifest.seed = Some(seed);
            let dir = out_dir(&out.out, &mut manifest)?;
            dir.write("trajectory.csv", &manifest.csv(&record.to_csv(&m)))?;
            let summary = json!({
                "k": record.k,
                "seed": record.seed,
                "initial": record.initial,
                "end": record.end,
                "time": record.final_state.time,
                "final_counts": record.final_state.counts,
                "events": record.events,
                "t_fix": record.t_fix.map(|f| json!({"time": f.time, "trait": m.id(f.trait_index)})),
                "t_esc": record.t_esc,
                "max_rate_drift": record.max_rate_drift,
                "samples": record.samples.len(),
            });
            dir.write("record.json", &manifest.json(summary))?;
            Ok(())
        }
        Command::Montecarlo {
            model,
            resident,
            k,
            replicates,
            seed,
            arrivals,
            horizon,
            mean_tolerance,
            ks_alpha,
            split_sigma,
            strict,
            out,
        } => {
            let (m, manifest) = load(&model, "montecarlo")?;
            let seed = seed_or_fresh(seed);
            let esc = certify(&m, &resident)?;
            let mut manifest = manifest
                .param("resident", &resident)
                .param("k", format!("{k:?}"))
                .param("replicates", replicates);
            manifest.seed = Some(seed);
            let dir = out_dir(&out.out, &mut manifest)?;
            let mut failures = Vec::new();
            if let Some(target) = arrivals {
                let t = m.vertex(&target)?;
                let mut reports = Vec::new();
                for (i, &kk) in k.iter().enumerate() {
                    let r = estimate_mutant_arrivals(&m, &esc, kk, t, replicates, seed + i as u64, horizon)?;
                    if r.relative_error.is_some_and(|e| e > mean_tolerance) {
                        failures.push(format!("K={kk}: arrival mean off by {:.1}%", 100.0 * r.relative_error.unwrap()));
                    }
                    if r.index_independent == Some(false) {
                        failures.push(format!("K={kk}: first and second inter-arrival means differ"));
                    }
                    reports.push(r);
                }
                let manifest = manifest.param("arrivals", &target).param("horizon", horizon);
                dir.write("arrivals.json", &manifest.json(json!({ "reports": reports })))?;
            } else {
                let thresholds = Thresholds { mean_tolerance, ks_alpha, split_sigma };
                let mut reports = Vec::new();
                for (i, &kk) in k.iter().enumerate() {
                    let r = estimate_exit_law(
                        &m,
                        &esc,
                        kk,
                        replicates,
                        seed + i as u64,
                        ReplicateBudget::default(),
                        thresholds,
                    )?;
                    dir.write(&format!("times_k{kk}.csv"), &manifest.csv(&r.times_csv()))?;
                    reports.push(r);
                }
                let trend = exit_law_trend(&reports);
                if let Some(top) = reports.last() {
                    let v = &top.verdicts;
                    for (ok, what) in [(v.mean, "mean"), (v.ks, "KS"), (v.split, "split")] {
                        if !ok {
                            failures.push(format!("K={}: {what} verdict failed", top.k));
                        }
                    }
                    if top.partial {
                        failures.push(format!("K={}: replicate budget exhausted", top.k));
                    }
                }
                if !trend.non_increasing {
                    failures.push("error does not decrease with K".into());
                }
                dir.write("report.json", &manifest.json(json!({ "reports": reports, "trend": trend })))?;
            }
            if strict && !failures.is_empty() {
                return Err(StatisticalFailure(failures).into());
            }
            for f in &failures {
                eprintln!("warning: {f}");
            }
            Ok(())
        }
        Command::Excursion { rho, min_rows, format } => {
            let law = ExcursionLaw::new(rho)?;
            let manifest = RunManifest::new("excursion").param("rho", rho);
            let table = law.table(min_rows);
            match format {
                Format::Csv => {
                    let mut body = String::from("k,pmf\n");
                    for (k, p) in &table {
                        body.push_str(&format!("{k},{p}\n"));
                    }
                    body.push_str(&format!("lambda,{}\n", law.mean_births));
                    print!("{}", manifest.csv(&body));
                }
                Format::Json => {
                    let rows: Vec<_> = table.iter().map(|(k, p)| json!({"k": k, "pmf": p})).collect();
                    print!("{}", manifest.json(json!({"rho": rho, "lambda": law.mean_births, "pmf": rows})));
                }
                Format::Dot => bail!("excursion supports --format csv or json"),
            }
            Ok(())
        }
        Command::ExportDot { model, level, from, format } => {
            let (m, mut manifest) = load(&model, "export-dot")?;
            let start = from.as_deref().map(|s| m.parse_set(s)).transpose()?;
            let g = build_meta_graph(&m, start.as_ref())?;
            let (dot, value) = match level {
                None => (g.to_dot(&m), g.to_json(&m)),
                Some(l) => {
                    manifest = manifest.param("level", l);
                    let verdict = check_no_cycles(&g, &m, l)?;
                    if !verdict.holds {
                        bail!("no-trapping assumption {}", verdict.describe(&g, &m));
                    }
                    let gl = build_l_scale_graph(&g, &m, l)?;
                    (gl.to_dot(&m), gl.to_json(&m))
                }
            };
            match format {
                Format::Dot => print!("{}", manifest.dot(&dot)),
                Format::Json => print!("{}", manifest.json(value)),
                Format::Csv => bail!("export-dot supports --format dot or json"),
            }
            Ok(())
        }
        Command::JumpChain { model, from, steps, seed } => {
            let (m, manifest) = load(&model, "jump-chain")?;
            let seed = seed_or_fresh(seed);
            let start = m.parse_set(&from)?;
            let g = build_meta_graph(&m, Some(&start))?;
            let sample = sample_jump_chain(&g, &start, steps, seed)?;
            let set = |s: &TraitSet| m.format_set(s);
            let value = json!({
                "start": set(&sample.start),
                "steps": sample.steps.iter().map(|s| json!({
                    "from": set(&s.from),
                    "to": set(&s.to),
                    "waiting_time": s.waiting_time,
                    "exponent": s.exponent,
                })).collect::<Vec<_>>(),
                "end": sample.end,
            });
            let mut manifest = manifest.param("from", &from).param("steps", steps);
            manifest.seed = Some(seed);
            print!("{}", manifest.json(value));
            Ok(())
        }
    }
}
