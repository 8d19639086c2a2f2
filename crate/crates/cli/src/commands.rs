use std::io::Read;
use std::path::{Path, PathBuf};

use ptm_energy::gradients::{
    finite_difference, grad_iptm, grad_ptm_energy, max_relative_error, sparsity_report, GradientReport, Metric,
};
use ptm_energy::hallucination::{
    read_design_config, toy_predictor, DesignConfig, DesignState, Designer, Objective, TrajectoryRecord,
    TrajectorySummary,
};
use ptm_energy::metrics::{
    self, apply_filters_with, FilterThresholds, FilterVerdict, MetricsReport, TmKernel,
};
use ptm_energy::screening::{score_candidates, screening_report, ChainSource, ScreeningMetric, ScreeningReport};
use ptm_energy::tensor_io::read_screening_csv;
use ptm_energy::DoubleDouble;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Category, CliError};
use crate::files::{ensure_dir, read_bins, read_chains, read_logits, read_vector, to_json, Outputs};
use crate::{DesignObjective, GradObjective, RankMetric, ScoreMetric, TensorInputs};

/// Largest finite-difference error `grad-report --check-fd` tolerates.
pub const FD_TOLERANCE: f64 = 1e-5;

const DEFAULT_KS: [usize; 3] = [5, 10, 50];

fn print_json(value: &impl Serialize) {
    println!("{}", to_json(value));
}

pub fn score(
    inputs: &TensorInputs,
    metric: ScoreMetric,
    plddt: Option<&Path>,
    out: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let logits = read_logits(&inputs.logits)?;
    let chains = read_chains(&inputs.chains, logits.len())?;
    let kernel = TmKernel::new(logits.len(), read_bins(inputs.bins.as_deref())?)?;
    let want = |m: ScoreMetric| metric == ScoreMetric::All || metric == m;

    let mut report = MetricsReport::default();
    if want(ScoreMetric::Ptm) {
        report.ptm = Some(metrics::ptm(&logits, &kernel)?);
    }
    if want(ScoreMetric::Iptm) {
        report.iptm = Some(metrics::iptm(&logits, &chains, &kernel)?);
    }
    if want(ScoreMetric::IptmMean) {
        report.iptm_mean = Some(metrics::iptm_mean(&logits, &chains, &kernel)?);
    }
    if want(ScoreMetric::PtmEnergy) {
        report.ptm_energy = Some(metrics::ptm_energy(&logits, &chains, &kernel)?);
    }
    if want(ScoreMetric::Ipae) {
        let (raw, norm) = metrics::expected_interface_pae(&logits, &chains, kernel.bin_centers())?;
        report.interface_pae_raw = Some(raw);
        report.interface_pae_norm = Some(norm);
    }
    if let Some(path) = plddt {
        let values = read_vector(path)?;
        report.plddt_mean = Some(metrics::plddt_mean(&values, &chains).map_err(|e| CliError::from(e).at(path))?);
    }

    if let Some(path) = out {
        let mut outputs = Outputs::default();
        outputs.add_json(path.to_path_buf(), &report);
        outputs.commit()?;
    }
    if json {
        print_json(&report);
    } else {
        let value = serde_json::to_value(&report).expect("report serialises");
        for (name, v) in value.as_object().into_iter().flatten() {
            println!("{name:<20} {v}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FdCheck {
    epsilon: f64,
    max_relative_error: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct GradSummary<'a> {
    objective: &'static str,
    residues: usize,
    bins: usize,
    interface_pairs: usize,
    value: f64,
    /// ipTM only: the reference residue the subgradient is taken at.
    argmax_row: Option<usize>,
    /// (i, j) pairs with any nonzero bin.
    support_pairs: usize,
    k: usize,
    engaged_fraction: f64,
    topk_frequency: &'a [usize],
    finite_difference: Option<FdCheck>,
}

pub fn grad_report(
    inputs: &TensorInputs,
    objective: GradObjective,
    k: usize,
    check_fd: Option<f64>,
    out: &Path,
    json: bool,
) -> Result<(), CliError> {
    let logits = read_logits(&inputs.logits)?;
    let chains = read_chains(&inputs.chains, logits.len())?;
    let kernel = TmKernel::new(logits.len(), read_bins(inputs.bins.as_deref())?)?;

    let (metric, grad, value, argmax_row) = match objective {
        GradObjective::PtmEnergy => {
            let g = grad_ptm_energy(&logits, &chains, &kernel)?;
            (Metric::PtmEnergy, g, metrics::ptm_energy(&logits, &chains, &kernel)?, None)
        }
        GradObjective::Iptm => {
            let g = grad_iptm(&logits, &chains, &kernel)?;
            (Metric::Iptm, g.grad, g.value, Some(g.argmax))
        }
    };
    let report: GradientReport = sparsity_report(std::slice::from_ref(&grad), &chains, k)?;

    let fd = match check_fd {
        Some(epsilon) => {
            let reference = finite_difference::<DoubleDouble>(metric, &logits, &chains, &kernel, epsilon)?;
            let err = max_relative_error(&grad, &reference);
            if !(err <= FD_TOLERANCE) {
                return Err(CliError::new(
                    Category::Invariant,
                    "GradientMismatch",
                    format!("analytic gradient differs from finite differences by {err:e} (tolerance {FD_TOLERANCE:e})"),
                ));
            }
            Some(FdCheck {
                epsilon,
                max_relative_error: err,
                tolerance: FD_TOLERANCE,
            })
        }
        None => None,
    };

    let summary = GradSummary {
        objective: metric.name(),
        residues: logits.len(),
        bins: logits.bins(),
        interface_pairs: chains.interface_len(),
        value,
        argmax_row,
        support_pairs: grad.support_pairs(),
        k,
        engaged_fraction: report.engaged_fraction,
        topk_frequency: &report.topk_frequency,
        finite_difference: fd,
    };
    ensure_dir(out)?;
    let mut outputs = Outputs::default();
    outputs.add_json(out.join("gradient_summary.json"), &summary);
    outputs.add(out.join("gradient_heatmap.csv"), report.heatmap_csv());
    let written = outputs.commit()?;

    if json {
        print_json(&summary);
    } else {
        println!("objective            {}", summary.objective);
        println!("value                {}", summary.value);
        if let Some(row) = argmax_row {
            println!("argmax row           {row}");
        }
        println!("support pairs        {} of {}", summary.support_pairs, logits.len() * logits.len());
        println!("engaged fraction     {} (k = {k})", summary.engaged_fraction);
        if let Some(fd) = &summary.finite_difference {
            println!("fd max rel. error    {:e}", fd.max_relative_error);
        }
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Serialize)]
struct SparsitySummary {
    k: usize,
    ptm_energy_engaged_fraction: f64,
    iptm_engaged_fraction: f64,
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    #[serde(flatten)]
    summary: TrajectorySummary<'a>,
    gradient_sparsity: Option<SparsitySummary>,
}

#[derive(Serialize)]
struct BatchSummary {
    objective: &'static str,
    trajectories: usize,
    seeds: Vec<u64>,
    terminated_early: usize,
    mean_final_loss: Option<f64>,
    mean_clash_count: Option<f64>,
    mean_energy_gradient_support: Option<f64>,
    all_greedy_traces_decreasing: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn objective_of(o: DesignObjective) -> Objective {
    match o {
        DesignObjective::PtmEnergy => Objective::PtmEnergy,
        DesignObjective::Iptm => Objective::Iptm,
        DesignObjective::IptmMean => Objective::IptmMean,
        DesignObjective::None => Objective::None,
    }
}

fn run_recorded(config: &DesignConfig, k: usize) -> Result<(TrajectoryRecord, Option<SparsitySummary>), CliError> {
    let predictor = toy_predictor::<f64>(config);
    let mut designer = Designer::new(&predictor, config)?.record_gradients(k)?;
    let record = designer.run(DesignState::seeded(config.binder_length, config.seed), config.seed)?;
    let sparsity = designer
        .recorder()
        .and_then(|r| r.reports().ok())
        .map(|(e, i)| SparsitySummary {
            k,
            ptm_energy_engaged_fraction: e.engaged_fraction,
            iptm_engaged_fraction: i.engaged_fraction,
        });
    Ok((record, sparsity))
}

#[allow(clippy::too_many_arguments)]
pub fn design(
    config_path: &Path,
    out: &Path,
    objective: Option<DesignObjective>,
    batch: usize,
    jobs: Option<usize>,
    seed: Option<u64>,
    k: usize,
    json: bool,
) -> Result<(), CliError> {
    let mut config = read_design_config(config_path).map_err(|e| CliError::from(e).at(config_path))?;
    if let Some(o) = objective {
        config.objective = objective_of(o);
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    if batch == 0 {
        return Err(CliError::validation("InvalidBatch", "--batch must be at least 1"));
    }

    let seeds: Vec<u64> = (0..batch as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let work = || -> Result<Vec<_>, CliError> {
        seeds
            .par_iter()
            .map(|&s| {
                let mut c = config.clone();
                c.seed = s;
                run_recorded(&c, k)
            })
            .collect()
    };
    let results = match jobs {
        Some(0) => return Err(CliError::validation("InvalidJobs", "--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::new(Category::Invariant, "ThreadPool", e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    ensure_dir(out)?;
    let mut outputs = Outputs::default();
    let mut fasta = String::new();
    for (record, sparsity) in &results {
        let stem = format!("trajectory_seed{}", record.seed);
        outputs.add(out.join(format!("{stem}.csv")), record.trace_csv());
        outputs.add_json(
            out.join(format!("{stem}.json")),
            &TrajectoryDoc {
                summary: record.summary(),
                gradient_sparsity: *sparsity,
            },
        );
        fasta.push_str(&record.fasta());
    }
    outputs.add(out.join("designs.fasta"), fasta);

    let records: Vec<&TrajectoryRecord> = results.iter().map(|(r, _)| r).collect();
    let completed = || records.iter().filter_map(|r| r.final_structure.as_ref());
    let summary = BatchSummary {
        objective: config.objective.name(),
        trajectories: records.len(),
        seeds: seeds.clone(),
        terminated_early: records.iter().filter(|r| r.terminated_early.is_some()).count(),
        mean_final_loss: mean(records.iter().filter_map(|r| r.final_loss())),
        mean_clash_count: mean(completed().map(|f| f.clash_count as f64)),
        mean_energy_gradient_support: mean(records.iter().filter_map(|r| r.energy_gradient_support.map(|v| v as f64))),
        all_greedy_traces_decreasing: records
            .iter()
            .all(|r| r.greedy_losses().windows(2).all(|w| w[1] < w[0])),
    };
    outputs.add_json(out.join("batch_summary.json"), &summary);
    let written = outputs.commit()?;

    if json {
        print_json(&summary);
    } else {
        for r in &records {
            let status = r.terminated_early.as_deref().unwrap_or("completed");
            let loss = r.final_loss().map_or("n/a".into(), |l| format!("{l:.6}"));
            println!("seed {:<6} loss {loss:<12} {}  {status}", r.seed, r.final_sequence);
        }
        println!("wrote {} files to {}", written.len(), out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct ScreenDoc<'a> {
    metric: &'static str,
    #[serde(flatten)]
    report: &'a ScreeningReport,
}

pub fn screen(
    table_path: &Path,
    metric: RankMetric,
    chains: Option<PathBuf>,
    bins: Option<&Path>,
    ks: Option<Vec<usize>>,
    out: &Path,
    json: bool,
) -> Result<(), CliError> {
    let table = read_screening_csv(table_path).map_err(|e| CliError::from(e).at(table_path))?;
    let metric = match metric {
        RankMetric::PtmEnergy => ScreeningMetric::PtmEnergy,
        RankMetric::Iptm => ScreeningMetric::Iptm,
        RankMetric::IptmMean => ScreeningMetric::IptmMean,
    };
    let source = ChainSource::Sibling { fallback: chains };
    let scored = score_candidates(&table, metric, &source, &read_bins(bins)?)?;
    let ks = ks.unwrap_or_else(|| DEFAULT_KS.iter().copied().filter(|&k| k <= scored.len()).collect());
    let report = screening_report(&scored, &ks)?;
    let doc = ScreenDoc {
        metric: metric.name(),
        report: &report,
    };

    ensure_dir(out)?;
    let mut outputs = Outputs::default();
    outputs.add_json(out.join("screening_report.json"), &doc);
    outputs.add(out.join("ranking.csv"), report.ranking_csv());
    outputs.add(out.join("histogram.csv"), report.histogram_csv());
    let written = outputs.commit()?;

    if json {
        print_json(&doc);
    } else {
        println!("metric        {}", doc.metric);
        println!("candidates    {} ({} positive)", report.candidates, report.positives);
        println!("AUPRC         {}", report.auprc);
        for p in &report.precision_at_k {
            println!("precision@{:<3} {}", p.k, p.precision);
        }
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn apply_override(t: &mut FilterThresholds, spec: &str) -> Result<(), CliError> {
    let bad = || CliError::validation("BadOverride", format!("expected NAME=VALUE, got {spec:?}"));
    let (name, value) = spec.split_once('=').ok_or_else(bad)?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    let slot = match name.trim() {
        "plddt_min" => &mut t.plddt_min,
        "iptm_min" => &mut t.iptm_min,
        "ptm_min" => &mut t.ptm_min,
        "interface_pae_max" => &mut t.interface_pae_max,
        other => {
            return Err(CliError::validation(
                "BadOverride",
                format!("unknown threshold {other:?} (plddt_min, iptm_min, ptm_min, interface_pae_max)"),
            ))
        }
    };
    *slot = value;
    Ok(())
}

pub fn filter(metrics_path: Option<&Path>, overrides: &[String], json: bool) -> Result<(), CliError> {
    let text = match metrics_path {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
            s
        }
    };
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| CliError::validation("MalformedReport", format!("metrics report is not valid JSON: {e}")))?;

    let mut thresholds = FilterThresholds::FOLDING_MODEL;
    for o in overrides {
        apply_override(&mut thresholds, o)?;
    }
    if thresholds != FilterThresholds::FOLDING_MODEL {
        eprintln!("WARNING: filter thresholds overridden; verdicts are NOT comparable to the standard folding-model filters");
        eprintln!("WARNING: active thresholds {thresholds:?}");
    }
    let verdict: FilterVerdict = apply_filters_with(&report, &thresholds)?;
    if json {
        print_json(&verdict);
    } else if verdict.pass {
        println!("pass");
    } else {
        let failed: Vec<String> = verdict
            .failed()
            .map(|c| format!("{} = {} (needs {} {})", c.name, c.value, c.comparison, c.threshold))
            .collect();
        println!("fail: {}", failed.join("; "));
    }
    Ok(())
}
