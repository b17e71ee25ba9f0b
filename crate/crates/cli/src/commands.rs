use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use dsnbench_core::analytics::{
    compare_report, efd_segment_expectation, empirical_efd, fit_exponential, fit_power_law, predict_efd,
    resource_fit, zero_efd_probability, SegmentMethod,
};
use dsnbench_core::harness::Mode;
use dsnbench_core::topology::synth_topology as make_topology;
use dsnbench_core::trace::{build_forward_forest, extract_stats, parse_trace, synth_trace as make_trace, write_trace};
use dsnbench_core::{run_simulation, EfdReport, FittedModel, SimConfig, SimLog, Timestamp, Topology, TraceEvent};

use crate::{AnalyzeArgs, CompareArgs, FitArgs, ModelArgs, PredictArgs, RunArgs, SynthTopologyArgs, SynthTraceArgs};

pub enum Outcome {
    Done,
    Flagged,
}

const PORT_BASE_VAR: &str = "DSNBENCH_PORT_BASE";

/// Fails listing every input that does not exist, not just the first.
fn require(paths: &[&Path]) -> Result<()> {
    let missing: Vec<String> = paths.iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        bail!("missing input: {}", missing.join(", "));
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load_topology(p: &Path) -> Result<Topology> {
    Topology::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))
}

fn load_trace(p: &Path) -> Result<Vec<TraceEvent>> {
    let text = read(p)?;
    let parsed = parse_trace(text.lines()).with_context(|| format!("parsing {}", p.display()))?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", p.display());
    }
    Ok(parsed.events)
}

fn load_model(p: Option<&Path>) -> Result<FittedModel> {
    match p {
        Some(p) => FittedModel::from_text(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(FittedModel::baseline()),
    }
}

pub fn synth_topology(a: SynthTopologyArgs) -> Result<Outcome> {
    let topo = make_topology(a.users, a.mean_followees, a.seed)?;
    emit(a.out.as_deref(), &topo.render())?;
    Ok(Outcome::Done)
}

pub fn synth_trace(a: SynthTraceArgs) -> Result<Outcome> {
    require(&[&a.topology])?;
    let topo = load_topology(&a.topology)?;
    let model = load_model(a.model.as_deref())?;
    let events = make_trace(&model, a.roots, (Timestamp::ZERO, a.span), &topo, a.seed)?;
    emit(a.out.as_deref(), &write_trace(&events))?;
    Ok(Outcome::Done)
}

fn gap_label(h: Timestamp) -> String {
    if h.millis() % 1000 == 0 {
        format!("{}s", h.millis() / 1000)
    } else {
        format!("{}ms", h.millis())
    }
}

pub fn run(a: RunArgs) -> Result<Outcome> {
    require(&[&a.trace, &a.topology])?;
    let trace = load_trace(&a.trace)?;
    let topo = load_topology(&a.topology)?;
    let port_base: u16 = match std::env::var(PORT_BASE_VAR) {
        Ok(v) => v.parse().with_context(|| format!("{PORT_BASE_VAR}={v} is not a port"))?,
        Err(_) => 0,
    };
    let config = |h: Timestamp, k: usize| -> Result<SimConfig> {
        let mut c = SimConfig::new(h, a.seed);
        c.mode = a.mode;
        c.accel = a.accel;
        c.network = a.network;
        c.forward_clock = a.forward_clock;
        c.start = a.start;
        c.duration = a.duration;
        c.feed_entry_limit = a.feed_limit;
        c.workers = a.workers;
        c.port = if port_base == 0 { 0 } else { port_base.checked_add(k as u16).context("port range overflow")? };
        Ok(c)
    };
    let jobs: Vec<(Timestamp, PathBuf)> = match a.h {
        Some(h) => vec![(h, a.out.clone())],
        None => {
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            a.sweep.iter().map(|&h| (h, a.out.join(format!("simlog_h{}.tsv", gap_label(h))))).collect()
        }
    };
    for (k, (h, path)) in jobs.iter().enumerate() {
        let started = Instant::now();
        let log = run_simulation(&trace, &topo, &config(*h, k)?)?;
        fs::write(path, log.render()).with_context(|| format!("writing {}", path.display()))?;
        let forwards = log.forwards().count();
        println!(
            "h={} mode={}: {} bots, {} messages ({} updates, {} forwards), {} undelivered, wall {:.2}s -> {}",
            h,
            a.mode.as_str(),
            log.bots.len(),
            log.messages.len(),
            log.messages.len() - forwards,
            forwards,
            log.undelivered.len(),
            started.elapsed().as_secs_f64(),
            path.display()
        );
    }
    Ok(Outcome::Done)
}

pub fn fit(a: FitArgs) -> Result<Outcome> {
    require(&[&a.trace])?;
    let trace = load_trace(&a.trace)?;
    let stats = extract_stats(&build_forward_forest(&trace));
    // zero gaps have no place on a log axis
    let delays: Vec<f64> = stats.intrinsic_delays.iter().copied().filter(|&d| d > 0.0).collect();
    let dropped = stats.intrinsic_delays.len() - delays.len();
    if dropped > 0 {
        log::warn!("{dropped} zero intrinsic delays left out of the power-law fit");
    }
    let p = fit_power_law(&delays, a.bins).context("fitting intrinsic delays")?;
    let e = fit_exponential(&stats.chain_lengths).context("fitting chain lengths")?;
    let model = FittedModel::new(p.a, p.b, p.i_min, p.i_max, e.c, e.d, stats.mean_l)?;
    println!(
        "a={:.4} b={:.4} c={:.4} d={:.4} mean_L={:.4} ({} roots, {} forwards, {} chains)",
        model.a,
        model.b,
        model.c,
        model.d,
        model.mean_l,
        stats.roots,
        stats.forwards,
        stats.chain_lengths.len()
    );
    if let Some(out) = &a.out {
        fs::write(out, model.to_text()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(Outcome::Done)
}

pub fn predict(a: PredictArgs) -> Result<Outcome> {
    if let Some(m) = &a.model {
        require(&[m])?;
    }
    let mut model = load_model(a.model.as_deref())?;
    if let Some(l) = a.mean_l {
        model = model.with_mean_l(l);
    }
    let mut csv = String::from("h,predicted_efd,segment_expectation,closed_form_segment,zero_efd_probability\n");
    for &h in &a.sweep {
        let segment = efd_segment_expectation(h, &model, SegmentMethod::Quadrature)?;
        let closed = efd_segment_expectation(h, &model, SegmentMethod::ClosedForm)?;
        let _ = writeln!(
            csv,
            "{h},{:.6},{segment:.6},{closed:.6},{:.6}",
            predict_efd(h, &model)?,
            zero_efd_probability(h, &model)?
        );
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(Outcome::Done)
}

struct Loaded {
    model: FittedModel,
    logs: Vec<SimLog>,
    reports: Vec<EfdReport>,
}

/// Reads the trace, model and logs; without a model file the mean chain
/// length comes from the trace itself.
fn load_runs(a: &ModelArgs) -> Result<Loaded> {
    let mut paths: Vec<&Path> = vec![&a.trace];
    paths.extend(a.model.as_deref());
    paths.extend(a.logs.iter().map(PathBuf::as_path));
    require(&paths)?;
    let trace = load_trace(&a.trace)?;
    let forest = build_forward_forest(&trace);
    let model = match &a.model {
        Some(_) => load_model(a.model.as_deref())?,
        None => FittedModel::baseline().with_mean_l(extract_stats(&forest).mean_l.max(1.0)),
    };
    let mut logs = Vec::new();
    let mut reports = Vec::new();
    for p in &a.logs {
        let log = SimLog::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
        let report = empirical_efd(&log, &forest).with_context(|| format!("analyzing {}", p.display()))?;
        reports.push(report.with_model(&model)?);
        logs.push(log);
    }
    Ok(Loaded { model, logs, reports })
}

pub fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let loaded = load_runs(&a.inputs)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (log, report) in loaded.logs.iter().zip(&loaded.reports) {
        let label = format!("{}_{}", gap_label(log.meta.h), log.meta.mode.as_str());
        fs::write(a.out.join(format!("efd_{label}.txt")), report.summary())?;
        fs::write(a.out.join(format!("efd_cdf_{label}.csv")), report.cdf_csv())?;
        println!(
            "h={} {}: mean EFD {:.2}s (model {:.2}s), zero-EFD fraction {:.3} over {} forwards",
            log.meta.h,
            log.meta.mode.as_str(),
            report.empirical_mean,
            report.analytical_mean.unwrap_or(f64::NAN),
            report.fraction_zero,
            report.forwards
        );
    }
    let mut gaps: Vec<i64> = loaded.logs.iter().map(|l| l.meta.h.millis()).collect();
    gaps.sort_unstable();
    gaps.dedup();
    if gaps.len() >= 3 {
        let r = resource_fit(&loaded.logs)?;
        fs::write(a.out.join("resources.csv"), r.to_csv())?;
        fs::write(a.out.join("resources.txt"), r.summary())?;
        println!("resources: beta_q={:.4} max residual {:.2e}", r.beta_q, r.max_query_residual());
    } else {
        log::info!("resource fit skipped: needs 3 distinct query gaps, have {}", gaps.len());
    }
    fs::write(a.out.join("model.txt"), loaded.model.to_text())?;
    if loaded.logs.iter().any(|l| l.meta.mode == Mode::Real) {
        log::info!("real-mode timestamps are reported on the trace timescale");
    }
    Ok(Outcome::Done)
}

pub fn compare(a: CompareArgs) -> Result<Outcome> {
    let loaded = load_runs(&a.inputs)?;
    let table = compare_report(&loaded.reports, &loaded.model, a.threshold)?;
    emit(a.out.as_deref(), &table.to_csv())?;
    Ok(if table.any_flagged() { Outcome::Flagged } else { Outcome::Done })
}
