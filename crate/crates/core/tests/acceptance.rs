//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting, so
//! `cargo test --test acceptance -- --nocapture` doubles as a report.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use dsnbench_core::analytics::{
    compare_report, discrete_length_mass, efd_segment_expectation, empirical_efd, fit_exponential, fit_power_law,
    resource_fit, zero_efd_probability, ChainLengthLaw, GapFlag, SegmentMethod, TruncatedPowerLaw,
    DEFAULT_GAP_THRESHOLD,
};
use dsnbench_core::channels::{feed_parse, feed_path, feed_render, Channel, ChannelConfig, LinkKind, Platform};
use dsnbench_core::harness::{behavior_forward_time, BotConfig, NetworkModel};
use dsnbench_core::message::{compose_forward_text, parse_forward_text};
use dsnbench_core::topology::synth_topology;
use dsnbench_core::trace::{build_forward_forest, extract_stats, filter_window, synth_trace};
use dsnbench_core::{
    run_simulation, Attachment, FittedModel, Message, MessageId, SimConfig, SimLog, Timestamp, Topology, TraceEvent,
};

const DAY: i64 = 86_400;

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n}: {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn day_trace(topo: &Topology, roots: usize, seed: u64) -> Vec<TraceEvent> {
    synth_trace(&FittedModel::baseline(), roots, (Timestamp::ZERO, Timestamp::from_secs(DAY)), topo, seed).unwrap()
}

fn day_config(h: i64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(Timestamp::from_secs(h), seed);
    cfg.start = Some(Timestamp::ZERO);
    cfg.duration = Some(Timestamp::from_secs(DAY));
    cfg
}

#[test]
fn c01_determinism() {
    let topo = synth_topology(1000, 20.0, 101).unwrap();
    let trace = day_trace(&topo, 500, 102);
    let cfg = day_config(300, 103);
    let t0 = Instant::now();
    let a = run_simulation(&trace, &topo, &cfg).unwrap().render();
    let first = t0.elapsed();
    let b = run_simulation(&trace, &topo, &cfg).unwrap().render();
    let identical = a == b;
    let ok = identical && first < Duration::from_secs(60);
    verdict(
        1,
        "determinism",
        ok,
        &format!("1000 bots, 500 roots, 24 h: identical={identical}, {} bytes, one run {:.2?} (< 60 s)", a.len(), first),
    );
}

/// Per edge, `T_posted - T_trace` and the hop's own share of it.
fn edge_efd_violations(trace: &[TraceEvent], log: &SimLog) -> (usize, usize) {
    let parent: HashMap<&str, &str> =
        trace.iter().filter_map(|e| e.parent_mid.as_deref().map(|p| (e.mid.as_str(), p))).collect();
    let t_trace: HashMap<&str, Timestamp> = trace.iter().map(|e| (e.mid.as_str(), e.t)).collect();
    let posted: HashMap<&str, Timestamp> = log.messages.iter().map(|m| (m.mid.as_str(), m.t_posted)).collect();
    let (mut edges, mut bad) = (0, 0);
    for m in log.forwards() {
        edges += 1;
        let p = parent[m.mid.as_str()];
        let hop = (m.t_posted - posted[p]) - (t_trace[m.mid.as_str()] - t_trace[p]);
        if m.t_posted < m.t_trace || hop < 0 {
            bad += 1;
        }
    }
    (edges, bad)
}

#[test]
fn c02_behavior_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut rule_failures = 0;
    for _ in 0..10_000 {
        let seen = Timestamp(rng.gen_range(0..10 * DAY * 1000));
        // a share of exact ties exercises the inclusive boundary
        let mf = if rng.gen_bool(0.05) { seen } else { Timestamp(rng.gen_range(0..10 * DAY * 1000)) };
        let got = behavior_forward_time(seen, mf);
        let want = if seen <= mf { mf } else { seen };
        if got != want {
            rule_failures += 1;
        }
    }
    let topo = synth_topology(300, 15.0, 203).unwrap();
    let trace = day_trace(&topo, 400, 204);
    let (mut edges, mut bad) = (0, 0);
    for (h, net) in [(60, NetworkModel::Ideal), (300, NetworkModel::Latency { mean: Timestamp(250) }), (3600, NetworkModel::Ideal)] {
        let mut cfg = SimConfig::new(Timestamp::from_secs(h), 205);
        cfg.network = net;
        let log = run_simulation(&trace, &topo, &cfg).unwrap();
        let (e, b) = edge_efd_violations(&trace, &log);
        edges += e;
        bad += b;
    }
    verdict(
        2,
        "behavior model",
        rule_failures == 0 && bad == 0 && edges > 0,
        &format!("10000 random pairs, {rule_failures} rule failures; {edges} replayed edges, {bad} negative EFD"),
    );
}

#[test]
fn c03_resource_law() {
    let topo = synth_topology(1000, 20.0, 301).unwrap();
    let trace = day_trace(&topo, 300, 302);
    let mut logs = Vec::new();
    let mut count_mismatches = 0;
    for h in [150, 300, 600, 1200] {
        let cfg = day_config(h, 303);
        let log = run_simulation(&trace, &topo, &cfg).unwrap();
        // exact poll count per bot from its phase
        for (bot, followees) in log.bots.iter().zip(&topo.followees) {
            let phase = BotConfig::new(&bot.uid, cfg.h, cfg.feed_entry_limit, cfg.seed).phase.millis();
            let polls = (DAY * 1000 - phase).div_euclid(h * 1000) + 1;
            if bot.counters.queries_issued != followees.len() as u64 * polls as u64 {
                count_mismatches += 1;
            }
        }
        logs.push(log);
    }
    let report = resource_fit(&logs).unwrap();
    let r = report.max_query_residual();
    verdict(
        3,
        "resource law",
        r < 1e-3 && count_mismatches == 0,
        &format!(
            "h in {{150,300,600,1200}}: beta_q = {:.4}, max relative residual {:.2e} (< 1e-3), {count_mismatches} per-bot count mismatches",
            report.beta_q, r
        ),
    );
}

/// Composite Simpson over `u = ln i`, where a power law is smooth.
fn simpson_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let (u0, u1) = (lo.ln(), hi.ln());
    let step = (u1 - u0) / n as f64;
    let g = |k: usize| {
        let i = (u0 + k as f64 * step).exp();
        f(i) * i
    };
    let inner: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * g(k)).sum();
    (g(0) + inner + g(n)) * step / 3.0
}

#[test]
fn c04_normalization() {
    let t0 = Instant::now();
    let m = FittedModel::baseline();
    let area = simpson_log(|i| m.delay_pdf(i), m.i_min, m.i_max, 20_000);
    let r = 10f64.powf(m.c);
    // geometric series in closed form
    let analytic = 10f64.powf(m.d) * r * (1.0 - r.powi(1000)) / ((1.0 - r) * m.z_l);
    let summed = discrete_length_mass(m.c, m.d, m.z_l, 1000);
    let elapsed = t0.elapsed();
    let ok = (area - 1.0).abs() < 1e-6 && (summed - analytic).abs() < 1e-6 && elapsed < Duration::from_secs(1);
    verdict(
        4,
        "normalization",
        ok,
        &format!(
            "integral of p(i) = {area:.10}, sum of p(l) to 1000 = {summed:.10} vs geometric {analytic:.10}, {elapsed:.2?}"
        ),
    );
}

#[test]
fn c05_quadrature_vs_monte_carlo() {
    let t0 = Instant::now();
    let m = FittedModel::baseline();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for h in [60.0, 300.0, 600.0, 1800.0, 3600.0] {
        let q = efd_segment_expectation(h, &m, SegmentMethod::Quadrature).unwrap();
        let mc = efd_segment_expectation(h, &m, SegmentMethod::MonteCarlo { seed: 505, n: 1_000_000 }).unwrap();
        let rel = (q - mc).abs() / q;
        worst = worst.max(rel);
        parts.push(format!("h={h}: {q:.3}/{mc:.3}"));
    }
    let elapsed = t0.elapsed();
    verdict(
        5,
        "quadrature vs monte carlo",
        worst < 0.01 && elapsed < Duration::from_secs(30),
        &format!("{}; worst relative gap {:.3}% (< 1%), {elapsed:.2?}", parts.join(", "), worst * 100.0),
    );
}

#[test]
fn c06_fit_recovery() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let law = TruncatedPowerLaw::new(-1.03, 1.0, 30265.0).unwrap();
    let delays: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
    let lengths_law = ChainLengthLaw::new(-0.7).unwrap();
    let lengths: Vec<u32> = (0..100_000).map(|_| lengths_law.sample(&mut rng)).collect();
    let a = fit_power_law(&delays, 30).unwrap().a;
    let c = fit_exponential(&lengths).unwrap().c;
    let elapsed = t0.elapsed();
    let ok = (a + 1.03).abs() <= 0.05 && (c + 0.7).abs() <= 0.05 && elapsed < Duration::from_secs(30);
    verdict(
        6,
        "fit recovery",
        ok,
        &format!("a = {a:.4} (true -1.03), c = {c:.4} (true -0.7), tolerance 0.05, {elapsed:.2?}"),
    );
}

#[test]
fn c07_simulation_vs_model() {
    let t0 = Instant::now();
    let topo = synth_topology(1000, 20.0, 701).unwrap();
    let trace = day_trace(&topo, 2000, 702);
    let forest = build_forward_forest(&trace);
    let model = FittedModel::baseline().with_mean_l(extract_stats(&forest).mean_l);
    let mut reports = Vec::new();
    for h in [30, 600, 1200, 1800, 3600] {
        let mut cfg = SimConfig::new(Timestamp::from_secs(h), 703);
        cfg.network = NetworkModel::Latency { mean: Timestamp(250) };
        let log = run_simulation(&trace, &topo, &cfg).unwrap();
        reports.push(empirical_efd(&log, &forest).unwrap());
    }
    let table = compare_report(&reports, &model, DEFAULT_GAP_THRESHOLD).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for row in &table.rows {
        let want = if row.h < 600.0 { GapFlag::UnderPredicted } else { GapFlag::Ok };
        ok &= row.flag == want && (row.h < 600.0 || row.relative_gap.abs() <= 0.15);
        parts.push(format!("h={}: {:+.1}% {}", row.h, row.relative_gap * 100.0, row.flag.as_str()));
    }
    let elapsed = t0.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    verdict(7, "simulation vs model", ok, &format!("mean_L = {:.3}; {}; {elapsed:.2?}", model.mean_l, parts.join(", ")));
}

#[test]
fn c08_zero_efd_fraction() {
    let topo = synth_topology(1000, 20.0, 801).unwrap();
    let trace = day_trace(&topo, 8000, 802);
    let forest = build_forward_forest(&trace);
    let log = run_simulation(&trace, &topo, &SimConfig::new(Timestamp::from_secs(300), 803)).unwrap();
    let simulated = empirical_efd(&log, &forest).unwrap().edge_fraction_zero;
    let predicted = zero_efd_probability(300.0, &FittedModel::baseline()).unwrap();
    verdict(
        8,
        "zero-EFD fraction",
        (simulated - predicted).abs() <= 0.02,
        &format!("h = 300 s: simulated {simulated:.4}, quadrature {predicted:.4}, tolerance 0.02"),
    );
}

fn arb_feed_message() -> impl Strategy<Value = Message> {
    (
        "[a-z0-9]{1,6}",
        "[a-zA-Z0-9._-]{1,12}",
        "[^\\s]{1,8}",
        "\\PC{1,10}",
        "[\\PC\n\t]{0,40}",
        0i64..4_102_444_800_000,
        proptest::collection::vec("[a-z:/.0-9]{1,16}", 0..2),
    )
        .prop_map(|(chan, native, uid, uname, text, ms, links)| Message {
            id: MessageId::new("feed", chan, native),
            userid: uid,
            username: uname,
            text,
            time: Timestamp(ms),
            attachments: links.into_iter().map(Attachment::link).collect(),
            optional_fields: Default::default(),
            raw: Vec::new(),
        })
}

fn pull_push_equal(texts: &[String]) -> bool {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let feed = |uid: &str| feed_path(root, uid).to_str().unwrap().to_string();
    let inbox = |uid: &str| root.join(format!("inbox_{uid}")).to_str().unwrap().to_string();
    let mut poster = Channel::open(ChannelConfig::new("pp", Platform::FeedPull, "src", "s", &feed("src"))).unwrap();
    let mut puller = Channel::open(
        ChannelConfig::new("pf", Platform::FeedPull, "dst", "d", &feed("dst")).subscribe("src", feed("src"), LinkKind::Pull),
    )
    .unwrap();
    let mut pusher = Channel::open(
        ChannelConfig::new("ps", Platform::InboxPush, "src", "s", &inbox("src")).subscribe("dst", inbox("dst"), LinkKind::Push),
    )
    .unwrap();
    let mut receiver = Channel::open(ChannelConfig::new("pr", Platform::InboxPush, "dst", "d", &inbox("dst"))).unwrap();
    let (mut pulled, mut pushed) = (BTreeSet::new(), BTreeSet::new());
    for (i, text) in texts.iter().enumerate() {
        let now = Timestamp::from_secs(i as i64);
        poster.update(text, now).unwrap();
        pusher.update(text, now).unwrap();
        pulled.extend(puller.home_timeline(usize::MAX, now).unwrap().messages.iter().map(Message::digest));
        pushed.extend(receiver.home_timeline(usize::MAX, now).unwrap().messages.iter().map(Message::digest));
    }
    pulled.len() == texts.len() && pulled == pushed
}

#[test]
fn c09_channel_round_trips() {
    let seeded = |cases| {
        let config = Config { cases, failure_persistence: None, ..Config::default() };
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
    };
    let feed = seeded(1000).run(&proptest::collection::vec(arb_feed_message(), 0..8), |ms| {
        let mut expected = ms.clone();
        let bytes = feed_render(&ms, "owner", 100);
        let parsed = feed_parse(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        dsnbench_core::channels::sort_newest_first(&mut expected);
        prop_assert_eq!(parsed, expected);
        Ok(())
    });
    let forward = seeded(1000).run(
        &("[^\\s]{1,12}", ".{0,30}", proptest::option::of("[^R]{0,20}")),
        |(user, text, comment)| {
            let composed = compose_forward_text(&user, &text, comment.as_deref());
            let parts = parse_forward_text(&composed).ok_or_else(|| TestCaseError::fail("unparsed"))?;
            prop_assert_eq!(parts.orig_username, user);
            prop_assert_eq!(parts.orig_text, text);
            prop_assert_eq!(parts.comment, comment.unwrap_or_default());
            Ok(())
        },
    );
    let delivery = seeded(100).run(&proptest::collection::vec("[a-z \\n]{0,12}", 1..12), |texts| {
        prop_assert!(pull_push_equal(&texts));
        Ok(())
    });
    fn show<E: std::fmt::Display>(e: Option<E>) -> String {
        e.map_or("ok".to_string(), |e| e.to_string())
    }
    verdict(
        9,
        "channel round-trips",
        feed.is_ok() && forward.is_ok() && delivery.is_ok(),
        &format!(
            "feed render/parse x1000 {}, forward text x1000 {}, pull/push sets x100 {}",
            show(feed.as_ref().err()),
            show(forward.as_ref().err()),
            show(delivery.as_ref().err())
        ),
    );
}

/// Peak resident set of this process in bytes. Shared with every test that
/// ran concurrently, so it over-states a single run.
fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[test]
fn c10_full_scale() {
    let t0 = Instant::now();
    let topo = synth_topology(6733, 20.0, 1001).unwrap();
    // a day of trace activity; the run drains its own tail past midnight
    let trace = filter_window(&day_trace(&topo, 1168, 1002), Timestamp::ZERO, Timestamp::from_secs(DAY)).unwrap();
    let forest = build_forward_forest(&trace);
    let log = run_simulation(&trace, &topo, &SimConfig::new(Timestamp::from_secs(300), 1003)).unwrap();
    let span = (log.meta.end - log.meta.start) as f64 / 3_600_000.0;
    let report = empirical_efd(&log, &forest).unwrap();
    let elapsed = t0.elapsed();
    let peak = peak_rss();
    let mem_ok = peak.is_some_and(|b| b < 2 << 30);
    let zero = report.fraction_zero;
    let ok = elapsed < Duration::from_secs(600) && mem_ok && zero > 0.4 && zero < 0.9;
    verdict(
        10,
        "full scale",
        ok,
        &format!(
            "6733 bots, 1168 roots + {} forwards, {span:.1} h simulated, h = 300 s: zero-EFD fraction {zero:.3} in (0.4, 0.9), {elapsed:.2?}, peak RSS {}",
            report.forwards,
            peak.map_or("unavailable".to_string(), |b| format!("{:.0} MiB", b as f64 / (1 << 20) as f64)),
        ),
    );
}
