//! SimLog text format.
//!
//! ```text
//! # key=value            run metadata
//! MSG mid uid kind T_trace T_posted
//! BOT uid queries_issued queries_served bytes_served polls_completed messages_stored
//! ```
//!
//! Fields are tab-separated and times are decimal seconds in trace timescale.

use std::fmt::Write as _;

use super::{ForwardClock, HarnessError, Mode, NetworkModel};
use crate::counters::ResourceCounters;
use crate::time::Timestamp;
use crate::trace::TraceKind;

pub const SIMLOG_MAGIC: &str = "# dsnbench-simlog 1";

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub mode: Mode,
    pub h: Timestamp,
    pub seed: u64,
    pub accel: f64,
    pub network: NetworkModel,
    pub forward_clock: ForwardClock,
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgRecord {
    pub mid: String,
    pub uid: String,
    pub kind: TraceKind,
    pub t_trace: Timestamp,
    pub t_posted: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BotRecord {
    pub uid: String,
    pub counters: ResourceCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub meta: RunMeta,
    pub messages: Vec<MsgRecord>,
    pub bots: Vec<BotRecord>,
    /// Trace forwards that never fired before the run ended.
    pub undelivered: Vec<String>,
}

impl SimLog {
    pub fn forwards(&self) -> impl Iterator<Item = &MsgRecord> {
        self.messages.iter().filter(|m| m.kind == TraceKind::Forward)
    }

    pub fn totals(&self) -> ResourceCounters {
        let mut t = ResourceCounters::default();
        for b in &self.bots {
            t += b.counters;
        }
        t
    }

    pub fn render(&self) -> String {
        let m = &self.meta;
        let mut out = String::with_capacity(64 * (self.messages.len() + self.bots.len()) + 256);
        let _ = writeln!(out, "{SIMLOG_MAGIC}");
        let _ = writeln!(out, "# mode={}", m.mode.as_str());
        let _ = writeln!(out, "# h={}", m.h);
        let _ = writeln!(out, "# seed={}", m.seed);
        let _ = writeln!(out, "# accel={}", m.accel);
        let _ = writeln!(out, "# network={}", m.network);
        let _ = writeln!(out, "# forward_clock={}", m.forward_clock.as_str());
        let _ = writeln!(out, "# start={}", m.start);
        let _ = writeln!(out, "# end={}", m.end);
        if m.mode == Mode::Real {
            // raw wall offsets are the trace-timescale offsets divided by accel
            let _ = writeln!(out, "# raw_timescale=(t-start)/{}", m.accel);
        }
        let _ = writeln!(out, "# bots={}", self.bots.len());
        let _ = writeln!(out, "# messages={}", self.messages.len());
        for mid in &self.undelivered {
            let _ = writeln!(out, "# undelivered={mid}");
        }
        for r in &self.messages {
            let _ = writeln!(out, "MSG\t{}\t{}\t{}\t{}\t{}", r.mid, r.uid, r.kind.as_str(), r.t_trace, r.t_posted);
        }
        for b in &self.bots {
            let c = &b.counters;
            let _ = writeln!(
                out,
                "BOT\t{}\t{}\t{}\t{}\t{}\t{}",
                b.uid, c.queries_issued, c.queries_served, c.bytes_served, c.polls_completed, c.messages_stored
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<SimLog, HarnessError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == SIMLOG_MAGIC => {}
            _ => return Err(HarnessError::BadLog { line: 1, reason: "missing simlog header".into() }),
        }
        let mut meta = RunMeta {
            mode: Mode::Virtual,
            h: Timestamp::ZERO,
            seed: 0,
            accel: 1.0,
            network: NetworkModel::Ideal,
            forward_clock: ForwardClock::Relative,
            start: Timestamp::ZERO,
            end: Timestamp::ZERO,
        };
        let mut messages = Vec::new();
        let mut bots = Vec::new();
        let mut undelivered = Vec::new();
        for (n, line) in lines {
            let bad = |reason: String| HarnessError::BadLog { line: n + 1, reason };
            if let Some(kv) = line.strip_prefix("# ") {
                let Some((k, v)) = kv.split_once('=') else { continue };
                let ts = |v: &str| v.parse::<Timestamp>().map_err(|e| bad(e.to_string()));
                match k {
                    "mode" => meta.mode = v.parse().map_err(bad)?,
                    "h" => meta.h = ts(v)?,
                    "seed" => meta.seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
                    "accel" => meta.accel = v.parse().map_err(|_| bad(format!("bad accel {v:?}")))?,
                    "network" => meta.network = v.parse().map_err(bad)?,
                    "forward_clock" => meta.forward_clock = v.parse().map_err(bad)?,
                    "start" => meta.start = ts(v)?,
                    "end" => meta.end = ts(v)?,
                    "undelivered" => undelivered.push(v.to_string()),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["MSG", mid, uid, kind, tt, tp] => messages.push(MsgRecord {
                    mid: mid.to_string(),
                    uid: uid.to_string(),
                    kind: kind.parse().map_err(bad)?,
                    t_trace: tt.parse().map_err(|e: crate::time::TimeError| bad(e.to_string()))?,
                    t_posted: tp.parse().map_err(|e: crate::time::TimeError| bad(e.to_string()))?,
                }),
                ["BOT", uid, rest @ ..] if rest.len() == 5 => {
                    let mut v = [0u64; 5];
                    for (slot, s) in v.iter_mut().zip(rest) {
                        *slot = s.parse().map_err(|_| bad(format!("bad counter {s:?}")))?;
                    }
                    bots.push(BotRecord {
                        uid: uid.to_string(),
                        counters: ResourceCounters {
                            queries_issued: v[0],
                            queries_served: v[1],
                            bytes_served: v[2],
                            polls_completed: v[3],
                            messages_stored: v[4],
                        },
                    });
                }
                _ => return Err(bad("expected a MSG or BOT record".into())),
            }
        }
        Ok(SimLog { meta, messages, bots, undelivered })
    }
}
