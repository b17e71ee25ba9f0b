//! The DSN harness: bots that poll their followees' feeds every query gap,
//! replay trace updates as posts, and re-enact trace forwards once they see
//! the parent message.

mod bot;
mod plan;
mod real;
mod simlog;
mod virt;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::channels::DEFAULT_FEED_ENTRY_LIMIT;
use crate::time::Timestamp;
use crate::topology::Topology;
use crate::trace::TraceEvent;

pub use bot::{bot_complete, bot_fetch, bot_init, bot_poll, BotConfig, BotState, FeedSnapshot, PollTarget, ScheduledForward};
pub use plan::{ReplayPlan, PLATFORM, CHANNEL};
pub use simlog::{BotRecord, MsgRecord, RunMeta, SimLog, SIMLOG_MAGIC};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trace does not match topology: {0}")]
    Mismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot bind feed server on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("simlog line {line}: {reason}")]
    BadLog { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Virtual,
    Real,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Virtual => "virtual",
            Mode::Real => "real",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "virtual" => Ok(Mode::Virtual),
            "real" => Ok(Mode::Real),
            other => Err(format!("unknown mode {other:?} (expected virtual or real)")),
        }
    }
}

/// How long a poll round takes in virtual mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkModel {
    /// Every round completes at the instant it starts.
    Ideal,
    /// Followees are queried one after another, each query taking an
    /// exponentially distributed time with this mean. The bot sees the
    /// fetched content when the round completes.
    Latency { mean: Timestamp },
}

impl fmt::Display for NetworkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkModel::Ideal => f.write_str("ideal"),
            NetworkModel::Latency { mean } => write!(f, "latency:{mean}"),
        }
    }
}

impl FromStr for NetworkModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ideal" {
            return Ok(NetworkModel::Ideal);
        }
        let mean = s
            .strip_prefix("latency:")
            .ok_or_else(|| format!("unknown network model {s:?} (expected ideal or latency:<seconds>)"))?;
        let mean: Timestamp = mean.parse().map_err(|e: crate::time::TimeError| e.to_string())?;
        if mean.millis() == 0 {
            return Ok(NetworkModel::Ideal);
        }
        Ok(NetworkModel::Latency { mean })
    }
}

/// Which trace time a re-enacted forward aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardClock {
    /// The parent's actual post time plus the trace's intrinsic delay for
    /// this hop. Delay added upstream carries down the chain.
    Relative,
    /// The forward's absolute trace timestamp.
    TraceAbsolute,
}

impl ForwardClock {
    pub fn as_str(self) -> &'static str {
        match self {
            ForwardClock::Relative => "relative",
            ForwardClock::TraceAbsolute => "absolute",
        }
    }
}

impl FromStr for ForwardClock {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relative" => Ok(ForwardClock::Relative),
            "absolute" => Ok(ForwardClock::TraceAbsolute),
            other => Err(format!("unknown forward clock {other:?} (expected relative or absolute)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub h: Timestamp,
    pub seed: u64,
    pub mode: Mode,
    pub accel: f64,
    pub network: NetworkModel,
    pub forward_clock: ForwardClock,
    pub feed_entry_limit: usize,
    /// Defaults to the first trace event, or zero for an empty trace.
    pub start: Option<Timestamp>,
    /// Defaults to covering the last trace event plus enough poll periods for
    /// every chain to finish.
    pub duration: Option<Timestamp>,
    /// Real mode: concurrent poll rounds.
    pub workers: usize,
    /// Real mode: feed server port; 0 picks an ephemeral one.
    pub port: u16,
}

impl SimConfig {
    pub fn new(h: Timestamp, seed: u64) -> Self {
        SimConfig {
            h,
            seed,
            mode: Mode::Virtual,
            accel: 1.0,
            network: NetworkModel::Ideal,
            forward_clock: ForwardClock::Relative,
            feed_entry_limit: DEFAULT_FEED_ENTRY_LIMIT,
            start: None,
            duration: None,
            workers: 64,
            port: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.h.millis() <= 0 {
            return Err(HarnessError::InvalidConfig(format!("query gap must be positive, got {}", self.h)));
        }
        if !(self.accel.is_finite() && self.accel >= 1.0) {
            return Err(HarnessError::InvalidConfig(format!("accel must be at least 1, got {}", self.accel)));
        }
        if self.feed_entry_limit == 0 {
            return Err(HarnessError::InvalidConfig("feed entry limit must be positive".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::InvalidConfig("need at least one worker".into()));
        }
        Ok(())
    }
}

/// `T(m_f')`: the trace time when the user is already aware of the message,
/// otherwise the moment they first see it.
pub fn behavior_forward_time(t_seen: Timestamp, t_mf: Timestamp) -> Timestamp {
    if t_seen <= t_mf {
        t_mf
    } else {
        t_seen
    }
}

/// Run window `[start, end]` for a plan.
pub(crate) fn run_window(plan: &ReplayPlan, topology: &Topology, config: &SimConfig) -> (Timestamp, Timestamp) {
    let first = plan.nodes.iter().map(|n| n.t_trace).min();
    let start = config.start.or(first).unwrap_or(Timestamp::ZERO);
    let end = match config.duration {
        Some(d) => start + d.millis(),
        None if plan.nodes.is_empty() => start + 86_400_000,
        None => {
            let last = plan.nodes.iter().map(|n| n.t_trace).max().unwrap_or(start);
            let hops = plan.max_depth as i64 + 2;
            let round = match config.network {
                NetworkModel::Ideal => 0,
                // generous bound on one sequential round
                NetworkModel::Latency { mean } => {
                    let widest = topology.followees.iter().map(Vec::len).max().unwrap_or(0) as i64;
                    4 * mean.millis() * widest.max(1)
                }
            };
            last + hops * (config.h.millis() + round)
        }
    };
    (start, end)
}

pub fn run_simulation(trace: &[TraceEvent], topology: &Topology, config: &SimConfig) -> Result<SimLog, HarnessError> {
    config.validate()?;
    let plan = ReplayPlan::build(trace, topology)?;
    for w in &plan.warnings {
        log::warn!("replay: {w}");
    }
    match config.mode {
        Mode::Virtual => Ok(virt::run(&plan, topology, config)),
        Mode::Real => real::run(&plan, topology, config),
    }
}
