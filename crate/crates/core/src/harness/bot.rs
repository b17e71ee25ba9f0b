use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plan::ReplayPlan;
use super::{behavior_forward_time, ForwardClock, HarnessError};
use crate::counters::ResourceCounters;
use crate::message::{Digest, Message};
use crate::time::Timestamp;
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BotConfig {
    pub uid: String,
    pub h: Timestamp,
    /// Offset of the first poll from run start, in `[0, h)`.
    pub phase: Timestamp,
    pub feed_entry_limit: usize,
}

/// FNV-1a, so a bot's random stream depends on its uid and not on its
/// position in the topology file.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) fn bot_rng(seed: u64, uid: &str, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(uid));
    rng.set_stream(stream);
    rng
}

impl BotConfig {
    /// Draws the phase uniformly in `[0, h)` milliseconds from `(seed, uid)`.
    pub fn new(uid: &str, h: Timestamp, feed_entry_limit: usize, seed: u64) -> BotConfig {
        let phase = Timestamp(bot_rng(seed, uid, 0).gen_range(0..h.millis().max(1)));
        BotConfig { uid: uid.to_string(), h, phase, feed_entry_limit }
    }
}

#[derive(Debug, Clone)]
pub struct BotState {
    pub index: usize,
    /// Every followee is polled; push edges are treated as pull.
    pub followees: Vec<usize>,
    pub h: Timestamp,
    pub next_poll: Timestamp,
    pub seen: HashSet<Digest>,
    /// Feed version last absorbed, per followee position.
    pub last_version: Vec<u64>,
    /// (due time, plan node) of forwards scheduled but not yet posted.
    pub pending_forwards: BTreeSet<(Timestamp, usize)>,
    /// Plan nodes already scheduled by this bot; a forward never repeats.
    pub scheduled: HashSet<usize>,
    pub counters: ResourceCounters,
    pub fetch_failures: u64,
    pub(crate) rng: ChaCha8Rng,
}

pub fn bot_init(config: &BotConfig, topology: &Topology, seed: u64, start: Timestamp) -> Result<BotState, HarnessError> {
    let index = topology
        .index_of(&config.uid)
        .ok_or_else(|| HarnessError::Mismatch(format!("bot {} not in topology", config.uid)))?;
    if !(config.phase >= Timestamp::ZERO && config.phase < config.h) {
        return Err(HarnessError::InvalidConfig(format!("phase {} outside [0, {})", config.phase, config.h)));
    }
    let followees: Vec<usize> = topology.followees[index].iter().map(|&(j, _)| j).collect();
    Ok(BotState {
        index,
        last_version: vec![0; followees.len()],
        followees,
        h: config.h,
        next_poll: start + config.phase.millis(),
        seen: HashSet::new(),
        pending_forwards: BTreeSet::new(),
        scheduled: HashSet::new(),
        counters: ResourceCounters::default(),
        fetch_failures: 0,
        rng: bot_rng(seed, &config.uid, 1),
    })
}

/// One followee fetch. `messages` is `None` when the feed version equals
/// the version the caller already absorbed.
#[derive(Debug, Clone)]
pub struct FeedSnapshot {
    pub version: u64,
    pub bytes: u64,
    pub messages: Option<Arc<Vec<Message>>>,
}

pub trait PollTarget {
    /// Fetches the feed of bot `followee`, charging the query to it.
    fn fetch(&mut self, followee: usize, known_version: u64) -> Result<FeedSnapshot, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledForward {
    pub due: Timestamp,
    pub node: usize,
}

impl BotState {
    /// Marks `messages` seen and schedules the trace forwards they unlock.
    pub fn absorb(
        &mut self,
        messages: &[Message],
        plan: &ReplayPlan,
        clock: ForwardClock,
        now: Timestamp,
        out: &mut Vec<ScheduledForward>,
    ) {
        let plan_for_me = &plan.by_parent[self.index];
        for m in messages {
            if !self.seen.insert(m.digest()) {
                continue;
            }
            let Some(children) = plan_for_me.get(&m.id.native_id) else { continue };
            for &c in children {
                if !self.scheduled.insert(c) {
                    continue;
                }
                let target = match clock {
                    ForwardClock::Relative => m.time + plan.nodes[c].intrinsic_ms,
                    ForwardClock::TraceAbsolute => plan.nodes[c].t_trace,
                };
                let due = behavior_forward_time(now, target);
                self.pending_forwards.insert((due, c));
                out.push(ScheduledForward { due, node: c });
            }
        }
    }
}

/// Queries every followee once. Returns, per followee position, the feed
/// contents that changed since the last fetch.
pub fn bot_fetch<T: PollTarget>(state: &mut BotState, target: &mut T) -> Vec<Arc<Vec<Message>>> {
    let mut out = Vec::new();
    for pos in 0..state.followees.len() {
        let f = state.followees[pos];
        state.counters.queries_issued += 1;
        match target.fetch(f, state.last_version[pos]) {
            Err(e) => {
                state.fetch_failures += 1;
                log::debug!("bot {}: followee {f} unreachable: {e}", state.index);
            }
            Ok(snap) => {
                out.extend(snap.messages);
                state.last_version[pos] = snap.version;
            }
        }
    }
    out
}

/// Acts on one finished round of fetches at `now`.
pub fn bot_complete(
    state: &mut BotState,
    fetched: &[Arc<Vec<Message>>],
    plan: &ReplayPlan,
    clock: ForwardClock,
    now: Timestamp,
) -> Vec<ScheduledForward> {
    let mut out = Vec::new();
    for msgs in fetched {
        state.absorb(msgs, plan, clock, now, &mut out);
    }
    state.counters.polls_completed += 1;
    out
}

/// A round that completes the instant it is issued.
pub fn bot_poll<T: PollTarget>(
    state: &mut BotState,
    target: &mut T,
    plan: &ReplayPlan,
    clock: ForwardClock,
    now: Timestamp,
) -> Vec<ScheduledForward> {
    let fetched = bot_fetch(state, target);
    bot_complete(state, &fetched, plan, clock, now)
}
