//! Deterministic discrete-event replay on a virtual clock.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand_distr::{Distribution, Exp};

use super::bot::{bot_complete, bot_fetch, bot_init, bot_poll, BotConfig, BotState, FeedSnapshot, PollTarget};
use super::plan::ReplayPlan;
use super::simlog::{BotRecord, MsgRecord, RunMeta, SimLog};
use super::{run_window, NetworkModel, SimConfig};
use crate::channels::FeedDocument;
use crate::counters::ResourceCounters;
use crate::message::Message;
use crate::time::Timestamp;
use crate::topology::Topology;

/// Ties at one instant resolve in this order, so a poll observes every post
/// made at the same millisecond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Update,
    Forward,
    PollComplete,
    Poll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    t: Timestamp,
    kind: Kind,
    uid: u32,
    mid: u32,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    key: Key,
    /// Bot index for polls, plan node for posts.
    target: usize,
}

/// Owner's newest posts as served on the wire. The snapshot is the parse of
/// the rendered document, so readers only ever see what survives the feed
/// format.
struct Feed {
    owner: String,
    posts: Vec<Message>,
    version: u64,
    bytes: u64,
    snapshot: Arc<Vec<Message>>,
}

impl Feed {
    fn new(owner: &str) -> Feed {
        let doc = FeedDocument::empty(owner);
        Feed { owner: owner.to_string(), posts: Vec::new(), version: 0, bytes: doc.render().len() as u64, snapshot: Arc::new(Vec::new()) }
    }

    fn post(&mut self, m: Message, limit: usize) {
        self.posts.push(m);
        let doc = FeedDocument::build(&self.owner, std::mem::take(&mut self.posts), limit);
        let bytes = doc.render();
        self.bytes = bytes.len() as u64;
        self.posts = doc.entries;
        let parsed = FeedDocument::parse(&bytes).expect("rendered feeds always parse");
        self.snapshot = Arc::new(parsed.entries);
        self.version += 1;
    }
}

struct Board<'a> {
    feeds: &'a [Feed],
    counters: &'a mut [ResourceCounters],
}

impl PollTarget for Board<'_> {
    fn fetch(&mut self, followee: usize, known_version: u64) -> Result<FeedSnapshot, String> {
        let feed = &self.feeds[followee];
        let c = &mut self.counters[followee];
        c.queries_served += 1;
        c.bytes_served += feed.bytes;
        let messages = (feed.version != known_version).then(|| feed.snapshot.clone());
        Ok(FeedSnapshot { version: feed.version, bytes: feed.bytes, messages })
    }
}

pub(crate) fn run(plan: &ReplayPlan, topology: &Topology, config: &SimConfig) -> SimLog {
    let (start, end) = run_window(plan, topology, config);
    let n = topology.len();
    let mut bots: Vec<BotState> = topology
        .users
        .iter()
        .map(|u| {
            let cfg = BotConfig::new(&u.uid, config.h, config.feed_entry_limit, config.seed);
            bot_init(&cfg, topology, config.seed, start).expect("uid from the topology itself")
        })
        .collect();
    let mut feeds: Vec<Feed> = topology.users.iter().map(|u| Feed::new(&u.uid)).collect();
    let mut served = vec![ResourceCounters::default(); n];
    let latency = match config.network {
        NetworkModel::Ideal => None,
        NetworkModel::Latency { mean } => Some(Exp::new(1.0 / mean.millis() as f64).expect("positive mean")),
    };

    let mut seq = 0u64;
    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut push = |heap: &mut BinaryHeap<Reverse<Event>>, t: Timestamp, kind: Kind, uid: u32, mid: u32, target: usize| {
        seq += 1;
        heap.push(Reverse(Event { key: Key { t, kind, uid, mid, seq }, target }));
        seq
    };
    for &r in &plan.roots {
        let node = &plan.nodes[r];
        if node.t_trace >= start && node.t_trace <= end {
            push(&mut heap, node.t_trace, Kind::Update, plan.uid_rank[node.bot], plan.mid_rank[r], r);
        }
    }
    for (i, b) in bots.iter().enumerate() {
        if b.next_poll <= end {
            push(&mut heap, b.next_poll, Kind::Poll, plan.uid_rank[i], 0, i);
        }
    }

    // rounds in flight under the latency model, keyed by completion event seq
    let mut in_flight: HashMap<u64, Vec<Arc<Vec<Message>>>> = HashMap::new();
    let mut posted: Vec<Option<Timestamp>> = vec![None; plan.nodes.len()];
    let mut records = Vec::new();
    while let Some(Reverse(ev)) = heap.pop() {
        let now = ev.key.t;
        if now > end && ev.key.kind != Kind::PollComplete {
            continue;
        }
        match ev.key.kind {
            Kind::Update | Kind::Forward => {
                let node = &plan.nodes[ev.target];
                let msg = plan.message(ev.target, topology, now);
                feeds[node.bot].post(msg, config.feed_entry_limit);
                let bot = &mut bots[node.bot];
                bot.pending_forwards.remove(&(now, ev.target));
                bot.counters.messages_stored += 1;
                posted[ev.target] = Some(now);
                records.push(MsgRecord {
                    mid: node.mid.clone(),
                    uid: topology.users[node.bot].uid.clone(),
                    kind: node.kind,
                    t_trace: node.t_trace,
                    t_posted: now,
                });
            }
            Kind::Poll => {
                let i = ev.target;
                let next = now + config.h.millis();
                bots[i].next_poll = next;
                if next <= end {
                    push(&mut heap, next, Kind::Poll, plan.uid_rank[i], 0, i);
                }
                match &latency {
                    None => {
                        let mut board = Board { feeds: &feeds, counters: &mut served };
                        let due = bot_poll(&mut bots[i], &mut board, plan, config.forward_clock, now);
                        for s in due {
                            push(&mut heap, s.due, Kind::Forward, plan.uid_rank[i], plan.mid_rank[s.node], s.node);
                        }
                    }
                    Some(exp) => {
                        // requests leave now and see the feeds as they are now;
                        // the bot acts once the slowest part of the round is back
                        let mut board = Board { feeds: &feeds, counters: &mut served };
                        let fetched = bot_fetch(&mut bots[i], &mut board);
                        let bot = &mut bots[i];
                        let mut round = 0.0;
                        for _ in 0..bot.followees.len() {
                            round += exp.sample(&mut bot.rng);
                        }
                        let id = push(&mut heap, now + round.round() as i64, Kind::PollComplete, plan.uid_rank[i], 0, i);
                        in_flight.insert(id, fetched);
                    }
                }
            }
            Kind::PollComplete => {
                let i = ev.target;
                let fetched = in_flight.remove(&ev.key.seq).expect("round in flight");
                let due = bot_complete(&mut bots[i], &fetched, plan, config.forward_clock, now);
                for s in due {
                    push(&mut heap, s.due, Kind::Forward, plan.uid_rank[i], plan.mid_rank[s.node], s.node);
                }
            }
        }
    }

    records.sort_by(|a, b| a.t_posted.cmp(&b.t_posted).then_with(|| a.mid.cmp(&b.mid)));
    let undelivered = plan
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, n)| n.parent.is_some() && posted[*i].is_none())
        .map(|(_, n)| n.mid.clone())
        .collect();
    let bots = bots
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut counters = b.counters;
            counters.queries_served = served[i].queries_served;
            counters.bytes_served = served[i].bytes_served;
            BotRecord { uid: topology.users[i].uid.clone(), counters }
        })
        .collect();
    SimLog {
        meta: RunMeta {
            mode: config.mode,
            h: config.h,
            seed: config.seed,
            accel: config.accel,
            network: config.network,
            forward_clock: config.forward_clock,
            start,
            end,
        },
        messages: records,
        bots,
        undelivered,
    }
}
