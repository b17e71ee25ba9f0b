//! Replay over real sockets: every bot's feed is served over HTTP and bots
//! poll each other with real requests on a compressed wall clock.

use std::net::{Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::Semaphore;
use tokio::task::JoinSet;
use tokio::time::Instant;

use super::bot::{bot_init, BotConfig, ScheduledForward};
use super::plan::ReplayPlan;
use super::simlog::{BotRecord, MsgRecord, RunMeta, SimLog};
use super::{run_window, HarnessError, SimConfig};
use crate::channels::server::{FeedBoard, FeedServer, FeedSource};
use crate::channels::FeedDocument;
use crate::counters::ResourceCounters;
use crate::message::Message;
use crate::time::Timestamp;
use crate::topology::Topology;

/// Maps trace time onto the wall clock, `accel` trace seconds per second.
#[derive(Debug, Clone, Copy)]
struct Clock {
    origin: Instant,
    start: Timestamp,
    accel: f64,
}

impl Clock {
    fn now(&self) -> Timestamp {
        let wall = self.origin.elapsed().as_secs_f64() * 1000.0;
        self.start + (wall * self.accel).round() as i64
    }

    fn at(&self, t: Timestamp) -> Instant {
        let offset = (t - self.start).max(0) as f64 / self.accel;
        self.origin + Duration::from_secs_f64(offset / 1000.0)
    }
}

struct Shared {
    plan: ReplayPlan,
    topology: Topology,
    board: Arc<FeedBoard>,
    posts: Vec<Mutex<Vec<Message>>>,
    stored: Vec<AtomicU64>,
    records: Mutex<Vec<MsgRecord>>,
    limit: usize,
}

impl Shared {
    fn post(&self, node: usize, at: Timestamp) {
        let n = &self.plan.nodes[node];
        let uid = &self.topology.users[n.bot].uid;
        let msg = self.plan.message(node, &self.topology, at);
        let bytes = {
            let mut posts = self.posts[n.bot].lock().expect("post lock");
            posts.push(msg);
            let doc = FeedDocument::build(uid, std::mem::take(&mut *posts), self.limit);
            let bytes = doc.render();
            *posts = doc.entries;
            bytes
        };
        self.board.slot(uid).expect("every bot has a slot").publish(bytes);
        self.stored[n.bot].fetch_add(1, Ordering::Relaxed);
        self.records.lock().expect("record lock").push(MsgRecord {
            mid: n.mid.clone(),
            uid: uid.clone(),
            kind: n.kind,
            t_trace: n.t_trace,
            t_posted: at,
        });
    }
}

pub(crate) fn run(plan: &ReplayPlan, topology: &Topology, config: &SimConfig) -> Result<SimLog, HarnessError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    rt.block_on(run_async(plan.clone(), topology.clone(), config.clone()))
}

async fn run_async(plan: ReplayPlan, topology: Topology, config: SimConfig) -> Result<SimLog, HarnessError> {
    let (start, end) = run_window(&plan, &topology, &config);
    let board = Arc::new(FeedBoard::new(
        topology.users.iter().map(|u| (u.uid.clone(), FeedDocument::empty(&u.uid).render())),
    ));
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, config.port));
    let server = FeedServer::bind(addr, FeedSource::Board(board.clone()))
        .await
        .map_err(|source| HarnessError::Bind { addr: addr.to_string(), source })?;
    let urls: Arc<Vec<String>> = Arc::new(topology.users.iter().map(|u| server.feed_url(&u.uid)).collect());
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;

    let n = topology.len();
    let clock = Clock { origin: Instant::now(), start, accel: config.accel };
    let shared = Arc::new(Shared {
        posts: (0..n).map(|_| Mutex::new(Vec::new())).collect(),
        stored: (0..n).map(|_| AtomicU64::new(0)).collect(),
        records: Mutex::new(Vec::new()),
        limit: config.feed_entry_limit,
        plan,
        topology,
        board: board.clone(),
    });
    let forwards: Arc<Mutex<JoinSet<()>>> = Arc::new(Mutex::new(JoinSet::new()));
    let workers = Arc::new(Semaphore::new(config.workers));

    let replayer = {
        let shared = shared.clone();
        tokio::spawn(async move {
            let mut roots = shared.plan.roots.clone();
            roots.sort_by_key(|&r| (shared.plan.nodes[r].t_trace, shared.plan.mid_rank[r]));
            for r in roots {
                let t = shared.plan.nodes[r].t_trace;
                if t < start || t > end {
                    continue;
                }
                tokio::time::sleep_until(clock.at(t)).await;
                shared.post(r, t);
            }
        })
    };

    let mut bot_tasks = JoinSet::new();
    for i in 0..n {
        let uid = shared.topology.users[i].uid.clone();
        let cfg = BotConfig::new(&uid, config.h, config.feed_entry_limit, config.seed);
        let mut state = bot_init(&cfg, &shared.topology, config.seed, start)?;
        let (shared, client, urls, workers, forwards) =
            (shared.clone(), client.clone(), urls.clone(), workers.clone(), forwards.clone());
        let clock_mode = config.forward_clock;
        let h = config.h.millis();
        bot_tasks.spawn(async move {
            while state.next_poll <= end {
                tokio::time::sleep_until(clock.at(state.next_poll)).await;
                let permit = workers.acquire().await.expect("semaphore open");
                let fetches = state.followees.iter().map(|&f| {
                    let req = client.get(&urls[f]);
                    async move {
                        let resp = req.send().await.map_err(|e| e.to_string())?;
                        if !resp.status().is_success() {
                            return Err(format!("HTTP {}", resp.status()));
                        }
                        let body = resp.bytes().await.map_err(|e| e.to_string())?;
                        FeedDocument::parse(&body).map_err(|e| e.to_string())
                    }
                });
                let results = futures::future::join_all(fetches).await;
                drop(permit);
                let seen_at = clock.now();
                let mut due: Vec<ScheduledForward> = Vec::new();
                for r in results {
                    state.counters.queries_issued += 1;
                    match r {
                        Ok(doc) => state.absorb(&doc.entries, &shared.plan, clock_mode, seen_at, &mut due),
                        Err(e) => {
                            state.fetch_failures += 1;
                            log::debug!("bot {}: fetch failed: {e}", state.index);
                        }
                    }
                }
                state.counters.polls_completed += 1;
                for s in due {
                    if s.due > end {
                        continue;
                    }
                    let shared = shared.clone();
                    forwards.lock().expect("forward set").spawn(async move {
                        tokio::time::sleep_until(clock.at(s.due)).await;
                        let at = clock.now().max(s.due);
                        shared.post(s.node, at);
                    });
                }
                state.next_poll = state.next_poll + h;
            }
            (state.index, state.counters)
        });
    }

    let mut counters = vec![ResourceCounters::default(); n];
    while let Some(res) = bot_tasks.join_next().await {
        let (i, c) = res.map_err(|e| HarnessError::Runtime(e.to_string()))?;
        counters[i] = c;
    }
    replayer.await.map_err(|e| HarnessError::Runtime(e.to_string()))?;
    tokio::time::sleep_until(clock.at(end)).await;
    let mut pending = std::mem::take(&mut *forwards.lock().expect("forward set"));
    // anything not yet fired is due within the run; let it land
    while let Some(r) = pending.join_next().await {
        r.map_err(|e| HarnessError::Runtime(e.to_string()))?;
    }
    server.stop().await;

    let shared = Arc::try_unwrap(shared).ok().expect("all tasks joined");
    let mut records = shared.records.into_inner().expect("record lock");
    records.sort_by(|a, b| a.t_posted.cmp(&b.t_posted).then_with(|| a.mid.cmp(&b.mid)));
    let posted: std::collections::HashSet<&str> = records.iter().map(|r| r.mid.as_str()).collect();
    let undelivered = shared
        .plan
        .nodes
        .iter()
        .filter(|n| n.parent.is_some() && !posted.contains(n.mid.as_str()))
        .map(|n| n.mid.clone())
        .collect();
    let bots = shared
        .topology
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut c = counters[i];
            let (q, b) = board.slot(&u.uid).expect("slot").served();
            c.queries_served = q;
            c.bytes_served = b;
            c.messages_stored = shared.stored[i].load(Ordering::Relaxed);
            BotRecord { uid: u.uid.clone(), counters: c }
        })
        .collect();
    Ok(SimLog {
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
    })
}
