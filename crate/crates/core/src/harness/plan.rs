use std::collections::{HashMap, HashSet};

use super::HarnessError;
use crate::message::{Message, MessageId};
use crate::time::Timestamp;
use crate::topology::Topology;
use crate::trace::{build_forward_forest, TraceEvent, TraceKind, TraceWarning};

/// Platform and channel of every replayed post. The native id is the trace
/// mid, so a copy fetched over the wire still names its trace event.
pub const PLATFORM: &str = "dsn";
pub const CHANNEL: &str = "bot";

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub mid: String,
    pub bot: usize,
    pub kind: TraceKind,
    pub t_trace: Timestamp,
    pub parent: Option<usize>,
    /// Trace gap to the parent, milliseconds; zero for roots.
    pub intrinsic_ms: i64,
    pub text: String,
    pub depth: usize,
}

/// Trace events resolved against the topology, in parent-before-child order.
#[derive(Debug, Clone, Default)]
pub struct ReplayPlan {
    pub nodes: Vec<PlanNode>,
    pub roots: Vec<usize>,
    /// Per bot: parent mid → nodes this bot forwards on seeing it.
    pub by_parent: Vec<HashMap<String, Vec<usize>>>,
    pub max_depth: usize,
    /// Rank of each bot's uid in byte order, for event tie-breaks.
    pub uid_rank: Vec<u32>,
    /// Rank of each node's mid in byte order.
    pub mid_rank: Vec<u32>,
    pub warnings: Vec<TraceWarning>,
}

impl ReplayPlan {
    pub fn build(trace: &[TraceEvent], topology: &Topology) -> Result<ReplayPlan, HarnessError> {
        let forest = build_forward_forest(trace);
        let mut warnings = forest.warnings.clone();
        let text_of: HashMap<&str, &str> = trace.iter().map(|e| (e.mid.as_str(), e.text.as_str())).collect();
        let mut plan = ReplayPlan { by_parent: vec![HashMap::new(); topology.len()], ..Default::default() };
        // forest index → plan index
        let mut mapped: Vec<Option<usize>> = vec![None; forest.nodes.len()];
        let mut forwarded: HashSet<(usize, usize)> = HashSet::new();
        for (i, n) in forest.nodes.iter().enumerate() {
            let parent = match n.parent {
                None => None,
                Some(p) => match mapped[p] {
                    Some(q) => Some(q),
                    None => continue, // parent dropped, so is the subtree
                },
            };
            let Some(bot) = topology.index_of(&n.uid) else {
                if parent.is_none() {
                    return Err(HarnessError::Mismatch(format!("update {} by unknown user {}", n.mid, n.uid)));
                }
                warnings.push(TraceWarning::UnknownUser { mid: n.mid.clone(), uid: n.uid.clone() });
                continue;
            };
            if let Some(q) = parent {
                if !forwarded.insert((bot, q)) {
                    warnings.push(TraceWarning::RepeatedForward {
                        mid: n.mid.clone(),
                        uid: n.uid.clone(),
                        parent: plan.nodes[q].mid.clone(),
                    });
                    continue;
                }
            }
            let idx = plan.nodes.len();
            let (intrinsic_ms, depth) = match parent {
                Some(q) => (n.t - plan.nodes[q].t_trace, plan.nodes[q].depth + 1),
                None => (0, 0),
            };
            plan.nodes.push(PlanNode {
                mid: n.mid.clone(),
                bot,
                kind: if parent.is_some() { TraceKind::Forward } else { TraceKind::Update },
                t_trace: n.t,
                parent,
                intrinsic_ms,
                text: text_of.get(n.mid.as_str()).copied().unwrap_or_default().to_string(),
                depth,
            });
            match parent {
                Some(q) => plan.by_parent[bot].entry(plan.nodes[q].mid.clone()).or_default().push(idx),
                None => plan.roots.push(idx),
            }
            plan.max_depth = plan.max_depth.max(depth);
            mapped[i] = Some(idx);
        }
        plan.uid_rank = ranks(topology.users.iter().map(|u| u.uid.as_str()));
        plan.mid_rank = ranks(plan.nodes.iter().map(|n| n.mid.as_str()));
        plan.warnings = warnings;
        Ok(plan)
    }

    /// The post a bot makes when replaying node `i` at `posted`.
    pub fn message(&self, i: usize, topology: &Topology, posted: Timestamp) -> Message {
        let n = &self.nodes[i];
        let user = &topology.users[n.bot];
        Message {
            id: MessageId::new(PLATFORM, CHANNEL, n.mid.clone()),
            userid: user.uid.clone(),
            username: user.uname.clone(),
            text: n.text.clone(),
            time: posted,
            attachments: Vec::new(),
            optional_fields: Default::default(),
            raw: Vec::new(),
        }
    }

    pub fn forward_count(&self) -> usize {
        self.nodes.len() - self.roots.len()
    }
}

fn ranks<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<u32> {
    let keys: Vec<&str> = keys.collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(keys[b]));
    let mut rank = vec![0u32; keys.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    rank
}
