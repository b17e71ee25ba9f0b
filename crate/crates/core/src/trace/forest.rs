use std::collections::HashMap;

use super::{TraceEvent, TraceKind, TraceWarning};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestNode {
    pub mid: String,
    pub uid: String,
    pub t: Timestamp,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Edge count from the tree root.
    pub depth: usize,
}

/// Forwarding trees stored as one flat node arena. Every non-root node's
/// parent sits at a smaller index, so forward iteration is a topological
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardForest {
    pub nodes: Vec<ForestNode>,
    pub roots: Vec<usize>,
    pub warnings: Vec<TraceWarning>,
    index: HashMap<String, usize>,
}

impl ForwardForest {
    pub fn get(&self, mid: &str) -> Option<&ForestNode> {
        self.index.get(mid).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, mid: &str) -> Option<usize> {
        self.index.get(mid).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - self.roots.len()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes[i].children.is_empty()
    }

    /// Leaves at depth ≥ 1, one per root-to-leaf chain.
    pub fn chain_leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].depth > 0 && self.is_leaf(i))
    }

    pub fn root_of(&self, mut i: usize) -> usize {
        while let Some(p) = self.nodes[i].parent {
            i = p;
        }
        i
    }
}

/// Builds trees rooted at updates. Forwards earlier than their parent lose
/// the edge and, with it, their whole subtree. Duplicate mids keep the first
/// occurrence.
pub fn build_forward_forest(events: &[TraceEvent]) -> ForwardForest {
    let mut forest = ForwardForest::default();
    let mut by_mid: HashMap<&str, usize> = HashMap::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        if by_mid.contains_key(e.mid.as_str()) {
            forest.warnings.push(TraceWarning::DuplicateMid { mid: e.mid.clone() });
        } else {
            by_mid.insert(e.mid.as_str(), i);
        }
    }
    let mut kids: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        if by_mid.get(e.mid.as_str()) != Some(&i) {
            continue;
        }
        if let Some(p) = e.parent_mid.as_deref() {
            kids.entry(p).or_default().push(i);
        }
    }
    // breadth-first from each update, in file order
    let mut queue = std::collections::VecDeque::new();
    for (i, e) in events.iter().enumerate() {
        if e.kind != TraceKind::Update || by_mid.get(e.mid.as_str()) != Some(&i) {
            continue;
        }
        let root = push_node(&mut forest, e, None);
        forest.roots.push(root);
        queue.push_back((i, root));
        while let Some((ev, node)) = queue.pop_front() {
            let Some(children) = kids.get(events[ev].mid.as_str()) else { continue };
            for &c in children {
                let child = &events[c];
                if child.t < events[ev].t {
                    log::warn!("trace: forward {} precedes parent {}", child.mid, events[ev].mid);
                    forest.warnings.push(TraceWarning::TimeReversal {
                        mid: child.mid.clone(),
                        parent: events[ev].mid.clone(),
                    });
                    continue;
                }
                let n = push_node(&mut forest, child, Some(node));
                queue.push_back((c, n));
            }
        }
    }
    forest
}

fn push_node(forest: &mut ForwardForest, e: &TraceEvent, parent: Option<usize>) -> usize {
    let idx = forest.nodes.len();
    let depth = parent.map_or(0, |p| forest.nodes[p].depth + 1);
    forest.nodes.push(ForestNode { mid: e.mid.clone(), uid: e.uid.clone(), t: e.t, parent, children: Vec::new(), depth });
    if let Some(p) = parent {
        forest.nodes[p].children.push(idx);
    }
    forest.index.insert(e.mid.clone(), idx);
    idx
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceStats {
    /// Seconds, one per edge.
    pub intrinsic_delays: Vec<f64>,
    pub chain_lengths: Vec<u32>,
    pub mean_l: f64,
    pub roots: usize,
    pub forwards: usize,
}

pub fn extract_stats(forest: &ForwardForest) -> TraceStats {
    let mut intrinsic_delays = Vec::with_capacity(forest.edge_count());
    for n in &forest.nodes {
        if let Some(p) = n.parent {
            intrinsic_delays.push((n.t - forest.nodes[p].t) as f64 / 1000.0);
        }
    }
    let chain_lengths: Vec<u32> = forest.chain_leaves().map(|i| forest.nodes[i].depth as u32).collect();
    let mean_l = if chain_lengths.is_empty() {
        0.0
    } else {
        chain_lengths.iter().map(|&l| l as f64).sum::<f64>() / chain_lengths.len() as f64
    };
    TraceStats { intrinsic_delays, chain_lengths, mean_l, roots: forest.roots.len(), forwards: forest.edge_count() }
}
