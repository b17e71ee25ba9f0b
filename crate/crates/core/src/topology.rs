//! The follower graph.
//!
//! File format, one user per line, tab-separated:
//!
//! ```text
//! uid<TAB>uname<TAB>followee[:pull|:push],followee,...
//! ```
//!
//! The followee list may be empty. Edge kind defaults to `pull`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::channels::LinkKind;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate user {0:?}")]
    DuplicateUser(String),
    #[error("user {0:?} follows itself")]
    SelfLoop(String),
    #[error("user {from:?} follows unknown user {to:?}")]
    UnknownFollowee { from: String, to: String },
    #[error("invalid topology parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct User {
    pub uid: String,
    pub uname: String,
}

/// Users plus, for each user (by index), the users it follows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub users: Vec<User>,
    pub followees: Vec<Vec<(usize, LinkKind)>>,
    index: HashMap<String, usize>,
}

impl Topology {
    pub fn new(users: Vec<User>, edges: Vec<Vec<(String, LinkKind)>>) -> Result<Topology, TopologyError> {
        let mut index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if index.insert(u.uid.clone(), i).is_some() {
                return Err(TopologyError::DuplicateUser(u.uid.clone()));
            }
        }
        let mut followees = Vec::with_capacity(users.len());
        for (i, list) in edges.into_iter().enumerate() {
            let mut resolved = Vec::with_capacity(list.len());
            for (to, kind) in list {
                let j = *index.get(&to).ok_or_else(|| TopologyError::UnknownFollowee {
                    from: users[i].uid.clone(),
                    to: to.clone(),
                })?;
                if j == i {
                    return Err(TopologyError::SelfLoop(to));
                }
                resolved.push((j, kind));
            }
            followees.push(resolved);
        }
        followees.resize(users.len(), Vec::new());
        Ok(Topology { users, followees, index })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn index_of(&self, uid: &str) -> Option<usize> {
        self.index.get(uid).copied()
    }

    /// Reverse adjacency: for each user, who follows them.
    pub fn followers(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.users.len()];
        for (i, list) in self.followees.iter().enumerate() {
            for &(j, _) in list {
                out[j].push(i);
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.followees.iter().map(Vec::len).sum()
    }

    pub fn parse(text: &str) -> Result<Topology, TopologyError> {
        let mut users = Vec::new();
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| TopologyError::Malformed { line: line_no, reason: reason.to_string() };
            let mut fields = line.split('\t');
            let uid = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| malformed("missing uid"))?;
            let uname = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| malformed("missing uname"))?;
            let list = fields.next().unwrap_or("");
            if fields.next().is_some() {
                return Err(malformed("too many fields"));
            }
            let mut follows = Vec::new();
            for item in list.split(',').filter(|s| !s.is_empty()) {
                let (to, kind) = match item.rsplit_once(':') {
                    Some((to, "pull")) => (to, LinkKind::Pull),
                    Some((to, "push")) => (to, LinkKind::Push),
                    Some((_, other)) => return Err(malformed(&format!("unknown edge kind {other:?}"))),
                    None => (item, LinkKind::Pull),
                };
                follows.push((to.to_string(), kind));
            }
            users.push(User { uid: uid.to_string(), uname: uname.to_string() });
            edges.push(follows);
        }
        Topology::new(users, edges)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, u) in self.users.iter().enumerate() {
            let list: Vec<String> = self.followees[i]
                .iter()
                .map(|&(j, kind)| match kind {
                    LinkKind::Pull => self.users[j].uid.clone(),
                    LinkKind::Push => format!("{}:push", self.users[j].uid),
                })
                .collect();
            let _ = writeln!(out, "{}\t{}\t{}", u.uid, u.uname, list.join(","));
        }
        out
    }
}

/// Random directed graph: each user's out-degree is Poisson(`mean_followees`)
/// capped at `n_users - 1`, followees uniform without replacement, no
/// self-loops. All edges are pull.
pub fn synth_topology(n_users: usize, mean_followees: f64, seed: u64) -> Result<Topology, TopologyError> {
    if n_users < 2 {
        return Err(TopologyError::InvalidParameters(format!("need at least 2 users, got {n_users}")));
    }
    if !(mean_followees.is_finite() && mean_followees > 0.0) {
        return Err(TopologyError::InvalidParameters(format!("mean followees must be positive, got {mean_followees}")));
    }
    let width = n_users.to_string().len().max(5);
    let users: Vec<User> = (0..n_users)
        .map(|i| User { uid: format!("u{i:0width$}"), uname: format!("user{i:0width$}") })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degree = Poisson::new(mean_followees).expect("positive mean");
    let mut edges = Vec::with_capacity(n_users);
    for i in 0..n_users {
        let k = (degree.sample(&mut rng) as usize).min(n_users - 1);
        // sample from the other n-1 users, then shift past self
        let mut picks: Vec<usize> = sample(&mut rng, n_users - 1, k)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        picks.sort_unstable();
        edges.push(picks.into_iter().map(|j| (users[j].uid.clone(), LinkKind::Pull)).collect());
    }
    Topology::new(users, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let text = "u1\talice\tu2,u3:push\nu2\tbob\t\nu3\tcarol\tu1:pull\n";
        let t = Topology::parse(text).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.followees[0], vec![(1, LinkKind::Pull), (2, LinkKind::Push)]);
        assert_eq!(t.render(), "u1\talice\tu2,u3:push\nu2\tbob\t\nu3\tcarol\tu1\n");
        assert_eq!(t.followers()[0], vec![2]);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(Topology::parse("u1\ta\tu1\n"), Err(TopologyError::SelfLoop("u1".into())));
        assert!(matches!(Topology::parse("u1\ta\tu9\n"), Err(TopologyError::UnknownFollowee { .. })));
        assert!(matches!(Topology::parse("u1\ta\tu1:tcp\n"), Err(TopologyError::Malformed { line: 1, .. })));
        assert!(matches!(Topology::parse("u1\n"), Err(TopologyError::Malformed { .. })));
        assert_eq!(Topology::parse("u1\ta\t\nu1\tb\t\n"), Err(TopologyError::DuplicateUser("u1".into())));
    }

    #[test]
    fn synth_is_deterministic_without_self_loops() {
        let a = synth_topology(100, 5.0, 7).unwrap();
        let b = synth_topology(100, 5.0, 7).unwrap();
        assert_eq!(a.render(), b.render());
        assert_ne!(a.render(), synth_topology(100, 5.0, 8).unwrap().render());
        for (i, list) in a.followees.iter().enumerate() {
            assert!(list.iter().all(|&(j, _)| j != i));
        }
        let mean = a.edge_count() as f64 / 100.0;
        assert!((3.5..6.5).contains(&mean), "{mean}");
        assert_eq!(Topology::parse(&a.render()).unwrap().render(), a.render());
    }

    #[test]
    fn two_users() {
        for seed in 0..20 {
            let t = synth_topology(2, 1.0, seed).unwrap();
            assert!(t.followees[0].iter().all(|&(j, _)| j == 1));
            assert!(t.followees[1].iter().all(|&(j, _)| j == 0));
        }
        assert!(synth_topology(1, 1.0, 0).is_err());
        assert!(synth_topology(5, 0.0, 0).is_err());
    }
}
