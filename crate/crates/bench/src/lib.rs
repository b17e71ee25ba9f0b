//! Fixtures shared by the benches.

use dsnbench_core::topology::synth_topology;
use dsnbench_core::trace::synth_trace;
use dsnbench_core::{FittedModel, Message, MessageId, Timestamp, Topology, TraceEvent};

/// A seeded topology and a day of activity over it.
pub fn world(users: usize, roots: usize) -> (Topology, Vec<TraceEvent>) {
    let topo = synth_topology(users, 20.0, 7).expect("valid size");
    let trace = synth_trace(&FittedModel::baseline(), roots, (Timestamp::ZERO, Timestamp::from_secs(86_400)), &topo, 8)
        .expect("valid model");
    (topo, trace)
}

/// `n` posts of about tweet length by one author.
pub fn posts(n: usize) -> Vec<Message> {
    (0..n)
        .map(|i| Message {
            id: MessageId::new("dsn", "bot", format!("m{i:05}")),
            userid: "u00001".into(),
            username: "user00001".into(),
            text: format!("status {i} & some <markup> to escape, padded out to a typical length"),
            time: Timestamp::from_secs(i as i64 * 60),
            attachments: Vec::new(),
            optional_fields: Default::default(),
            raw: Vec::new(),
        })
        .collect()
}
