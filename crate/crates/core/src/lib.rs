//! Emulation and analysis toolkit for pull-based decentralized social networks.
//!
//! The crate is layered the same way a DSN node is:
//!
//! * [`message`]: the cross-platform [`Message`] object and the textual
//!   forward convention (`RT @user text`).
//! * [`channels`]: the unified read/write primitives (`update`,
//!   `home_timeline`, `reply`, `forward`) over pull feeds, push inboxes and
//!   local stores, plus the [`Pocket`](channels::Pocket) aggregator.
//! * [`trace`] and [`topology`]: activity traces, forwarding forests and the
//!   follower graph, including seeded synthesis.
//! * [`harness`]: bot nodes polling each other at a fixed Query Gap, either on a
//!   deterministic virtual clock or over real sockets.
//! * [`analytics`]: distribution fitting, the Extra Forwarding Delay model and
//!   model-vs-measurement reports.

pub mod analytics;
pub mod channels;
pub mod counters;
pub mod escape;
pub mod harness;
pub mod message;
pub mod time;
pub mod topology;
pub mod trace;

pub use analytics::{EfdReport, FittedModel, ResourceReport};
pub use counters::ResourceCounters;
pub use harness::{run_simulation, Mode, SimConfig, SimLog};
pub use message::{Attachment, AttachmentKind, Message, MessageId, WriteModel};
pub use time::Timestamp;
pub use topology::Topology;
pub use trace::{ForwardForest, TraceEvent, TraceKind, TraceStats};
