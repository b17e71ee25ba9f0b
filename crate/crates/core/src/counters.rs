use std::ops::AddAssign;

/// Per-node resource usage. `queries_served` and `bytes_served` are measured
/// from the followee's side (requests it answered); the rest are the node's
/// own activity. All fields only ever grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResourceCounters {
    pub queries_issued: u64,
    pub queries_served: u64,
    pub bytes_served: u64,
    pub messages_stored: u64,
    pub polls_completed: u64,
}

impl AddAssign for ResourceCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.queries_issued += rhs.queries_issued;
        self.queries_served += rhs.queries_served;
        self.bytes_served += rhs.bytes_served;
        self.messages_stored += rhs.messages_stored;
        self.polls_completed += rhs.polls_completed;
    }
}
