//! Unified channel primitives over local transports.
//!
//! Every channel exposes the same five operations: open (`auth`),
//! [`Channel::home_timeline`], [`Channel::update`], [`Channel::reply`] and
//! [`Channel::forward`]. How a link moves messages is chosen per
//! subscription: a `pull` subscription names a followee feed this channel
//! fetches, a `push` subscription names a follower inbox this channel writes
//! into on every update. The channel's own platform decides where its own
//! writes land (a feed file, nothing but the pushes, or a local record store).

mod atom;
pub mod server;
mod store;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use atom::{feed_parse, feed_render, rfc3339_millis, sort_newest_first, FeedDocument, FeedParseError};
pub use store::{comment_feed_path, Endpoint};

use crate::counters::ResourceCounters;
use crate::message::{
    compose_forward_text, make_message, Message, MessageError, MessageId, ReplyStyle, WriteModel,
};
use crate::time::Timestamp;

pub const DEFAULT_FEED_ENTRY_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("endpoint {endpoint} unreachable: {reason}")]
    EndpointUnreachable { endpoint: String, reason: String },
    #[error("duplicate channel id {0:?}")]
    DuplicateChannel(String),
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
    #[error("storage full at {0}")]
    StorageFull(String),
    #[error("i/o error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("channel {0:?} is closed")]
    Closed(String),
    #[error("unknown reply target {0}")]
    UnknownThread(String),
    #[error("no route to the inbox of {0:?}")]
    UnknownRecipient(String),
    #[error(transparent)]
    Message(#[from] MessageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Platform {
    FeedPull,
    InboxPush,
    LocalStore,
}

impl Platform {
    /// Tag stored in [`MessageId::platform`].
    pub fn tag(self) -> &'static str {
        match self {
            Platform::FeedPull => "feed",
            Platform::InboxPush => "inbox",
            Platform::LocalStore => "store",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Pull,
    Push,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub userid: String,
    pub endpoint: String,
    pub kind: LinkKind,
}

#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub channel_id: String,
    pub platform: Platform,
    pub self_userid: String,
    pub self_username: String,
    /// Own feed file for `FeedPull`, inbox directory for `InboxPush`, record
    /// file for `LocalStore`.
    pub endpoint: String,
    pub subscriptions: Vec<Subscription>,
    pub write_model: WriteModel,
    pub feed_entry_limit: usize,
}

impl ChannelConfig {
    pub fn new(channel_id: &str, platform: Platform, userid: &str, username: &str, endpoint: &str) -> Self {
        ChannelConfig {
            channel_id: channel_id.to_string(),
            platform,
            self_userid: userid.to_string(),
            self_username: username.to_string(),
            endpoint: endpoint.to_string(),
            subscriptions: Vec::new(),
            write_model: WriteModel::default(),
            feed_entry_limit: DEFAULT_FEED_ENTRY_LIMIT,
        }
    }

    pub fn subscribe(mut self, userid: &str, endpoint: impl AsRef<str>, kind: LinkKind) -> Self {
        self.subscriptions.push(Subscription {
            userid: userid.to_string(),
            endpoint: endpoint.as_ref().to_string(),
            kind,
        });
        self
    }

    fn validate(&self) -> Result<(), ChannelError> {
        let invalid = |s: &str| Err(ChannelError::InvalidConfig(s.to_string()));
        if self.channel_id.is_empty() || self.channel_id.contains(|c: char| c == ':' || c.is_whitespace()) {
            return invalid("channel_id must be non-empty without ':' or whitespace");
        }
        if self.self_userid.is_empty() {
            return invalid("self_userid must not be empty");
        }
        if self.self_username.is_empty() || self.self_username.contains(char::is_whitespace) {
            return invalid("username must be non-empty and contain no whitespace");
        }
        if self.feed_entry_limit == 0 {
            return invalid("feed_entry_limit must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchFailure {
    pub userid: String,
    pub endpoint: String,
    pub reason: String,
    pub at: Timestamp,
}

/// Newest-first merged view; no two entries share a digest.
#[derive(Debug, Clone, Default)]
pub struct Timeline {
    pub messages: Vec<Message>,
    pub fetched_at: Timestamp,
    pub failures: Vec<FetchFailure>,
}

impl Timeline {
    fn merge(sources: Vec<Message>, count: usize, now: Timestamp, failures: Vec<FetchFailure>) -> Timeline {
        let mut seen = HashSet::new();
        let mut messages: Vec<Message> = sources.into_iter().filter(|m| seen.insert(m.digest())).collect();
        sort_newest_first(&mut messages);
        messages.truncate(count);
        Timeline { messages, fetched_at: now, failures }
    }
}

#[derive(Debug)]
struct ResolvedSub {
    sub: Subscription,
    endpoint: Endpoint,
}

#[derive(Debug)]
pub struct Channel {
    config: ChannelConfig,
    own: Endpoint,
    subs: Vec<ResolvedSub>,
    known: HashMap<(String, String, String), Message>,
    seq: u64,
    counters: ResourceCounters,
    failures: Vec<FetchFailure>,
    closed: bool,
}

type Key = (String, String, String);

fn key_of(id: &MessageId) -> Key {
    (id.platform.clone(), id.channel_id.clone(), id.native_id.clone())
}

impl Channel {
    /// Validates the config and endpoint accessibility. Never interactive.
    pub fn open(config: ChannelConfig) -> Result<Channel, ChannelError> {
        config.validate()?;
        let own = Endpoint::parse(&config.endpoint)?;
        let own_path = own.as_path().ok_or_else(|| ChannelError::EndpointUnreachable {
            endpoint: config.endpoint.clone(),
            reason: "own endpoint must be a local path; serve it with FeedServer".into(),
        })?;
        match config.platform {
            Platform::FeedPull | Platform::LocalStore => store::ensure_file_creatable(own_path)?,
            Platform::InboxPush => store::ensure_dir(own_path)?,
        }
        let subs = config
            .subscriptions
            .iter()
            .map(|s| {
                Ok(ResolvedSub { sub: s.clone(), endpoint: Endpoint::parse(&s.endpoint)? })
            })
            .collect::<Result<Vec<_>, ChannelError>>()?;
        for s in &subs {
            if s.sub.kind == LinkKind::Push && s.endpoint.as_path().is_none() {
                return Err(ChannelError::EndpointUnreachable {
                    endpoint: s.sub.endpoint.clone(),
                    reason: "push delivery needs a local inbox directory".into(),
                });
            }
        }
        Ok(Channel {
            config,
            own,
            subs,
            known: HashMap::new(),
            seq: 0,
            counters: ResourceCounters::default(),
            failures: Vec::new(),
            closed: false,
        })
    }

    pub fn id(&self) -> &str {
        &self.config.channel_id
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn counters(&self) -> ResourceCounters {
        self.counters
    }

    /// Every fetch failure recorded since open.
    pub fn failures(&self) -> &[FetchFailure] {
        &self.failures
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    fn own_path(&self) -> &Path {
        self.own.as_path().expect("checked at open")
    }

    fn check_open(&self) -> Result<(), ChannelError> {
        if self.closed {
            Err(ChannelError::Closed(self.config.channel_id.clone()))
        } else {
            Ok(())
        }
    }

    /// Reads this channel's own published feed.
    pub fn own_feed(&self) -> Result<FeedDocument, ChannelError> {
        match self.config.platform {
            Platform::FeedPull => store::read_feed_file(self.own_path(), &self.config.self_userid)
                .map_err(|reason| ChannelError::EndpointUnreachable { endpoint: self.config.endpoint.clone(), reason }),
            _ => Ok(FeedDocument::empty(&self.config.self_userid)),
        }
    }

    fn next_id(&mut self, now: Timestamp) -> MessageId {
        self.seq += 1;
        MessageId::new(
            self.config.platform.tag(),
            self.config.channel_id.clone(),
            format!("{:013}-{:04}", now.millis(), self.seq),
        )
    }

    fn compose(&mut self, text: &str, now: Timestamp) -> Result<Message, ChannelError> {
        let mut m = make_message(&self.config.self_userid, &self.config.self_username, text, now, Vec::new())?;
        m.id = self.next_id(now);
        Ok(m)
    }

    fn publish(&mut self, m: &Message) -> Result<(), ChannelError> {
        match self.config.platform {
            Platform::FeedPull => {
                let path = self.own_path().to_path_buf();
                let mut entries = self.own_feed()?.entries;
                entries.push(m.clone());
                let doc = FeedDocument::build(&self.config.self_userid, entries, self.config.feed_entry_limit);
                store::write_atomic(&path, &doc.render())?;
            }
            Platform::LocalStore => store::append_record(self.own_path(), m)?,
            Platform::InboxPush => {}
        }
        for s in self.subs.iter().filter(|s| s.sub.kind == LinkKind::Push) {
            let root = s.endpoint.as_path().expect("checked at open");
            store::ensure_dir(root)?;
            store::append_record(&store::inbox_path(root), m)?;
        }
        self.counters.messages_stored += 1;
        self.known.insert(key_of(&m.id), m.clone());
        Ok(())
    }

    /// Posts `text` as this channel's user at `now`.
    pub fn update(&mut self, text: &str, now: Timestamp) -> Result<Message, ChannelError> {
        self.check_open()?;
        let m = self.compose(text, now)?;
        self.publish(&m)?;
        Ok(m)
    }

    /// URT forward: an update whose text quotes the original. The original's
    /// id is kept under the `forward_of` optional field.
    pub fn forward(&mut self, orig: &Message, comment: Option<&str>, now: Timestamp) -> Result<Message, ChannelError> {
        self.check_open()?;
        let text = compose_forward_text(&orig.username, &orig.text, comment);
        let mut m = self.compose(&text, now)?;
        m.optional_fields.insert("forward_of".into(), orig.id.to_string());
        self.publish(&m)?;
        Ok(m)
    }

    /// Replies to a message this channel has seen or posted.
    ///
    /// FBSR (the default) threads the reply on the target's root and keeps it
    /// out of the replier's own feed: push channels deliver it to the target
    /// author's inbox, pull channels append it to the comment feed next to
    /// their own feed. TSR posts `@user text` as an ordinary update.
    pub fn reply(&mut self, target: &MessageId, text: &str, now: Timestamp) -> Result<Message, ChannelError> {
        self.check_open()?;
        let orig = self
            .known
            .get(&key_of(target))
            .cloned()
            .ok_or_else(|| ChannelError::UnknownThread(target.to_string()))?;
        let thread = orig.id.thread_root().to_string();
        if self.config.write_model.reply_style == ReplyStyle::Tsr {
            let mut m = self.compose(&format!("@{} {text}", orig.username), now)?;
            m.id.thread_id = Some(thread);
            self.publish(&m)?;
            return Ok(m);
        }
        let mut m = self.compose(text, now)?;
        m.id.thread_id = Some(thread.clone());
        match self.config.platform {
            Platform::FeedPull => {
                let path = comment_feed_path(self.own_path(), &thread);
                let mut entries = store::read_feed_file(&path, &self.config.self_userid)
                    .map_err(|reason| ChannelError::EndpointUnreachable { endpoint: path.display().to_string(), reason })?
                    .entries;
                entries.push(m.clone());
                let doc = FeedDocument::build(&self.config.self_userid, entries, self.config.feed_entry_limit);
                store::write_atomic(&path, &doc.render())?;
            }
            Platform::InboxPush => {
                let inbox = if orig.userid == self.config.self_userid {
                    self.own_path().to_path_buf()
                } else {
                    self.subs
                        .iter()
                        .find(|s| s.sub.kind == LinkKind::Push && s.sub.userid == orig.userid)
                        .and_then(|s| s.endpoint.as_path().map(Path::to_path_buf))
                        .ok_or_else(|| ChannelError::UnknownRecipient(orig.userid.clone()))?
                };
                store::ensure_dir(&inbox)?;
                store::append_record(&store::inbox_path(&inbox), &m)?;
            }
            Platform::LocalStore => store::append_record(self.own_path(), &m)?,
        }
        self.counters.messages_stored += 1;
        self.known.insert(key_of(&m.id), m.clone());
        Ok(m)
    }

    fn record_failure(&mut self, failures: &mut Vec<FetchFailure>, userid: &str, endpoint: &str, reason: String, now: Timestamp) {
        log::warn!("channel {}: fetch from {userid} at {endpoint} failed: {reason}", self.config.channel_id);
        let f = FetchFailure { userid: userid.to_string(), endpoint: endpoint.to_string(), reason, at: now };
        self.failures.push(f.clone());
        failures.push(f);
    }

    /// Everything this channel reads: own inbox or store, plus every pull
    /// subscription's feed. Failed fetches are recorded and skipped.
    fn gather(&mut self, now: Timestamp) -> (Vec<Message>, Vec<FetchFailure>) {
        let mut out = Vec::new();
        let mut failures = Vec::new();
        let own_log = match self.config.platform {
            Platform::InboxPush => Some(store::inbox_path(self.own_path())),
            Platform::LocalStore => Some(self.own_path().to_path_buf()),
            Platform::FeedPull => None,
        };
        if let Some(path) = own_log {
            self.counters.queries_issued += 1;
            match store::read_records(&path) {
                Ok(ms) => out.extend(ms),
                Err(reason) => {
                    let (uid, ep) = (self.config.self_userid.clone(), self.config.endpoint.clone());
                    self.record_failure(&mut failures, &uid, &ep, reason, now);
                }
            }
        }
        let pulls: Vec<(String, String, Endpoint)> = self
            .subs
            .iter()
            .filter(|s| s.sub.kind == LinkKind::Pull)
            .map(|s| (s.sub.userid.clone(), s.sub.endpoint.clone(), s.endpoint.clone()))
            .collect();
        for (uid, raw, ep) in pulls {
            self.counters.queries_issued += 1;
            match store::fetch_feed(&ep, &uid) {
                Ok(doc) => out.extend(doc.entries),
                Err(reason) => self.record_failure(&mut failures, &uid, &raw, reason, now),
            }
        }
        self.counters.polls_completed += 1;
        (out, failures)
    }

    /// Newest `count` messages targeted at this user. Replies are only
    /// visible through [`Channel::thread`].
    pub fn home_timeline(&mut self, count: usize, now: Timestamp) -> Result<Timeline, ChannelError> {
        self.check_open()?;
        let (all, failures) = self.gather(now);
        let posts: Vec<Message> = all.into_iter().filter(|m| m.id.thread_id.is_none()).collect();
        for m in &posts {
            self.known.entry(key_of(&m.id)).or_insert_with(|| m.clone());
        }
        Ok(Timeline::merge(posts, count, now, failures))
    }

    /// All replies on the thread rooted at `root`, oldest first, from this
    /// channel's own comment feed, its inbox, and its pull subscriptions'
    /// comment feeds.
    pub fn thread(&mut self, root: &MessageId) -> Result<Vec<Message>, ChannelError> {
        self.check_open()?;
        let thread = root.thread_root().to_string();
        // comments carried in feed documents lose id.thread on the wire
        let mut from_feeds = Vec::new();
        let mut out = Vec::new();
        match self.config.platform {
            Platform::FeedPull => {
                if let Ok(doc) = store::read_feed_file(&comment_feed_path(self.own_path(), &thread), "") {
                    from_feeds.extend(doc.entries);
                }
            }
            Platform::InboxPush => {
                out.extend(store::read_records(&store::inbox_path(self.own_path())).unwrap_or_default())
            }
            Platform::LocalStore => out.extend(store::read_records(self.own_path()).unwrap_or_default()),
        }
        for s in self.subs.iter().filter(|s| s.sub.kind == LinkKind::Pull) {
            let fetched = match &s.endpoint {
                Endpoint::Path(p) => store::read_feed_file(&comment_feed_path(p, &thread), &s.sub.userid),
                Endpoint::Http(u) => {
                    let url = comment_feed_path(Path::new(u.as_str()), &thread);
                    url::Url::parse(&url.to_string_lossy())
                        .map_err(|e| e.to_string())
                        .and_then(|u| store::fetch_feed_http(&u))
                }
            };
            if let Ok(doc) = fetched {
                from_feeds.extend(doc.entries);
            }
        }
        out.extend(from_feeds.into_iter().map(|mut m| {
            m.id.thread_id = Some(thread.clone());
            m
        }));
        let mut seen = HashSet::new();
        out.retain(|m| m.id.thread_id.as_deref() == Some(thread.as_str()) && seen.insert(m.digest()));
        out.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.id.native_id.cmp(&b.id.native_id)));
        for m in &out {
            self.known.entry(key_of(&m.id)).or_insert_with(|| m.clone());
        }
        Ok(out)
    }
}

/// A container of channels behind one timeline.
#[derive(Debug, Default)]
pub struct Pocket {
    channels: Vec<Channel>,
}

impl Pocket {
    pub fn new() -> Self {
        Pocket::default()
    }

    pub fn open(&mut self, config: ChannelConfig) -> Result<&mut Channel, ChannelError> {
        if self.channels.iter().any(|c| c.id() == config.channel_id) {
            return Err(ChannelError::DuplicateChannel(config.channel_id));
        }
        let ch = Channel::open(config)?;
        self.channels.push(ch);
        Ok(self.channels.last_mut().expect("just pushed"))
    }

    pub fn get_mut(&mut self, channel_id: &str) -> Option<&mut Channel> {
        self.channels.iter_mut().find(|c| c.id() == channel_id)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Merge of every open channel's home timeline, deduplicated by digest.
    pub fn timeline(&mut self, count: usize, now: Timestamp) -> Timeline {
        let mut all = Vec::new();
        let mut failures = Vec::new();
        for ch in self.channels.iter_mut().filter(|c| !c.closed) {
            if let Ok(t) = ch.home_timeline(usize::MAX, now) {
                all.extend(t.messages);
                failures.extend(t.failures);
            }
        }
        Timeline::merge(all, count, now, failures)
    }
}

pub fn channel_open(pocket: &mut Pocket, config: ChannelConfig) -> Result<&mut Channel, ChannelError> {
    pocket.open(config)
}

pub fn pocket_timeline(pocket: &mut Pocket, count: usize, now: Timestamp) -> Timeline {
    pocket.timeline(count, now)
}

/// Feed file location for `uid` under a shared directory, matching the URL
/// layout served by [`server::FeedServer`].
pub fn feed_path(dir: &Path, uid: &str) -> PathBuf {
    dir.join(format!("{uid}.atom"))
}

#[cfg(test)]
mod tests;
