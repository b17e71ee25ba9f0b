use std::collections::BTreeSet;
use std::net::SocketAddr;

use proptest::prelude::*;
use tempfile::TempDir;

use super::server::{BackgroundFeedServer, FeedSource};
use super::*;
use crate::message::Digest;

fn t(s: i64) -> Timestamp {
    Timestamp::from_secs(s)
}

fn feed_cfg(dir: &Path, id: &str, uid: &str) -> ChannelConfig {
    ChannelConfig::new(id, Platform::FeedPull, uid, &format!("name_{uid}"), feed_path(dir, uid).to_str().unwrap())
}

#[test]
fn open_validates() {
    let dir = TempDir::new().unwrap();
    assert!(Channel::open(feed_cfg(dir.path(), "c1", "u1")).is_ok());
    let bad = ChannelConfig::new("c2", Platform::FeedPull, "u1", "n", "http://");
    assert!(matches!(Channel::open(bad), Err(ChannelError::EndpointUnreachable { .. })));
    let bad_sub = feed_cfg(dir.path(), "c3", "u1").subscribe("u2", "gopher://x/y", LinkKind::Pull);
    assert!(matches!(Channel::open(bad_sub), Err(ChannelError::EndpointUnreachable { .. })));
    let mut pocket = Pocket::new();
    channel_open(&mut pocket, feed_cfg(dir.path(), "same", "u1")).unwrap();
    let dup = channel_open(&mut pocket, feed_cfg(dir.path(), "same", "u2"));
    assert!(matches!(dup, Err(ChannelError::DuplicateChannel(_))));
    let mut zero = feed_cfg(dir.path(), "c4", "u1");
    zero.feed_entry_limit = 0;
    assert!(matches!(Channel::open(zero), Err(ChannelError::InvalidConfig(_))));
}

#[test]
fn first_write_and_eviction() {
    let dir = TempDir::new().unwrap();
    let mut ch = Channel::open(feed_cfg(dir.path(), "c", "u1")).unwrap();
    assert!(ch.own_feed().unwrap().entries.is_empty());
    ch.update("one", t(1)).unwrap();
    assert_eq!(ch.own_feed().unwrap().entries.len(), 1);

    let mut cfg = feed_cfg(dir.path(), "k", "u2");
    cfg.feed_entry_limit = 2;
    let mut ch = Channel::open(cfg).unwrap();
    for (i, text) in ["a", "b", "c"].iter().enumerate() {
        ch.update(text, t(i as i64)).unwrap();
    }
    let texts: Vec<String> = ch.own_feed().unwrap().entries.into_iter().map(|m| m.text).collect();
    assert_eq!(texts, ["c", "b"]);
}

#[test]
fn closed_channel_rejects_writes() {
    let dir = TempDir::new().unwrap();
    let mut ch = Channel::open(feed_cfg(dir.path(), "c", "u1")).unwrap();
    ch.close();
    assert!(matches!(ch.update("x", t(0)), Err(ChannelError::Closed(_))));
}

#[test]
fn push_to_three_subscribers() {
    let dir = TempDir::new().unwrap();
    let inbox = |u: &str| dir.path().join(u);
    let mut cfg = ChannelConfig::new("p", Platform::InboxPush, "u0", "zero", inbox("u0").to_str().unwrap());
    for u in ["u1", "u2", "u3"] {
        cfg = cfg.subscribe(u, inbox(u).to_str().unwrap(), LinkKind::Push);
    }
    let mut ch = Channel::open(cfg).unwrap();
    let m = ch.update("hello all", t(5)).unwrap();
    for u in ["u1", "u2", "u3"] {
        let got = store::read_records(&store::inbox_path(&inbox(u))).unwrap();
        assert_eq!(got, vec![m.clone()]);
    }
    let mut reader = Channel::open(ChannelConfig::new("r", Platform::InboxPush, "u2", "two", inbox("u2").to_str().unwrap())).unwrap();
    assert_eq!(reader.home_timeline(10, t(6)).unwrap().messages, vec![m]);
}

#[test]
fn merge_and_truncate() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    let mut b = Channel::open(feed_cfg(dir.path(), "b", "ub")).unwrap();
    for i in 0..3 {
        a.update(&format!("a{i}"), t(10 * i)).unwrap();
    }
    for i in 0..2 {
        b.update(&format!("b{i}"), t(10 * i + 5)).unwrap();
    }
    let mut me = Channel::open(
        feed_cfg(dir.path(), "me", "um")
            .subscribe("ua", feed_path(dir.path(), "ua").to_str().unwrap(), LinkKind::Pull)
            .subscribe("ub", feed_path(dir.path(), "ub").to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    let tl = me.home_timeline(10, t(100)).unwrap();
    let texts: Vec<&str> = tl.messages.iter().map(|m| m.text.as_str()).collect();
    assert_eq!(texts, ["a2", "b1", "a1", "b0", "a0"]);
    assert_eq!(tl.fetched_at, t(100));
    let one = me.home_timeline(1, t(101)).unwrap();
    assert_eq!(one.messages.len(), 1);
    assert_eq!(one.messages[0].text, "a2");
    let c = me.counters();
    assert_eq!((c.queries_issued, c.polls_completed), (4, 2));
}

#[test]
fn unreachable_followee_is_skipped() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    a.update("alive", t(1)).unwrap();
    let gone = dir.path().join("no/such/dir/ux.atom");
    let mut me = Channel::open(
        feed_cfg(dir.path(), "me", "um")
            .subscribe("ua", feed_path(dir.path(), "ua").to_str().unwrap(), LinkKind::Pull)
            .subscribe("ux", gone.to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    let tl = me.home_timeline(10, t(2)).unwrap();
    assert_eq!(tl.messages.len(), 1);
    assert_eq!(tl.failures.len(), 1);
    assert_eq!(tl.failures[0].userid, "ux");
    assert_eq!(me.failures().len(), 1);
}

#[test]
fn never_written_feed_reads_empty() {
    let dir = TempDir::new().unwrap();
    let mut me = Channel::open(
        feed_cfg(dir.path(), "me", "um").subscribe("ua", feed_path(dir.path(), "ua").to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    let tl = me.home_timeline(10, t(2)).unwrap();
    assert!(tl.messages.is_empty() && tl.failures.is_empty());
}

#[test]
fn fbsr_reply_threads_and_leaves_feed_alone() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    let root = a.update("root post", t(1)).unwrap();
    let mut b = Channel::open(
        feed_cfg(dir.path(), "b", "ub").subscribe("ua", feed_path(dir.path(), "ua").to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    b.update("b's own", t(2)).unwrap();
    let before = std::fs::read(feed_path(dir.path(), "ub")).unwrap();
    b.home_timeline(10, t(3)).unwrap();
    let r1 = b.reply(&root.id, "nice", t(4)).unwrap();
    assert_eq!(r1.id.thread_id.as_deref(), Some(root.id.native_id.as_str()));
    let r2 = b.reply(&r1.id, "replying to myself", t(5)).unwrap();
    assert_eq!(r2.id.thread_id, r1.id.thread_id);
    assert_eq!(std::fs::read(feed_path(dir.path(), "ub")).unwrap(), before);
    // replies stay out of timelines
    let mut c = Channel::open(
        feed_cfg(dir.path(), "c", "uc").subscribe("ub", feed_path(dir.path(), "ub").to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    let texts: Vec<String> = c.home_timeline(10, t(6)).unwrap().messages.into_iter().map(|m| m.text).collect();
    assert_eq!(texts, ["b's own"]);
    let thread: Vec<String> = c.thread(&root.id).unwrap().into_iter().map(|m| m.text).collect();
    assert_eq!(thread, ["nice", "replying to myself"]);
    assert!(matches!(
        b.reply(&MessageId::new("feed", "zz", "none"), "?", t(7)),
        Err(ChannelError::UnknownThread(_))
    ));
}

#[test]
fn push_reply_reaches_author_inbox() {
    let dir = TempDir::new().unwrap();
    let inbox = |u: &str| dir.path().join(u).to_str().unwrap().to_string();
    let mut a = Channel::open(
        ChannelConfig::new("a", Platform::InboxPush, "ua", "alice", &inbox("ua")).subscribe("ub", inbox("ub"), LinkKind::Push),
    )
    .unwrap();
    let root = a.update("hi", t(1)).unwrap();
    let mut b = Channel::open(
        ChannelConfig::new("b", Platform::InboxPush, "ub", "bob", &inbox("ub")).subscribe("ua", inbox("ua"), LinkKind::Push),
    )
    .unwrap();
    assert_eq!(b.home_timeline(5, t(2)).unwrap().messages.len(), 1);
    let r = b.reply(&root.id, "hey", t(3)).unwrap();
    let got = a.thread(&root.id).unwrap();
    assert_eq!(got, vec![r]);
    assert!(a.home_timeline(5, t(4)).unwrap().messages.is_empty());
}

#[test]
fn tsr_reply_is_an_update() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    let root = a.update("q", t(1)).unwrap();
    let mut cfg = feed_cfg(dir.path(), "b", "ub").subscribe("ua", feed_path(dir.path(), "ua").to_str().unwrap(), LinkKind::Pull);
    cfg.write_model.reply_style = crate::message::ReplyStyle::Tsr;
    let mut b = Channel::open(cfg).unwrap();
    b.home_timeline(5, t(2)).unwrap();
    let r = b.reply(&root.id, "answer", t(3)).unwrap();
    assert_eq!(r.text, "@name_ua answer");
    assert_eq!(b.own_feed().unwrap().entries.len(), 1);
}

#[test]
fn forward_text_and_provenance() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    let mut orig = a.update("hello", t(1)).unwrap();
    orig.username = "alice".into();
    let mut b = Channel::open(feed_cfg(dir.path(), "b", "ub")).unwrap();
    let f = b.forward(&orig, None, t(2)).unwrap();
    assert_eq!(f.text, "RT @alice hello");
    assert_eq!(f.optional_fields["forward_of"], orig.id.to_string());
    assert_eq!(b.own_feed().unwrap().entries[0].text, "RT @alice hello");
    let ff = a.forward(&f, Some("lol"), t(3)).unwrap();
    assert_eq!(ff.text, "lol RT @name_ub RT @alice hello");
}

#[test]
fn pocket_merge_and_dedup() {
    let mut empty = Pocket::new();
    assert!(pocket_timeline(&mut empty, 10, t(0)).messages.is_empty());

    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    let mut b = Channel::open(feed_cfg(dir.path(), "b", "ub")).unwrap();
    a.update("from a", t(1)).unwrap();
    b.update("from b", t(2)).unwrap();
    let pa = feed_path(dir.path(), "ua");
    let pb = feed_path(dir.path(), "ub");
    let mut pocket = Pocket::new();
    pocket.open(feed_cfg(dir.path(), "x", "ux").subscribe("ua", pa.to_str().unwrap(), LinkKind::Pull)).unwrap();
    pocket.open(feed_cfg(dir.path(), "y", "uy").subscribe("ub", pb.to_str().unwrap(), LinkKind::Pull)).unwrap();
    let tl = pocket_timeline(&mut pocket, 10, t(3));
    assert_eq!(tl.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>(), ["from b", "from a"]);
    // the same feed reachable through a third channel
    pocket.open(feed_cfg(dir.path(), "z", "uz").subscribe("ua", pa.to_str().unwrap(), LinkKind::Pull)).unwrap();
    assert_eq!(pocket_timeline(&mut pocket, 10, t(4)).messages.len(), 2);
}

#[test]
fn fetch_over_http() {
    let dir = TempDir::new().unwrap();
    let mut a = Channel::open(feed_cfg(dir.path(), "a", "ua")).unwrap();
    a.update("over the wire", t(1)).unwrap();
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = BackgroundFeedServer::start(addr, FeedSource::Directory(dir.path().to_path_buf())).unwrap();
    let mut me = Channel::open(
        feed_cfg(dir.path(), "me", "um")
            .subscribe("ua", server.feed_url("ua"), LinkKind::Pull)
            .subscribe("nobody", server.feed_url("nobody"), LinkKind::Pull),
    )
    .unwrap();
    let tl = me.home_timeline(10, t(2)).unwrap();
    assert_eq!(tl.messages.len(), 1);
    assert_eq!(tl.messages[0].text, "over the wire");
    // unknown feed answers 404 and is recorded, not fatal
    assert_eq!(tl.failures.len(), 1);
    assert!(tl.failures[0].reason.contains("404"), "{}", tl.failures[0].reason);
}

fn delivered(msgs: &[Message]) -> BTreeSet<Digest> {
    msgs.iter().map(Message::digest).collect()
}

/// Runs one update sequence through a pull link and a push link with a
/// follower that reads after every update; returns both delivery sets.
fn pull_push_sets(texts: &[String]) -> (BTreeSet<Digest>, BTreeSet<Digest>) {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let mut poster = Channel::open(feed_cfg(root, "pp", "src")).unwrap();
    let mut puller = Channel::open(
        feed_cfg(root, "pf", "dst").subscribe("src", feed_path(root, "src").to_str().unwrap(), LinkKind::Pull),
    )
    .unwrap();
    let inbox = |u: &str| root.join(format!("inbox_{u}")).to_str().unwrap().to_string();
    let mut pusher = Channel::open(
        ChannelConfig::new("ps", Platform::InboxPush, "src", "name_src", &inbox("src")).subscribe("dst", inbox("dst"), LinkKind::Push),
    )
    .unwrap();
    let mut receiver = Channel::open(ChannelConfig::new("pr", Platform::InboxPush, "dst", "name_dst", &inbox("dst"))).unwrap();
    let (mut pulled, mut pushed) = (BTreeSet::new(), BTreeSet::new());
    for (i, text) in texts.iter().enumerate() {
        let now = t(i as i64);
        poster.update(text, now).unwrap();
        pusher.update(text, now).unwrap();
        pulled.extend(delivered(&puller.home_timeline(usize::MAX, now).unwrap().messages));
        pushed.extend(delivered(&receiver.home_timeline(usize::MAX, now).unwrap().messages));
    }
    (pulled, pushed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn pull_and_push_deliver_the_same_set(texts in proptest::collection::vec("[a-z \\n]{0,12}", 1..12)) {
        let (pulled, pushed) = pull_push_sets(&texts);
        prop_assert_eq!(pulled.len(), texts.len());
        prop_assert_eq!(pulled, pushed);
    }
}
