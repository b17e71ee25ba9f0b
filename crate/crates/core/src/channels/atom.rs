//! Atom-subset feed documents.
//!
//! Rendering is byte-exact and deterministic:
//!
//! ```text
//! <?xml version="1.0" encoding="utf-8"?>
//! <feed xmlns="http://www.w3.org/2005/Atom">
//! <title>{owner userid}</title>
//! <entry>
//! <id>urn:dsnbench:{platform}:{channel}:{native_id}</id>
//! <author><name>{username}</name><uri>urn:uid:{userid}</uri></author>
//! <published>{RFC3339 UTC, milliseconds}</published>
//! <content type="text">{text}</content>
//! <link rel="enclosure" href="{uri}" title="{kind}"/>
//! </entry>
//! </feed>
//! ```
//!
//! Entries are newest first. The parser accepts this output and skips any
//! element it does not know.

use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::message::{Attachment, Message, MessageId};
use crate::time::Timestamp;

pub const XML_HEADER: &str = "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
pub const ID_PREFIX: &str = "urn:dsnbench:";
pub const UID_PREFIX: &str = "urn:uid:";

#[derive(Debug, Error, PartialEq)]
#[error("malformed feed document at byte {offset}: {reason}")]
pub struct FeedParseError {
    pub offset: u64,
    pub reason: String,
}

/// A rendered feed: owner plus newest-first entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedDocument {
    pub owner_userid: String,
    pub entries: Vec<Message>,
    pub byte_size: usize,
}

impl FeedDocument {
    pub fn empty(owner: &str) -> Self {
        let mut doc = FeedDocument { owner_userid: owner.to_string(), entries: Vec::new(), byte_size: 0 };
        doc.byte_size = render_entries(owner, &[]).len();
        doc
    }

    /// Sorts, truncates to `limit` and records the rendered size.
    pub fn build(owner: &str, mut messages: Vec<Message>, limit: usize) -> Self {
        sort_newest_first(&mut messages);
        messages.truncate(limit);
        let byte_size = render_entries(owner, &messages).len();
        FeedDocument { owner_userid: owner.to_string(), entries: messages, byte_size }
    }

    pub fn render(&self) -> Vec<u8> {
        render_entries(&self.owner_userid, &self.entries).into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<FeedDocument, FeedParseError> {
        parse_document(bytes)
    }
}

/// Time descending, ties by native id ascending.
pub fn sort_newest_first(messages: &mut [Message]) {
    messages.sort_by(|a, b| b.time.cmp(&a.time).then_with(|| a.id.native_id.cmp(&b.id.native_id)));
}

pub fn feed_render(messages: &[Message], owner: &str, limit: usize) -> Vec<u8> {
    FeedDocument::build(owner, messages.to_vec(), limit).render()
}

pub fn feed_parse(bytes: &[u8]) -> Result<Vec<Message>, FeedParseError> {
    parse_document(bytes).map(|d| d.entries)
}

pub fn rfc3339_millis(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp_millis(t.millis())
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn escape_xml(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' | '\t' => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                out.push_str(&format!("&#x{:X};", c as u32));
            }
            c => out.push(c),
        }
    }
}

/// Inverse of [`escape_xml`]. Character references to control characters are
/// accepted, since that is how the renderer writes them.
fn unescape_xml(raw: &str) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp + 1..];
        let semi = tail.find(';').ok_or("unterminated entity")?;
        let name = &tail[..semi];
        let c = match name {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = name.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = name.strip_prefix('#') {
                    dec.parse().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32).ok_or_else(|| format!("unknown entity &{name};"))?
            }
        };
        out.push(c);
        rest = &tail[semi + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn render_entries(owner: &str, entries: &[Message]) -> String {
    let mut out = String::with_capacity(128 + entries.len() * 320);
    out.push_str(XML_HEADER);
    out.push_str("<feed xmlns=\"http://www.w3.org/2005/Atom\">\n<title>");
    escape_xml(owner, &mut out);
    out.push_str("</title>\n");
    for m in entries {
        out.push_str("<entry>\n<id>");
        escape_xml(&format!("{ID_PREFIX}{}:{}:{}", m.id.platform, m.id.channel_id, m.id.native_id), &mut out);
        out.push_str("</id>\n<author><name>");
        escape_xml(&m.username, &mut out);
        out.push_str("</name><uri>");
        escape_xml(&format!("{UID_PREFIX}{}", m.userid), &mut out);
        out.push_str("</uri></author>\n<published>");
        out.push_str(&rfc3339_millis(m.time));
        out.push_str("</published>\n<content type=\"text\">");
        escape_xml(&m.text, &mut out);
        out.push_str("</content>\n");
        for a in &m.attachments {
            out.push_str("<link rel=\"enclosure\" href=\"");
            escape_xml(&a.uri_or_data, &mut out);
            out.push_str("\" title=\"");
            out.push_str(a.kind.as_str());
            out.push_str("\"/>\n");
        }
        out.push_str("</entry>\n");
    }
    out.push_str("</feed>\n");
    out
}

#[derive(Default)]
struct EntryBuilder {
    id: Option<String>,
    name: Option<String>,
    uri: Option<String>,
    published: Option<String>,
    content: Option<String>,
    links: Vec<Attachment>,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Title,
    Id,
    Name,
    Uri,
    Published,
    Content,
}

fn parse_document(bytes: &[u8]) -> Result<FeedDocument, FeedParseError> {
    let mut reader = Reader::from_reader(bytes);
    let err = |reader: &Reader<&[u8]>, reason: String| FeedParseError {
        offset: reader.buffer_position(),
        reason,
    };

    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut owner: Option<String> = None;
    let mut entries = Vec::new();
    let mut entry: Option<EntryBuilder> = None;
    let mut field: Option<Field> = None;
    let mut text = String::new();
    let mut saw_feed_end = false;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| err(&reader, e.to_string()))?;
        match event {
            Event::Start(start) => {
                let name = start.local_name().as_ref().to_vec();
                let parent = stack.last().map(|v| v.as_slice());
                field = match (parent, name.as_slice()) {
                    (None, b"feed") => None,
                    (None, other) => {
                        return Err(err(&reader, format!("unexpected root <{}>", String::from_utf8_lossy(other))))
                    }
                    (Some(b"feed"), b"title") => Some(Field::Title),
                    (Some(b"feed"), b"entry") => {
                        entry = Some(EntryBuilder::default());
                        None
                    }
                    (Some(b"entry"), b"id") => Some(Field::Id),
                    (Some(b"entry"), b"published") => Some(Field::Published),
                    (Some(b"entry"), b"content") => Some(Field::Content),
                    (Some(b"author"), b"name") => Some(Field::Name),
                    (Some(b"author"), b"uri") => Some(Field::Uri),
                    (Some(b"entry"), b"link") => {
                        if let Some(e) = entry.as_mut() {
                            if let Some(a) = link_attachment(&start).map_err(|r| err(&reader, r))? {
                                e.links.push(a);
                            }
                        }
                        None
                    }
                    _ => None,
                };
                text.clear();
                stack.push(name);
            }
            Event::Empty(start) => {
                if stack.last().map(|v| v.as_slice()) == Some(b"entry")
                    && start.local_name().as_ref() == b"link"
                {
                    if let (Some(e), Some(a)) =
                        (entry.as_mut(), link_attachment(&start).map_err(|r| err(&reader, r))?)
                    {
                        e.links.push(a);
                    }
                }
            }
            Event::Text(t) => {
                if field.is_some() {
                    let raw = std::str::from_utf8(&t).map_err(|e| err(&reader, e.to_string()))?;
                    text.push_str(&unescape_xml(raw).map_err(|r| err(&reader, r))?);
                }
            }
            Event::CData(t) => {
                if field.is_some() {
                    text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(end) => {
                let name = end.local_name().as_ref().to_vec();
                if stack.pop().as_deref() != Some(name.as_slice()) {
                    return Err(err(&reader, "mismatched end tag".into()));
                }
                if let Some(f) = field.take() {
                    let value = std::mem::take(&mut text);
                    match (f, entry.as_mut()) {
                        (Field::Title, _) => owner = Some(value),
                        (Field::Id, Some(e)) => e.id = Some(value),
                        (Field::Name, Some(e)) => e.name = Some(value),
                        (Field::Uri, Some(e)) => e.uri = Some(value),
                        (Field::Published, Some(e)) => e.published = Some(value),
                        (Field::Content, Some(e)) => e.content = Some(value),
                        _ => {}
                    }
                }
                match name.as_slice() {
                    b"entry" if stack.last().map(|v| v.as_slice()) == Some(b"feed") => {
                        let b = entry.take().unwrap_or_default();
                        entries.push(finish_entry(b).map_err(|r| err(&reader, r))?);
                    }
                    b"feed" if stack.is_empty() => saw_feed_end = true,
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_feed_end || !stack.is_empty() {
        return Err(FeedParseError {
            offset: reader.buffer_position(),
            reason: "truncated document".into(),
        });
    }
    Ok(FeedDocument {
        owner_userid: owner.unwrap_or_default(),
        entries,
        byte_size: bytes.len(),
    })
}

fn link_attachment(start: &BytesStart<'_>) -> Result<Option<Attachment>, String> {
    let mut rel = None;
    let mut href = None;
    let mut title = None;
    for attr in start.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let raw = std::str::from_utf8(&attr.value).map_err(|e| e.to_string())?;
        let value = unescape_xml(raw)?;
        match attr.key.local_name().as_ref() {
            b"rel" => rel = Some(value),
            b"href" => href = Some(value),
            b"title" => title = Some(value),
            _ => {}
        }
    }
    if rel.as_deref() != Some("enclosure") {
        return Ok(None);
    }
    let href = href.ok_or("enclosure without href")?;
    let kind = title.as_deref().unwrap_or("link").parse().map_err(|e: crate::message::MessageError| e.to_string())?;
    Ok(Some(Attachment::new(kind, href)))
}

fn finish_entry(b: EntryBuilder) -> Result<Message, String> {
    let id = b.id.ok_or("entry without id")?;
    let rest = id.strip_prefix(ID_PREFIX).ok_or_else(|| format!("foreign entry id {id:?}"))?;
    let mut parts = rest.splitn(3, ':');
    let (platform, channel, native) = match (parts.next(), parts.next(), parts.next()) {
        (Some(p), Some(c), Some(n)) => (p, c, n),
        _ => return Err(format!("entry id {id:?} lacks platform:channel:native")),
    };
    let uri = b.uri.ok_or("entry without author uri")?;
    let userid = uri.strip_prefix(UID_PREFIX).ok_or_else(|| format!("author uri {uri:?}"))?;
    let published = b.published.ok_or("entry without published")?;
    let time = DateTime::parse_from_rfc3339(&published)
        .map_err(|e| format!("published {published:?}: {e}"))?
        .timestamp_millis();
    Ok(Message {
        id: MessageId::new(platform, channel, native),
        userid: userid.to_string(),
        username: b.name.ok_or("entry without author name")?,
        text: b.content.unwrap_or_default(),
        time: Timestamp(time),
        attachments: b.links,
        optional_fields: Default::default(),
        raw: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{make_message, AttachmentKind};
    use proptest::prelude::*;

    fn msg(native: &str, secs: i64, text: &str) -> Message {
        let mut m = make_message("u1", "alice", text, Timestamp::from_secs(secs), vec![]).unwrap();
        m.id = MessageId::new("feed", "c1", native);
        m
    }

    #[test]
    fn empty_feed_bytes() {
        let bytes = feed_render(&[], "u1", 10);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<feed xmlns=\"http://www.w3.org/2005/Atom\">\n<title>u1</title>\n</feed>\n"
        );
        assert_eq!(FeedDocument::empty("u1").byte_size, feed_render(&[], "u1", 10).len());
    }

    #[test]
    fn entry_bytes_are_pinned() {
        let mut m = msg("n1", 1_375_315_200, "a<b & \"c\"");
        m.attachments.push(Attachment::new(AttachmentKind::Image, "http://x/y.png"));
        let s = String::from_utf8(feed_render(&[m], "u1", 10)).unwrap();
        let expected_entry = "<entry>\n<id>urn:dsnbench:feed:c1:n1</id>\n<author><name>alice</name><uri>urn:uid:u1</uri></author>\n<published>2013-08-01T00:00:00.000Z</published>\n<content type=\"text\">a&lt;b &amp; &quot;c&quot;</content>\n<link rel=\"enclosure\" href=\"http://x/y.png\" title=\"image\"/>\n</entry>\n";
        assert!(s.contains(expected_entry), "{s}");
    }

    #[test]
    fn render_is_deterministic_and_truncates() {
        let ms: Vec<_> = (0..5).map(|i| msg(&format!("n{i}"), i, "t")).collect();
        assert_eq!(feed_render(&ms, "u1", 3), feed_render(&ms, "u1", 3));
        let parsed = feed_parse(&feed_render(&ms, "u1", 3)).unwrap();
        let ids: Vec<_> = parsed.iter().map(|m| m.id.native_id.as_str()).collect();
        assert_eq!(ids, ["n4", "n3", "n2"]);
    }

    #[test]
    fn ties_break_by_native_id() {
        let ms = vec![msg("b", 5, "x"), msg("a", 5, "y"), msg("c", 6, "z")];
        let doc = FeedDocument::build("u1", ms, 10);
        let ids: Vec<_> = doc.entries.iter().map(|m| m.id.native_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn truncated_document_is_an_error() {
        let bytes = feed_render(&[msg("n1", 1, "hello")], "u1", 10);
        let cut = &bytes[..bytes.len() - 20];
        let e = feed_parse(cut).unwrap_err();
        assert!(e.offset > 0);
        assert!(feed_parse(b"").is_err());
        assert!(feed_parse(b"<rss></rss>").is_err());
    }

    #[test]
    fn unknown_elements_are_skipped() {
        let doc = "<?xml version=\"1.0\"?><feed xmlns=\"http://www.w3.org/2005/Atom\"><title>u1</title>\
            <generator>x</generator><entry><id>urn:dsnbench:feed:c1:n1</id><extra><id>nope</id></extra>\
            <author><name>alice</name><uri>urn:uid:u1</uri><email>a@b</email></author>\
            <updated>2013-08-01T00:00:00Z</updated><published>2013-08-01T00:00:01.500Z</published>\
            <content type=\"text\">hi</content><link rel=\"alternate\" href=\"http://z\"/></entry></feed>";
        let ms = feed_parse(doc.as_bytes()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].id.native_id, "n1");
        assert_eq!(ms[0].text, "hi");
        assert_eq!(ms[0].time, Timestamp(1_375_315_201_500));
        assert!(ms[0].attachments.is_empty());
    }

    fn arb_msg() -> impl Strategy<Value = Message> {
        (
            "[a-z0-9]{1,6}",
            "[a-zA-Z0-9._-]{1,12}",
            "[^\\s]{1,8}",
            "\\PC{1,10}",
            "[\\PC\n\t]{0,40}",
            0i64..4_102_444_800_000,
            proptest::collection::vec("[a-z:/.0-9]{1,16}", 0..2),
        )
            .prop_map(|(chan, native, uid, uname, text, ms, links)| Message {
                id: MessageId::new("feed", chan, native),
                userid: uid,
                username: uname,
                text,
                time: Timestamp(ms),
                attachments: links.into_iter().map(Attachment::link).collect(),
                optional_fields: Default::default(),
                raw: Vec::new(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn render_parse_round_trip(ms in proptest::collection::vec(arb_msg(), 0..8)) {
            let doc = FeedDocument::build("owner", ms, 100);
            let parsed = FeedDocument::parse(&doc.render()).unwrap();
            prop_assert_eq!(parsed.byte_size, doc.byte_size);
            prop_assert_eq!(parsed.owner_userid, "owner");
            prop_assert_eq!(parsed.entries, doc.entries);
        }
    }
}
