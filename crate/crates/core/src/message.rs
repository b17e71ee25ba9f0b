//! The common message object shared by every channel kind.
//!
//! A [`Message`] carries the five mandatory fields every platform can supply
//! (`userid`, `username`, `text`, `time`, `attachments`) plus a free-form map
//! of optional fields and the original raw payload. [`MessageId`] is opaque to
//! applications and only interpreted by channels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::escape::{escape, unescape};
use crate::time::Timestamp;

pub const FORWARD_MARKER: &str = "RT @";

#[derive(Debug, Error, PartialEq)]
pub enum MessageError {
    #[error("message time must be non-negative, got {0} ms")]
    NegativeTime(i64),
    #[error("userid must not be empty")]
    EmptyUserId,
    #[error("username must not be empty")]
    EmptyUsername,
    #[error("malformed message record: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId {
    pub platform: String,
    pub channel_id: String,
    pub native_id: String,
    /// Root of the reply thread, for FBSR replies.
    pub thread_id: Option<String>,
}

impl MessageId {
    pub fn new(
        platform: impl Into<String>,
        channel_id: impl Into<String>,
        native_id: impl Into<String>,
    ) -> Self {
        MessageId {
            platform: platform.into(),
            channel_id: channel_id.into(),
            native_id: native_id.into(),
            thread_id: None,
        }
    }

    /// Native id of the thread root this message belongs to.
    pub fn thread_root(&self) -> &str {
        self.thread_id.as_deref().unwrap_or(&self.native_id)
    }

    pub fn triple(&self) -> (&str, &str, &str) {
        (&self.platform, &self.channel_id, &self.native_id)
    }
}

/// `platform:channel:native`, the form stored under `forward_of`.
impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.platform, self.channel_id, self.native_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttachmentKind {
    Link,
    Image,
    Video,
    Blob,
}

impl AttachmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttachmentKind::Link => "link",
            AttachmentKind::Image => "image",
            AttachmentKind::Video => "video",
            AttachmentKind::Blob => "blob",
        }
    }
}

impl FromStr for AttachmentKind {
    type Err = MessageError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "link" => Ok(AttachmentKind::Link),
            "image" => Ok(AttachmentKind::Image),
            "video" => Ok(AttachmentKind::Video),
            "blob" => Ok(AttachmentKind::Blob),
            other => Err(MessageError::Malformed(format!("attachment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attachment {
    pub kind: AttachmentKind,
    pub uri_or_data: String,
}

impl Attachment {
    pub fn new(kind: AttachmentKind, uri_or_data: impl Into<String>) -> Self {
        Attachment { kind, uri_or_data: uri_or_data.into() }
    }

    pub fn link(uri: impl Into<String>) -> Self {
        Self::new(AttachmentKind::Link, uri)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplyStyle {
    /// Twitter-style: a reply is an update prefixed with `@user`.
    Tsr,
    /// Facebook-style: threaded on the original, notifies its author, never
    /// enters the replier's own timeline.
    Fbsr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardStyle {
    /// User-invented retweet: `RT @user text` posted as a plain update.
    Urt,
    /// Official retweet. Carried for completeness; no local channel emits it.
    Ort,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteModel {
    pub reply_style: ReplyStyle,
    pub forward_style: ForwardStyle,
}

impl Default for WriteModel {
    fn default() -> Self {
        WriteModel { reply_style: ReplyStyle::Fbsr, forward_style: ForwardStyle::Urt }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: MessageId,
    pub userid: String,
    pub username: String,
    pub text: String,
    pub time: Timestamp,
    pub attachments: Vec<Attachment>,
    pub optional_fields: BTreeMap<String, String>,
    pub raw: Vec<u8>,
}

/// Builds a message with an unassigned id; the posting channel fills in
/// platform, channel and native id.
pub fn make_message(
    userid: &str,
    username: &str,
    text: &str,
    time: Timestamp,
    attachments: Vec<Attachment>,
) -> Result<Message, MessageError> {
    if userid.is_empty() {
        return Err(MessageError::EmptyUserId);
    }
    if username.is_empty() {
        return Err(MessageError::EmptyUsername);
    }
    if time.millis() < 0 {
        return Err(MessageError::NegativeTime(time.millis()));
    }
    Ok(Message {
        id: MessageId::new("", "", ""),
        userid: userid.to_string(),
        username: username.to_string(),
        text: text.to_string(),
        time,
        attachments,
        optional_fields: BTreeMap::new(),
        raw: Vec::new(),
    })
}

/// `{comment} RT @{user} {text}`, with the comment and its space omitted when
/// absent.
pub fn compose_forward_text(orig_username: &str, orig_text: &str, comment: Option<&str>) -> String {
    match comment {
        Some(c) => format!("{c} {FORWARD_MARKER}{orig_username} {orig_text}"),
        None => format!("{FORWARD_MARKER}{orig_username} {orig_text}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardParts {
    pub comment: String,
    pub orig_username: String,
    pub orig_text: String,
}

/// Splits a URT text at its first marker. The username runs to the first
/// whitespace; one separating space is consumed.
pub fn parse_forward_text(text: &str) -> Option<ForwardParts> {
    let (comment, rest) = if let Some(rest) = text.strip_prefix(FORWARD_MARKER) {
        ("", rest)
    } else {
        let at = text.find(" RT @")?;
        (&text[..at], &text[at + 1 + FORWARD_MARKER.len()..])
    };
    let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let orig_username = &rest[..end];
    if orig_username.is_empty() {
        return None;
    }
    let after = &rest[end..];
    let orig_text = after.strip_prefix(' ').unwrap_or(after);
    Some(ForwardParts {
        comment: comment.to_string(),
        orig_username: orig_username.to_string(),
        orig_text: orig_text.to_string(),
    })
}

/// Content identity used by seen-sets: SHA-256 over (userid, text, time), so
/// the same message reached through two channels collapses to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Message {
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        // length-prefix the variable fields so ("ab","c") != ("a","bc")
        h.update((self.userid.len() as u64).to_le_bytes());
        h.update(self.userid.as_bytes());
        h.update((self.text.len() as u64).to_le_bytes());
        h.update(self.text.as_bytes());
        h.update(self.time.millis().to_le_bytes());
        Digest(h.finalize().into())
    }

    /// Canonical one-line record: tab-separated `key=value` pairs in a fixed
    /// order, values backslash-escaped.
    pub fn to_record(&self) -> String {
        let mut fields: Vec<(String, String)> = vec![
            ("id.platform".into(), self.id.platform.clone()),
            ("id.channel".into(), self.id.channel_id.clone()),
            ("id.native".into(), self.id.native_id.clone()),
        ];
        if let Some(t) = &self.id.thread_id {
            fields.push(("id.thread".into(), t.clone()));
        }
        fields.push(("userid".into(), self.userid.clone()));
        fields.push(("username".into(), self.username.clone()));
        fields.push(("text".into(), self.text.clone()));
        fields.push(("time".into(), self.time.to_string()));
        for a in &self.attachments {
            fields.push(("attachments".into(), format!("{}:{}", a.kind.as_str(), a.uri_or_data)));
        }
        for (k, v) in &self.optional_fields {
            fields.push((format!("optional.{k}"), v.clone()));
        }
        if !self.raw.is_empty() {
            fields.push(("raw".into(), hex::encode(&self.raw)));
        }
        fields
            .iter()
            .map(|(k, v)| format!("{}={}", escape(k), escape(v)))
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn from_record(line: &str) -> Result<Message, MessageError> {
        let bad = |what: &str| MessageError::Malformed(what.to_string());
        let mut id = MessageId::new("", "", "");
        let mut userid = None;
        let mut username = None;
        let mut text = None;
        let mut time = None;
        let mut attachments = Vec::new();
        let mut optional_fields = BTreeMap::new();
        let mut raw = Vec::new();
        for field in line.trim_end_matches(['\n', '\r']).split('\t') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(field))?;
            let key = unescape(k).ok_or_else(|| bad(k))?;
            let value = unescape(v).ok_or_else(|| bad(v))?;
            match key.as_str() {
                "id.platform" => id.platform = value,
                "id.channel" => id.channel_id = value,
                "id.native" => id.native_id = value,
                "id.thread" => id.thread_id = Some(value),
                "userid" => userid = Some(value),
                "username" => username = Some(value),
                "text" => text = Some(value),
                "time" => time = Some(value.parse::<Timestamp>().map_err(|e| bad(&e.to_string()))?),
                "attachments" => {
                    let (kind, uri) = value.split_once(':').ok_or_else(|| bad(&value))?;
                    attachments.push(Attachment::new(kind.parse()?, uri));
                }
                "raw" => raw = hex::decode(&value).map_err(|_| bad("raw"))?,
                other => match other.strip_prefix("optional.") {
                    Some(name) => {
                        optional_fields.insert(name.to_string(), value);
                    }
                    None => return Err(bad(other)),
                },
            }
        }
        Ok(Message {
            id,
            userid: userid.ok_or_else(|| bad("missing userid"))?,
            username: username.ok_or_else(|| bad("missing username"))?,
            text: text.ok_or_else(|| bad("missing text"))?,
            time: time.ok_or_else(|| bad("missing time"))?,
            attachments,
            optional_fields,
            raw,
        })
    }
}

pub fn message_digest(m: &Message) -> String {
    m.digest().to_string()
}
