//! Endpoint I/O: feed files, inbox logs and record stores on the local
//! filesystem, plus feed fetches over HTTP.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use url::Url;

use super::atom::FeedDocument;
use super::ChannelError;
use crate::message::Message;

pub const INBOX_FILE: &str = "inbox.log";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Path(PathBuf),
    Http(Url),
}

impl Endpoint {
    /// Anything with a `scheme://` prefix must be a well-formed `http`,
    /// `https` or `file` URL; everything else is a filesystem path.
    pub fn parse(s: &str) -> Result<Endpoint, ChannelError> {
        let unreachable = |why: String| ChannelError::EndpointUnreachable { endpoint: s.to_string(), reason: why };
        if s.trim().is_empty() {
            return Err(unreachable("empty endpoint".into()));
        }
        if !s.contains("://") {
            return Ok(Endpoint::Path(PathBuf::from(s)));
        }
        let url = Url::parse(s).map_err(|e| unreachable(e.to_string()))?;
        match url.scheme() {
            "http" | "https" => {
                if url.host_str().is_none_or(str::is_empty) {
                    return Err(unreachable("missing host".into()));
                }
                Ok(Endpoint::Http(url))
            }
            "file" => url
                .to_file_path()
                .map(Endpoint::Path)
                .map_err(|_| unreachable("bad file URL".into())),
            other => Err(unreachable(format!("unsupported scheme {other}"))),
        }
    }

    pub fn as_path(&self) -> Option<&Path> {
        match self {
            Endpoint::Path(p) => Some(p),
            Endpoint::Http(_) => None,
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Path(p) => write!(f, "{}", p.display()),
            Endpoint::Http(u) => write!(f, "{u}"),
        }
    }
}

pub(crate) fn storage_error(path: &Path, e: io::Error) -> ChannelError {
    if e.kind() == io::ErrorKind::StorageFull {
        ChannelError::StorageFull(path.display().to_string())
    } else {
        ChannelError::Io { path: path.display().to_string(), source: e }
    }
}

/// Makes sure `path`'s parent directory exists and is writable.
pub(crate) fn ensure_file_creatable(path: &Path) -> Result<(), ChannelError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure_dir(parent)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), ChannelError> {
    let fail = |e: io::Error| ChannelError::EndpointUnreachable {
        endpoint: dir.display().to_string(),
        reason: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let meta = fs::metadata(dir).map_err(fail)?;
    if meta.permissions().readonly() {
        return Err(ChannelError::EndpointUnreachable {
            endpoint: dir.display().to_string(),
            reason: "directory is read-only".into(),
        });
    }
    Ok(())
}

/// Writes through a temporary file and renames it into place, so a concurrent
/// reader sees either the old or the new document, never a partial one.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ChannelError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| storage_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| storage_error(path, e))
}

/// A feed path that was never written reads as an empty feed, as long as its
/// directory exists. A missing directory means the peer is unreachable.
pub(crate) fn read_feed_file(path: &Path, owner: &str) -> Result<FeedDocument, String> {
    match fs::read(path) {
        Ok(bytes) => FeedDocument::parse(&bytes).map_err(|e| e.to_string()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if parent.is_dir() {
                Ok(FeedDocument::empty(owner))
            } else {
                Err(format!("{}: {e}", path.display()))
            }
        }
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}

pub(crate) fn fetch_feed_http(url: &Url) -> Result<FeedDocument, String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .map_err(|e| e.to_string())?;
    let resp = client.get(url.clone()).send().map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(format!("{url}: HTTP {}", resp.status()));
    }
    let bytes = resp.bytes().map_err(|e| e.to_string())?;
    FeedDocument::parse(&bytes).map_err(|e| e.to_string())
}

pub(crate) fn fetch_feed(endpoint: &Endpoint, owner: &str) -> Result<FeedDocument, String> {
    match endpoint {
        Endpoint::Path(p) => read_feed_file(p, owner),
        Endpoint::Http(u) => fetch_feed_http(u),
    }
}

pub(crate) fn append_record(path: &Path, m: &Message) -> Result<(), ChannelError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| storage_error(path, e))?;
    let mut line = m.to_record();
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| storage_error(path, e))
}

/// Reads a record log; a missing file is an empty log.
pub(crate) fn read_records(path: &Path) -> Result<Vec<Message>, String> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(format!("{}: {e}", path.display())),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.is_empty() {
            continue;
        }
        out.push(Message::from_record(&line).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?);
    }
    Ok(out)
}

pub(crate) fn inbox_path(root: &Path) -> PathBuf {
    root.join(INBOX_FILE)
}

/// Sibling file holding FBSR comments on one thread of the feed at `feed`.
pub fn comment_feed_path(feed: &Path, thread_id: &str) -> PathBuf {
    let safe: String = thread_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    let mut p = feed.as_os_str().to_owned();
    p.push(format!(".comments.{safe}"));
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert!(matches!(Endpoint::parse("/tmp/a.atom"), Ok(Endpoint::Path(_))));
        assert!(matches!(Endpoint::parse("http://127.0.0.1:8000/u1.atom"), Ok(Endpoint::Http(_))));
        assert!(matches!(Endpoint::parse("file:///tmp/x.atom"), Ok(Endpoint::Path(_))));
        for bad in ["http://", "http//", "gopher://x/y", "", "http://[::1/x"] {
            if bad == "http//" {
                // no scheme separator: treated as a relative path
                assert!(Endpoint::parse(bad).is_ok());
                continue;
            }
            assert!(
                matches!(Endpoint::parse(bad), Err(ChannelError::EndpointUnreachable { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn comment_path_is_sanitized() {
        let p = comment_feed_path(Path::new("/x/u1.atom"), "a/b:c");
        assert_eq!(p, PathBuf::from("/x/u1.atom.comments.a_b_c"));
    }
}
