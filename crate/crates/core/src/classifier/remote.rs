//! Line-oriented wire protocol for out-of-process classifiers.
//!
//! One request per connection:
//!
//! ```text
//! -> CLASSIFY <byte-count>\n<raw image bytes>
//! <- CATEGORY <code> <p1> <p2> <p3> <p4> <p5>\n
//! ```
//!
//! Probabilities are in category-code order. Servers may answer
//! `ERROR <message>\n` instead.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use super::handle::{Classification, PhotoClassifier};
use super::ClassifierError;
use crate::category::ContentCategory;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Upper bound on a request body; larger requests are refused.
pub const MAX_REQUEST_BYTES: usize = 64 << 20;

const MAX_LINE: usize = 1024;

/// Client side of the protocol.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    address: String,
    timeout: Duration,
}

impl RemoteClassifier {
    pub fn new(address: impl Into<String>) -> Self {
        Self { address: address.into(), timeout: DEFAULT_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn resolve(&self) -> Result<SocketAddr, ClassifierError> {
        self.address
            .to_socket_addrs()
            .map_err(|e| ClassifierError::Remote(format!("cannot resolve {}: {e}", self.address)))?
            .next()
            .ok_or_else(|| ClassifierError::Remote(format!("{} resolved to nothing", self.address)))
    }

    fn round_trip(&self, bytes: &[u8]) -> Result<Classification, ClassifierError> {
        let addr = self.resolve()?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| remote_io("connect", e))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| remote_io("configure", e))?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| remote_io("configure", e))?;
        stream.write_all(&encode_request(bytes)).map_err(|e| remote_io("send", e))?;
        stream.flush().map_err(|e| remote_io("send", e))?;
        let mut reader = BufReader::new(stream);
        let line = read_line(&mut reader).map_err(|e| remote_io("receive", e))?;
        parse_response(&line)
    }
}

fn remote_io(stage: &str, e: std::io::Error) -> ClassifierError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => ClassifierError::Timeout,
        _ => ClassifierError::Remote(format!("{stage}: {e}")),
    }
}

impl PhotoClassifier for RemoteClassifier {
    fn classify(&self, _path: &Path, bytes: &[u8]) -> Result<Classification, ClassifierError> {
        self.round_trip(bytes)
    }

    fn name(&self) -> String {
        format!("remote:{}", self.address)
    }
}

pub fn encode_request(bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("CLASSIFY {}\n", bytes.len()).into_bytes();
    out.extend_from_slice(bytes);
    out
}

pub fn encode_response(c: &Classification) -> String {
    let mut line = format!("CATEGORY {}", c.category.code());
    for p in c.probabilities {
        line.push(' ');
        line.push_str(&p.to_string());
    }
    line.push('\n');
    line
}

/// Parses one response line (with or without the trailing newline).
pub fn parse_response(line: &str) -> Result<Classification, ClassifierError> {
    let line = line.trim_end_matches(['\n', '\r']);
    if let Some(msg) = line.strip_prefix("ERROR ") {
        return Err(ClassifierError::Remote(format!("server error: {msg}")));
    }
    let bad = || ClassifierError::Protocol(format!("malformed response {line:?}"));
    let mut parts = line.split(' ');
    if parts.next() != Some("CATEGORY") {
        return Err(bad());
    }
    let code: i64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let category = ContentCategory::from_code(code).map_err(|e| ClassifierError::Protocol(e.to_string()))?;
    let mut probabilities = [0.0; ContentCategory::COUNT];
    for p in &mut probabilities {
        *p = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if !(0.0..=1.0).contains(p) {
            return Err(bad());
        }
    }
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(Classification { category, probabilities })
}

fn read_line<R: BufRead>(reader: &mut R) -> std::io::Result<String> {
    let mut buf = Vec::new();
    reader.by_ref().take(MAX_LINE as u64).read_until(b'\n', &mut buf)?;
    if buf.last() != Some(&b'\n') {
        return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "unterminated line"));
    }
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Reads a `CLASSIFY` request and returns the image bytes.
pub fn read_request<R: BufRead>(reader: &mut R) -> Result<Vec<u8>, ClassifierError> {
    let line = read_line(reader).map_err(|e| ClassifierError::Protocol(e.to_string()))?;
    let count: usize = line
        .trim_end()
        .strip_prefix("CLASSIFY ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| ClassifierError::Protocol(format!("malformed request {:?}", line.trim_end())))?;
    if count > MAX_REQUEST_BYTES {
        return Err(ClassifierError::Protocol(format!("request of {count} bytes exceeds limit")));
    }
    let mut bytes = vec![0; count];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| ClassifierError::Protocol(format!("short body: {e}")))?;
    Ok(bytes)
}

/// Serves one request on `stream` using `classifier`.
pub fn serve_connection(stream: TcpStream, classifier: &dyn PhotoClassifier) -> std::io::Result<()> {
    stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let reply = match read_request(&mut reader)
        .and_then(|bytes| classifier.classify(Path::new("<remote>"), &bytes))
    {
        Ok(c) => encode_response(&c),
        Err(e) => format!("ERROR {}\n", e.to_string().replace('\n', " ")),
    };
    writer.write_all(reply.as_bytes())?;
    writer.flush()
}

/// Accept loop; one thread per connection. Runs until the listener fails.
pub fn serve(listener: TcpListener, classifier: Arc<dyn PhotoClassifier>) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let classifier = Arc::clone(&classifier);
        std::thread::spawn(move || {
            if let Err(e) = serve_connection(stream, classifier.as_ref()) {
                log::warn!("remote classifier connection failed: {e}");
            }
        });
    }
    Ok(())
}
