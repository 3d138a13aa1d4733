//! Result messages: a file outbox by default, plain SMTP optionally.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::assess::Verdict;
use crate::error::{Error, Result};
use crate::pipeline::{read_results, ResultRow};

/// How much of the grading a student receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetailPolicy {
    #[default]
    ScoreOnly,
    PerQuestion,
}

impl std::str::FromStr for DetailPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score-only" => Ok(DetailPolicy::ScoreOnly),
            "per-question" => Ok(DetailPolicy::PerQuestion),
            _ => Err(Error::Domain(format!("unknown detail policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxMessage {
    pub student_index: u32,
    pub recipient: String,
    pub subject: String,
    pub body: String,
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Correct => "correct",
        Verdict::Incorrect => "incorrect",
        Verdict::Blank => "blank",
        Verdict::Multiple => "multiple marks",
    }
}

impl OutboxMessage {
    /// Builds the message for one result row. Nothing but the row and the
    /// policy goes into it.
    pub fn from_row(row: &ResultRow, policy: DetailPolicy) -> Self {
        let total = row.verdicts.chars().count();
        let mut body = format!("Score: {}/{}\n", row.score, total);
        if policy == DetailPolicy::PerQuestion {
            for (q, c) in row.verdicts.chars().enumerate() {
                let word = Verdict::from_letter(c).map(verdict_word).unwrap_or("unknown");
                body.push_str(&format!("Question {:2}: {word}\n", q + 1));
            }
        }
        OutboxMessage {
            student_index: row.student_index,
            recipient: row.email.clone(),
            subject: format!("Quiz {} result", row.quiz_index),
            body,
        }
    }

    /// Plain-text serialization used by the file outbox.
    pub fn to_text(&self) -> String {
        format!("To: {}\nSubject: {}\n\n{}", self.recipient, self.subject, self.body)
    }
}

/// Anything that can deliver an [`OutboxMessage`]. Returns where the message
/// went, for the delivery report.
pub trait MessageSender {
    fn send(&self, message: &OutboxMessage) -> Result<String>;
}

/// Writes each message to `student_NNNN.txt` in a directory.
#[derive(Debug, Clone)]
pub struct FileOutbox {
    dir: PathBuf,
}

impl FileOutbox {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(FileOutbox { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_name(student_index: u32) -> String {
        format!("student_{student_index:04}.txt")
    }
}

impl MessageSender for FileOutbox {
    fn send(&self, message: &OutboxMessage) -> Result<String> {
        let path = self.dir.join(Self::file_name(message.student_index));
        fs::write(&path, message.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path.display().to_string())
    }
}

/// Endpoint and credentials for [`SmtpSender`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtpConfig {
    pub host: String,
    pub port: u16,
    pub from: String,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

/// Minimal SMTP client: one connection per message, optional AUTH PLAIN,
/// no TLS. Meant for a local relay.
#[derive(Debug, Clone)]
pub struct SmtpSender {
    config: SmtpConfig,
}

struct SmtpSession {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl SmtpSession {
    fn reply(&mut self) -> Result<(u16, String)> {
        let mut text = String::new();
        loop {
            let mut line = String::new();
            let n = self.reader.read_line(&mut line).map_err(transport)?;
            if n == 0 {
                return Err(Error::Transport("connection closed".into()));
            }
            let line = line.trim_end();
            if line.len() < 3 {
                return Err(Error::Transport(format!("malformed reply {line:?}")));
            }
            let code: u16 = line[..3]
                .parse()
                .map_err(|_| Error::Transport(format!("malformed reply {line:?}")))?;
            text.push_str(line.get(4..).unwrap_or(""));
            if line.as_bytes().get(3) != Some(&b'-') {
                return Ok((code, text));
            }
            text.push('\n');
        }
    }

    fn expect(&mut self, class: u16) -> Result<()> {
        let (code, text) = self.reply()?;
        if code / 100 != class {
            return Err(Error::Transport(format!("{code} {text}")));
        }
        Ok(())
    }

    fn command(&mut self, line: &str, class: u16) -> Result<()> {
        self.writer.write_all(line.as_bytes()).map_err(transport)?;
        self.writer.write_all(b"\r\n").map_err(transport)?;
        self.expect(class)
    }
}

fn transport(e: std::io::Error) -> Error {
    Error::Transport(e.to_string())
}

fn header_safe(s: &str) -> Result<&str> {
    if s.contains(['\r', '\n']) {
        return Err(Error::Transport(format!("line break in header value {s:?}")));
    }
    Ok(s)
}

impl SmtpSender {
    pub fn new(config: SmtpConfig) -> Self {
        SmtpSender { config }
    }
}

impl MessageSender for SmtpSender {
    fn send(&self, message: &OutboxMessage) -> Result<String> {
        let c = &self.config;
        let recipient = header_safe(&message.recipient)?;
        let from = header_safe(&c.from)?;
        let subject = header_safe(&message.subject)?;
        let stream = TcpStream::connect((c.host.as_str(), c.port)).map_err(transport)?;
        let timeout = Some(Duration::from_secs(c.timeout_secs.max(1)));
        stream.set_read_timeout(timeout).map_err(transport)?;
        stream.set_write_timeout(timeout).map_err(transport)?;
        let mut s = SmtpSession {
            reader: BufReader::new(stream.try_clone().map_err(transport)?),
            writer: stream,
        };
        s.expect(2)?;
        s.command("EHLO localhost", 2)?;
        if let (Some(user), Some(pass)) = (&c.username, &c.password) {
            let token = base64::engine::general_purpose::STANDARD.encode(format!("\0{user}\0{pass}"));
            s.command(&format!("AUTH PLAIN {token}"), 2)?;
        }
        s.command(&format!("MAIL FROM:<{from}>"), 2)?;
        s.command(&format!("RCPT TO:<{recipient}>"), 2)?;
        s.command("DATA", 3)?;
        let mut data = format!("From: {from}\r\nTo: {recipient}\r\nSubject: {subject}\r\n\r\n");
        for line in message.body.lines() {
            // dot-stuffing
            if line.starts_with('.') {
                data.push('.');
            }
            data.push_str(line);
            data.push_str("\r\n");
        }
        data.push('.');
        s.command(&data, 2)?;
        let _ = s.command("QUIT", 2);
        Ok(format!("smtp://{}:{}", c.host, c.port))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered { location: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub student_index: u32,
    pub recipient: String,
    #[serde(flatten)]
    pub status: DeliveryStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub deliveries: Vec<Delivery>,
}

impl DeliveryReport {
    pub fn failures(&self) -> usize {
        self.deliveries
            .iter()
            .filter(|d| matches!(d.status, DeliveryStatus::Failed { .. }))
            .count()
    }
}

/// Sends one message per row. A failure is recorded against its recipient
/// and the run carries on.
pub fn dispatch_rows(rows: &[ResultRow], policy: DetailPolicy, sender: &dyn MessageSender) -> DeliveryReport {
    let deliveries = rows
        .iter()
        .map(|row| {
            let message = OutboxMessage::from_row(row, policy);
            let status = if message.recipient.trim().is_empty() {
                DeliveryStatus::Failed {
                    reason: "no recipient address".into(),
                }
            } else {
                match sender.send(&message) {
                    Ok(location) => DeliveryStatus::Delivered { location },
                    Err(e) => DeliveryStatus::Failed { reason: e.to_string() },
                }
            };
            Delivery {
                student_index: row.student_index,
                recipient: message.recipient,
                status,
            }
        })
        .collect();
    DeliveryReport { deliveries }
}

/// Reads a results file and dispatches it.
pub fn dispatch_results(results: &Path, policy: DetailPolicy, sender: &dyn MessageSender) -> Result<DeliveryReport> {
    let rows = read_results(results)?;
    Ok(dispatch_rows(&rows, policy, sender))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    fn row(i: u32) -> ResultRow {
        ResultRow {
            source: format!("s{i}.png"),
            student_index: i,
            name: "A".into(),
            email: format!("s{i}@example.org"),
            person_id: "1".into(),
            quiz_index: 4,
            score: 3,
            verdicts: "CCCXBM".to_string() + &"B".repeat(14),
            flags: String::new(),
        }
    }

    #[test]
    fn score_only_body_is_the_score_line() {
        let m = OutboxMessage::from_row(&row(1), DetailPolicy::ScoreOnly);
        assert_eq!(m.body, "Score: 3/20\n");
        assert_eq!(m.recipient, "s1@example.org");
    }

    #[test]
    fn per_question_body_has_a_line_per_question() {
        let m = OutboxMessage::from_row(&row(1), DetailPolicy::PerQuestion);
        let lines: Vec<_> = m.body.lines().collect();
        assert_eq!(lines.len(), 21);
        assert_eq!(lines[4], "Question  4: incorrect");
        assert_eq!(lines[6], "Question  6: multiple marks");
    }

    #[test]
    fn policy_parses() {
        assert_eq!("per-question".parse::<DetailPolicy>().unwrap(), DetailPolicy::PerQuestion);
        assert!("all".parse::<DetailPolicy>().is_err());
    }

    struct Flaky;
    impl MessageSender for Flaky {
        fn send(&self, m: &OutboxMessage) -> Result<String> {
            if m.student_index == 2 {
                Err(Error::Transport("refused".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut rows = vec![row(1), row(2), row(3)];
        rows.push(ResultRow { email: " ".into(), ..row(4) });
        let report = dispatch_rows(&rows, DetailPolicy::ScoreOnly, &Flaky);
        assert_eq!(report.deliveries.len(), 4);
        assert_eq!(report.failures(), 2);
        assert!(matches!(report.deliveries[2].status, DeliveryStatus::Delivered { .. }));
    }

    /// Accepts one SMTP session and returns the lines the client sent.
    fn fake_server(reject_rcpt: bool) -> (u16, mpsc::Receiver<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            let mut r = BufReader::new(stream);
            let mut seen = Vec::new();
            w.write_all(b"220 fake\r\n").unwrap();
            let mut in_data = false;
            loop {
                let mut line = String::new();
                if r.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                seen.push(line.clone());
                let reply: &[u8] = if in_data {
                    if line == "." {
                        in_data = false;
                        b"250 queued\r\n"
                    } else {
                        continue;
                    }
                } else if line.starts_with("EHLO") {
                    b"250-fake\r\n250 AUTH PLAIN\r\n"
                } else if line.starts_with("RCPT") && reject_rcpt {
                    b"550 no such user\r\n"
                } else if line == "DATA" {
                    in_data = true;
                    b"354 go\r\n"
                } else if line == "QUIT" {
                    w.write_all(b"221 bye\r\n").unwrap();
                    break;
                } else {
                    b"250 ok\r\n"
                };
                w.write_all(reply).unwrap();
            }
            tx.send(seen).unwrap();
        });
        (port, rx)
    }

    fn smtp(port: u16) -> SmtpSender {
        SmtpSender::new(SmtpConfig {
            host: "127.0.0.1".into(),
            port,
            from: "teacher@example.org".into(),
            username: Some("u".into()),
            password: Some("p".into()),
            timeout_secs: 5,
        })
    }

    #[test]
    fn smtp_session_delivers() {
        let (port, rx) = fake_server(false);
        let report = dispatch_rows(&[row(1)], DetailPolicy::ScoreOnly, &smtp(port));
        assert_eq!(report.failures(), 0);
        let seen = rx.recv().unwrap();
        assert!(seen.contains(&"AUTH PLAIN AHUAcA==".to_string()));
        assert!(seen.contains(&"RCPT TO:<s1@example.org>".to_string()));
        assert!(seen.contains(&"Score: 3/20".to_string()));
    }

    #[test]
    fn smtp_rejection_is_a_failed_delivery() {
        let (port, _rx) = fake_server(true);
        let report = dispatch_rows(&[row(1)], DetailPolicy::ScoreOnly, &smtp(port));
        assert_eq!(report.failures(), 1);
        match &report.deliveries[0].status {
            DeliveryStatus::Failed { reason } => assert!(reason.contains("550"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_outbox_writes_one_file_per_student() {
        let dir = tempfile::tempdir().unwrap();
        let outbox = FileOutbox::new(dir.path().join("out")).unwrap();
        let report = dispatch_rows(&[row(1), row(2), row(3)], DetailPolicy::ScoreOnly, &outbox);
        assert_eq!(report.failures(), 0);
        let text = fs::read_to_string(outbox.dir().join("student_0002.txt")).unwrap();
        assert!(text.ends_with("\n\nScore: 3/20\n"));
        assert_eq!(fs::read_dir(outbox.dir()).unwrap().count(), 3);
    }
}
