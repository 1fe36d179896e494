//! Text stream-file format: a header line declaring the object kind and
//! shape, then one update per line. Indices are 1-based in the file and
//! converted to 0-based internally; `#` starts a comment.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::matching::EdgeUpdate;
use crate::sketch::StreamUpdate;

/// Declared object kind and shape from a stream-file header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamKind {
    Vector { n: usize },
    Matrix { n: usize },
    Tensor { dims: Vec<usize> },
    Graph { n: usize },
}

impl StreamKind {
    pub fn header_line(&self) -> String {
        match self {
            StreamKind::Vector { n } => format!("vector n={n}"),
            StreamKind::Matrix { n } => format!("matrix n={n}"),
            StreamKind::Tensor { dims } => {
                let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
                format!("tensor dims={}", dims.join(","))
            }
            StreamKind::Graph { n } => format!("graph n={n}"),
        }
    }
}

/// One parsed update line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamItem {
    /// Coordinate update for vector, matrix, or tensor streams (0-based).
    Update(StreamUpdate),
    /// Edge update for graph streams (0-based).
    Edge(EdgeUpdate),
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_header(text: &str, line: usize) -> Result<StreamKind> {
    let mut parts = text.split_whitespace();
    let kind = parts.next().ok_or_else(|| parse_err(line, "empty header"))?;
    let arg = parts
        .next()
        .ok_or_else(|| parse_err(line, "header is missing its shape argument"))?;
    if parts.next().is_some() {
        return Err(parse_err(line, "trailing tokens after header"));
    }
    let expect_key = |key: &str| -> Result<&str> {
        arg.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| parse_err(line, format!("expected `{key}=...` in header")))
    };
    let parse_dim = |text: &str| -> Result<usize> {
        let v: usize = text
            .parse()
            .map_err(|_| parse_err(line, format!("bad dimension `{text}`")))?;
        if v == 0 {
            return Err(parse_err(line, "dimensions must be positive"));
        }
        Ok(v)
    };
    match kind {
        "vector" => Ok(StreamKind::Vector { n: parse_dim(expect_key("n")?)? }),
        "matrix" => Ok(StreamKind::Matrix { n: parse_dim(expect_key("n")?)? }),
        "graph" => Ok(StreamKind::Graph { n: parse_dim(expect_key("n")?)? }),
        "tensor" => {
            let dims: Vec<usize> = expect_key("dims")?
                .split(',')
                .map(parse_dim)
                .collect::<Result<_>>()?;
            if dims.len() < 2 {
                return Err(parse_err(line, "tensor needs at least two dimensions"));
            }
            Ok(StreamKind::Tensor { dims })
        }
        other => Err(parse_err(line, format!("unknown stream kind `{other}`"))),
    }
}

/// Lazy single-pass reader over a stream file; constant memory per line.
pub struct StreamParser<R: BufRead> {
    kind: StreamKind,
    reader: R,
    line: usize,
    buffer: String,
}

/// Reads the header and returns a lazy parser over the update lines.
pub fn parse_stream<R: BufRead>(mut reader: R) -> Result<StreamParser<R>> {
    let mut line = 0usize;
    let mut buffer = String::new();
    loop {
        line += 1;
        buffer.clear();
        let read = reader
            .read_line(&mut buffer)
            .map_err(|e| parse_err(line, e.to_string()))?;
        if read == 0 {
            return Err(parse_err(line, "missing header line"));
        }
        let text = strip_comment(&buffer);
        if text.trim().is_empty() {
            continue;
        }
        let kind = parse_header(text, line)?;
        return Ok(StreamParser { kind, reader, line, buffer });
    }
}

impl<R: BufRead> StreamParser<R> {
    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    /// Converts a 1-based file index into a 0-based coordinate.
    fn coordinate(&self, token: &str, bound: usize, line: usize) -> Result<usize> {
        let v: usize = token
            .parse()
            .map_err(|_| parse_err(line, format!("bad index `{token}`")))?;
        if v == 0 || v > bound {
            return Err(parse_err(line, format!("index {v} out of range 1..={bound}")));
        }
        Ok(v - 1)
    }

    fn parse_line(&self, text: &str, line: usize) -> Result<StreamItem> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let tag = tokens[0];
        let delta_of = |token: &str| -> Result<i64> {
            token
                .parse()
                .map_err(|_| parse_err(line, format!("bad delta `{token}`")))
        };
        let expect_len = |want: usize| -> Result<()> {
            if tokens.len() != want {
                return Err(parse_err(
                    line,
                    format!("expected {} tokens, found {}", want, tokens.len()),
                ));
            }
            Ok(())
        };
        match (&self.kind, tag) {
            (StreamKind::Vector { n }, "v") => {
                expect_len(3)?;
                let i = self.coordinate(tokens[1], *n, line)?;
                Ok(StreamItem::Update(StreamUpdate::new(vec![i], delta_of(tokens[2])?)))
            }
            (StreamKind::Matrix { n }, "m") => {
                expect_len(4)?;
                let r = self.coordinate(tokens[1], *n, line)?;
                let c = self.coordinate(tokens[2], *n, line)?;
                Ok(StreamItem::Update(StreamUpdate::new(vec![r, c], delta_of(tokens[3])?)))
            }
            (StreamKind::Tensor { dims }, "t") => {
                expect_len(2 + dims.len())?;
                let index: Vec<usize> = dims
                    .iter()
                    .zip(&tokens[1..1 + dims.len()])
                    .map(|(&bound, token)| self.coordinate(token, bound, line))
                    .collect::<Result<_>>()?;
                Ok(StreamItem::Update(StreamUpdate::new(
                    index,
                    delta_of(tokens[1 + dims.len()])?,
                )))
            }
            (StreamKind::Graph { n }, "e") => {
                expect_len(4)?;
                let u = self.coordinate(tokens[1], *n, line)?;
                let v = self.coordinate(tokens[2], *n, line)?;
                let delta = match tokens[3] {
                    "+1" | "1" => 1,
                    "-1" => -1,
                    other => return Err(parse_err(line, format!("bad edge delta `{other}`"))),
                };
                EdgeUpdate::new(u, v, delta)
                    .map(StreamItem::Edge)
                    .map_err(|e| parse_err(line, e.to_string()))
            }
            (_, other) => Err(parse_err(
                line,
                format!("line tag `{other}` does not match the declared stream kind"),
            )),
        }
    }
}

impl<R: BufRead> Iterator for StreamParser<R> {
    type Item = Result<StreamItem>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            self.buffer.clear();
            match self.reader.read_line(&mut self.buffer) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(parse_err(self.line, e.to_string()))),
            }
            let owned = std::mem::take(&mut self.buffer);
            let text = strip_comment(&owned);
            if !text.trim().is_empty() {
                let item = self.parse_line(text, self.line);
                self.buffer = owned;
                return Some(item);
            }
            self.buffer = owned;
        }
    }
}

/// Serializes a stream back to the text format (1-based indices).
pub fn serialize_stream(kind: &StreamKind, items: &[StreamItem]) -> String {
    let mut out = kind.header_line();
    out.push('\n');
    for item in items {
        match item {
            StreamItem::Update(u) => {
                let tag = match kind {
                    StreamKind::Vector { .. } => "v",
                    StreamKind::Matrix { .. } => "m",
                    StreamKind::Tensor { .. } => "t",
                    StreamKind::Graph { .. } => "e",
                };
                out.push_str(tag);
                for &i in &u.index {
                    out.push_str(&format!(" {}", i + 1));
                }
                out.push_str(&format!(" {}\n", u.delta));
            }
            StreamItem::Edge(e) => {
                let sign = if e.delta > 0 { "+1" } else { "-1" };
                out.push_str(&format!("e {} {} {}\n", e.u + 1, e.v + 1, sign));
            }
        }
    }
    out
}
