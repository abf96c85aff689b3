//! Text form of traces: one op per line,
//! `L id`, `S id`, `C out <- in1,in2,...` or `E id`, with ids written as
//! `kind:tag:row:col:ver` and kind one of `in`, `gen`, `part`, `out`.

use std::fmt;
use std::str::FromStr;

use super::{Kind, Tag, TraceOp, ValueId};
use crate::error::{Error, Result};

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Input => "in",
            Kind::Generated => "gen",
            Kind::Partial => "part",
            Kind::Output => "out",
        }
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "in" => Kind::Input,
            "gen" => Kind::Generated,
            "part" => Kind::Partial,
            "out" => Kind::Output,
            _ => return Err(Error::Parse(format!("unknown kind {s:?}"))),
        })
    }
}

const TAGS: [(Tag, &str); 12] = [
    (Tag::Q, "Q"),
    (Tag::K, "K"),
    (Tag::V, "V"),
    (Tag::U1, "U1"),
    (Tag::U2, "U2"),
    (Tag::H, "H"),
    (Tag::O, "O"),
    (Tag::S, "S"),
    (Tag::P, "P"),
    (Tag::A, "A"),
    (Tag::MX, "MX"),
    (Tag::SM, "SM"),
];

impl Tag {
    pub fn as_str(self) -> &'static str {
        TAGS.iter().find(|(t, _)| *t == self).map(|(_, s)| *s).unwrap_or("?")
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TAGS.iter()
            .find(|(_, name)| *name == s)
            .map(|(t, _)| *t)
            .ok_or_else(|| Error::Parse(format!("unknown tag {s:?}")))
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}:{}", self.kind.as_str(), self.tag.as_str(), self.row, self.col, self.version)
    }
}

impl FromStr for ValueId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [kind, tag, row, col, ver] = parts[..] else {
            return Err(Error::Parse(format!("bad id {s:?}")));
        };
        let num = |t: &str| t.parse::<u32>().map_err(|_| Error::Parse(format!("bad number {t:?} in {s:?}")));
        Ok(ValueId { kind: kind.parse()?, tag: tag.parse()?, row: num(row)?, col: num(col)?, version: num(ver)? })
    }
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceOp::Load(id) => write!(f, "L {id}"),
            TraceOp::Store(id) => write!(f, "S {id}"),
            TraceOp::Evict(id) => write!(f, "E {id}"),
            TraceOp::Compute { out, inputs } => {
                write!(f, "C {out} <- ")?;
                for (i, id) in inputs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_op(line: &str) -> Result<TraceOp> {
    let line = line.trim();
    let (code, rest) = line.split_once(' ').ok_or_else(|| Error::Parse(format!("bad op {line:?}")))?;
    Ok(match code {
        "L" => TraceOp::Load(rest.parse()?),
        "S" => TraceOp::Store(rest.parse()?),
        "E" => TraceOp::Evict(rest.parse()?),
        "C" => {
            let (out, ins) = rest.split_once("<-").ok_or_else(|| Error::Parse(format!("compute without `<-`: {line:?}")))?;
            let ins = ins.trim();
            let inputs = if ins.is_empty() { Vec::new() } else { ins.split(',').map(str::parse).collect::<Result<_>>()? };
            TraceOp::Compute { out: out.parse()?, inputs }
        }
        _ => return Err(Error::Parse(format!("unknown op code {code:?}"))),
    })
}

pub fn dump_trace(trace: &[TraceOp]) -> String {
    let mut out = String::new();
    for op in trace {
        out.push_str(&op.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceOp>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(parse_op).collect()
}
