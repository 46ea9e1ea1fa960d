//! Append-only journal of server table mutations, one tagged line each:
//!
//! ```text
//! TD|j|t|ticket_hex|a        entry accepted into the data table
//! TC|j|t|ticket_hex|credit   credit record created
//! TR|j|t|ticket_hex          credit record claimed and removed
//! TQ|q_hex                   credential identifier spent
//! ```

use std::fmt;

use super::{valid_space, Slot};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Entry {
        j: String,
        t: Slot,
        ticket: Vec<u8>,
        available: bool,
    },
    Credit {
        j: String,
        t: Slot,
        ticket: Vec<u8>,
        credit: u64,
    },
    Removed {
        j: String,
        t: Slot,
        ticket: Vec<u8>,
    },
    Spent {
        q: Vec<u8>,
    },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("journal line {line}: {what}")]
pub struct ParseError {
    pub line: usize,
    pub what: &'static str,
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::Entry { j, t, ticket, available } => {
                write!(f, "TD|{j}|{t}|{}|{}", hex::encode(ticket), u8::from(*available))
            }
            Record::Credit { j, t, ticket, credit } => {
                write!(f, "TC|{j}|{t}|{}|{credit}", hex::encode(ticket))
            }
            Record::Removed { j, t, ticket } => write!(f, "TR|{j}|{t}|{}", hex::encode(ticket)),
            Record::Spent { q } => write!(f, "TQ|{}", hex::encode(q)),
        }
    }
}

fn field<'a>(parts: &[&'a str], i: usize) -> Result<&'a str, &'static str> {
    parts.get(i).copied().ok_or("missing field")
}

fn space(s: &str) -> Result<String, &'static str> {
    if valid_space(s) {
        Ok(s.to_string())
    } else {
        Err("bad space identifier")
    }
}

fn number(s: &str) -> Result<u64, &'static str> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err("bad number");
    }
    s.parse().map_err(|_| "bad number")
}

fn bytes(s: &str) -> Result<Vec<u8>, &'static str> {
    match hex::decode(s) {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err("bad hex"),
    }
}

impl Record {
    pub fn parse(line: &str) -> Result<Record, &'static str> {
        let parts: Vec<&str> = line.split('|').collect();
        let arity = match parts[0] {
            "TD" | "TC" => 5,
            "TR" => 4,
            "TQ" => 2,
            _ => return Err("unknown tag"),
        };
        if parts.len() != arity {
            return Err("wrong field count");
        }
        Ok(match parts[0] {
            "TQ" => Record::Spent { q: bytes(parts[1])? },
            tag => {
                let j = space(field(&parts, 1)?)?;
                let t = number(field(&parts, 2)?)?;
                let ticket = bytes(field(&parts, 3)?)?;
                match tag {
                    "TD" => Record::Entry {
                        j,
                        t,
                        ticket,
                        available: match parts[4] {
                            "0" => false,
                            "1" => true,
                            _ => return Err("bad availability bit"),
                        },
                    },
                    "TC" => Record::Credit { j, t, ticket, credit: number(parts[4])? },
                    _ => Record::Removed { j, t, ticket },
                }
            }
        })
    }
}

/// Parses a whole journal. Blank lines are skipped.
pub fn parse_journal(text: &str) -> Result<Vec<Record>, ParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Record::parse(l).map_err(|what| ParseError { line: i + 1, what }))
        .collect()
}
