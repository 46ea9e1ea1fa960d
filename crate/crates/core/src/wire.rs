//! Text wire format and length-prefixed framing.
//!
//! A message is a sequence of `name=value` lines: `version`, `stage` and
//! `session` first, then body fields in sorted order. Values are `0x`-prefixed
//! lowercase hex, unsigned decimals, or bracketed lists of values:
//!
//! ```text
//! version=1
//! stage=claim-reveal
//! session=0x6f1c...
//! q=0x00a1...
//! r_q=0x7b02...
//! ```
//!
//! Parsing is strict: non-canonical forms, duplicate or unsorted names and
//! fields a stage does not define are all rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use num_bigint::BigUint;

use crate::commitment::Commitment;
use crate::credential::{CredentialPublic, PublicKey, Signature};
use crate::group::{GroupParams, Scalar};
use crate::protocol::{Bundle, DataEntry, Reason, Request, Response, Stage, Status};
use crate::sigma::{CmProof, LinkProof, MbsBranch, MbsProof, NnProof};

pub const WIRE_VERSION: u64 = 1;

/// Default cap on a frame body.
pub const MAX_FRAME: usize = 4 << 20;

const MAX_DEPTH: usize = 4;
const MAX_NAME: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Hex(Vec<u8>),
    Dec(u64),
    List(Vec<Value>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub version: u64,
    pub stage: Stage,
    pub session: Vec<u8>,
    pub body: BTreeMap<String, Value>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("syntax: {0}")]
    Syntax(&'static str),
    #[error("unsupported version {0}")]
    Version(u64),
    #[error("unknown stage")]
    UnknownStage,
    #[error("unknown field {0}")]
    UnknownField(String),
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("bad value for {0}")]
    BadValue(&'static str),
    #[error("group parameters are needed to encode or decode this message")]
    NoParams,
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Hex(b) => {
            out.push_str("0x");
            out.push_str(&hex::encode(b));
        }
        Value::Dec(n) => {
            let _ = write!(out, "{n}");
        }
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
    }
}

struct ValueParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl ValueParser<'_> {
    fn parse(&mut self, depth: usize) -> Result<Value, WireError> {
        match self.s.get(self.pos) {
            Some(b'[') => {
                if depth >= MAX_DEPTH {
                    return Err(WireError::Syntax("lists nested too deeply"));
                }
                self.pos += 1;
                let mut items = Vec::new();
                if self.s.get(self.pos) == Some(&b']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.parse(depth + 1)?);
                    match self.s.get(self.pos) {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(Value::List(items));
                        }
                        _ => return Err(WireError::Syntax("unterminated list")),
                    }
                }
            }
            Some(b'0') if self.s.get(self.pos + 1) == Some(&b'x') => {
                self.pos += 2;
                let start = self.pos;
                while matches!(self.s.get(self.pos), Some(b'0'..=b'9' | b'a'..=b'f')) {
                    self.pos += 1;
                }
                let digits = &self.s[start..self.pos];
                if !digits.len().is_multiple_of(2) {
                    return Err(WireError::Syntax("odd-length hex"));
                }
                Ok(Value::Hex(hex::decode(digits).map_err(|_| WireError::Syntax("bad hex"))?))
            }
            Some(b'0'..=b'9') => {
                let start = self.pos;
                while matches!(self.s.get(self.pos), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
                let digits = &self.s[start..self.pos];
                if digits.len() > 1 && digits[0] == b'0' {
                    return Err(WireError::Syntax("leading zero"));
                }
                let text = std::str::from_utf8(digits).expect("ascii digits");
                Ok(Value::Dec(text.parse().map_err(|_| WireError::Syntax("decimal overflow"))?))
            }
            _ => Err(WireError::Syntax("bad value")),
        }
    }
}

fn parse_value(s: &str) -> Result<Value, WireError> {
    let mut p = ValueParser { s: s.as_bytes(), pos: 0 };
    let v = p.parse(0)?;
    if p.pos != s.len() {
        return Err(WireError::Syntax("trailing characters"));
    }
    Ok(v)
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= MAX_NAME
        && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        && name.as_bytes()[0].is_ascii_lowercase()
}

impl WireMessage {
    pub fn new(stage: Stage, session: &[u8]) -> Self {
        WireMessage { version: WIRE_VERSION, stage, session: session.to_vec(), body: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, v: Value) -> Self {
        self.body.insert(name.to_string(), v);
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("version={}\nstage={}\nsession=0x{}\n", self.version, self.stage, hex::encode(&self.session));
        for (name, v) in &self.body {
            out.push_str(name);
            out.push('=');
            write_value(&mut out, v);
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::Syntax("not utf-8"))?;
        let body = text.strip_suffix('\n').ok_or(WireError::Syntax("missing final newline"))?;
        let mut lines = body.split('\n');
        let mut header = |name: &str| -> Result<&str, WireError> {
            let line = lines.next().ok_or(WireError::Syntax("truncated header"))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .ok_or(WireError::Syntax("bad header"))
        };
        let version = match parse_value(header("version")?)? {
            Value::Dec(v) => v,
            _ => return Err(WireError::Syntax("bad version")),
        };
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let stage = Stage::from_tag(header("stage")?).ok_or(WireError::UnknownStage)?;
        let session = match parse_value(header("session")?)? {
            Value::Hex(b) => b,
            _ => return Err(WireError::Syntax("bad session")),
        };
        let mut msg = WireMessage { version, stage, session, body: BTreeMap::new() };
        let mut last: Option<&str> = None;
        for line in lines {
            let (name, value) = line.split_once('=').ok_or(WireError::Syntax("missing ="))?;
            if !valid_name(name) || matches!(name, "version" | "stage" | "session") {
                return Err(WireError::Syntax("bad field name"));
            }
            if last.is_some_and(|l| l >= name) {
                return Err(WireError::Syntax("fields out of order"));
            }
            last = Some(name);
            msg.body.insert(name.to_string(), parse_value(value)?);
        }
        Ok(msg)
    }
}

// ---- framing -------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the cap")]
    TooLarge(usize),
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes a 4-byte big-endian length followed by `body`. Returns the total
/// number of bytes written.
pub fn write_frame<W: Write>(w: &mut W, body: &[u8], cap: usize) -> Result<usize, FrameError> {
    if body.len() > cap || body.len() > u32::MAX as usize {
        return Err(FrameError::TooLarge(body.len()));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(body.len() + 4)
}

/// Reads one frame. A clean end of stream before any byte is `Closed`.
pub fn read_frame<R: Read>(r: &mut R, cap: usize) -> Result<Vec<u8>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > cap {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(body)
}

/// Splits a buffer holding one complete frame into its body.
pub fn parse_frame(bytes: &[u8], cap: usize) -> Result<&[u8], FrameError> {
    let (len, rest) = bytes.split_first_chunk::<4>().ok_or(FrameError::Truncated)?;
    let len = u32::from_be_bytes(*len) as usize;
    if len > cap {
        return Err(FrameError::TooLarge(len));
    }
    match rest.len().cmp(&len) {
        std::cmp::Ordering::Less => Err(FrameError::Truncated),
        std::cmp::Ordering::Equal => Ok(rest),
        std::cmp::Ordering::Greater => Err(FrameError::TooLarge(rest.len())),
    }
}

// ---- typed messages ------------------------------------------------------

struct Fields<'a> {
    body: &'a BTreeMap<String, Value>,
    used: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(msg: &'a WireMessage) -> Self {
        Fields { body: &msg.body, used: Vec::new() }
    }

    fn get(&mut self, name: &'static str) -> Result<&'a Value, WireError> {
        self.used.push(name);
        self.body.get(name).ok_or(WireError::MissingField(name))
    }

    fn has(&self, name: &str) -> bool {
        self.body.contains_key(name)
    }

    fn hex(&mut self, name: &'static str) -> Result<&'a [u8], WireError> {
        match self.get(name)? {
            Value::Hex(b) => Ok(b),
            _ => Err(WireError::BadValue(name)),
        }
    }

    fn dec(&mut self, name: &'static str) -> Result<u64, WireError> {
        match self.get(name)? {
            Value::Dec(n) => Ok(*n),
            _ => Err(WireError::BadValue(name)),
        }
    }

    fn list(&mut self, name: &'static str) -> Result<&'a [Value], WireError> {
        match self.get(name)? {
            Value::List(v) => Ok(v),
            _ => Err(WireError::BadValue(name)),
        }
    }

    fn finish(self) -> Result<(), WireError> {
        match self.body.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(WireError::UnknownField(k.clone())),
            None => Ok(()),
        }
    }
}

fn hex_of<'a>(v: &'a Value, name: &'static str) -> Result<&'a [u8], WireError> {
    match v {
        Value::Hex(b) => Ok(b),
        _ => Err(WireError::BadValue(name)),
    }
}

fn list_of<'a>(v: &'a Value, name: &'static str) -> Result<&'a [Value], WireError> {
    match v {
        Value::List(l) => Ok(l),
        _ => Err(WireError::BadValue(name)),
    }
}

fn el(pp: &GroupParams, c: &Commitment) -> Value {
    Value::Hex(pp.encode_element(c.element()))
}

fn sc(pp: &GroupParams, s: &Scalar) -> Value {
    Value::Hex(pp.encode_scalar(s))
}

fn text(s: &str) -> Value {
    Value::Hex(s.as_bytes().to_vec())
}

fn big(v: &BigUint) -> Value {
    Value::Hex(v.to_bytes_be())
}

fn to_commitment(pp: &GroupParams, b: &[u8], name: &'static str) -> Result<Commitment, WireError> {
    pp.decode_element(b).map(Commitment).map_err(|_| WireError::BadValue(name))
}

fn to_scalar(pp: &GroupParams, b: &[u8], name: &'static str) -> Result<Scalar, WireError> {
    pp.decode_scalar(b).map_err(|_| WireError::BadValue(name))
}

fn to_text(b: &[u8], name: &'static str) -> Result<String, WireError> {
    String::from_utf8(b.to_vec()).map_err(|_| WireError::BadValue(name))
}

fn to_big(b: &[u8], name: &'static str) -> Result<BigUint, WireError> {
    if b.is_empty() || b[0] == 0 {
        return Err(WireError::BadValue(name));
    }
    Ok(BigUint::from_bytes_be(b))
}

impl Fields<'_> {
    fn commitment(&mut self, pp: &GroupParams, name: &'static str) -> Result<Commitment, WireError> {
        to_commitment(pp, self.hex(name)?, name)
    }

    fn scalar(&mut self, pp: &GroupParams, name: &'static str) -> Result<Scalar, WireError> {
        to_scalar(pp, self.hex(name)?, name)
    }

    fn credential(&mut self, pp: &GroupParams) -> Result<CredentialPublic, WireError> {
        Ok(CredentialPublic {
            cm_s: self.commitment(pp, "cm_s")?,
            cm_q: self.commitment(pp, "cm_q")?,
            cm_b: self.commitment(pp, "cm_b")?,
            sig: Signature(self.hex("sig")?.to_vec()),
        })
    }
}

fn put_credential(m: WireMessage, pp: &GroupParams, c: &CredentialPublic) -> WireMessage {
    m.with("cm_s", el(pp, &c.cm_s))
        .with("cm_q", el(pp, &c.cm_q))
        .with("cm_b", el(pp, &c.cm_b))
        .with("sig", Value::Hex(c.sig.0.clone()))
}

fn nn_branches(pp: &GroupParams, p: &NnProof) -> Value {
    Value::List(
        p.bit_proofs
            .iter()
            .map(|bp| {
                Value::List(
                    bp.branches
                        .iter()
                        .map(|b| {
                            Value::List(vec![el(pp, &b.a), sc(pp, &b.z_x), sc(pp, &b.beta), sc(pp, &b.z_r)])
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn parse_nn(pp: &GroupParams, f: &mut Fields) -> Result<NnProof, WireError> {
    const N: &str = "nn_branches";
    let bit_commitments = f
        .list("nn_bits")?
        .iter()
        .map(|v| to_commitment(pp, hex_of(v, "nn_bits")?, "nn_bits"))
        .collect::<Result<Vec<_>, _>>()?;
    let bit_proofs = f
        .list(N)?
        .iter()
        .map(|bp| {
            let branches = list_of(bp, N)?
                .iter()
                .map(|b| {
                    let parts = list_of(b, N)?;
                    let [a, z_x, beta, z_r] = parts else {
                        return Err(WireError::BadValue(N));
                    };
                    Ok(MbsBranch {
                        a: to_commitment(pp, hex_of(a, N)?, N)?,
                        z_x: to_scalar(pp, hex_of(z_x, N)?, N)?,
                        beta: to_scalar(pp, hex_of(beta, N)?, N)?,
                        z_r: to_scalar(pp, hex_of(z_r, N)?, N)?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MbsProof { branches })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if bit_proofs.len() != bit_commitments.len() {
        return Err(WireError::BadValue(N));
    }
    Ok(NnProof {
        bit_commitments,
        bit_proofs,
        a0: f.commitment(pp, "nn_a0")?,
        z_r: f.scalar(pp, "nn_zr")?,
    })
}

fn need(pp: Option<&GroupParams>) -> Result<&GroupParams, WireError> {
    pp.ok_or(WireError::NoParams)
}

pub fn encode_request(pp: Option<&GroupParams>, req: &Request) -> Result<WireMessage, WireError> {
    let m = WireMessage::new(req.stage(), req.session());
    if let Request::Setup = req {
        return Ok(m);
    }
    let pp = need(pp)?;
    Ok(match req {
        Request::Setup => unreachable!(),
        Request::Register { cm_s_prime, cm_q } => {
            m.with("cm_q", el(pp, cm_q)).with("cm_s_prime", el(pp, cm_s_prime))
        }
        Request::Submit { entry, proof } => m
            .with("a", Value::Dec(entry.available.into()))
            .with("j", text(&entry.j))
            .with("t", Value::Dec(entry.t))
            .with("ticket", el(pp, &entry.ticket))
            .with("proof_a", el(pp, &proof.a))
            .with("proof_zx", sc(pp, &proof.z_x)),
        Request::ClaimOpen { j, t, ticket, cred, proof, .. } => put_credential(m, pp, cred)
            .with("j", text(j))
            .with("t", Value::Dec(*t))
            .with("ticket", el(pp, ticket))
            .with("link_a_cred", el(pp, &proof.a_cred))
            .with("link_a_ticket", el(pp, &proof.a_ticket))
            .with("link_zx", sc(pp, &proof.z_x))
            .with("link_zr", sc(pp, &proof.z_r)),
        Request::ClaimReveal { q, r_q, .. } | Request::InquireReveal { q, r_q, .. } => {
            m.with("q", sc(pp, q)).with("r_q", sc(pp, r_q))
        }
        Request::ClaimRefresh { cm_q, .. } | Request::InquireRefresh { cm_q, .. } => {
            m.with("cm_q", el(pp, cm_q))
        }
        Request::InquireOpen { cred, proof_s, proof_nn, spaces, .. } => {
            let z_r = proof_s.z_r.as_ref().ok_or(WireError::BadValue("cm_zr"))?;
            put_credential(m, pp, cred)
                .with("cm_a", el(pp, &proof_s.a))
                .with("cm_zx", sc(pp, &proof_s.z_x))
                .with("cm_zr", sc(pp, z_r))
                .with("nn_a0", el(pp, &proof_nn.a0))
                .with("nn_bits", Value::List(proof_nn.bit_commitments.iter().map(|c| el(pp, c)).collect()))
                .with("nn_branches", nn_branches(pp, proof_nn))
                .with("nn_zr", sc(pp, &proof_nn.z_r))
                .with("spaces", Value::List(spaces.iter().map(|j| text(j)).collect()))
        }
    })
}

pub fn decode_request(pp: Option<&GroupParams>, msg: &WireMessage) -> Result<Request, WireError> {
    let mut f = Fields::new(msg);
    let session = msg.session.clone();
    let no_session = |req: Request| {
        if msg.session.is_empty() {
            Ok(req)
        } else {
            Err(WireError::BadValue("session"))
        }
    };
    let req = match msg.stage {
        Stage::Setup => no_session(Request::Setup)?,
        stage => {
            let pp = need(pp)?;
            match stage {
                Stage::Setup => unreachable!(),
                Stage::Register => no_session(Request::Register {
                    cm_s_prime: f.commitment(pp, "cm_s_prime")?,
                    cm_q: f.commitment(pp, "cm_q")?,
                })?,
                Stage::Submit => {
                    let available = match f.dec("a")? {
                        0 => false,
                        1 => true,
                        _ => return Err(WireError::BadValue("a")),
                    };
                    let entry = DataEntry {
                        j: to_text(f.hex("j")?, "j")?,
                        t: f.dec("t")?,
                        ticket: f.commitment(pp, "ticket")?,
                        available,
                    };
                    let proof = CmProof { a: f.commitment(pp, "proof_a")?, z_x: f.scalar(pp, "proof_zx")?, z_r: None };
                    no_session(Request::Submit { entry, proof })?
                }
                Stage::ClaimOpen => Request::ClaimOpen {
                    nonce: session,
                    j: to_text(f.hex("j")?, "j")?,
                    t: f.dec("t")?,
                    ticket: f.commitment(pp, "ticket")?,
                    cred: f.credential(pp)?,
                    proof: LinkProof {
                        a_cred: f.commitment(pp, "link_a_cred")?,
                        a_ticket: f.commitment(pp, "link_a_ticket")?,
                        z_x: f.scalar(pp, "link_zx")?,
                        z_r: f.scalar(pp, "link_zr")?,
                    },
                },
                Stage::ClaimReveal => Request::ClaimReveal {
                    session,
                    q: f.scalar(pp, "q")?,
                    r_q: f.scalar(pp, "r_q")?,
                },
                Stage::InquireReveal => Request::InquireReveal {
                    session,
                    q: f.scalar(pp, "q")?,
                    r_q: f.scalar(pp, "r_q")?,
                },
                Stage::ClaimRefresh => Request::ClaimRefresh { session, cm_q: f.commitment(pp, "cm_q")? },
                Stage::InquireRefresh => Request::InquireRefresh { session, cm_q: f.commitment(pp, "cm_q")? },
                Stage::InquireOpen => {
                    let cred = f.credential(pp)?;
                    let proof_s = CmProof {
                        a: f.commitment(pp, "cm_a")?,
                        z_x: f.scalar(pp, "cm_zx")?,
                        z_r: Some(f.scalar(pp, "cm_zr")?),
                    };
                    let proof_nn = parse_nn(pp, &mut f)?;
                    let spaces = f
                        .list("spaces")?
                        .iter()
                        .map(|v| to_text(hex_of(v, "spaces")?, "spaces"))
                        .collect::<Result<Vec<_>, _>>()?;
                    Request::InquireOpen { nonce: session, cred, proof_s, proof_nn, spaces }
                }
            }
        }
    };
    f.finish()?;
    Ok(req)
}

pub fn encode_response(
    pp: Option<&GroupParams>,
    stage: Stage,
    resp: &Response,
) -> Result<WireMessage, WireError> {
    let session: &[u8] = match resp {
        Response::ClaimOffer { session, .. } | Response::InquiryOpened { session } => session,
        _ => &[],
    };
    let m = WireMessage::new(stage, session);
    Ok(match resp {
        Response::Rejected(reason) => m.with("reason", Value::Dec(reason.code())),
        Response::Setup(b) => m
            .with("b0", Value::Dec(b.b0))
            .with("c_q", Value::Dec(b.c_q))
            .with("credit", Value::Dec(b.credit_per_entry))
            .with("e", big(&b.public_key.e))
            .with("epsilon", Value::Dec(b.epsilon))
            .with("fingerprint", Value::Hex(b.fingerprint.to_vec()))
            .with("g", big(&b.g))
            .with("h", big(&b.h))
            .with("hash", text(&b.hash_id))
            .with("n", big(&b.public_key.n))
            .with("nn_width", Value::Dec(b.nn_bits.into()))
            .with("q", big(&b.q)),
        Response::Registered { s_double_prime, sig } => m
            .with("s2", sc(need(pp)?, s_double_prime))
            .with("sig", Value::Hex(sig.0.clone())),
        Response::Accepted | Response::Revealed | Response::InquiryOpened { .. } => m,
        Response::ClaimOffer { credit, .. } => m.with("credit", Value::Dec(*credit)),
        Response::Refreshed { sig } => m.with("sig", Value::Hex(sig.0.clone())),
        Response::InquiryResult { statuses, sig } => m
            .with("sig", Value::Hex(sig.0.clone()))
            .with("statuses", Value::List(statuses.iter().map(|s| Value::Dec(s.code())).collect())),
    })
}

/// Decodes a reply to a request of stage `stage`.
pub fn decode_response(
    pp: Option<&GroupParams>,
    stage: Stage,
    msg: &WireMessage,
) -> Result<Response, WireError> {
    if msg.stage != stage {
        return Err(WireError::BadValue("stage"));
    }
    let mut f = Fields::new(msg);
    let opens_session = matches!(stage, Stage::ClaimOpen | Stage::InquireOpen);
    if f.has("reason") {
        let reason = Reason::from_code(f.dec("reason")?).ok_or(WireError::BadValue("reason"))?;
        f.finish()?;
        return Ok(Response::Rejected(reason));
    }
    if !opens_session && !msg.session.is_empty() {
        return Err(WireError::BadValue("session"));
    }
    let resp = match stage {
        Stage::Setup => {
            let nn = f.dec("nn_width")?;
            Response::Setup(Box::new(Bundle {
                b0: f.dec("b0")?,
                c_q: f.dec("c_q")?,
                credit_per_entry: f.dec("credit")?,
                epsilon: f.dec("epsilon")?,
                public_key: PublicKey { n: to_big(f.hex("n")?, "n")?, e: to_big(f.hex("e")?, "e")? },
                fingerprint: f.hex("fingerprint")?.try_into().map_err(|_| WireError::BadValue("fingerprint"))?,
                q: to_big(f.hex("q")?, "q")?,
                g: to_big(f.hex("g")?, "g")?,
                h: to_big(f.hex("h")?, "h")?,
                hash_id: to_text(f.hex("hash")?, "hash")?,
                nn_bits: u32::try_from(nn).map_err(|_| WireError::BadValue("nn_width"))?,
            }))
        }
        Stage::Register => Response::Registered {
            s_double_prime: f.scalar(need(pp)?, "s2")?,
            sig: Signature(f.hex("sig")?.to_vec()),
        },
        Stage::Submit | Stage::ClaimReveal | Stage::InquireReveal => Response::Accepted,
        Stage::ClaimOpen => Response::ClaimOffer { session: msg.session.clone(), credit: f.dec("credit")? },
        Stage::InquireOpen => Response::InquiryOpened { session: msg.session.clone() },
        Stage::ClaimRefresh => Response::Refreshed { sig: Signature(f.hex("sig")?.to_vec()) },
        Stage::InquireRefresh => Response::InquiryResult {
            sig: Signature(f.hex("sig")?.to_vec()),
            statuses: f
                .list("statuses")?
                .iter()
                .map(|v| match v {
                    Value::Dec(n) => Status::from_code(*n).ok_or(WireError::BadValue("statuses")),
                    _ => Err(WireError::BadValue("statuses")),
                })
                .collect::<Result<_, _>>()?,
        },
    };
    f.finish()?;
    // reveal steps answer with an empty body
    Ok(match (stage, resp) {
        (Stage::ClaimReveal | Stage::InquireReveal, _) => Response::Revealed,
        (_, r) => r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_grammar() {
        for ok in ["0x", "0x00ff", "0", "17", "[]", "[0x01,2,[3]]", "18446744073709551615"] {
            let v = parse_value(ok).unwrap();
            let mut s = String::new();
            write_value(&mut s, &v);
            assert_eq!(s, ok);
        }
        for bad in ["", "0x0", "0xAB", "01", "[", "[1,]", "[1 ]", "x", "-1", "18446744073709551616", "[[[[[1]]]]]", "1 "] {
            assert!(parse_value(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn message_layout() {
        let m = WireMessage::new(Stage::ClaimReveal, &[0xab])
            .with("r_q", Value::Hex(vec![2]))
            .with("q", Value::Hex(vec![1]));
        let text = "version=1\nstage=claim-reveal\nsession=0xab\nq=0x01\nr_q=0x02\n";
        assert_eq!(m.encode(), text.as_bytes());
        assert_eq!(WireMessage::decode(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn strict_headers_and_order() {
        for bad in [
            "version=1\nstage=claim-reveal\nsession=0xab\nr_q=0x02\nq=0x01\n",
            "version=1\nstage=claim-reveal\nsession=0xab\nq=0x01\nq=0x01\n",
            "version=2\nstage=setup\nsession=0x\n",
            "stage=setup\nversion=1\nsession=0x\n",
            "version=1\nstage=nope\nsession=0x\n",
            "version=1\nstage=setup\nsession=0x",
            "version=1\nstage=setup\nsession=0x\nQ=1\n",
            "version=1\nstage=setup\nsession=0x\nstage=1\n",
            "version=1\nstage=setup\nsession=0x\n\n",
        ] {
            assert!(WireMessage::decode(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        assert_eq!(write_frame(&mut buf, b"hello", 16).unwrap(), 9);
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        assert_eq!(read_frame(&mut &buf[..], 16).unwrap(), b"hello");
        assert_eq!(parse_frame(&buf, 16).unwrap(), b"hello");
        assert!(matches!(read_frame(&mut &buf[..7], 16), Err(FrameError::Truncated)));
        assert!(matches!(read_frame(&mut &buf[..2], 16), Err(FrameError::Truncated)));
        assert!(matches!(read_frame(&mut &buf[..0], 16), Err(FrameError::Closed)));
        assert!(matches!(read_frame(&mut &buf[..], 4), Err(FrameError::TooLarge(5))));
        assert!(matches!(write_frame(&mut Vec::new(), b"hello", 4), Err(FrameError::TooLarge(5))));
    }

    #[test]
    fn unknown_field_rejected() {
        let pp = GroupParams::generate(16, b"w").unwrap();
        let msg = WireMessage::new(Stage::ClaimRefresh, &[1])
            .with("cm_q", Value::Hex(pp.encode_element(pp.g())))
            .with("extra", Value::Dec(1));
        assert_eq!(decode_request(Some(&pp), &msg), Err(WireError::UnknownField("extra".into())));
    }
}
