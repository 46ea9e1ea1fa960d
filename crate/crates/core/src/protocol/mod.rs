//! The crowdsensing protocol: message types shared by both sides, the
//! server engine and the client agent.

pub mod client;
pub mod journal;
pub mod server;

use std::fmt;

use num_bigint::BigUint;

use crate::commitment::Commitment;
use crate::credential::{CredentialPublic, PublicKey, Signature};
use crate::group::{GroupParams, Scalar, HASH_ID};
use crate::sigma::{CmProof, LinkProof, NnProof, SEPARATOR};

pub use client::{Client, ClientError, Registration, Transport};
pub use server::{Server, ServerConfig};

pub const PROTOCOL_ID: &str = "crowdsense/1";

/// Longest accepted parking-space identifier, in bytes.
pub const MAX_SPACE_LEN: usize = 64;

/// Size of client nonces and server session identifiers.
pub const NONCE_LEN: usize = 16;

pub type Slot = u64;

/// Space identifiers are short printable tokens so they embed verbatim in
/// journal lines and state files.
pub fn valid_space(j: &str) -> bool {
    !j.is_empty()
        && j.len() <= MAX_SPACE_LEN
        && j.bytes().all(|b| b.is_ascii_alphanumeric() || b"._:-".contains(&b))
}

pub fn encode_space(j: &str) -> &[u8] {
    j.as_bytes()
}

pub fn encode_slot(t: Slot) -> [u8; 8] {
    t.to_be_bytes()
}

/// The public ticket mask `H(j | t)`.
pub fn ticket_mask(params: &GroupParams, j: &str, t: Slot) -> Scalar {
    let mut data = encode_space(j).to_vec();
    data.push(SEPARATOR);
    data.extend_from_slice(&encode_slot(t));
    params.hash_to_scalar(&data)
}

/// Proof context: protocol id, stage tag, the client's nonce and the group
/// fingerprint, so a proof is only valid for one stage of one session.
pub fn proof_context(params: &GroupParams, stage: Stage, nonce: &[u8]) -> Vec<u8> {
    let mut ctx = PROTOCOL_ID.as_bytes().to_vec();
    for part in [stage.tag().as_bytes(), nonce, &params.fingerprint()] {
        ctx.push(SEPARATOR);
        ctx.extend_from_slice(part);
    }
    ctx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Setup,
    Register,
    Submit,
    ClaimOpen,
    ClaimReveal,
    ClaimRefresh,
    InquireOpen,
    InquireReveal,
    InquireRefresh,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Setup,
        Stage::Register,
        Stage::Submit,
        Stage::ClaimOpen,
        Stage::ClaimReveal,
        Stage::ClaimRefresh,
        Stage::InquireOpen,
        Stage::InquireReveal,
        Stage::InquireRefresh,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Register => "register",
            Stage::Submit => "submit",
            Stage::ClaimOpen => "claim-open",
            Stage::ClaimReveal => "claim-reveal",
            Stage::ClaimRefresh => "claim-refresh",
            Stage::InquireOpen => "inquire-open",
            Stage::InquireReveal => "inquire-reveal",
            Stage::InquireRefresh => "inquire-refresh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.tag() == tag)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reason {
    Malformed,
    BadProof,
    Duplicate,
    StaleTime,
    BadSignature,
    NoCredit,
    IdentifierSpent,
    BadOpening,
    OutOfOrderStep,
    InsufficientBalance,
    UnknownSession,
}

impl Reason {
    pub const ALL: [Reason; 11] = [
        Reason::Malformed,
        Reason::BadProof,
        Reason::Duplicate,
        Reason::StaleTime,
        Reason::BadSignature,
        Reason::NoCredit,
        Reason::IdentifierSpent,
        Reason::BadOpening,
        Reason::OutOfOrderStep,
        Reason::InsufficientBalance,
        Reason::UnknownSession,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Reason::Malformed => "malformed",
            Reason::BadProof => "bad-proof",
            Reason::Duplicate => "duplicate",
            Reason::StaleTime => "stale-time",
            Reason::BadSignature => "bad-signature",
            Reason::NoCredit => "no-credit",
            Reason::IdentifierSpent => "identifier-spent",
            Reason::BadOpening => "bad-opening",
            Reason::OutOfOrderStep => "out-of-order-step",
            Reason::InsufficientBalance => "insufficient-balance",
            Reason::UnknownSession => "unknown-session",
        }
    }

    /// Numeric code used on the wire.
    pub fn code(self) -> u64 {
        Reason::ALL.iter().position(|r| *r == self).unwrap() as u64 + 1
    }

    pub fn from_code(code: u64) -> Option<Reason> {
        let idx = usize::try_from(code.checked_sub(1)?).ok()?;
        Reason::ALL.get(idx).copied()
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Occupied,
    Available,
    Unconfirmed,
}

impl Status {
    pub fn code(self) -> u64 {
        match self {
            Status::Occupied => 0,
            Status::Available => 1,
            Status::Unconfirmed => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Status> {
        match code {
            0 => Some(Status::Occupied),
            1 => Some(Status::Available),
            2 => Some(Status::Unconfirmed),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Status::Occupied => "occupied",
            Status::Available => "available",
            Status::Unconfirmed => "unconfirmed",
        }
    }
}

/// Strict majority over availability votes. A tie or no votes at all is
/// unconfirmed.
pub fn majority(votes: impl IntoIterator<Item = bool>) -> Status {
    let (mut yes, mut no) = (0usize, 0usize);
    for v in votes {
        if v {
            yes += 1;
        } else {
            no += 1;
        }
    }
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Status::Available,
        std::cmp::Ordering::Less => Status::Occupied,
        std::cmp::Ordering::Equal => Status::Unconfirmed,
    }
}

/// A crowdsensed data entry `(j, t, ticket, a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataEntry {
    pub j: String,
    pub t: Slot,
    pub ticket: Commitment,
    pub available: bool,
}

/// Everything a client needs to talk to a server, published at setup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundle {
    pub q: BigUint,
    pub g: BigUint,
    pub h: BigUint,
    pub fingerprint: [u8; 16],
    pub hash_id: String,
    pub public_key: PublicKey,
    pub b0: u64,
    pub c_q: u64,
    pub credit_per_entry: u64,
    pub epsilon: u64,
    pub nn_bits: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BundleError {
    #[error("group parameters are invalid")]
    BadParams,
    #[error("fingerprint does not match the parameters")]
    FingerprintMismatch,
    #[error("unsupported hash {0}")]
    UnsupportedHash(String),
    #[error("bit width does not fit the group")]
    BadWidth,
}

impl Bundle {
    /// Rebuilds and checks the group parameters.
    pub fn params(&self) -> Result<GroupParams, BundleError> {
        if self.hash_id != HASH_ID {
            return Err(BundleError::UnsupportedHash(self.hash_id.clone()));
        }
        let params = GroupParams::new(self.q.clone(), self.g.clone(), self.h.clone())
            .map_err(|_| BundleError::BadParams)?;
        if params.fingerprint() != self.fingerprint {
            return Err(BundleError::FingerprintMismatch);
        }
        crate::sigma::nn::check_width(&params, self.nn_bits).map_err(|_| BundleError::BadWidth)?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Request {
    Setup,
    Register {
        cm_s_prime: Commitment,
        cm_q: Commitment,
    },
    Submit {
        entry: DataEntry,
        proof: CmProof,
    },
    ClaimOpen {
        nonce: Vec<u8>,
        j: String,
        t: Slot,
        ticket: Commitment,
        cred: CredentialPublic,
        proof: LinkProof,
    },
    ClaimReveal {
        session: Vec<u8>,
        q: Scalar,
        r_q: Scalar,
    },
    ClaimRefresh {
        session: Vec<u8>,
        cm_q: Commitment,
    },
    InquireOpen {
        nonce: Vec<u8>,
        cred: CredentialPublic,
        proof_s: CmProof,
        proof_nn: NnProof,
        spaces: Vec<String>,
    },
    InquireReveal {
        session: Vec<u8>,
        q: Scalar,
        r_q: Scalar,
    },
    InquireRefresh {
        session: Vec<u8>,
        cm_q: Commitment,
    },
}

impl Request {
    pub fn stage(&self) -> Stage {
        match self {
            Request::Setup => Stage::Setup,
            Request::Register { .. } => Stage::Register,
            Request::Submit { .. } => Stage::Submit,
            Request::ClaimOpen { .. } => Stage::ClaimOpen,
            Request::ClaimReveal { .. } => Stage::ClaimReveal,
            Request::ClaimRefresh { .. } => Stage::ClaimRefresh,
            Request::InquireOpen { .. } => Stage::InquireOpen,
            Request::InquireReveal { .. } => Stage::InquireReveal,
            Request::InquireRefresh { .. } => Stage::InquireRefresh,
        }
    }

    /// Session identifier or client nonce carried in the message header.
    pub fn session(&self) -> &[u8] {
        match self {
            Request::ClaimOpen { nonce, .. } | Request::InquireOpen { nonce, .. } => nonce,
            Request::ClaimReveal { session, .. }
            | Request::ClaimRefresh { session, .. }
            | Request::InquireReveal { session, .. }
            | Request::InquireRefresh { session, .. } => session,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response {
    Setup(Box<Bundle>),
    Registered {
        s_double_prime: Scalar,
        sig: Signature,
    },
    Accepted,
    ClaimOffer {
        session: Vec<u8>,
        credit: u64,
    },
    InquiryOpened {
        session: Vec<u8>,
    },
    Revealed,
    Refreshed {
        sig: Signature,
    },
    InquiryResult {
        statuses: Vec<Status>,
        sig: Signature,
    },
    Rejected(Reason),
}
