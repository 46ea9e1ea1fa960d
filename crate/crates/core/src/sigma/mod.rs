//! Sigma-protocol zero-knowledge proofs over Pedersen commitments and their
//! Fiat-Shamir non-interactive forms.
//!
//! Each proof family lives in its own module and exposes two layers:
//!
//! * the non-interactive `prove_*` / `verify_*` pair used on the wire, and
//! * the interactive building blocks (`first_move`, `respond`, `check`,
//!   `simulate`) that take an explicit challenge. These exist so the
//!   knowledge extractor and the honest-verifier simulator can be exercised
//!   by tests; the protocol engine never calls them with a verifier-chosen
//!   challenge.
//!
//! All challenges are derived with [`Transcript`], which hashes a context
//! string followed by the `|`-separated encodings of everything the prover
//! sent before the challenge step.

pub mod cm;
pub mod extract;
pub mod link;
pub mod mbs;
pub mod nn;

use thiserror::Error;

use crate::commitment::Commitment;
use crate::group::{GroupElement, GroupParams, Scalar};

pub use cm::{prove_cm, verify_cm, CmProof, MaskMode};
pub use link::{prove_link, verify_link, LinkProof};
pub use mbs::{prove_mbs, verify_mbs, MbsBranch, MbsProof};
pub use nn::{prove_nn, verify_nn, NnProof};

/// Byte placed between transcript items.
pub const SEPARATOR: u8 = b'|';

/// Largest set accepted by the membership proof.
pub const MAX_SET_SIZE: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("the opening does not match the commitment")]
    InvalidWitness,
    #[error("membership set is empty")]
    EmptySet,
    #[error("membership set has more than {MAX_SET_SIZE} elements")]
    SetTooLarge,
    #[error("membership set contains duplicates")]
    DuplicateSetElement,
    #[error("committed value is not in the set")]
    NotMember,
    #[error("value does not fit in {0} bits")]
    OutOfRange(u32),
    #[error("bit width {0} is too large for the group order")]
    WidthTooLarge(u32),
    #[error("transcripts share a challenge")]
    SameChallenge,
    #[error("transcripts have different first moves")]
    DifferentFirstMove,
}

/// Fiat-Shamir challenge: `H(context || Cm_1 | ... | Cm_r)`.
pub fn fiat_shamir_challenge(
    params: &GroupParams,
    context: &[u8],
    commitments: &[Commitment],
) -> Scalar {
    let mut t = Transcript::new(params, context);
    for c in commitments {
        t.append_element(c.element());
    }
    t.challenge()
}

/// Running hash input for a Fiat-Shamir challenge.
#[derive(Clone)]
pub struct Transcript<'a> {
    params: &'a GroupParams,
    buf: Vec<u8>,
    items: usize,
}

impl<'a> Transcript<'a> {
    pub fn new(params: &'a GroupParams, context: &[u8]) -> Self {
        Transcript {
            params,
            buf: context.to_vec(),
            items: 0,
        }
    }

    fn push(&mut self, bytes: &[u8]) {
        if self.items > 0 {
            self.buf.push(SEPARATOR);
        }
        self.buf.extend_from_slice(bytes);
        self.items += 1;
    }

    pub fn append_element(&mut self, e: &GroupElement) {
        let bytes = self.params.encode_element(e);
        self.push(&bytes);
    }

    pub fn append_commitment(&mut self, c: &Commitment) {
        self.append_element(c.element());
    }

    pub fn append_scalar(&mut self, s: &Scalar) {
        let bytes = self.params.encode_scalar(s);
        self.push(&bytes);
    }

    pub fn challenge(&self) -> Scalar {
        self.params.hash_to_scalar(&self.buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::commit;

    #[test]
    fn challenge_is_order_sensitive_and_deterministic() {
        let pp = GroupParams::generate(64, b"fs").unwrap();
        let a = commit(&pp, &pp.scalar(1), &pp.scalar(2));
        let b = commit(&pp, &pp.scalar(3), &pp.scalar(4));
        let ab = fiat_shamir_challenge(&pp, b"ctx", &[a.clone(), b.clone()]);
        let ba = fiat_shamir_challenge(&pp, b"ctx", &[b.clone(), a.clone()]);
        assert_ne!(ab, ba);
        assert_eq!(ab, fiat_shamir_challenge(&pp, b"ctx", &[a.clone(), b.clone()]));
        assert_ne!(ab, fiat_shamir_challenge(&pp, b"ctx2", &[a, b]));
    }

    #[test]
    fn empty_challenge_hashes_context_only() {
        let pp = GroupParams::generate(64, b"fs").unwrap();
        assert_eq!(fiat_shamir_challenge(&pp, b"ctx", &[]), pp.hash_to_scalar(b"ctx"));
    }

    #[test]
    fn challenge_bytes_are_pipe_joined() {
        let pp = GroupParams::generate(64, b"fs").unwrap();
        let a = commit(&pp, &pp.scalar(5), &pp.scalar(6));
        let b = commit(&pp, &pp.scalar(7), &pp.scalar(8));
        let mut raw = b"ctx".to_vec();
        raw.extend(pp.encode_element(a.element()));
        raw.push(b'|');
        raw.extend(pp.encode_element(b.element()));
        assert_eq!(fiat_shamir_challenge(&pp, b"ctx", &[a, b]), pp.hash_to_scalar(&raw));
    }
}
