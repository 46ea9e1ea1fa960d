//! Equality proof tying a credential commitment `Cm(s, r_s)` to a ticket
//! `Cm(s, m)` whose mask `m` is public.
//!
//! Both components share the nonce `x'` and therefore the response `z_x`:
//! `a_cred = Cm(x', r')`, `a_ticket = Cm(x', 0)`, `z_x = x' + beta * s`,
//! `z_r = r' + beta * r_s`. The verifier checks the hidden-mask equation on
//! the credential and the known-mask equation on the ticket with one `beta`.

use rand::{CryptoRng, RngCore};

use super::cm::{self, CmProof};
use super::{ProofError, Transcript};
use crate::commitment::{commit, verify_opening, Commitment, Opening};
use crate::group::{GroupParams, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkProof {
    pub a_cred: Commitment,
    pub a_ticket: Commitment,
    pub z_x: Scalar,
    pub z_r: Scalar,
}

impl LinkProof {
    /// The two committed-value proofs this proof is made of.
    pub fn components(&self) -> (CmProof, CmProof) {
        (
            CmProof {
                a: self.a_cred.clone(),
                z_x: self.z_x.clone(),
                z_r: Some(self.z_r.clone()),
            },
            CmProof {
                a: self.a_ticket.clone(),
                z_x: self.z_x.clone(),
                z_r: None,
            },
        )
    }
}

fn challenge(
    params: &GroupParams,
    context: &[u8],
    cred: &Commitment,
    ticket: &Commitment,
    a_cred: &Commitment,
    a_ticket: &Commitment,
) -> Scalar {
    let mut t = Transcript::new(params, context);
    t.append_commitment(cred);
    t.append_commitment(ticket);
    t.append_commitment(a_cred);
    t.append_commitment(a_ticket);
    t.challenge()
}

pub fn prove_link<R: RngCore + CryptoRng>(
    params: &GroupParams,
    cred_opening: &Opening,
    cred: &Commitment,
    ticket: &Commitment,
    ticket_mask: &Scalar,
    context: &[u8],
    rng: &mut R,
) -> Result<LinkProof, ProofError> {
    if !verify_opening(params, cred, cred_opening) {
        return Err(ProofError::InvalidWitness);
    }
    if commit(params, &cred_opening.x, ticket_mask) != *ticket {
        return Err(ProofError::InvalidWitness);
    }
    let x_nonce = params.random_scalar(rng);
    let r_nonce = params.random_scalar(rng);
    let a_cred = commit(params, &x_nonce, &r_nonce);
    let a_ticket = commit(params, &x_nonce, &params.scalar_zero());
    let beta = challenge(params, context, cred, ticket, &a_cred, &a_ticket);
    let z_x = params.scalar_add(&x_nonce, &params.scalar_mul(&beta, &cred_opening.x));
    let z_r = params.scalar_add(&r_nonce, &params.scalar_mul(&beta, &cred_opening.r));
    Ok(LinkProof {
        a_cred,
        a_ticket,
        z_x,
        z_r,
    })
}

pub fn verify_link(
    params: &GroupParams,
    proof: &LinkProof,
    cred: &Commitment,
    ticket: &Commitment,
    ticket_mask: &Scalar,
    context: &[u8],
) -> bool {
    let beta = challenge(params, context, cred, ticket, &proof.a_cred, &proof.a_ticket);
    let (on_cred, on_ticket) = proof.components();
    cm::check(params, &on_cred, cred, None, &beta)
        && cm::check(params, &on_ticket, ticket, Some(ticket_mask), &beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::commit_random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn same_secret_links() {
        let pp = GroupParams::generate(64, b"link").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let s = pp.random_scalar(&mut rng);
        let (cred, o) = commit_random(&pp, &s, &mut rng);
        let mask = pp.hash_to_scalar(b"j|t");
        let ticket = commit(&pp, &s, &mask);
        let proof = prove_link(&pp, &o, &cred, &ticket, &mask, b"claim", &mut rng).unwrap();
        assert!(verify_link(&pp, &proof, &cred, &ticket, &mask, b"claim"));
        assert!(!verify_link(&pp, &proof, &cred, &ticket, &mask, b"claim2"));
        let other_mask = pp.hash_to_scalar(b"j|t2");
        assert!(!verify_link(&pp, &proof, &cred, &ticket, &other_mask, b"claim"));
    }

    #[test]
    fn different_secrets_do_not_link() {
        let pp = GroupParams::generate(64, b"link").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let s = pp.random_scalar(&mut rng);
        let (cred, o) = commit_random(&pp, &s, &mut rng);
        let mask = pp.hash_to_scalar(b"j|t");
        let ticket = commit(&pp, &pp.scalar_add(&s, &pp.scalar(1)), &mask);
        assert_eq!(
            prove_link(&pp, &o, &cred, &ticket, &mask, b"", &mut rng),
            Err(ProofError::InvalidWitness)
        );
        // a proof for a genuine ticket does not transfer to the other one
        let good_ticket = commit(&pp, &s, &mask);
        let proof = prove_link(&pp, &o, &cred, &good_ticket, &mask, b"", &mut rng).unwrap();
        assert!(!verify_link(&pp, &proof, &cred, &ticket, &mask, b""));
    }

    #[test]
    fn toy_only_true_secret_is_provable() {
        let pp = GroupParams::new(23u32.into(), 4u32.into(), 9u32.into()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let s_true = pp.scalar(6);
        let cred = commit(&pp, &s_true, &pp.scalar(2));
        let mask = pp.scalar(7);
        let ticket = commit(&pp, &s_true, &mask);
        let mut provable = Vec::new();
        for s in 0..11 {
            // in a toy group every s has some mask opening cred
            let r = (0..11)
                .map(|r| pp.scalar(r))
                .find(|r| commit(&pp, &pp.scalar(s), r) == cred)
                .unwrap();
            let o = Opening::new(pp.scalar(s), r);
            if let Ok(proof) = prove_link(&pp, &o, &cred, &ticket, &mask, b"toy", &mut rng) {
                assert!(verify_link(&pp, &proof, &cred, &ticket, &mask, b"toy"));
                provable.push(s);
            }
        }
        assert_eq!(provable, vec![6]);
    }
}
