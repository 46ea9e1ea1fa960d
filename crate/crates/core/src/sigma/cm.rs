//! Proof of knowledge of a committed value.
//!
//! The prover sends `a = Cm(x', r')`, receives `beta`, and answers
//! `z_x = x' + beta * x`, `z_r = r' + beta * r`; the verifier checks
//! `g^z_x * h^z_r == a * c^beta`. When the mask `r` is public the prover uses
//! `r' = 0`, omits `z_r`, and the verifier rebuilds it as `beta * r`.

use rand::{CryptoRng, RngCore};

use super::{ProofError, Transcript};
use crate::commitment::{commit, verify_opening, Commitment, Opening};
use crate::group::{GroupParams, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// Both value and mask are secret.
    Hidden,
    /// The mask is public context; only the value is proven.
    Known,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmProof {
    pub a: Commitment,
    pub z_x: Scalar,
    /// Absent in known-mask mode.
    pub z_r: Option<Scalar>,
}

impl CmProof {
    pub fn mode(&self) -> MaskMode {
        if self.z_r.is_some() {
            MaskMode::Hidden
        } else {
            MaskMode::Known
        }
    }
}

/// The prover's first-move randomness.
#[derive(Clone, Debug)]
pub struct CmNonce {
    pub x: Scalar,
    pub r: Scalar,
}

impl CmNonce {
    pub fn random<R: RngCore + CryptoRng>(params: &GroupParams, mode: MaskMode, rng: &mut R) -> Self {
        let x = params.random_scalar(rng);
        let r = match mode {
            MaskMode::Hidden => params.random_scalar(rng),
            MaskMode::Known => params.scalar_zero(),
        };
        CmNonce { x, r }
    }
}

pub fn first_move(params: &GroupParams, nonce: &CmNonce) -> Commitment {
    commit(params, &nonce.x, &nonce.r)
}

pub fn respond(
    params: &GroupParams,
    opening: &Opening,
    nonce: &CmNonce,
    beta: &Scalar,
    mode: MaskMode,
) -> (Scalar, Option<Scalar>) {
    let z_x = params.scalar_add(&nonce.x, &params.scalar_mul(beta, &opening.x));
    let z_r = match mode {
        MaskMode::Hidden => Some(params.scalar_add(&nonce.r, &params.scalar_mul(beta, &opening.r))),
        MaskMode::Known => None,
    };
    (z_x, z_r)
}

/// Checks the verification equation for an explicit challenge.
pub fn check(
    params: &GroupParams,
    proof: &CmProof,
    c: &Commitment,
    known_mask: Option<&Scalar>,
    beta: &Scalar,
) -> bool {
    let z_r = match (&proof.z_r, known_mask) {
        (Some(z_r), None) => z_r.clone(),
        (None, Some(mask)) => params.scalar_mul(beta, mask),
        _ => return false,
    };
    let lhs = commit(params, &proof.z_x, &z_r);
    let rhs = params.group_mul(proof.a.element(), &params.group_pow(c.element(), beta));
    lhs.element() == &rhs
}

/// Honest-verifier simulator: a hidden-mask transcript for `beta` built
/// without any opening, by picking the responses first.
pub fn simulate<R: RngCore + CryptoRng>(
    params: &GroupParams,
    c: &Commitment,
    beta: &Scalar,
    rng: &mut R,
) -> CmProof {
    let z_x = params.random_scalar(rng);
    let z_r = params.random_scalar(rng);
    simulate_with(params, c, beta, z_x, z_r)
}

/// [`simulate`] with the responses supplied by the caller.
pub fn simulate_with(
    params: &GroupParams,
    c: &Commitment,
    beta: &Scalar,
    z_x: Scalar,
    z_r: Scalar,
) -> CmProof {
    let shifted = commit(params, &z_x, &z_r);
    let c_inv_beta = params.group_inv(&params.group_pow(c.element(), beta));
    let a = Commitment(params.group_mul(shifted.element(), &c_inv_beta));
    CmProof { a, z_x, z_r: Some(z_r) }
}

fn challenge(params: &GroupParams, context: &[u8], a: &Commitment, c: &Commitment) -> Scalar {
    let mut t = Transcript::new(params, context);
    t.append_commitment(a);
    t.append_commitment(c);
    t.challenge()
}

/// Non-interactive proof of knowledge of `opening` for `c`. In known-mask
/// mode the mask in `opening` is the public one.
pub fn prove_cm<R: RngCore + CryptoRng>(
    params: &GroupParams,
    opening: &Opening,
    c: &Commitment,
    mode: MaskMode,
    context: &[u8],
    rng: &mut R,
) -> Result<CmProof, ProofError> {
    if !verify_opening(params, c, opening) {
        return Err(ProofError::InvalidWitness);
    }
    let nonce = CmNonce::random(params, mode, rng);
    let a = first_move(params, &nonce);
    let beta = challenge(params, context, &a, c);
    let (z_x, z_r) = respond(params, opening, &nonce, &beta, mode);
    Ok(CmProof { a, z_x, z_r })
}

/// Verifies a non-interactive proof. `known_mask` must be given exactly when
/// the proof is in known-mask mode.
pub fn verify_cm(
    params: &GroupParams,
    proof: &CmProof,
    c: &Commitment,
    known_mask: Option<&Scalar>,
    context: &[u8],
) -> bool {
    let beta = challenge(params, context, &proof.a, c);
    check(params, proof, c, known_mask, &beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::commit_random;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> GroupParams {
        GroupParams::new(23u32.into(), 4u32.into(), 9u32.into()).unwrap()
    }

    #[test]
    fn toy_interactive_vector() {
        let pp = toy();
        let s = |v| pp.scalar(v);
        let c = commit(&pp, &s(3), &s(5));
        let opening = Opening::new(s(3), s(5));
        let nonce = CmNonce { x: s(2), r: s(7) };
        // 4^2 * 9^7 = 16 * 4 = 64 = 18 (mod 23)
        let a = first_move(&pp, &nonce);
        assert_eq!(a.element().value(), &BigUint::from(18u32));
        // beta = 4: z_x = 2 + 12 = 3, z_r = 7 + 20 = 5 (mod 11)
        let beta = s(4);
        let (z_x, z_r) = respond(&pp, &opening, &nonce, &beta, MaskMode::Hidden);
        assert_eq!(z_x, s(3));
        assert_eq!(z_r, Some(s(5)));
        let proof = CmProof { a, z_x, z_r };
        assert!(check(&pp, &proof, &c, None, &beta));
        assert!(!check(&pp, &proof, &c, None, &s(5)));
    }

    #[test]
    fn toy_fiat_shamir_vector() {
        let pp = toy();
        let s = |v| pp.scalar(v);
        let c = commit(&pp, &s(3), &s(5));
        let a = first_move(&pp, &CmNonce { x: s(2), r: s(7) });
        // H("toy" || 0x12 | 0x06) mod 11, frozen from one evaluation
        let beta = challenge(&pp, b"toy", &a, &c);
        assert_eq!(beta, s(TOY_FS_BETA));
        let (z_x, z_r) = respond(&pp, &Opening::new(s(3), s(5)), &CmNonce { x: s(2), r: s(7) }, &beta, MaskMode::Hidden);
        // z_x = 2 + 8*3 = 4, z_r = 7 + 8*5 = 3 (mod 11)
        assert_eq!(z_x, s(4));
        assert_eq!(z_r, Some(s(3)));
        assert!(verify_cm(&pp, &CmProof { a, z_x, z_r }, &c, None, b"toy"));
    }

    const TOY_FS_BETA: u64 = 8;

    #[test]
    fn honest_proofs_verify_and_tampering_fails() {
        let pp = GroupParams::generate(64, b"cm").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (c, o) = commit_random(&pp, &pp.scalar(99), &mut rng);
        let proof = prove_cm(&pp, &o, &c, MaskMode::Hidden, b"ctx", &mut rng).unwrap();
        assert!(verify_cm(&pp, &proof, &c, None, b"ctx"));
        assert!(!verify_cm(&pp, &proof, &c, None, b"ctx!"));
        assert!(!verify_cm(&pp, &proof, &c, Some(&o.r), b"ctx"));
        let mut bad = proof.clone();
        bad.z_x = pp.scalar_add(&bad.z_x, &pp.scalar(1));
        assert!(!verify_cm(&pp, &bad, &c, None, b"ctx"));
    }

    #[test]
    fn known_mask_mode_omits_z_r() {
        let pp = GroupParams::generate(64, b"cm").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mask = pp.hash_to_scalar(b"space-1|slot");
        let o = Opening::new(pp.scalar(1234), mask.clone());
        let c = commit(&pp, &o.x, &o.r);
        let proof = prove_cm(&pp, &o, &c, MaskMode::Known, b"k", &mut rng).unwrap();
        assert_eq!(proof.mode(), MaskMode::Known);
        assert!(proof.z_r.is_none());
        assert!(verify_cm(&pp, &proof, &c, Some(&mask), b"k"));
        assert!(!verify_cm(&pp, &proof, &c, None, b"k"));
        let other = pp.hash_to_scalar(b"space-2|slot");
        assert!(!verify_cm(&pp, &proof, &c, Some(&other), b"k"));
    }

    #[test]
    fn wrong_witness_is_refused() {
        let pp = GroupParams::generate(64, b"cm").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (c, o) = commit_random(&pp, &pp.scalar(5), &mut rng);
        let wrong = Opening::new(pp.scalar(6), o.r);
        assert_eq!(
            prove_cm(&pp, &wrong, &c, MaskMode::Hidden, b"", &mut rng),
            Err(ProofError::InvalidWitness)
        );
    }

    #[test]
    fn simulated_transcript_verifies() {
        let pp = GroupParams::generate(64, b"cm").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (c, _) = commit_random(&pp, &pp.scalar(5), &mut rng);
        for _ in 0..50 {
            let beta = pp.random_scalar(&mut rng);
            let sim = simulate(&pp, &c, &beta, &mut rng);
            assert!(check(&pp, &sim, &c, None, &beta));
        }
    }
}
