//! Proof that a committed value is non-negative, i.e. lies in `[0, 2^m)`.
//!
//! The prover commits to each bit `b_i` of `x` as `C_i = Cm(b_i, r_i)`,
//! attaches a membership proof over `{0, 1}` for every `C_i`, and sends
//! `a0 = Cm(0, r')`. With challenge `beta` it answers
//! `z_r = r' + beta * (sum_i r_i 2^(i-1) - r)`, and the verifier checks
//! `h^z_r == a0 * c^-beta * prod_i C_i^(beta 2^(i-1))`.
//!
//! One challenge covers the aggregate equation and every bit proof; it is
//! hashed from the statement, all bit commitments, `a0`, and every bit
//! proof's first move.

use num_bigint::BigUint;
use num_traits::One;
use rand::{CryptoRng, RngCore};

use super::mbs::{self, MbsFirstMove, MbsNonces, MbsProof, MbsProverState, MbsResponse};
use super::{ProofError, Transcript};
use crate::commitment::{commit, verify_opening, Commitment, Opening};
use crate::group::{GroupParams, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NnProof {
    pub bit_commitments: Vec<Commitment>,
    pub bit_proofs: Vec<MbsProof>,
    pub a0: Commitment,
    pub z_r: Scalar,
}

impl NnProof {
    pub fn bit_width(&self) -> usize {
        self.bit_commitments.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NnFirstMove {
    pub bit_commitments: Vec<Commitment>,
    pub bit_moves: Vec<MbsFirstMove>,
    pub a0: Commitment,
}

#[derive(Clone, Debug)]
pub struct NnProverState {
    bit_states: Vec<MbsProverState>,
    bit_masks: Vec<Scalar>,
    r0: Scalar,
    mask: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NnResponse {
    pub bits: Vec<MbsResponse>,
    pub z_r: Scalar,
}

#[derive(Clone, Debug)]
pub struct NnNonces {
    pub bit_masks: Vec<Scalar>,
    pub r0: Scalar,
    pub bit_nonces: Vec<MbsNonces>,
}

impl NnNonces {
    pub fn random<R: RngCore + CryptoRng>(params: &GroupParams, m: u32, rng: &mut R) -> Self {
        let bit_masks = (0..m).map(|_| params.random_scalar(rng)).collect();
        let r0 = params.random_scalar(rng);
        let bit_nonces = (0..m).map(|_| MbsNonces::random(params, 2, rng)).collect();
        NnNonces {
            bit_masks,
            r0,
            bit_nonces,
        }
    }
}

pub(crate) fn bit_set(params: &GroupParams) -> [Scalar; 2] {
    [params.scalar(0), params.scalar(1)]
}

/// `2^i mod p`.
pub(crate) fn weight(params: &GroupParams, i: usize) -> Scalar {
    params.scalar_from_biguint(&(BigUint::one() << i))
}

/// `m` must leave `2^m <= p` so the bit sum cannot wrap around the order.
pub fn check_width(params: &GroupParams, m: u32) -> Result<(), ProofError> {
    if m == 0 || u64::from(m) >= params.p().bits() {
        return Err(ProofError::WidthTooLarge(m));
    }
    Ok(())
}

pub fn first_move(
    params: &GroupParams,
    opening: &Opening,
    m: u32,
    nonces: NnNonces,
) -> Result<(NnFirstMove, NnProverState), ProofError> {
    check_width(params, m)?;
    let x = opening.x.value();
    if x.bits() > u64::from(m) {
        return Err(ProofError::OutOfRange(m));
    }
    let set = bit_set(params);
    let mut bit_commitments = Vec::with_capacity(m as usize);
    let mut bit_moves = Vec::with_capacity(m as usize);
    let mut bit_states = Vec::with_capacity(m as usize);
    for (i, (r_i, bit_nonce)) in nonces.bit_masks.iter().zip(nonces.bit_nonces).enumerate() {
        let b = params.scalar(u64::from(x.bit(i as u64)));
        let bit_opening = Opening::new(b, r_i.clone());
        bit_commitments.push(commit(params, &bit_opening.x, &bit_opening.r));
        let (mv, st) = mbs::first_move(params, &bit_opening, &set, bit_nonce)?;
        bit_moves.push(mv);
        bit_states.push(st);
    }
    let a0 = commit(params, &params.scalar_zero(), &nonces.r0);
    let first = NnFirstMove {
        bit_commitments,
        bit_moves,
        a0,
    };
    let state = NnProverState {
        bit_states,
        bit_masks: nonces.bit_masks,
        r0: nonces.r0,
        mask: opening.r.clone(),
    };
    Ok((first, state))
}

/// `sum_i r_i 2^(i-1)`, the mask of the recombined bit commitments.
pub(crate) fn weighted_sum(params: &GroupParams, values: &[Scalar]) -> Scalar {
    values.iter().enumerate().fold(params.scalar_zero(), |acc, (i, v)| {
        params.scalar_add(&acc, &params.scalar_mul(v, &weight(params, i)))
    })
}

pub fn respond(params: &GroupParams, state: &NnProverState, beta: &Scalar) -> NnResponse {
    let bits = state
        .bit_states
        .iter()
        .map(|st| mbs::respond(params, st, beta))
        .collect();
    let diff = params.scalar_sub(&weighted_sum(params, &state.bit_masks), &state.mask);
    let z_r = params.scalar_add(&state.r0, &params.scalar_mul(beta, &diff));
    NnResponse { bits, z_r }
}

pub fn assemble(first: NnFirstMove, response: NnResponse) -> NnProof {
    let bit_proofs = first
        .bit_moves
        .into_iter()
        .zip(response.bits)
        .map(|(mv, resp)| mbs::assemble(mv, resp))
        .collect();
    NnProof {
        bit_commitments: first.bit_commitments,
        bit_proofs,
        a0: first.a0,
        z_r: response.z_r,
    }
}

/// Checks every bit proof and the aggregate equation for an explicit
/// challenge and bit width.
pub fn check(params: &GroupParams, proof: &NnProof, c: &Commitment, m: u32, beta: &Scalar) -> bool {
    if check_width(params, m).is_err()
        || proof.bit_commitments.len() != m as usize
        || proof.bit_proofs.len() != m as usize
    {
        return false;
    }
    let set = bit_set(params);
    let bits_ok = proof
        .bit_commitments
        .iter()
        .zip(&proof.bit_proofs)
        .all(|(c_i, p_i)| mbs::check(params, p_i, c_i, &set, beta));
    if !bits_ok {
        return false;
    }
    let lhs = params.group_pow(params.h(), &proof.z_r);
    let mut rhs = params.group_mul(
        proof.a0.element(),
        &params.group_pow(c.element(), &params.scalar_neg(beta)),
    );
    for (i, c_i) in proof.bit_commitments.iter().enumerate() {
        let e = params.scalar_mul(beta, &weight(params, i));
        rhs = params.group_mul(&rhs, &params.group_pow(c_i.element(), &e));
    }
    lhs == rhs
}

/// Honest-verifier simulator. Bit values are random and never tied to `c`.
pub fn simulate<R: RngCore + CryptoRng>(
    params: &GroupParams,
    c: &Commitment,
    m: u32,
    beta: &Scalar,
    rng: &mut R,
) -> NnProof {
    let set = bit_set(params);
    let mut bit_commitments = Vec::with_capacity(m as usize);
    let mut bit_proofs = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let b = params.scalar(u64::from(rng.next_u32() & 1));
        let r = params.random_scalar(rng);
        let c_i = commit(params, &b, &r);
        bit_proofs.push(mbs::simulate(params, &c_i, &set, beta, rng));
        bit_commitments.push(c_i);
    }
    let z_r = params.random_scalar(rng);
    // a0 = h^z_r * c^beta * prod C_i^(-beta 2^(i-1))
    let mut a0 = params.group_mul(
        &params.group_pow(params.h(), &z_r),
        &params.group_pow(c.element(), beta),
    );
    for (i, c_i) in bit_commitments.iter().enumerate() {
        let e = params.scalar_neg(&params.scalar_mul(beta, &weight(params, i)));
        a0 = params.group_mul(&a0, &params.group_pow(c_i.element(), &e));
    }
    NnProof {
        bit_commitments,
        bit_proofs,
        a0: Commitment(a0),
        z_r,
    }
}

fn challenge(
    params: &GroupParams,
    context: &[u8],
    c: &Commitment,
    bit_commitments: &[Commitment],
    a0: &Commitment,
    bit_moves: impl Iterator<Item = (Vec<Commitment>, Vec<Scalar>)>,
) -> Scalar {
    let mut t = Transcript::new(params, context);
    t.append_commitment(c);
    for c_i in bit_commitments {
        t.append_commitment(c_i);
    }
    t.append_commitment(a0);
    for (a, z_x) in bit_moves {
        mbs::absorb_first_move(&mut t, &a, &z_x);
    }
    t.challenge()
}

pub fn prove_nn<R: RngCore + CryptoRng>(
    params: &GroupParams,
    opening: &Opening,
    c: &Commitment,
    m: u32,
    context: &[u8],
    rng: &mut R,
) -> Result<NnProof, ProofError> {
    if !verify_opening(params, c, opening) {
        return Err(ProofError::InvalidWitness);
    }
    let nonces = NnNonces::random(params, m, rng);
    let (first, state) = first_move(params, opening, m, nonces)?;
    let beta = challenge(
        params,
        context,
        c,
        &first.bit_commitments,
        &first.a0,
        first.bit_moves.iter().map(|mv| (mv.a.clone(), mv.z_x.clone())),
    );
    let response = respond(params, &state, &beta);
    Ok(assemble(first, response))
}

pub fn verify_nn(params: &GroupParams, proof: &NnProof, c: &Commitment, m: u32, context: &[u8]) -> bool {
    let beta = challenge(
        params,
        context,
        c,
        &proof.bit_commitments,
        &proof.a0,
        proof.bit_proofs.iter().map(|p| {
            (
                p.branches.iter().map(|b| b.a.clone()).collect(),
                p.branches.iter().map(|b| b.z_x.clone()).collect(),
            )
        }),
    );
    check(params, proof, c, m, &beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::{commit_random, shift};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (GroupParams, ChaCha20Rng) {
        (GroupParams::generate(64, b"nn").unwrap(), ChaCha20Rng::seed_from_u64(21))
    }

    #[test]
    fn boundaries_verify() {
        let (pp, mut rng) = setup();
        for (x, m) in [(0u64, 8u32), (255, 8), (1, 1), (0, 1), ((1 << 16) - 1, 16)] {
            let (c, o) = commit_random(&pp, &pp.scalar(x), &mut rng);
            let proof = prove_nn(&pp, &o, &c, m, b"nn", &mut rng).unwrap();
            assert!(verify_nn(&pp, &proof, &c, m, b"nn"), "x={x} m={m}");
            assert!(!verify_nn(&pp, &proof, &c, m, b"nn-other"));
        }
    }

    #[test]
    fn out_of_range_is_refused() {
        let (pp, mut rng) = setup();
        let (c, o) = commit_random(&pp, &pp.scalar(256), &mut rng);
        assert_eq!(prove_nn(&pp, &o, &c, 8, b"", &mut rng), Err(ProofError::OutOfRange(8)));
        // a "negative" balance p - 3 is a huge residue
        let neg = pp.scalar_neg(&pp.scalar(3));
        let (c, o) = commit_random(&pp, &neg, &mut rng);
        assert_eq!(prove_nn(&pp, &o, &c, 16, b"", &mut rng), Err(ProofError::OutOfRange(16)));
        assert_eq!(prove_nn(&pp, &o, &c, 64, b"", &mut rng), Err(ProofError::WidthTooLarge(64)));
    }

    #[test]
    fn proof_for_other_value_fails() {
        let (pp, mut rng) = setup();
        let (c, o) = commit_random(&pp, &pp.scalar(3), &mut rng);
        let proof = prove_nn(&pp, &o, &c, 8, b"", &mut rng).unwrap();
        // the same proof presented for c shifted down by 4 (value -1)
        let minus = shift(&pp, &c, &pp.scalar_neg(&pp.scalar(4)));
        assert!(!verify_nn(&pp, &proof, &minus, 8, b""));
        assert!(!verify_nn(&pp, &proof, &c, 9, b""));
    }

    #[test]
    fn tampering_fails() {
        let (pp, mut rng) = setup();
        let (c, o) = commit_random(&pp, &pp.scalar(77), &mut rng);
        let proof = prove_nn(&pp, &o, &c, 8, b"", &mut rng).unwrap();
        let mut bad = proof.clone();
        bad.z_r = pp.scalar_add(&bad.z_r, &pp.scalar(1));
        assert!(!verify_nn(&pp, &bad, &c, 8, b""));
        let mut bad = proof.clone();
        bad.bit_commitments.swap(0, 1);
        assert!(!verify_nn(&pp, &bad, &c, 8, b""));
        let mut bad = proof;
        bad.bit_proofs[3].branches[0].z_r = pp.scalar(0);
        assert!(!verify_nn(&pp, &bad, &c, 8, b""));
    }

    #[test]
    fn simulated_transcripts_verify() {
        let (pp, mut rng) = setup();
        let (c, _) = commit_random(&pp, &pp.scalar(9), &mut rng);
        let beta = pp.random_scalar(&mut rng);
        let sim = simulate(&pp, &c, 8, &beta, &mut rng);
        assert!(check(&pp, &sim, &c, 8, &beta));
    }
}
