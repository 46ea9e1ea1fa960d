//! Knowledge extractors: recover the witness from two accepting transcripts
//! that share a first move but answer different challenges. Only meaningful
//! in interactive mode, where a test can rewind the prover.

use super::cm::CmProof;
use super::mbs::MbsProof;
use super::nn::{weighted_sum, NnProof};
use super::ProofError;
use crate::commitment::Opening;
use crate::group::{GroupParams, Scalar};

/// A proof together with the challenge it answered.
#[derive(Clone, Debug)]
pub struct Transcript<P> {
    pub proof: P,
    pub beta: Scalar,
}

fn divide(params: &GroupParams, num: Scalar, den: Scalar) -> Result<Scalar, ProofError> {
    let inv = params.scalar_inv(&den).map_err(|_| ProofError::SameChallenge)?;
    Ok(params.scalar_mul(&num, &inv))
}

/// `x = (z'_x - z''_x) / (beta_1 - beta_2)`.
pub fn extract_secret(
    params: &GroupParams,
    t1: &Transcript<CmProof>,
    t2: &Transcript<CmProof>,
) -> Result<Scalar, ProofError> {
    if t1.proof.a != t2.proof.a {
        return Err(ProofError::DifferentFirstMove);
    }
    if t1.beta == t2.beta {
        return Err(ProofError::SameChallenge);
    }
    divide(
        params,
        params.scalar_sub(&t1.proof.z_x, &t2.proof.z_x),
        params.scalar_sub(&t1.beta, &t2.beta),
    )
}

/// Recovers both value and mask from two hidden-mask transcripts.
pub fn extract_opening(
    params: &GroupParams,
    t1: &Transcript<CmProof>,
    t2: &Transcript<CmProof>,
) -> Result<Opening, ProofError> {
    let x = extract_secret(params, t1, t2)?;
    let (Some(r1), Some(r2)) = (&t1.proof.z_r, &t2.proof.z_r) else {
        return Err(ProofError::InvalidWitness);
    };
    let r = divide(
        params,
        params.scalar_sub(r1, r2),
        params.scalar_sub(&t1.beta, &t2.beta),
    )?;
    Ok(Opening::new(x, r))
}

/// Finds a branch whose challenge differs between the transcripts; the
/// committed value is that branch's set element and the mask falls out of
/// the two `z_r` responses.
pub fn extract_membership(
    params: &GroupParams,
    set: &[Scalar],
    t1: &Transcript<MbsProof>,
    t2: &Transcript<MbsProof>,
) -> Result<Opening, ProofError> {
    let (b1, b2) = (&t1.proof.branches, &t2.proof.branches);
    if b1.len() != set.len() || b2.len() != set.len() {
        return Err(ProofError::DifferentFirstMove);
    }
    let same_first = b1.iter().zip(b2).all(|(x, y)| x.a == y.a && x.z_x == y.z_x);
    if !same_first {
        return Err(ProofError::DifferentFirstMove);
    }
    if t1.beta == t2.beta {
        return Err(ProofError::SameChallenge);
    }
    let j = b1
        .iter()
        .zip(b2)
        .position(|(x, y)| x.beta != y.beta)
        .ok_or(ProofError::SameChallenge)?;
    let r = divide(
        params,
        params.scalar_sub(&b1[j].z_r, &b2[j].z_r),
        params.scalar_sub(&b1[j].beta, &b2[j].beta),
    )?;
    Ok(Opening::new(set[j].clone(), r))
}

/// Extracts every bit opening, recombines the value, and recovers the mask
/// from `(z_r - z_r') / (beta_1 - beta_2) = sum r_i 2^(i-1) - r`.
pub fn extract_non_negative(
    params: &GroupParams,
    t1: &Transcript<NnProof>,
    t2: &Transcript<NnProof>,
) -> Result<Opening, ProofError> {
    let (p1, p2) = (&t1.proof, &t2.proof);
    if p1.a0 != p2.a0 || p1.bit_commitments != p2.bit_commitments {
        return Err(ProofError::DifferentFirstMove);
    }
    if t1.beta == t2.beta {
        return Err(ProofError::SameChallenge);
    }
    let set = super::nn::bit_set(params);
    let mut bits = Vec::with_capacity(p1.bit_proofs.len());
    let mut masks = Vec::with_capacity(p1.bit_proofs.len());
    for (q1, q2) in p1.bit_proofs.iter().zip(&p2.bit_proofs) {
        let o = extract_membership(
            params,
            &set,
            &Transcript { proof: q1.clone(), beta: t1.beta.clone() },
            &Transcript { proof: q2.clone(), beta: t2.beta.clone() },
        )?;
        bits.push(o.x);
        masks.push(o.r);
    }
    let x = weighted_sum(params, &bits);
    let diff = divide(
        params,
        params.scalar_sub(&p1.z_r, &p2.z_r),
        params.scalar_sub(&t1.beta, &t2.beta),
    )?;
    let r = params.scalar_sub(&weighted_sum(params, &masks), &diff);
    Ok(Opening::new(x, r))
}
