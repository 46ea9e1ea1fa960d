//! Proof that a committed value belongs to a public set `{x_1, ..., x_n}`.
//!
//! For the true index `i` the prover commits honestly; for every other branch
//! it picks `beta_j` up front and folds the offset `(x_i - x_j) * beta_j` into
//! `z_x_j`. The first move is `(a_j, z_x_j)` for all branches; after the
//! challenge `beta` the prover sets `beta_i = beta - sum_{j != i} beta_j` and
//! answers `(beta_j, z_r_j)`. The verifier checks that the `beta_j` sum to
//! `beta` and that `g^z_x_j * h^z_r_j == a_j * (c / g^x_j)^beta_j` for all `j`.
//!
//! `z_x_j` is part of the first move, so it is hashed into the Fiat-Shamir
//! challenge together with the `a_j`.

use std::collections::HashSet;

use rand::{CryptoRng, RngCore};

use super::{ProofError, Transcript, MAX_SET_SIZE};
use crate::commitment::{commit, verify_opening, Commitment, Opening};
use crate::group::{GroupParams, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbsBranch {
    pub a: Commitment,
    pub z_x: Scalar,
    pub beta: Scalar,
    pub z_r: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbsProof {
    pub branches: Vec<MbsBranch>,
}

/// Per-branch first-move message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbsFirstMove {
    pub a: Vec<Commitment>,
    pub z_x: Vec<Scalar>,
}

/// Secret prover state kept between the first move and the response.
#[derive(Clone, Debug)]
pub struct MbsProverState {
    index: usize,
    r_nonces: Vec<Scalar>,
    /// Pre-chosen challenges; the entry at `index` is a placeholder.
    betas: Vec<Scalar>,
    mask: Scalar,
}

/// Per-branch response message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbsResponse {
    pub beta: Vec<Scalar>,
    pub z_r: Vec<Scalar>,
}

pub(crate) fn validate_set(set: &[Scalar]) -> Result<(), ProofError> {
    if set.is_empty() {
        return Err(ProofError::EmptySet);
    }
    if set.len() > MAX_SET_SIZE {
        return Err(ProofError::SetTooLarge);
    }
    let distinct: HashSet<&Scalar> = set.iter().collect();
    if distinct.len() != set.len() {
        return Err(ProofError::DuplicateSetElement);
    }
    Ok(())
}

/// All prover randomness for one run, split out so tests can enumerate it.
#[derive(Clone, Debug)]
pub struct MbsNonces {
    pub x: Vec<Scalar>,
    pub r: Vec<Scalar>,
    /// Challenges for the non-chosen branches; the true index is ignored.
    pub beta: Vec<Scalar>,
}

impl MbsNonces {
    pub fn random<R: RngCore + CryptoRng>(params: &GroupParams, n: usize, rng: &mut R) -> Self {
        let mut nonces = MbsNonces {
            x: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            beta: Vec::with_capacity(n),
        };
        for _ in 0..n {
            nonces.x.push(params.random_scalar(rng));
            nonces.r.push(params.random_scalar(rng));
            nonces.beta.push(params.random_scalar(rng));
        }
        nonces
    }
}

/// Builds the first move. The opening must match `c` and its value must be
/// in `set`; callers are expected to have checked the commitment.
pub fn first_move(
    params: &GroupParams,
    opening: &Opening,
    set: &[Scalar],
    nonces: MbsNonces,
) -> Result<(MbsFirstMove, MbsProverState), ProofError> {
    validate_set(set)?;
    let index = set
        .iter()
        .position(|v| *v == opening.x)
        .ok_or(ProofError::NotMember)?;
    let n = set.len();
    let mut a = Vec::with_capacity(n);
    let mut z_x = Vec::with_capacity(n);
    for j in 0..n {
        a.push(commit(params, &nonces.x[j], &nonces.r[j]));
        if j == index {
            z_x.push(nonces.x[j].clone());
        } else {
            let offset = params.scalar_sub(&opening.x, &set[j]);
            z_x.push(params.scalar_add(&nonces.x[j], &params.scalar_mul(&offset, &nonces.beta[j])));
        }
    }
    let state = MbsProverState {
        index,
        r_nonces: nonces.r,
        betas: nonces.beta,
        mask: opening.r.clone(),
    };
    Ok((MbsFirstMove { a, z_x }, state))
}

pub fn respond(params: &GroupParams, state: &MbsProverState, beta: &Scalar) -> MbsResponse {
    let mut betas = state.betas.clone();
    let others = betas
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != state.index)
        .fold(params.scalar_zero(), |acc, (_, b)| params.scalar_add(&acc, b));
    betas[state.index] = params.scalar_sub(beta, &others);
    let z_r = betas
        .iter()
        .zip(&state.r_nonces)
        .map(|(b, r)| params.scalar_add(r, &params.scalar_mul(&state.mask, b)))
        .collect();
    MbsResponse { beta: betas, z_r }
}

pub fn assemble(first: MbsFirstMove, response: MbsResponse) -> MbsProof {
    let branches = first
        .a
        .into_iter()
        .zip(first.z_x)
        .zip(response.beta.into_iter().zip(response.z_r))
        .map(|((a, z_x), (beta, z_r))| MbsBranch { a, z_x, beta, z_r })
        .collect();
    MbsProof { branches }
}

/// Checks the verification equations for an explicit challenge.
pub fn check(
    params: &GroupParams,
    proof: &MbsProof,
    c: &Commitment,
    set: &[Scalar],
    beta: &Scalar,
) -> bool {
    if validate_set(set).is_err() || proof.branches.len() != set.len() {
        return false;
    }
    let sum = proof
        .branches
        .iter()
        .fold(params.scalar_zero(), |acc, b| params.scalar_add(&acc, &b.beta));
    if sum != *beta {
        return false;
    }
    proof.branches.iter().zip(set).all(|(branch, x_j)| {
        let lhs = commit(params, &branch.z_x, &branch.z_r);
        let base = params.group_div(c.element(), &params.group_pow(params.g(), x_j));
        let rhs = params.group_mul(branch.a.element(), &params.group_pow(&base, &branch.beta));
        lhs.element() == &rhs
    })
}

/// Honest-verifier simulator: picks every `beta_j` (summing to `beta`) and
/// every response, then solves for the `a_j`.
pub fn simulate<R: RngCore + CryptoRng>(
    params: &GroupParams,
    c: &Commitment,
    set: &[Scalar],
    beta: &Scalar,
    rng: &mut R,
) -> MbsProof {
    let n = set.len();
    let mut betas: Vec<Scalar> = (0..n.saturating_sub(1)).map(|_| params.random_scalar(rng)).collect();
    let z_x: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();
    let z_r: Vec<Scalar> = (0..n).map(|_| params.random_scalar(rng)).collect();
    let partial = betas.iter().fold(params.scalar_zero(), |acc, b| params.scalar_add(&acc, b));
    betas.push(params.scalar_sub(beta, &partial));
    simulate_with(params, c, set, betas, z_x, z_r)
}

/// [`simulate`] with every random choice supplied by the caller. The
/// `betas` must already sum to the target challenge.
pub fn simulate_with(
    params: &GroupParams,
    c: &Commitment,
    set: &[Scalar],
    betas: Vec<Scalar>,
    z_x: Vec<Scalar>,
    z_r: Vec<Scalar>,
) -> MbsProof {
    let branches = set
        .iter()
        .zip(betas.into_iter().zip(z_x.into_iter().zip(z_r)))
        .map(|(x_j, (beta, (z_x, z_r)))| {
            let base = params.group_div(c.element(), &params.group_pow(params.g(), x_j));
            let lhs = commit(params, &z_x, &z_r);
            let a = params.group_div(lhs.element(), &params.group_pow(&base, &beta));
            MbsBranch {
                a: Commitment(a),
                z_x,
                beta,
                z_r,
            }
        })
        .collect();
    MbsProof { branches }
}

/// Appends the statement set and first move to a transcript.
pub(crate) fn absorb_first_move(t: &mut Transcript<'_>, a: &[Commitment], z_x: &[Scalar]) {
    for (a_j, z_j) in a.iter().zip(z_x) {
        t.append_commitment(a_j);
        t.append_scalar(z_j);
    }
}

fn challenge(
    params: &GroupParams,
    context: &[u8],
    c: &Commitment,
    set: &[Scalar],
    a: &[Commitment],
    z_x: &[Scalar],
) -> Scalar {
    let mut t = Transcript::new(params, context);
    t.append_commitment(c);
    for x in set {
        t.append_scalar(x);
    }
    absorb_first_move(&mut t, a, z_x);
    t.challenge()
}

pub fn prove_mbs<R: RngCore + CryptoRng>(
    params: &GroupParams,
    opening: &Opening,
    c: &Commitment,
    set: &[Scalar],
    context: &[u8],
    rng: &mut R,
) -> Result<MbsProof, ProofError> {
    if !verify_opening(params, c, opening) {
        return Err(ProofError::InvalidWitness);
    }
    let nonces = MbsNonces::random(params, set.len(), rng);
    let (first, state) = first_move(params, opening, set, nonces)?;
    let beta = challenge(params, context, c, set, &first.a, &first.z_x);
    let response = respond(params, &state, &beta);
    Ok(assemble(first, response))
}

pub fn verify_mbs(
    params: &GroupParams,
    proof: &MbsProof,
    c: &Commitment,
    set: &[Scalar],
    context: &[u8],
) -> bool {
    let a: Vec<Commitment> = proof.branches.iter().map(|b| b.a.clone()).collect();
    let z_x: Vec<Scalar> = proof.branches.iter().map(|b| b.z_x.clone()).collect();
    let beta = challenge(params, context, c, set, &a, &z_x);
    check(params, proof, c, set, &beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::commit_random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (GroupParams, ChaCha20Rng) {
        (GroupParams::generate(64, b"mbs").unwrap(), ChaCha20Rng::seed_from_u64(11))
    }

    #[test]
    fn bit_membership() {
        let (pp, mut rng) = setup();
        let set = [pp.scalar(0), pp.scalar(1)];
        for bit in 0..2 {
            let (c, o) = commit_random(&pp, &pp.scalar(bit), &mut rng);
            let proof = prove_mbs(&pp, &o, &c, &set, b"bit", &mut rng).unwrap();
            assert!(verify_mbs(&pp, &proof, &c, &set, b"bit"));
            assert!(!verify_mbs(&pp, &proof, &c, &set, b"bit2"));
        }
    }

    #[test]
    fn perturbed_branch_challenge_fails() {
        let (pp, mut rng) = setup();
        let set = [pp.scalar(0), pp.scalar(1)];
        let (c, o) = commit_random(&pp, &pp.scalar(1), &mut rng);
        let proof = prove_mbs(&pp, &o, &c, &set, b"", &mut rng).unwrap();
        for j in 0..2 {
            let mut bad = proof.clone();
            bad.branches[j].beta = pp.scalar_add(&bad.branches[j].beta, &pp.scalar(1));
            assert!(!verify_mbs(&pp, &bad, &c, &set, b""));
        }
    }

    #[test]
    fn singleton_set_is_a_plain_knowledge_proof() {
        let (pp, mut rng) = setup();
        let set = [pp.scalar(77)];
        let (c, o) = commit_random(&pp, &pp.scalar(77), &mut rng);
        let proof = prove_mbs(&pp, &o, &c, &set, b"one", &mut rng).unwrap();
        assert_eq!(proof.branches.len(), 1);
        assert!(verify_mbs(&pp, &proof, &c, &set, b"one"));
        // with one branch the branch challenge is the whole challenge
        let a: Vec<_> = proof.branches.iter().map(|b| b.a.clone()).collect();
        let z: Vec<_> = proof.branches.iter().map(|b| b.z_x.clone()).collect();
        assert_eq!(proof.branches[0].beta, challenge(&pp, b"one", &c, &set, &a, &z));
    }

    #[test]
    fn larger_sets() {
        let (pp, mut rng) = setup();
        let set: Vec<Scalar> = [3u64, 9, 27, 81, 243].iter().map(|v| pp.scalar(*v)).collect();
        for x in &set {
            let (c, o) = commit_random(&pp, x, &mut rng);
            let proof = prove_mbs(&pp, &o, &c, &set, b"five", &mut rng).unwrap();
            assert!(verify_mbs(&pp, &proof, &c, &set, b"five"));
            // a different set must not verify
            let mut other = set.clone();
            other[0] = pp.scalar(4);
            assert!(!verify_mbs(&pp, &proof, &c, &other, b"five"));
        }
    }

    #[test]
    fn prove_errors() {
        let (pp, mut rng) = setup();
        let (c, o) = commit_random(&pp, &pp.scalar(5), &mut rng);
        assert_eq!(prove_mbs(&pp, &o, &c, &[], b"", &mut rng), Err(ProofError::EmptySet));
        let set = [pp.scalar(0), pp.scalar(1)];
        assert_eq!(prove_mbs(&pp, &o, &c, &set, b"", &mut rng), Err(ProofError::NotMember));
        let dup = [pp.scalar(5), pp.scalar(5)];
        assert_eq!(
            prove_mbs(&pp, &o, &c, &dup, b"", &mut rng),
            Err(ProofError::DuplicateSetElement)
        );
    }

    #[test]
    fn non_member_cannot_forge_by_honest_branches() {
        // A prover whose value is outside the set can satisfy every branch it
        // fixes in advance, but not the branch whose challenge is forced.
        let (pp, mut rng) = setup();
        let set = [pp.scalar(0), pp.scalar(1)];
        let (c, o) = commit_random(&pp, &pp.scalar(2), &mut rng);
        let nonces = MbsNonces::random(&pp, 2, &mut rng);
        let cheat = Opening::new(pp.scalar(0), o.r.clone());
        let (first, state) = first_move(&pp, &cheat, &set, nonces).unwrap();
        let beta = challenge(&pp, b"", &c, &set, &first.a, &first.z_x);
        let proof = assemble(first, respond(&pp, &state, &beta));
        assert!(!verify_mbs(&pp, &proof, &c, &set, b""));
    }

    #[test]
    fn simulated_transcripts_verify() {
        let (pp, mut rng) = setup();
        let set = [pp.scalar(0), pp.scalar(1), pp.scalar(2)];
        let (c, _) = commit_random(&pp, &pp.scalar(1), &mut rng);
        let beta = pp.random_scalar(&mut rng);
        let sim = simulate(&pp, &c, &set, &beta, &mut rng);
        assert!(check(&pp, &sim, &c, &set, &beta));
    }
}
