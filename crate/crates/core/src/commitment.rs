//! Pedersen commitments `Cm(x, r) = g^x * h^r`.

use rand::{CryptoRng, RngCore};

use crate::group::{GroupElement, GroupParams, Scalar};

/// A commitment is just a group element; params are supplied by the caller.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment(pub GroupElement);

/// The secret pair a commitment opens to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening {
    pub x: Scalar,
    pub r: Scalar,
}

impl Opening {
    pub fn new(x: Scalar, r: Scalar) -> Self {
        Opening { x, r }
    }
}

impl Commitment {
    pub fn element(&self) -> &GroupElement {
        &self.0
    }
}

pub fn commit(params: &GroupParams, x: &Scalar, r: &Scalar) -> Commitment {
    let gx = params.group_pow(params.g(), x);
    let hr = params.group_pow(params.h(), r);
    Commitment(params.group_mul(&gx, &hr))
}

pub fn commit_random<R: RngCore + CryptoRng>(
    params: &GroupParams,
    x: &Scalar,
    rng: &mut R,
) -> (Commitment, Opening) {
    let r = params.random_scalar(rng);
    let c = commit(params, x, &r);
    (c, Opening::new(x.clone(), r))
}

/// Homomorphic combination: `Cm(x1, r1) * Cm(x2, r2) = Cm(x1 + x2, r1 + r2)`.
pub fn combine(params: &GroupParams, a: &Commitment, b: &Commitment) -> Commitment {
    Commitment(params.group_mul(&a.0, &b.0))
}

/// Adds `delta` to the committed value without touching the mask.
/// A negative delta is passed as `p - |delta|`.
pub fn shift(params: &GroupParams, c: &Commitment, delta: &Scalar) -> Commitment {
    combine(params, c, &commit(params, delta, &params.scalar_zero()))
}

pub fn verify_opening(params: &GroupParams, c: &Commitment, opening: &Opening) -> bool {
    commit(params, &opening.x, &opening.r) == *c
}
