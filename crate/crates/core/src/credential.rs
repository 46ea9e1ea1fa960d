//! Server signing keys and the credential triple `(Cm(s), Cm(q), Cm(b))`.
//!
//! Signatures are textbook hash-then-sign: `sig = H(m)^d mod n`, verified by
//! `sig^e mod n == H(m) mod n`. This mirrors the encrypt-the-digest
//! formulation directly; a deployment should swap in a padded scheme behind
//! [`ServerKeys::sign`] / [`PublicKey::verify`].

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_prime::nt_funcs::is_prime;
use num_traits::One;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::commitment::{commit, Commitment};
use crate::group::{GroupParams, Scalar};
use crate::sigma::SEPARATOR;

const PUBLIC_EXPONENT: u32 = 65_537;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub n: BigUint,
    pub e: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature(pub Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerKeys {
    public: PublicKey,
    d: BigUint,
}

fn random_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut cand = rng.gen_biguint(bits);
        // top two bits set so the product has exactly 2 * bits bits
        cand.set_bit(bits - 1, true);
        cand.set_bit(bits - 2, true);
        cand.set_bit(0, true);
        if is_prime(&cand, None).probably() {
            return cand;
        }
    }
}

fn digest_int(message: &[u8], n: &BigUint) -> BigUint {
    BigUint::from_bytes_be(&Sha256::digest(message)) % n
}

impl ServerKeys {
    /// Generates a key pair whose modulus has `bits` bits (at least 64).
    pub fn generate<R: RngCore + CryptoRng>(bits: u32, rng: &mut R) -> Self {
        assert!(bits >= 64, "key size below 64 bits");
        let e = BigUint::from(PUBLIC_EXPONENT);
        let half = u64::from(bits / 2);
        loop {
            let p = random_prime(half, rng);
            let q = random_prime(u64::from(bits) - half, rng);
            if p == q {
                continue;
            }
            let phi = (&p - 1u32) * (&q - 1u32);
            if !e.gcd(&phi).is_one() {
                continue;
            }
            let d = e.modinv(&phi).expect("e is invertible mod phi");
            return ServerKeys {
                public: PublicKey { n: p * q, e },
                d,
            };
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let m = digest_int(message, &self.public.n);
        let s = m.modpow(&self.d, &self.public.n);
        Signature(left_pad(&s, self.public.signature_len()))
    }

    /// Private exponent, for persisting keys.
    pub fn private_exponent(&self) -> &BigUint {
        &self.d
    }

    pub fn from_parts(n: BigUint, e: BigUint, d: BigUint) -> Self {
        ServerKeys {
            public: PublicKey { n, e },
            d,
        }
    }
}

impl PublicKey {
    pub fn signature_len(&self) -> usize {
        (self.n.bits() as usize).div_ceil(8)
    }

    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        if sig.0.len() != self.signature_len() {
            return false;
        }
        let s = BigUint::from_bytes_be(&sig.0);
        if s >= self.n {
            return false;
        }
        s.modpow(&self.e, &self.n) == digest_int(message, &self.n)
    }
}

fn left_pad(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

/// The exact bytes the server signs: `Cm(s) | Cm(q) | Cm(b)`.
pub fn credential_message(
    params: &GroupParams,
    cm_s: &Commitment,
    cm_q: &Commitment,
    cm_b: &Commitment,
) -> Vec<u8> {
    let mut msg = params.encode_element(cm_s.element());
    msg.push(SEPARATOR);
    msg.extend(params.encode_element(cm_q.element()));
    msg.push(SEPARATOR);
    msg.extend(params.encode_element(cm_b.element()));
    msg
}

pub fn sign_credential(
    params: &GroupParams,
    keys: &ServerKeys,
    cm_s: &Commitment,
    cm_q: &Commitment,
    cm_b: &Commitment,
) -> Signature {
    keys.sign(&credential_message(params, cm_s, cm_q, cm_b))
}

pub fn verify_credential(
    params: &GroupParams,
    public: &PublicKey,
    cm_s: &Commitment,
    cm_q: &Commitment,
    cm_b: &Commitment,
    sig: &Signature,
) -> bool {
    public.verify(&credential_message(params, cm_s, cm_q, cm_b), sig)
}

/// The public half of a credential, as presented to the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialPublic {
    pub cm_s: Commitment,
    pub cm_q: Commitment,
    pub cm_b: Commitment,
    pub sig: Signature,
}

impl CredentialPublic {
    pub fn verify(&self, params: &GroupParams, public: &PublicKey) -> bool {
        verify_credential(params, public, &self.cm_s, &self.cm_q, &self.cm_b, &self.sig)
    }
}

/// The client's secrets: key `s`, one-use identifier `q`, balance `b`, and
/// the masks of the three commitments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialSecret {
    pub s: Scalar,
    pub q: Scalar,
    pub b: u64,
    pub r_s: Scalar,
    pub r_q: Scalar,
    pub r_b: Scalar,
}

impl CredentialSecret {
    /// Whether these secrets open all three commitments of `public`.
    pub fn opens(&self, params: &GroupParams, public: &CredentialPublic) -> bool {
        commit(params, &self.s, &self.r_s) == public.cm_s
            && commit(params, &self.q, &self.r_q) == public.cm_q
            && commit(params, &params.scalar(self.b), &self.r_b) == public.cm_b
    }
}
