//! Prime-order group arithmetic.
//!
//! The group is the subgroup of quadratic residues of `Z_q*` for a safe prime
//! `q = 2p + 1`; it has prime order `p`. Scalars live in `Z_p`. All values are
//! plain big integers and every operation goes through [`GroupParams`], which
//! owns the moduli.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_prime::nt_funcs::is_prime;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identifier of the hash function every party uses. Published in the setup
/// bundle so that a client can refuse a server that hashes differently.
pub const HASH_ID: &str = "sha256";

/// Smallest modulus size for which a usable safe prime exists (q = 23).
pub const MIN_GROUP_BITS: u32 = 5;

// RFC 3526 group 14; a safe prime, so the searcher is skipped for 2048 bits.
const MODP_2048: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AACAA68FFFFFFFFFFFFFFFF";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("group size of {0} bits is below the supported minimum")]
    TooSmall(u32),
    #[error("encoded value has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("value out of range")]
    OutOfRange,
    #[error("value is not a member of the prime-order subgroup")]
    NotInSubgroup,
    #[error("inverse of zero")]
    InverseOfZero,
    #[error("malformed hex encoding")]
    BadHex,
}

/// An element of `Z_p`, always reduced.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

/// A member of the order-`p` subgroup of `Z_q*`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Value as `u64` if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        let digits = self.0.to_u64_digits();
        match digits.len() {
            0 => Some(0),
            1 => Some(digits[0]),
            _ => None,
        }
    }
}

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.0)
    }
}

/// The public group description `(q, p, g, h)`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    q: BigUint,
    p: BigUint,
    g: GroupElement,
    h: GroupElement,
    bits: u32,
    element_len: usize,
    scalar_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("bits", &self.bits)
            .field("q", &self.q)
            .field("g", &self.g.0)
            .field("h", &self.h.0)
            .finish()
    }
}

fn byte_len(n: &BigUint) -> usize {
    (n.bits() as usize).div_ceil(8)
}

fn is_probable_prime(n: &BigUint) -> bool {
    is_prime(n, None).probably()
}

fn is_subgroup_member(q: &BigUint, p: &BigUint, v: &BigUint) -> bool {
    !v.is_zero() && v < q && v.modpow(p, q).is_one()
}

/// SHA-256 expanded in counter mode to `len` bytes.
fn expand_digest(data: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter: u32 = 0;
    while out.len() < len {
        let mut hasher = Sha256::new();
        hasher.update(data);
        hasher.update(counter.to_be_bytes());
        out.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// Maps a digest integer to a subgroup element by squaring its residue mod q.
/// Returns `None` for residues whose square is the identity or zero.
pub(crate) fn element_from_digest(q: &BigUint, digest: &BigUint) -> Option<BigUint> {
    let v = digest % q;
    let q_minus_one = q - 1u32;
    if v < BigUint::from(2u32) || v == q_minus_one {
        return None;
    }
    Some(&v * &v % q)
}

fn hash_to_group_raw(q: &BigUint, data: &[u8]) -> BigUint {
    // 16 extra bytes keep the residue close to uniform mod q.
    let len = byte_len(q) + 16;
    let mut counter: u32 = 0;
    loop {
        let mut input = data.to_vec();
        if counter > 0 {
            input.extend_from_slice(&counter.to_be_bytes());
        }
        let d = BigUint::from_bytes_be(&expand_digest(&input, len));
        if let Some(e) = element_from_digest(q, &d) {
            return e;
        }
        counter += 1;
    }
}

impl GroupParams {
    /// Builds and validates parameters from an explicit `(q, g, h)`.
    pub fn new(q: BigUint, g: BigUint, h: BigUint) -> Result<Self, GroupError> {
        if q < BigUint::from(7u32) {
            return Err(GroupError::InvalidParams("modulus too small"));
        }
        let p = (&q - 1u32) >> 1;
        if &p * 2u32 + 1u32 != q {
            return Err(GroupError::InvalidParams("q is not of the form 2p + 1"));
        }
        if !is_probable_prime(&q) {
            return Err(GroupError::InvalidParams("q is not prime"));
        }
        if !is_probable_prime(&p) {
            return Err(GroupError::InvalidParams("p is not prime"));
        }
        if g.is_one() || !is_subgroup_member(&q, &p, &g) {
            return Err(GroupError::InvalidParams("g is not a subgroup generator"));
        }
        if h.is_one() || !is_subgroup_member(&q, &p, &h) {
            return Err(GroupError::InvalidParams("h is not a subgroup generator"));
        }
        if g == h {
            return Err(GroupError::InvalidParams("g equals h"));
        }
        let bits = q.bits() as u32;
        Ok(GroupParams {
            element_len: byte_len(&q),
            scalar_len: byte_len(&p),
            q,
            p,
            g: GroupElement(g),
            h: GroupElement(h),
            bits,
        })
    }

    /// Deterministically derives parameters of the given size from `seed`.
    ///
    /// The safe prime is found by scanning upward (with wraparound) from a
    /// seed-derived starting point; at 2048 bits the RFC 3526 prime is used
    /// instead. `g` is the square of the smallest integer `k >= 2` whose
    /// square is not 1, and `h` is hashed from the seed so nobody knows
    /// `log_g h`.
    pub fn generate(bits: u32, seed: &[u8]) -> Result<Self, GroupError> {
        if bits < MIN_GROUP_BITS {
            return Err(GroupError::TooSmall(bits));
        }
        let q = if bits == 2048 {
            BigUint::parse_bytes(MODP_2048.as_bytes(), 16).expect("constant parses")
        } else {
            find_safe_prime(bits, seed)
        };

        let mut k = BigUint::from(2u32);
        let g = loop {
            let cand = &k * &k % &q;
            if !cand.is_one() {
                break cand;
            }
            k += 1u32;
        };

        let mut h_seed = seed.to_vec();
        h_seed.extend_from_slice(b"h-gen");
        let mut h = hash_to_group_raw(&q, &h_seed);
        let mut counter: u32 = 0;
        while h.is_one() || h == g {
            counter += 1;
            let mut retry = h_seed.clone();
            retry.extend_from_slice(&counter.to_be_bytes());
            h = hash_to_group_raw(&q, &retry);
        }
        GroupParams::new(q, g, h)
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    /// Group order.
    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &GroupElement {
        &self.g
    }

    pub fn h(&self) -> &GroupElement {
        &self.h
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    /// Short public digest of `(q, g, h)` that binds proofs and sessions to
    /// one parameter set.
    pub fn fingerprint(&self) -> [u8; 16] {
        let mut hasher = Sha256::new();
        hasher.update(b"group-params");
        hasher.update(self.encode_element(&GroupElement(self.q.clone())));
        hasher.update(self.encode_element(&self.g));
        hasher.update(self.encode_element(&self.h));
        let digest = hasher.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        out
    }

    // ---- scalars -------------------------------------------------------

    pub fn scalar(&self, v: u64) -> Scalar {
        Scalar(BigUint::from(v) % &self.p)
    }

    pub fn scalar_from_biguint(&self, v: &BigUint) -> Scalar {
        Scalar(v % &self.p)
    }

    pub fn scalar_zero(&self) -> Scalar {
        Scalar(BigUint::zero())
    }

    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.p))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.p)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.p - &b.0) % &self.p)
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(&a.0 * &b.0 % &self.p)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        self.scalar_sub(&self.scalar_zero(), a)
    }

    pub fn scalar_inv(&self, a: &Scalar) -> Result<Scalar, GroupError> {
        if a.0.is_zero() {
            return Err(GroupError::InverseOfZero);
        }
        // p is prime: a^(p-2) = a^-1
        Ok(Scalar(a.0.modpow(&(&self.p - 2u32), &self.p)))
    }

    // ---- group elements ------------------------------------------------

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Validates an untrusted integer as a subgroup element.
    pub fn element(&self, v: &BigUint) -> Result<GroupElement, GroupError> {
        if v.is_zero() || v >= &self.q {
            return Err(GroupError::OutOfRange);
        }
        if !v.modpow(&self.p, &self.q).is_one() {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(GroupElement(v.clone()))
    }

    pub fn group_mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(&a.0 * &b.0 % &self.q)
    }

    pub fn group_pow(&self, e: &GroupElement, x: &Scalar) -> GroupElement {
        GroupElement(e.0.modpow(&x.0, &self.q))
    }

    pub fn group_inv(&self, e: &GroupElement) -> GroupElement {
        // e lies in the order-p subgroup, so e^(p-1) = e^-1
        GroupElement(e.0.modpow(&(&self.p - 1u32), &self.q))
    }

    pub fn group_div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.group_mul(a, &self.group_inv(b))
    }

    // ---- hashing -------------------------------------------------------

    /// SHA-256 of `data` read as a big-endian integer, reduced mod p.
    pub fn hash_to_scalar(&self, data: &[u8]) -> Scalar {
        let digest = Sha256::digest(data);
        Scalar(BigUint::from_bytes_be(&digest) % &self.p)
    }

    pub fn hash_to_group(&self, data: &[u8]) -> GroupElement {
        GroupElement(hash_to_group_raw(&self.q, data))
    }

    // ---- fixed-width encodings ----------------------------------------

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0, self.scalar_len)
    }

    pub fn encode_element(&self, e: &GroupElement) -> Vec<u8> {
        left_pad(&e.0, self.element_len)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.scalar_len {
            return Err(GroupError::BadLength {
                expected: self.scalar_len,
                got: bytes.len(),
            });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.p {
            return Err(GroupError::OutOfRange);
        }
        Ok(Scalar(v))
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        if bytes.len() != self.element_len {
            return Err(GroupError::BadLength {
                expected: self.element_len,
                got: bytes.len(),
            });
        }
        self.element(&BigUint::from_bytes_be(bytes))
    }

    pub fn scalar_hex(&self, s: &Scalar) -> String {
        hex::encode(self.encode_scalar(s))
    }

    pub fn element_hex(&self, e: &GroupElement) -> String {
        hex::encode(self.encode_element(e))
    }

    pub fn scalar_from_hex(&self, s: &str) -> Result<Scalar, GroupError> {
        self.decode_scalar(&hex::decode(s).map_err(|_| GroupError::BadHex)?)
    }

    pub fn element_from_hex(&self, s: &str) -> Result<GroupElement, GroupError> {
        self.decode_element(&hex::decode(s).map_err(|_| GroupError::BadHex)?)
    }
}

fn left_pad(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = if v.is_zero() { Vec::new() } else { v.to_bytes_be() };
    debug_assert!(raw.len() <= width);
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn find_safe_prime(bits: u32, seed: &[u8]) -> BigUint {
    let mut hasher = Sha256::new();
    hasher.update(b"safe-prime-search");
    hasher.update(bits.to_be_bytes());
    hasher.update(seed);
    let mut rng = ChaCha20Rng::from_seed(hasher.finalize().into());

    let low = BigUint::one() << (bits - 1);
    let high = BigUint::one() << bits;
    // every safe prime above 7 is 11 mod 12
    let twelve = BigUint::from(12u32);
    let align = |n: &BigUint| n + (BigUint::from(23u32) - n % &twelve) % &twelve;
    let first = align(&low);
    let start = align(&rng.gen_biguint_range(&low, &high));

    // scan [start, high) then wrap around to [first, start)
    let mut cand = start.clone();
    let mut wrapped = false;
    loop {
        if !wrapped && cand >= high {
            wrapped = true;
            cand = first.clone();
        }
        assert!(!(wrapped && cand >= start), "no safe prime of {bits} bits");
        let p = (&cand - 1u32) >> 1;
        if is_probable_prime(&p) && is_probable_prime(&cand) {
            return cand;
        }
        cand += &twelve;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> GroupParams {
        GroupParams::new(23u32.into(), 4u32.into(), 9u32.into()).unwrap()
    }

    /// Every safe prime with exactly `bits` bits, by trial division.
    fn brute_safe_primes(bits: u32) -> Vec<u64> {
        let is_p = |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d));
        ((1u64 << (bits - 1))..(1u64 << bits))
            .filter(|&q| is_p(q) && is_p((q - 1) / 2))
            .collect()
    }

    #[test]
    fn five_bit_params_are_q23() {
        assert_eq!(brute_safe_primes(5), vec![23]);
        for seed in [&b""[..], b"a", b"another seed"] {
            let params = GroupParams::generate(5, seed).unwrap();
            assert_eq!(params.q(), &BigUint::from(23u32));
            assert_eq!(params.p(), &BigUint::from(11u32));
            assert_eq!(params.g().value(), &BigUint::from(4u32));
        }
    }

    #[test]
    fn generated_small_params_are_safe_primes() {
        for bits in 6..=12 {
            let params = GroupParams::generate(bits, b"seed").unwrap();
            let q = params.q().to_u64_digits()[0];
            assert!(brute_safe_primes(bits).contains(&q), "bits={bits} q={q}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = GroupParams::generate(64, b"det").unwrap();
        let b = GroupParams::generate(64, b"det").unwrap();
        assert_eq!(a, b);
        let c = GroupParams::generate(64, b"other").unwrap();
        assert_ne!(a.h(), c.h());
    }

    #[test]
    fn params_2048_satisfy_invariants() {
        let params = GroupParams::generate(2048, b"prod").unwrap();
        assert_eq!(params.bits(), 2048);
        assert_eq!(params.element_len(), 256);
        // GroupParams::new re-validates primality and membership
        GroupParams::new(
            params.q().clone(),
            params.g().value().clone(),
            params.h().value().clone(),
        )
        .unwrap();
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GroupParams::new(23u32.into(), 4u32.into(), 4u32.into()).is_err());
        assert!(GroupParams::new(23u32.into(), 5u32.into(), 9u32.into()).is_err());
        assert!(GroupParams::new(23u32.into(), 1u32.into(), 9u32.into()).is_err());
        assert!(GroupParams::new(29u32.into(), 4u32.into(), 9u32.into()).is_err());
        assert!(GroupParams::generate(4, b"").is_err());
    }

    #[test]
    fn toy_scalar_arithmetic() {
        let pp = toy();
        assert_eq!(pp.scalar_add(&pp.scalar(7), &pp.scalar(8)), pp.scalar(4));
        assert_eq!(pp.scalar_add(&pp.scalar(7), &pp.scalar(0)), pp.scalar(7));
        assert_eq!(pp.scalar_inv(&pp.scalar(3)).unwrap(), pp.scalar(4));
        assert_eq!(pp.scalar_inv(&pp.scalar(0)), Err(GroupError::InverseOfZero));
        assert_eq!(pp.scalar_sub(&pp.scalar(2), &pp.scalar(5)), pp.scalar(8));
    }

    #[test]
    fn inverse_matches_brute_force() {
        let pp = toy();
        for a in 1..11u64 {
            let brute = (1..11u64).find(|b| a * b % 11 == 1).unwrap();
            assert_eq!(pp.scalar_inv(&pp.scalar(a)).unwrap(), pp.scalar(brute));
        }
    }

    #[test]
    fn toy_group_arithmetic() {
        let pp = toy();
        let g = pp.g().clone();
        assert_eq!(pp.group_pow(&g, &pp.scalar(3)).value(), &BigUint::from(18u32));
        assert_eq!(pp.group_pow(&g, &pp.scalar(0)), pp.identity());
        for e in 1..23u32 {
            if let Ok(el) = pp.element(&e.into()) {
                assert_eq!(el.value().modpow(&11u32.into(), &23u32.into()), BigUint::one());
                assert_eq!(pp.group_mul(&el, &pp.group_inv(&el)), pp.identity());
            }
        }
    }

    #[test]
    fn toy_subgroup_is_the_quadratic_residues() {
        let pp = toy();
        let qr: Vec<u32> = (1..23u32).filter(|x| (1..23u32).any(|y| y * y % 23 == *x)).collect();
        assert_eq!(qr, vec![1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]);
        for v in 0..=30u32 {
            let ok = pp.element(&v.into()).is_ok();
            assert_eq!(ok, qr.contains(&v), "v={v}");
        }
    }

    #[test]
    fn digest_residue_squares_into_subgroup() {
        let q = BigUint::from(23u32);
        assert_eq!(element_from_digest(&q, &BigUint::from(3u32)), Some(9u32.into()));
        assert_eq!(element_from_digest(&q, &BigUint::from(26u32)), Some(9u32.into()));
        assert_eq!(element_from_digest(&q, &BigUint::from(49u32)), Some(9u32.into()));
        assert_eq!(element_from_digest(&q, &BigUint::from(1u32)), None);
        assert_eq!(element_from_digest(&q, &BigUint::from(22u32)), None);
    }

    #[test]
    fn hashing_is_deterministic_and_reduced() {
        let pp = GroupParams::generate(64, b"hash").unwrap();
        let a = pp.hash_to_scalar(b"hello world");
        assert_eq!(a, pp.hash_to_scalar(b"hello world"));
        assert_ne!(a, pp.hash_to_scalar(b"hello worle"));
        assert!(a.value() < pp.p());
        let e = pp.hash_to_group(b"x");
        assert_eq!(e, pp.hash_to_group(b"x"));
        assert!(pp.element(e.value()).is_ok());
    }

    #[test]
    fn serialization_rejects_bad_input() {
        let pp = toy();
        assert_eq!(pp.decode_element(&[23]), Err(GroupError::OutOfRange));
        assert_eq!(pp.decode_element(&[5]), Err(GroupError::NotInSubgroup));
        assert_eq!(pp.decode_element(&[0]), Err(GroupError::OutOfRange));
        assert!(matches!(pp.decode_element(&[0, 9]), Err(GroupError::BadLength { .. })));
        assert_eq!(pp.decode_scalar(&[11]), Err(GroupError::OutOfRange));
        assert_eq!(pp.decode_scalar(&[10]).unwrap(), pp.scalar(10));
        assert_eq!(pp.element_from_hex("zz"), Err(GroupError::BadHex));
    }
}
