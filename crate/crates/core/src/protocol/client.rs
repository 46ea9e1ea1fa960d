//! Client side of the protocol: credential bookkeeping, proof construction
//! and the drivers for each stage.
//!
//! The server only ever shifts `Cm(b)` by zero-mask commitments and adds a
//! zero-mask `Cm(s'', 0)` to `Cm(s')`, so `r_s` and `r_b` never change over
//! the life of a credential. Only `q` and `r_q` are replaced at each
//! claim or inquiry.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::{
    proof_context, ticket_mask, valid_space, Bundle, BundleError, DataEntry, Reason, Request,
    Response, Server, Slot, Stage, Status, NONCE_LEN,
};
use crate::commitment::{combine, commit, commit_random, shift, Commitment, Opening};
use crate::credential::{CredentialPublic, CredentialSecret, PublicKey, Signature};
use crate::group::{GroupParams, Scalar, HASH_ID};
use crate::sigma::{prove_cm, prove_link, prove_nn, MaskMode, ProofError};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{stage} rejected: {reason}")]
    Rejected { stage: Stage, reason: Reason },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected reply to {0}")]
    UnexpectedResponse(Stage),
    #[error("server bundle rejected: {0}")]
    Bundle(#[from] BundleError),
    #[error("server signature does not verify")]
    BadServerSignature,
    #[error("balance {balance} is below the inquiry cost {cost}")]
    InsufficientBalance { balance: u64, cost: u64 },
    #[error("balance would leave the provable range")]
    BalanceOverflow,
    #[error("no ticket for this space and slot")]
    UnknownTicket,
    #[error("invalid space identifier")]
    InvalidSpace,
    #[error("proof construction failed: {0}")]
    Proof(#[from] ProofError),
    #[error("state file: {0}")]
    State(String),
}

impl ClientError {
    /// The server's rejection reason, if that is what this error is.
    pub fn reason(&self) -> Option<Reason> {
        match self {
            ClientError::Rejected { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

/// Anything that can carry a request to a server and bring back its reply.
pub trait Transport {
    fn call(&mut self, req: Request) -> Result<Response, ClientError>;
}

impl Transport for &Server {
    fn call(&mut self, req: Request) -> Result<Response, ClientError> {
        Ok(self.handle(req))
    }
}

fn expect<T>(
    stage: Stage,
    resp: Response,
    pick: impl FnOnce(Response) -> Option<T>,
) -> Result<T, ClientError> {
    match resp {
        Response::Rejected(reason) => Err(ClientError::Rejected { stage, reason }),
        other => pick(other).ok_or(ClientError::UnexpectedResponse(stage)),
    }
}

fn fetch_bundle<T: Transport>(transport: &mut T) -> Result<Bundle, ClientError> {
    expect(Stage::Setup, transport.call(Request::Setup)?, |r| match r {
        Response::Setup(b) => Some(*b),
        _ => None,
    })
}

/// First half of registration: the client's share `s'` of the secret key and
/// the identifier `q`, both committed.
pub struct Registration {
    bundle: Bundle,
    params: GroupParams,
    s_prime: Opening,
    q: Opening,
    cm_s_prime: Commitment,
    cm_q: Commitment,
}

impl Registration {
    pub fn begin<R: RngCore + CryptoRng>(
        bundle: Bundle,
        rng: &mut R,
    ) -> Result<(Registration, Request), ClientError> {
        let params = bundle.params()?;
        let (cm_s_prime, s_prime) = commit_random(&params, &params.random_scalar(rng), rng);
        let (cm_q, q) = commit_random(&params, &params.random_scalar(rng), rng);
        let req = Request::Register { cm_s_prime: cm_s_prime.clone(), cm_q: cm_q.clone() };
        Ok((Registration { bundle, params, s_prime, q, cm_s_prime, cm_q }, req))
    }

    /// `s = s' + s''`; the credential is accepted only if the server's
    /// signature verifies over the locally recomputed commitments.
    pub fn finish(self, s_double_prime: &Scalar, sig: Signature) -> Result<Client, ClientError> {
        let pp = &self.params;
        let s = pp.scalar_add(&self.s_prime.x, s_double_prime);
        let cm_s = combine(pp, &self.cm_s_prime, &commit(pp, s_double_prime, &pp.scalar_zero()));
        let cm_b = commit(pp, &pp.scalar(self.bundle.b0), &pp.scalar_zero());
        let public = CredentialPublic { cm_s, cm_q: self.cm_q, cm_b, sig };
        if !public.verify(pp, &self.bundle.public_key) {
            return Err(ClientError::BadServerSignature);
        }
        let secret = CredentialSecret {
            s,
            q: self.q.x,
            b: self.bundle.b0,
            r_s: self.s_prime.r,
            r_q: self.q.r,
            r_b: pp.scalar_zero(),
        };
        Ok(Client { bundle: self.bundle, params: self.params, secret, public, tickets: BTreeMap::new() })
    }
}

/// The fresh identifier a client proposes at the refresh step.
#[derive(Clone, Debug)]
pub struct NextIdentifier {
    q: Opening,
    cm_q: Commitment,
}

#[derive(Clone, Debug)]
pub struct Client {
    bundle: Bundle,
    params: GroupParams,
    secret: CredentialSecret,
    public: CredentialPublic,
    tickets: BTreeMap<(String, Slot), bool>,
}

fn nonce<R: RngCore>(rng: &mut R) -> Vec<u8> {
    let mut n = vec![0u8; NONCE_LEN];
    rng.fill_bytes(&mut n);
    n
}

impl Client {
    /// Fetches the bundle and runs both registration steps.
    pub fn register<T: Transport, R: RngCore + CryptoRng>(
        transport: &mut T,
        rng: &mut R,
    ) -> Result<Client, ClientError> {
        let bundle = fetch_bundle(transport)?;
        let (reg, req) = Registration::begin(bundle, rng)?;
        let (s2, sig) = expect(Stage::Register, transport.call(req)?, |r| match r {
            Response::Registered { s_double_prime, sig } => Some((s_double_prime, sig)),
            _ => None,
        })?;
        reg.finish(&s2, sig)
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn balance(&self) -> u64 {
        self.secret.b
    }

    pub fn secret(&self) -> &CredentialSecret {
        &self.secret
    }

    pub fn credential(&self) -> &CredentialPublic {
        &self.public
    }

    pub fn tickets(&self) -> impl Iterator<Item = (&str, Slot, bool)> {
        self.tickets.iter().map(|((j, t), a)| (j.as_str(), *t, *a))
    }

    /// Whether the secrets open the credential and its signature verifies.
    pub fn is_coherent(&self) -> bool {
        self.secret.opens(&self.params, &self.public)
            && self.public.verify(&self.params, &self.bundle.public_key)
    }

    pub fn ticket(&self, j: &str, t: Slot) -> Commitment {
        commit(&self.params, &self.secret.s, &ticket_mask(&self.params, j, t))
    }

    /// Drops remembered tickets older than the retention window.
    pub fn prune_tickets(&mut self, now: Slot) {
        let horizon = now.saturating_sub(2 * self.bundle.epsilon + 2);
        self.tickets.retain(|(_, t), _| *t >= horizon);
    }

    pub fn submission_request<R: RngCore + CryptoRng>(
        &mut self,
        j: &str,
        t: Slot,
        available: bool,
        rng: &mut R,
    ) -> Result<Request, ClientError> {
        if !valid_space(j) {
            return Err(ClientError::InvalidSpace);
        }
        let pp = &self.params;
        let mask = ticket_mask(pp, j, t);
        let ticket = commit(pp, &self.secret.s, &mask);
        let ctx = proof_context(pp, Stage::Submit, &[]);
        let opening = Opening::new(self.secret.s.clone(), mask);
        let proof = prove_cm(pp, &opening, &ticket, MaskMode::Known, &ctx, rng)?;
        self.tickets.insert((j.to_string(), t), available);
        Ok(Request::Submit { entry: DataEntry { j: j.to_string(), t, ticket, available }, proof })
    }

    pub fn claim_open_request<R: RngCore + CryptoRng>(
        &self,
        j: &str,
        t: Slot,
        rng: &mut R,
    ) -> Result<Request, ClientError> {
        if !self.tickets.contains_key(&(j.to_string(), t)) {
            return Err(ClientError::UnknownTicket);
        }
        let pp = &self.params;
        let nonce = nonce(rng);
        let mask = ticket_mask(pp, j, t);
        let ticket = commit(pp, &self.secret.s, &mask);
        let ctx = proof_context(pp, Stage::ClaimOpen, &nonce);
        let opening = Opening::new(self.secret.s.clone(), self.secret.r_s.clone());
        let proof = prove_link(pp, &opening, &self.public.cm_s, &ticket, &mask, &ctx, rng)?;
        Ok(Request::ClaimOpen { nonce, j: j.to_string(), t, ticket, cred: self.public.clone(), proof })
    }

    pub fn inquiry_open_request<R: RngCore + CryptoRng>(
        &self,
        spaces: &[String],
        rng: &mut R,
    ) -> Result<Request, ClientError> {
        let cost = self.bundle.c_q;
        if self.secret.b < cost {
            return Err(ClientError::InsufficientBalance { balance: self.secret.b, cost });
        }
        if !spaces.iter().all(|j| valid_space(j)) {
            return Err(ClientError::InvalidSpace);
        }
        let pp = &self.params;
        let nonce = nonce(rng);
        let ctx = proof_context(pp, Stage::InquireOpen, &nonce);
        let s = Opening::new(self.secret.s.clone(), self.secret.r_s.clone());
        let proof_s = prove_cm(pp, &s, &self.public.cm_s, MaskMode::Hidden, &ctx, rng)?;
        let remaining = shift(pp, &self.public.cm_b, &pp.scalar_neg(&pp.scalar(cost)));
        let opening = Opening::new(pp.scalar(self.secret.b - cost), self.secret.r_b.clone());
        let proof_nn = prove_nn(pp, &opening, &remaining, self.bundle.nn_bits, &ctx, rng)?;
        Ok(Request::InquireOpen { nonce, cred: self.public.clone(), proof_s, proof_nn, spaces: spaces.to_vec() })
    }

    pub fn reveal_request(&self, session: &[u8], inquiry: bool) -> Request {
        let (session, q, r_q) = (session.to_vec(), self.secret.q.clone(), self.secret.r_q.clone());
        if inquiry {
            Request::InquireReveal { session, q, r_q }
        } else {
            Request::ClaimReveal { session, q, r_q }
        }
    }

    pub fn refresh_request<R: RngCore + CryptoRng>(
        &self,
        session: &[u8],
        inquiry: bool,
        rng: &mut R,
    ) -> (Request, NextIdentifier) {
        let pp = &self.params;
        let (cm_q, q) = commit_random(pp, &pp.random_scalar(rng), rng);
        let session = session.to_vec();
        let req = if inquiry {
            Request::InquireRefresh { session, cm_q: cm_q.clone() }
        } else {
            Request::ClaimRefresh { session, cm_q: cm_q.clone() }
        };
        (req, NextIdentifier { q, cm_q })
    }

    /// Installs the refreshed credential with balance `new_balance`,
    /// checking the server's signature first.
    pub fn apply_refresh(
        &mut self,
        next: NextIdentifier,
        new_balance: u64,
        sig: Signature,
    ) -> Result<(), ClientError> {
        let pp = &self.params;
        let cm_b = commit(pp, &pp.scalar(new_balance), &self.secret.r_b);
        let public = CredentialPublic { cm_s: self.public.cm_s.clone(), cm_q: next.cm_q, cm_b, sig };
        if !public.verify(pp, &self.bundle.public_key) {
            return Err(ClientError::BadServerSignature);
        }
        self.public = public;
        self.secret.q = next.q.x;
        self.secret.r_q = next.q.r;
        self.secret.b = new_balance;
        Ok(())
    }

    pub fn submit<T: Transport, R: RngCore + CryptoRng>(
        &mut self,
        transport: &mut T,
        j: &str,
        t: Slot,
        available: bool,
        rng: &mut R,
    ) -> Result<(), ClientError> {
        let req = self.submission_request(j, t, available, rng)?;
        expect(Stage::Submit, transport.call(req)?, |r| matches!(r, Response::Accepted).then_some(()))
    }

    /// Claims the credit for the ticket at `(j, t)`; returns the amount.
    pub fn claim<T: Transport, R: RngCore + CryptoRng>(
        &mut self,
        transport: &mut T,
        j: &str,
        t: Slot,
        rng: &mut R,
    ) -> Result<u64, ClientError> {
        let req = self.claim_open_request(j, t, rng)?;
        let (session, credit) = expect(Stage::ClaimOpen, transport.call(req)?, |r| match r {
            Response::ClaimOffer { session, credit } => Some((session, credit)),
            _ => None,
        })?;
        let new_balance = self
            .secret
            .b
            .checked_add(credit)
            .filter(|b| self.bundle.nn_bits >= 64 || *b < 1u64 << self.bundle.nn_bits)
            .ok_or(ClientError::BalanceOverflow)?;
        let reveal = self.reveal_request(&session, false);
        expect(Stage::ClaimReveal, transport.call(reveal)?, |r| {
            matches!(r, Response::Revealed).then_some(())
        })?;
        let (req, next) = self.refresh_request(&session, false, rng);
        let sig = expect(Stage::ClaimRefresh, transport.call(req)?, |r| match r {
            Response::Refreshed { sig } => Some(sig),
            _ => None,
        })?;
        self.tickets.remove(&(j.to_string(), t));
        self.apply_refresh(next, new_balance, sig)?;
        Ok(credit)
    }

    /// Spends `c_q` credits for the statuses of `spaces`.
    pub fn inquire<T: Transport, R: RngCore + CryptoRng>(
        &mut self,
        transport: &mut T,
        spaces: &[String],
        rng: &mut R,
    ) -> Result<Vec<Status>, ClientError> {
        let req = self.inquiry_open_request(spaces, rng)?;
        let session = expect(Stage::InquireOpen, transport.call(req)?, |r| match r {
            Response::InquiryOpened { session } => Some(session),
            _ => None,
        })?;
        let reveal = self.reveal_request(&session, true);
        expect(Stage::InquireReveal, transport.call(reveal)?, |r| {
            matches!(r, Response::Revealed).then_some(())
        })?;
        let (req, next) = self.refresh_request(&session, true, rng);
        let (statuses, sig) = expect(Stage::InquireRefresh, transport.call(req)?, |r| match r {
            Response::InquiryResult { statuses, sig } => Some((statuses, sig)),
            _ => None,
        })?;
        if statuses.len() != spaces.len() {
            return Err(ClientError::UnexpectedResponse(Stage::InquireRefresh));
        }
        let new_balance = self.secret.b - self.bundle.c_q;
        self.apply_refresh(next, new_balance, sig)?;
        Ok(statuses)
    }

    /// Serializes the client state as tagged lines.
    pub fn to_state_string(&self) -> String {
        let pp = &self.params;
        let b = &self.bundle;
        let big = |v: &BigUint| hex::encode(v.to_bytes_be());
        let sc = |s: &Scalar| pp.scalar_hex(s);
        let el = |c: &Commitment| pp.element_hex(c.element());
        let (sec, publ) = (&self.secret, &self.public);
        let mut out = String::from("STATE|1\n");
        let _ = writeln!(out, "GROUP|{}|{}|{}", big(&b.q), big(&b.g), big(&b.h));
        let _ = writeln!(out, "HASH|{}", b.hash_id);
        let _ = writeln!(out, "KEY|{}|{}", big(&b.public_key.n), big(&b.public_key.e));
        let _ = writeln!(out, "CONF|{}|{}|{}|{}|{}", b.b0, b.c_q, b.credit_per_entry, b.epsilon, b.nn_bits);
        let _ = writeln!(
            out,
            "SECRET|{}|{}|{}|{}|{}|{}",
            sc(&sec.s), sc(&sec.q), sec.b, sc(&sec.r_s), sc(&sec.r_q), sc(&sec.r_b)
        );
        let _ = writeln!(
            out,
            "CRED|{}|{}|{}|{}",
            el(&publ.cm_s), el(&publ.cm_q), el(&publ.cm_b), hex::encode(&publ.sig.0)
        );
        for ((j, t), a) in &self.tickets {
            let _ = writeln!(out, "TICKET|{j}|{t}|{}", u8::from(*a));
        }
        out
    }

    /// Parses a state file. The loaded credential must be coherent.
    pub fn from_state_str(text: &str) -> Result<Client, ClientError> {
        parse_state(text).map_err(|e| ClientError::State(e.to_string()))
    }
}

fn parse_state(text: &str) -> Result<Client, &'static str> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    if lines.next() != Some("STATE|1") {
        return Err("missing header");
    }
    let mut take = |tag: &str, n: usize| -> Result<Vec<String>, &'static str> {
        let line = lines.next().ok_or("truncated")?;
        let parts: Vec<&str> = line.split('|').collect();
        if parts[0] != tag {
            return Err("unexpected line");
        }
        if parts.len() != n + 1 {
            return Err("wrong field count");
        }
        Ok(parts[1..].iter().map(|s| s.to_string()).collect())
    };
    let big = |s: &str| -> Result<BigUint, &'static str> {
        let b = hex::decode(s).map_err(|_| "bad hex")?;
        if b.is_empty() {
            return Err("bad hex");
        }
        Ok(BigUint::from_bytes_be(&b))
    };
    let num = |s: &str| -> Result<u64, &'static str> {
        if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
            return Err("bad number");
        }
        s.parse().map_err(|_| "bad number")
    };
    let group = take("GROUP", 3)?;
    let hash = take("HASH", 1)?;
    let key = take("KEY", 2)?;
    let conf = take("CONF", 5)?;
    let secret = take("SECRET", 6)?;
    let cred = take("CRED", 4)?;
    let mut tickets = BTreeMap::new();
    for line in lines {
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 4 || parts[0] != "TICKET" || !valid_space(parts[1]) {
            return Err("bad ticket line");
        }
        let a = match parts[3] {
            "0" => false,
            "1" => true,
            _ => return Err("bad ticket line"),
        };
        if tickets.insert((parts[1].to_string(), num(parts[2])?), a).is_some() {
            return Err("duplicate ticket");
        }
    }
    let (q, g, h) = (big(&group[0])?, big(&group[1])?, big(&group[2])?);
    let params = GroupParams::new(q.clone(), g.clone(), h.clone()).map_err(|_| "bad group")?;
    let nn_bits = u32::try_from(num(&conf[4])?).map_err(|_| "bad number")?;
    let bundle = Bundle {
        q,
        g,
        h,
        fingerprint: params.fingerprint(),
        hash_id: hash[0].clone(),
        public_key: PublicKey { n: big(&key[0])?, e: big(&key[1])? },
        b0: num(&conf[0])?,
        c_q: num(&conf[1])?,
        credit_per_entry: num(&conf[2])?,
        epsilon: num(&conf[3])?,
        nn_bits,
    };
    if bundle.hash_id != HASH_ID {
        return Err("unsupported hash");
    }
    if bundle.public_key.n.bits() < 64 {
        return Err("key too small");
    }
    let sc = |s: &str| params.scalar_from_hex(s).map_err(|_| "bad scalar");
    let el = |s: &str| {
        params.element_from_hex(s).map(Commitment).map_err(|_| "bad element")
    };
    let secret = CredentialSecret {
        s: sc(&secret[0])?,
        q: sc(&secret[1])?,
        b: num(&secret[2])?,
        r_s: sc(&secret[3])?,
        r_q: sc(&secret[4])?,
        r_b: sc(&secret[5])?,
    };
    let public = CredentialPublic {
        cm_s: el(&cred[0])?,
        cm_q: el(&cred[1])?,
        cm_b: el(&cred[2])?,
        sig: Signature(hex::decode(&cred[3]).map_err(|_| "bad hex")?),
    };
    if bundle.params().is_err() {
        return Err("bad bundle");
    }
    let client = Client { bundle, params, secret, public, tickets };
    if !client.is_coherent() {
        return Err("credential does not verify");
    }
    Ok(client)
}
