//! Server side of the protocol.
//!
//! All table mutations go through one mutex so that each check-and-act
//! (duplicate check + insert, spend check + append, credit removal) is
//! atomic. Proof and signature verification happen before the lock is
//! taken; signing happens after it is released.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::journal::{parse_journal, Record};
use super::{
    majority, proof_context, ticket_mask, valid_space, Bundle, DataEntry, Reason, Request,
    Response, Slot, Stage, Status, NONCE_LEN,
};
use crate::commitment::{combine, commit, shift, verify_opening, Commitment, Opening};
use crate::credential::{sign_credential, CredentialPublic, ServerKeys, Signature};
use crate::group::{GroupParams, Scalar, HASH_ID};
use crate::sigma::{verify_cm, verify_link, verify_nn, CmProof, LinkProof, NnProof};

/// Most spaces one inquiry may ask about.
pub const MAX_INQUIRY_SPACES: usize = 256;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub params: GroupParams,
    pub keys: ServerKeys,
    pub b0: u64,
    pub c_q: u64,
    pub credit_per_entry: u64,
    pub epsilon: u64,
    pub slot_length: Duration,
    pub nn_bits: u32,
    pub session_timeout: Duration,
}

impl ServerConfig {
    /// Defaults: `b0 = 0`, `c_q = 1`, one credit per entry, `epsilon = 1`,
    /// 60 s slots, 32-bit balances (narrower if the group is smaller).
    pub fn new(params: GroupParams, keys: ServerKeys) -> Self {
        let nn_bits = 32.min(params.p().bits() as u32 - 1);
        ServerConfig {
            params,
            keys,
            b0: 0,
            c_q: 1,
            credit_per_entry: 1,
            epsilon: 1,
            slot_length: Duration::from_secs(60),
            nn_bits,
            session_timeout: Duration::from_secs(60),
        }
    }

    /// Number of past slots of entries kept per space.
    pub fn retention(&self) -> u64 {
        2 * self.epsilon + 2
    }
}

type SpaceSlot = (String, Slot);
type CreditKey = (String, Slot, Vec<u8>);

#[derive(Default)]
struct Tables {
    now: Slot,
    data: BTreeMap<SpaceSlot, BTreeMap<Vec<u8>, bool>>,
    credits: HashMap<CreditKey, u64>,
    // every key that ever received a credit record, so a claimed record is
    // never re-created by a later aggregation
    credited: HashSet<CreditKey>,
    spent: HashSet<Vec<u8>>,
    availability: HashMap<SpaceSlot, Status>,
    finalized: HashSet<SpaceSlot>,
    journal: Option<File>,
}

impl Tables {
    fn log(&mut self, rec: &Record) {
        if let Some(f) = self.journal.as_mut() {
            // the journal is best effort; in-memory state stays authoritative
            let _ = writeln!(f, "{rec}");
        }
    }

    fn apply(&mut self, rec: Record) {
        match rec {
            Record::Entry { j, t, ticket, available } => {
                self.data.entry((j, t)).or_default().insert(ticket, available);
            }
            Record::Credit { j, t, ticket, credit } => {
                let key = (j, t, ticket);
                self.credited.insert(key.clone());
                self.credits.insert(key, credit);
            }
            Record::Removed { j, t, ticket } => {
                self.credits.remove(&(j, t, ticket));
            }
            Record::Spent { q } => {
                self.spent.insert(q);
            }
        }
    }

    fn tally(&self, j: &str, t: Slot, epsilon: u64) -> Status {
        let lo = (j.to_string(), t.saturating_sub(epsilon));
        let hi = (j.to_string(), t.saturating_add(epsilon));
        majority(
            self.data
                .range(lo..=hi)
                .flat_map(|(_, entries)| entries.values().copied()),
        )
    }

    fn aggregate(&mut self, j: &str, t: Slot, epsilon: u64, credit: u64) -> Status {
        let status = self.tally(j, t, epsilon);
        self.availability.insert((j.to_string(), t), status);
        let winner = match status {
            Status::Available => true,
            Status::Occupied => false,
            Status::Unconfirmed => return status,
        };
        let matching: Vec<Vec<u8>> = self
            .data
            .get(&(j.to_string(), t))
            .map(|m| m.iter().filter(|(_, a)| **a == winner).map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        for ticket in matching {
            let key = (j.to_string(), t, ticket);
            if self.credited.contains(&key) {
                continue;
            }
            let rec = Record::Credit { j: key.0.clone(), t, ticket: key.2.clone(), credit };
            self.log(&rec);
            self.apply(rec);
        }
        status
    }
}

#[derive(Clone, Debug)]
enum Purpose {
    Claim { key: CreditKey, credit: u64 },
    Inquiry { spaces: Vec<String> },
}

#[derive(Clone, Debug)]
struct Session {
    purpose: Purpose,
    cred: CredentialPublic,
    revealed: Option<Vec<u8>>,
    started: Instant,
}

pub struct Server {
    config: ServerConfig,
    tables: Mutex<Tables>,
    sessions: Mutex<HashMap<Vec<u8>, Session>>,
    rng: Mutex<ChaCha20Rng>,
    wall_clock: bool,
}

/// Slot number of the current wall-clock time.
pub fn wall_slot(slot_length: Duration) -> Slot {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    secs / slot_length.as_secs().max(1)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Server {
    pub fn new(config: ServerConfig) -> Self {
        Self::with_rng(config, ChaCha20Rng::from_entropy())
    }

    /// Deterministic randomness for `s''` and session identifiers.
    pub fn seeded(config: ServerConfig, seed: u64) -> Self {
        Self::with_rng(config, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(config: ServerConfig, rng: ChaCha20Rng) -> Self {
        Server {
            config,
            tables: Mutex::new(Tables::default()),
            sessions: Mutex::new(HashMap::new()),
            rng: Mutex::new(rng),
            wall_clock: false,
        }
    }

    /// Brings the clock up to [`wall_slot`] before every request, so a
    /// client reading the same clock is never a slot ahead of the server.
    pub fn on_wall_clock(mut self) -> Self {
        self.wall_clock = true;
        self.advance_to(wall_slot(self.config.slot_length));
        self
    }

    /// Replays the journal at `path` (if present) and appends to it from
    /// then on.
    pub fn with_journal(self, path: &Path) -> io::Result<Self> {
        let records = match std::fs::read_to_string(path) {
            Ok(text) => parse_journal(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        {
            let mut tables = lock(&self.tables);
            for rec in records {
                tables.apply(rec);
            }
            tables.journal = Some(file);
        }
        Ok(self)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn params(&self) -> &GroupParams {
        &self.config.params
    }

    pub fn bundle(&self) -> Bundle {
        let pp = &self.config.params;
        Bundle {
            q: pp.q().clone(),
            g: pp.g().value().clone(),
            h: pp.h().value().clone(),
            fingerprint: pp.fingerprint(),
            hash_id: HASH_ID.to_string(),
            public_key: self.config.keys.public().clone(),
            b0: self.config.b0,
            c_q: self.config.c_q,
            credit_per_entry: self.config.credit_per_entry,
            epsilon: self.config.epsilon,
            nn_bits: self.config.nn_bits,
        }
    }

    pub fn now(&self) -> Slot {
        lock(&self.tables).now
    }

    /// Moves the clock forward, finalizing every window that can no longer
    /// receive entries and dropping entries past the retention horizon.
    pub fn advance_to(&self, slot: Slot) {
        let eps = self.config.epsilon;
        let mut tables = lock(&self.tables);
        if slot <= tables.now {
            return;
        }
        tables.now = slot;
        // entries are accepted for {now - 1, now}, so the window around t is
        // closed once now - 1 > t + eps
        let ready: Vec<SpaceSlot> = tables
            .data
            .keys()
            .filter(|(_, t)| t + eps + 2 <= slot)
            .filter(|k| !tables.finalized.contains(*k))
            .cloned()
            .collect();
        for (j, t) in ready {
            tables.aggregate(&j, t, eps, self.config.credit_per_entry);
            tables.finalized.insert((j, t));
        }
        let horizon = slot.saturating_sub(self.config.retention());
        tables.data.retain(|(_, t), _| *t >= horizon);
        tables.finalized.retain(|(_, t)| *t >= horizon);
        tables.availability.retain(|(_, t), _| *t >= horizon);
        tables.credited.retain(|(_, t, _)| *t >= horizon);
    }

    /// Majority vote for space `j` around slot `t`, issuing credit records
    /// to the entries at `t` that agree with it.
    pub fn aggregate(&self, j: &str, t: Slot) -> Status {
        lock(&self.tables).aggregate(j, t, self.config.epsilon, self.config.credit_per_entry)
    }

    /// Current vote for space `j` around slot `t`, without issuing credit.
    pub fn status(&self, j: &str, t: Slot) -> Status {
        lock(&self.tables).tally(j, t, self.config.epsilon)
    }

    pub fn credit_record(&self, j: &str, t: Slot, ticket: &Commitment) -> Option<u64> {
        let key = (j.to_string(), t, self.config.params.encode_element(ticket.element()));
        lock(&self.tables).credits.get(&key).copied()
    }

    pub fn credit_records(&self) -> usize {
        lock(&self.tables).credits.len()
    }

    pub fn spent_count(&self) -> usize {
        lock(&self.tables).spent.len()
    }

    pub fn is_spent(&self, q: &Scalar) -> bool {
        lock(&self.tables).spent.contains(&self.config.params.encode_scalar(q))
    }

    pub fn entry_count(&self) -> usize {
        lock(&self.tables).data.values().map(|m| m.len()).sum()
    }

    pub fn open_sessions(&self) -> usize {
        lock(&self.sessions).len()
    }

    /// Every persistent table rendered as journal lines, plus availability.
    pub fn snapshot(&self) -> String {
        let tables = lock(&self.tables);
        let mut out = format!("NOW|{}\n", tables.now);
        for ((j, t), entries) in &tables.data {
            for (ticket, a) in entries {
                let rec = Record::Entry { j: j.clone(), t: *t, ticket: ticket.clone(), available: *a };
                out.push_str(&format!("{rec}\n"));
            }
        }
        let mut credits: Vec<_> = tables.credits.iter().collect();
        credits.sort();
        for ((j, t, ticket), credit) in credits {
            let rec = Record::Credit { j: j.clone(), t: *t, ticket: ticket.clone(), credit: *credit };
            out.push_str(&format!("{rec}\n"));
        }
        let mut spent: Vec<_> = tables.spent.iter().collect();
        spent.sort();
        for q in spent {
            out.push_str(&format!("{}\n", Record::Spent { q: q.clone() }));
        }
        let mut avail: Vec<_> = tables.availability.iter().collect();
        avail.sort_by(|a, b| a.0.cmp(b.0));
        for ((j, t), s) in avail {
            out.push_str(&format!("AV|{j}|{t}|{}\n", s.tag()));
        }
        out
    }

    fn fresh_id(&self) -> Vec<u8> {
        let mut id = vec![0u8; NONCE_LEN];
        lock(&self.rng).fill_bytes(&mut id);
        id
    }

    pub fn handle(&self, req: Request) -> Response {
        if self.wall_clock {
            self.advance_to(wall_slot(self.config.slot_length));
        }
        let result = match req {
            Request::Setup => Ok(Response::Setup(Box::new(self.bundle()))),
            Request::Register { cm_s_prime, cm_q } => {
                let (s_double_prime, sig) = self.register(&cm_s_prime, &cm_q);
                Ok(Response::Registered { s_double_prime, sig })
            }
            Request::Submit { entry, proof } => {
                self.handle_submission(&entry, &proof).map(|()| Response::Accepted)
            }
            Request::ClaimOpen { nonce, j, t, ticket, cred, proof } => self
                .claim_open(&nonce, &j, t, &ticket, &cred, &proof)
                .map(|(session, credit)| Response::ClaimOffer { session, credit }),
            Request::ClaimReveal { session, q, r_q } => {
                self.reveal(&session, &q, &r_q, false).map(|()| Response::Revealed)
            }
            Request::ClaimRefresh { session, cm_q } => {
                self.claim_refresh(&session, &cm_q).map(|sig| Response::Refreshed { sig })
            }
            Request::InquireOpen { nonce, cred, proof_s, proof_nn, spaces } => self
                .inquiry_open(&nonce, &cred, &proof_s, &proof_nn, spaces)
                .map(|session| Response::InquiryOpened { session }),
            Request::InquireReveal { session, q, r_q } => {
                self.reveal(&session, &q, &r_q, true).map(|()| Response::Revealed)
            }
            Request::InquireRefresh { session, cm_q } => self
                .inquiry_refresh(&session, &cm_q)
                .map(|(statuses, sig)| Response::InquiryResult { statuses, sig }),
        };
        result.unwrap_or_else(Response::Rejected)
    }

    pub fn register(&self, cm_s_prime: &Commitment, cm_q: &Commitment) -> (Scalar, Signature) {
        let pp = &self.config.params;
        let s_double_prime = pp.random_scalar(&mut *lock(&self.rng));
        let cm_s = combine(pp, cm_s_prime, &commit(pp, &s_double_prime, &pp.scalar_zero()));
        let cm_b = commit(pp, &pp.scalar(self.config.b0), &pp.scalar_zero());
        let sig = sign_credential(pp, &self.config.keys, &cm_s, cm_q, &cm_b);
        (s_double_prime, sig)
    }

    pub fn handle_submission(&self, entry: &DataEntry, proof: &CmProof) -> Result<(), Reason> {
        let pp = &self.config.params;
        if !valid_space(&entry.j) {
            return Err(Reason::Malformed);
        }
        let mask = ticket_mask(pp, &entry.j, entry.t);
        let ctx = proof_context(pp, Stage::Submit, &[]);
        if proof.z_r.is_some() || !verify_cm(pp, proof, &entry.ticket, Some(&mask), &ctx) {
            return Err(Reason::BadProof);
        }
        let ticket = pp.encode_element(entry.ticket.element());
        let mut tables = lock(&self.tables);
        let now = tables.now;
        if entry.t != now && entry.t + 1 != now {
            return Err(Reason::StaleTime);
        }
        let slot = tables.data.entry((entry.j.clone(), entry.t)).or_default();
        if slot.contains_key(&ticket) {
            return Err(Reason::Duplicate);
        }
        slot.insert(ticket.clone(), entry.available);
        tables.log(&Record::Entry { j: entry.j.clone(), t: entry.t, ticket, available: entry.available });
        let status = tables.tally(&entry.j, entry.t, self.config.epsilon);
        tables.availability.insert((entry.j.clone(), entry.t), status);
        Ok(())
    }

    /// An IoT sensor holds an ordinary credential and submits like a user.
    pub fn ingest_iot_reading(&self, entry: &DataEntry, proof: &CmProof) -> Result<(), Reason> {
        self.handle_submission(entry, proof)
    }

    fn check_credential(&self, cred: &CredentialPublic) -> Result<(), Reason> {
        if cred.verify(&self.config.params, self.config.keys.public()) {
            Ok(())
        } else {
            Err(Reason::BadSignature)
        }
    }

    fn open_session(&self, purpose: Purpose, cred: &CredentialPublic) -> Vec<u8> {
        let id = self.fresh_id();
        let timeout = self.config.session_timeout;
        let mut sessions = lock(&self.sessions);
        sessions.retain(|_, s| s.started.elapsed() < timeout);
        sessions.insert(
            id.clone(),
            Session { purpose, cred: cred.clone(), revealed: None, started: Instant::now() },
        );
        id
    }

    pub fn claim_open(
        &self,
        nonce: &[u8],
        j: &str,
        t: Slot,
        ticket: &Commitment,
        cred: &CredentialPublic,
        proof: &LinkProof,
    ) -> Result<(Vec<u8>, u64), Reason> {
        let pp = &self.config.params;
        if nonce.len() != NONCE_LEN || !valid_space(j) {
            return Err(Reason::Malformed);
        }
        self.check_credential(cred)?;
        let mask = ticket_mask(pp, j, t);
        let ctx = proof_context(pp, Stage::ClaimOpen, nonce);
        if !verify_link(pp, proof, &cred.cm_s, ticket, &mask, &ctx) {
            return Err(Reason::BadProof);
        }
        let key = (j.to_string(), t, pp.encode_element(ticket.element()));
        let credit = *lock(&self.tables).credits.get(&key).ok_or(Reason::NoCredit)?;
        let session = self.open_session(Purpose::Claim { key, credit }, cred);
        Ok((session, credit))
    }

    pub fn inquiry_open(
        &self,
        nonce: &[u8],
        cred: &CredentialPublic,
        proof_s: &CmProof,
        proof_nn: &NnProof,
        spaces: Vec<String>,
    ) -> Result<Vec<u8>, Reason> {
        let pp = &self.config.params;
        if nonce.len() != NONCE_LEN
            || spaces.len() > MAX_INQUIRY_SPACES
            || !spaces.iter().all(|j| valid_space(j))
        {
            return Err(Reason::Malformed);
        }
        self.check_credential(cred)?;
        let ctx = proof_context(pp, Stage::InquireOpen, nonce);
        if proof_s.z_r.is_none() || !verify_cm(pp, proof_s, &cred.cm_s, None, &ctx) {
            return Err(Reason::BadProof);
        }
        let cost = pp.scalar_neg(&pp.scalar(self.config.c_q));
        let remaining = shift(pp, &cred.cm_b, &cost);
        if !verify_nn(pp, proof_nn, &remaining, self.config.nn_bits, &ctx) {
            return Err(Reason::InsufficientBalance);
        }
        Ok(self.open_session(Purpose::Inquiry { spaces }, cred))
    }

    /// Looks up a live session, removing it if it has expired.
    fn session(&self, id: &[u8]) -> Result<Session, Reason> {
        let mut sessions = lock(&self.sessions);
        let s = sessions.get(id).ok_or(Reason::UnknownSession)?;
        if s.started.elapsed() >= self.config.session_timeout {
            sessions.remove(id);
            return Err(Reason::UnknownSession);
        }
        Ok(s.clone())
    }

    fn end_session(&self, id: &[u8]) {
        lock(&self.sessions).remove(id);
    }

    fn reveal(&self, id: &[u8], q: &Scalar, r_q: &Scalar, inquiry: bool) -> Result<(), Reason> {
        let pp = &self.config.params;
        let session = self.session(id)?;
        let result = (|| {
            if matches!(session.purpose, Purpose::Inquiry { .. }) != inquiry
                || session.revealed.is_some()
            {
                return Err(Reason::OutOfOrderStep);
            }
            if !verify_opening(pp, &session.cred.cm_q, &Opening::new(q.clone(), r_q.clone())) {
                return Err(Reason::BadOpening);
            }
            if lock(&self.tables).spent.contains(&pp.encode_scalar(q)) {
                return Err(Reason::IdentifierSpent);
            }
            Ok(())
        })();
        match result {
            Ok(()) => {
                if let Some(s) = lock(&self.sessions).get_mut(id) {
                    s.revealed = Some(pp.encode_scalar(q));
                }
                Ok(())
            }
            Err(e) => {
                self.end_session(id);
                Err(e)
            }
        }
    }

    /// Takes a revealed session of the right kind out of the store.
    fn take_revealed(&self, id: &[u8], inquiry: bool) -> Result<(Session, Vec<u8>), Reason> {
        let session = self.session(id)?;
        self.end_session(id);
        if matches!(session.purpose, Purpose::Inquiry { .. }) != inquiry {
            return Err(Reason::OutOfOrderStep);
        }
        let q = session.revealed.clone().ok_or(Reason::OutOfOrderStep)?;
        Ok((session, q))
    }

    pub fn claim_refresh(&self, id: &[u8], cm_q_new: &Commitment) -> Result<Signature, Reason> {
        let pp = &self.config.params;
        let (session, q) = self.take_revealed(id, false)?;
        let Purpose::Claim { key, credit } = session.purpose else {
            return Err(Reason::OutOfOrderStep);
        };
        {
            let mut tables = lock(&self.tables);
            if tables.spent.contains(&q) {
                return Err(Reason::IdentifierSpent);
            }
            if tables.credits.remove(&key).is_none() {
                return Err(Reason::NoCredit);
            }
            tables.spent.insert(q.clone());
            let (j, t, ticket) = key;
            tables.log(&Record::Removed { j, t, ticket });
            tables.log(&Record::Spent { q });
        }
        let cred = &session.cred;
        let cm_b = shift(pp, &cred.cm_b, &pp.scalar(credit));
        Ok(sign_credential(pp, &self.config.keys, &cred.cm_s, cm_q_new, &cm_b))
    }

    pub fn inquiry_refresh(
        &self,
        id: &[u8],
        cm_q_new: &Commitment,
    ) -> Result<(Vec<Status>, Signature), Reason> {
        let pp = &self.config.params;
        let (session, q) = self.take_revealed(id, true)?;
        let Purpose::Inquiry { spaces } = session.purpose else {
            return Err(Reason::OutOfOrderStep);
        };
        let statuses = {
            let mut tables = lock(&self.tables);
            if tables.spent.contains(&q) {
                return Err(Reason::IdentifierSpent);
            }
            tables.spent.insert(q.clone());
            tables.log(&Record::Spent { q });
            let now = tables.now;
            spaces.iter().map(|j| tables.tally(j, now, self.config.epsilon)).collect()
        };
        let cred = &session.cred;
        let cost = pp.scalar_neg(&pp.scalar(self.config.c_q));
        let cm_b = shift(pp, &cred.cm_b, &cost);
        let sig = sign_credential(pp, &self.config.keys, &cred.cm_s, cm_q_new, &cm_b);
        Ok((statuses, sig))
    }
}
