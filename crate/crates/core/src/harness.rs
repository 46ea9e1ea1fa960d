//! Flat `key = value` configuration and the loopback benchmarks: per-stage
//! cost and confirmation time against the number of concurrent users.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::credential::ServerKeys;
use crate::group::{GroupError, GroupParams};
use crate::net::{Metrics, NetServer, StageTotals, TcpTransport};
use crate::protocol::{
    Client, ClientError, Registration, Request, Response, Server, ServerConfig, Stage, Transport,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {what}")]
    Syntax { line: usize, what: &'static str },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("key {0} given twice")]
    Duplicate(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("key file: {0}")]
    KeyFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys are lowercase identifiers and may appear once.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |what| ConfigError::Syntax { line: i + 1, what };
        let (k, v) = line.split_once('=').ok_or(syntax("expected key = value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
            return Err(syntax("bad key"));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Duplicate(k.to_string()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub group_bits: u32,
    pub group_seed: String,
    pub key_bits: u32,
    pub key_file: Option<PathBuf>,
    pub b0: u64,
    pub c_q: u64,
    pub credit: u64,
    pub epsilon: u64,
    pub slot_length: u64,
    pub nn_bits: u32,
    pub session_timeout: u64,
    pub listen: String,
    pub journal: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            group_bits: 2048,
            group_seed: "crowdsense".into(),
            key_bits: 2048,
            key_file: None,
            b0: 0,
            c_q: 1,
            credit: 1,
            epsilon: 1,
            slot_length: 60,
            nn_bits: 32,
            session_timeout: 60,
            listen: "127.0.0.1:7878".into(),
            journal: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ConfigError::BadValue { key: key.into(), value: value.into() });
    }
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (k, v) in parse_flat(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "group_bits" => self.group_bits = num(key, value)?,
            "group_seed" => self.group_seed = value.to_string(),
            "key_bits" => self.key_bits = num(key, value)?,
            "key_file" => self.key_file = Some(value.into()),
            "b0" => self.b0 = num(key, value)?,
            "c_q" => self.c_q = num(key, value)?,
            "credit" => self.credit = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "slot_length" => {
                self.slot_length = num(key, value)?;
                if self.slot_length == 0 {
                    return Err(ConfigError::BadValue { key: key.into(), value: value.into() });
                }
            }
            "nn_bits" => self.nn_bits = num(key, value)?,
            "session_timeout" => self.session_timeout = num(key, value)?,
            "listen" => self.listen = value.to_string(),
            "journal" => self.journal = Some(value.into()),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn params(&self) -> Result<GroupParams, ConfigError> {
        Ok(GroupParams::generate(self.group_bits, self.group_seed.as_bytes())?)
    }

    /// Loads the server key from `key_file`, creating it if missing. Without
    /// a key file a fresh key is generated from `rng`.
    pub fn keys<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<ServerKeys, ConfigError> {
        if self.key_bits < 64 {
            return Err(ConfigError::BadValue { key: "key_bits".into(), value: self.key_bits.to_string() });
        }
        let Some(path) = &self.key_file else {
            return Ok(ServerKeys::generate(self.key_bits, rng));
        };
        match std::fs::read_to_string(path) {
            Ok(text) => read_keys(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let keys = ServerKeys::generate(self.key_bits, rng);
                std::fs::write(path, write_keys(&keys))?;
                Ok(keys)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn server_config<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<ServerConfig, ConfigError> {
        let params = self.params()?;
        if self.nn_bits == 0 || u64::from(self.nn_bits) >= params.p().bits() {
            return Err(ConfigError::BadValue { key: "nn_bits".into(), value: self.nn_bits.to_string() });
        }
        let mut cfg = ServerConfig::new(params, self.keys(rng)?);
        cfg.b0 = self.b0;
        cfg.c_q = self.c_q;
        cfg.credit_per_entry = self.credit;
        cfg.epsilon = self.epsilon;
        cfg.slot_length = Duration::from_secs(self.slot_length);
        cfg.nn_bits = self.nn_bits;
        cfg.session_timeout = Duration::from_secs(self.session_timeout);
        Ok(cfg)
    }
}

pub fn write_keys(keys: &ServerKeys) -> String {
    let pk = keys.public();
    let h = |v: &BigUint| hex::encode(v.to_bytes_be());
    format!("n = {}\ne = {}\nd = {}\n", h(&pk.n), h(&pk.e), h(keys.private_exponent()))
}

pub fn read_keys(text: &str) -> Result<ServerKeys, ConfigError> {
    let map = parse_flat(text)?;
    let get = |k: &str| -> Result<BigUint, ConfigError> {
        let v = map.get(k).ok_or_else(|| ConfigError::KeyFile(format!("missing {k}")))?;
        let bytes = hex::decode(v).map_err(|_| ConfigError::KeyFile(format!("bad {k}")))?;
        Ok(BigUint::from_bytes_be(&bytes))
    };
    if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "n" | "e" | "d")) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    let (n, e, d) = (get("n")?, get("e")?, get("d")?);
    if n.bits() < 64 || e < BigUint::from(3u32) || d >= n {
        return Err(ConfigError::KeyFile("inconsistent key".into()));
    }
    Ok(ServerKeys::from_parts(n, e, d))
}

// ---- measurement ---------------------------------------------------------

/// Mean cost of one protocol stage, possibly spanning several round trips.
#[derive(Clone, Debug, PartialEq)]
pub struct StageMetrics {
    pub stage: &'static str,
    pub user_time_s: f64,
    pub server_time_s: f64,
    pub user_bytes: f64,
    pub server_bytes: f64,
}

impl StageMetrics {
    pub fn total_bytes(&self) -> f64 {
        self.user_bytes + self.server_bytes
    }

    /// Machine-readable lines `metric,stage,role,value,unit`.
    pub fn csv_lines(&self) -> Vec<String> {
        vec![
            format!("time,{},user,{:.6},s", self.stage, self.user_time_s),
            format!("time,{},server,{:.6},s", self.stage, self.server_time_s),
            format!("bytes,{},user,{:.1},B", self.stage, self.user_bytes),
            format!("bytes,{},server,{:.1},B", self.stage, self.server_bytes),
        ]
    }
}

pub const PHASES: [(&str, &[Stage]); 5] = [
    ("setup", &[Stage::Setup]),
    ("registration", &[Stage::Register]),
    ("submission", &[Stage::Submit]),
    ("claim", &[Stage::ClaimOpen, Stage::ClaimReveal, Stage::ClaimRefresh]),
    ("inquiry", &[Stage::InquireOpen, Stage::InquireReveal, Stage::InquireRefresh]),
];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
}

fn sum(totals: &BTreeMap<Stage, StageTotals>, stages: &[Stage]) -> StageTotals {
    let mut out = StageTotals::default();
    for s in stages {
        if let Some(t) = totals.get(s) {
            out.calls += t.calls;
            out.sent += t.sent;
            out.received += t.received;
            out.busy += t.busy;
        }
    }
    out
}

fn fresh_server(cfg: ServerConfig, seed: u64) -> io::Result<(Arc<Server>, Arc<Metrics>, NetServer)> {
    let server = Arc::new(Server::seeded(cfg, seed));
    let metrics = Arc::new(Metrics::new());
    let net = NetServer::start(server.clone(), "127.0.0.1:0", metrics.clone(), None)?;
    Ok((server, metrics, net))
}

/// Runs every stage `reps` times end to end over loopback TCP and returns
/// the mean cost per stage, in [`PHASES`] order.
///
/// Each repetition registers a fresh user who submits one entry, claims its
/// credit and spends it on an inquiry, so `b0 + credit >= c_q` is required.
pub fn bench_stages(cfg: ServerConfig, reps: usize, seed: u64) -> Result<Vec<StageMetrics>, BenchError> {
    let reps = reps.max(1);
    let eps = cfg.epsilon;
    let (server, server_metrics, net) = fresh_server(cfg, seed)?;
    let client_metrics = Arc::new(Metrics::new());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut elapsed = [Duration::ZERO; PHASES.len()];
    let mut t = TcpTransport::connect(net.local_addr())?.with_metrics(client_metrics.clone());
    let spaces = vec!["bench".to_string()];

    for _ in 0..reps {
        let clock = Instant::now();
        let bundle = match t.call(Request::Setup)? {
            Response::Setup(b) => *b,
            _ => return Err(ClientError::UnexpectedResponse(Stage::Setup).into()),
        };
        elapsed[0] += clock.elapsed();

        let clock = Instant::now();
        let (reg, req) = Registration::begin(bundle, &mut rng)?;
        let mut client = match t.call(req)? {
            Response::Registered { s_double_prime, sig } => reg.finish(&s_double_prime, sig)?,
            Response::Rejected(reason) => return Err(ClientError::Rejected { stage: Stage::Register, reason }.into()),
            _ => return Err(ClientError::UnexpectedResponse(Stage::Register).into()),
        };
        elapsed[1] += clock.elapsed();

        let slot = server.now();
        let clock = Instant::now();
        client.submit(&mut t, "bench", slot, true, &mut rng)?;
        elapsed[2] += clock.elapsed();
        server.advance_to(slot + eps + 2);

        let clock = Instant::now();
        client.claim(&mut t, "bench", slot, &mut rng)?;
        elapsed[3] += clock.elapsed();

        let clock = Instant::now();
        client.inquire(&mut t, &spaces, &mut rng)?;
        elapsed[4] += clock.elapsed();
    }
    drop(t);
    net.shutdown();

    let client = client_metrics.snapshot();
    let srv = server_metrics.snapshot();
    let n = reps as f64;
    Ok(PHASES
        .iter()
        .zip(elapsed)
        .map(|((name, stages), el)| {
            let c = sum(&client, stages);
            let s = sum(&srv, stages);
            StageMetrics {
                stage: name,
                user_time_s: el.saturating_sub(c.busy).as_secs_f64() / n,
                server_time_s: s.busy.as_secs_f64() / n,
                user_bytes: c.sent as f64 / n,
                server_bytes: c.received as f64 / n,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spread {
    SameSpace,
    DistinctSpaces,
}

impl fmt::Display for Spread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spread::SameSpace => "same-space",
            Spread::DistinctSpaces => "distinct-space",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfirmPoint {
    pub users: usize,
    pub same_space_s: f64,
    pub distinct_space_s: f64,
}

pub const CONFIRM_USERS: [usize; 6] = [1, 5, 10, 15, 30, 50];

/// Least-squares line through `(x, y)`: slope, intercept and coefficient of
/// determination.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// One confirmation round: every user builds and sends a submission at the
/// same moment, then the server aggregates the spaces involved. Timed from
/// the release of the users to the last aggregation.
fn confirm_round(
    server: &Server,
    users: &mut [(Client, TcpTransport, ChaCha20Rng)],
    spread: Spread,
    slot: u64,
) -> Result<Duration, ClientError> {
    let n = users.len();
    let gate = Barrier::new(n + 1);
    let space = |i: usize| match spread {
        Spread::SameSpace => "lot".to_string(),
        Spread::DistinctSpaces => format!("lot-{i}"),
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = users
            .iter_mut()
            .enumerate()
            .map(|(i, (client, t, rng))| {
                let gate = &gate;
                let j = space(i);
                scope.spawn(move || {
                    gate.wait();
                    let vote = rng.next_u32() & 1 == 1;
                    client.submit(t, &j, slot, vote, rng)
                })
            })
            .collect();
        gate.wait();
        let start = Instant::now();
        for h in handles {
            h.join().expect("user thread panicked")?;
        }
        let spaces: std::collections::BTreeSet<String> = (0..n).map(space).collect();
        for j in &spaces {
            server.aggregate(j, slot);
        }
        Ok(start.elapsed())
    })
}

/// Confirmation time for each user count, taking the fastest of `reps`
/// rounds per point. Same-space and distinct-space rounds alternate.
pub fn bench_confirm(
    cfg: ServerConfig,
    user_counts: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ConfirmPoint>, BenchError> {
    let max = user_counts.iter().copied().max().unwrap_or(0);
    let (server, _, net) = fresh_server(cfg, seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(max);
    for i in 0..max {
        let mut t = TcpTransport::connect(net.local_addr())?;
        let client = Client::register(&mut t, &mut rng)?;
        users.push((client, t, ChaCha20Rng::seed_from_u64(seed ^ (i as u64 + 1))));
    }
    let mut slot = server.now();
    let mut out = Vec::new();
    for &u in user_counts {
        let mut best = [Duration::MAX; 2];
        for _ in 0..reps.max(1) {
            for (k, spread) in [Spread::SameSpace, Spread::DistinctSpaces].into_iter().enumerate() {
                slot += 1;
                server.advance_to(slot);
                for (c, _, _) in users.iter_mut() {
                    c.prune_tickets(slot);
                }
                let d = confirm_round(&server, &mut users[..u], spread, slot)?;
                best[k] = best[k].min(d);
            }
        }
        out.push(ConfirmPoint {
            users: u,
            same_space_s: best[0].as_secs_f64(),
            distinct_space_s: best[1].as_secs_f64(),
        });
    }
    drop(users);
    net.shutdown();
    Ok(out)
}

/// Machine-readable lines for a confirmation curve, including the fit.
pub fn confirm_csv(points: &[ConfirmPoint]) -> Vec<String> {
    let mut lines = Vec::new();
    for spread in [Spread::SameSpace, Spread::DistinctSpaces] {
        let pick = |p: &ConfirmPoint| match spread {
            Spread::SameSpace => p.same_space_s,
            Spread::DistinctSpaces => p.distinct_space_s,
        };
        for p in points {
            lines.push(format!("confirm_time,{spread},users={},{:.6},s", p.users, pick(p)));
        }
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.users as f64, pick(p))).collect();
        if xy.len() >= 2 {
            let (slope, intercept, r2) = linear_fit(&xy);
            lines.push(format!("fit_slope,{spread},all,{slope:.6},s/user"));
            lines.push(format!("fit_intercept,{spread},all,{intercept:.6},s"));
            lines.push(format!("fit_r2,{spread},all,{r2:.4},1"));
        }
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = Config::parse("# demo\ngroup_bits = 64\n\nnn_bits=16\nlisten = 0.0.0.0:9000\n").unwrap();
        assert_eq!(cfg.group_bits, 64);
        assert_eq!(cfg.nn_bits, 16);
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.c_q, 1);
        for bad in ["x", "a = 1", "b0 = -1", "b0 = 1\nb0 = 2", "epsilon = 1e3", "slot_length = 0", "Key = 1", "= 3"] {
            assert!(Config::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn key_file_round_trip() {
        let keys = ServerKeys::generate(128, &mut ChaCha20Rng::seed_from_u64(1));
        let back = read_keys(&write_keys(&keys)).unwrap();
        assert_eq!(back.public(), keys.public());
        assert_eq!(back.private_exponent(), keys.private_exponent());
        assert!(read_keys("n = 00\ne = 03\nd = 01").is_err());
        assert!(read_keys(&format!("{}x = 1\n", write_keys(&keys))).is_err());
    }

    #[test]
    fn fit() {
        let (slope, intercept, r2) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((slope - 2.0).abs() < 1e-12 && (intercept - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[(1.0, 1.0), (2.0, 3.0), (3.0, 1.0), (4.0, 3.0)]);
        assert!(r2 < 0.5);
    }
}
