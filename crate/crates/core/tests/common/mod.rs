#![allow(dead_code)]

use crowdsense::credential::ServerKeys;
use crowdsense::group::GroupParams;
use crowdsense::protocol::{Client, Server, ServerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn params64() -> GroupParams {
    GroupParams::generate(64, b"protocol-tests").unwrap()
}

pub fn config() -> ServerConfig {
    let params = params64();
    let keys = ServerKeys::generate(512, &mut rng(7));
    let mut cfg = ServerConfig::new(params, keys);
    cfg.nn_bits = 16;
    cfg
}

pub fn server(cfg: ServerConfig) -> Server {
    Server::seeded(cfg, 99)
}

pub fn clients(server: &Server, n: usize, r: &mut ChaCha20Rng) -> Vec<Client> {
    (0..n).map(|_| Client::register(&mut &*server, r).unwrap()).collect()
}
