pub mod commitment;
pub mod credential;
pub mod group;
pub mod protocol;
pub mod sigma;
pub mod wire;
pub mod net;
pub mod blur;
pub mod harness;
