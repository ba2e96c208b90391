//! Shared fixtures for the benchmarks in `benches/`.

use auditml_core::harness::channel::Channel;
use auditml_core::harness::run_pair;
use auditml_core::he::{Backend, HeParams};
use auditml_core::triples::{ClientTriples, HolderTriples};
use auditml_core::{Field, FieldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn field() -> Field {
    Field::new(FieldConfig::default())
}

/// Sets up both offline parties over an in-memory channel and runs `holder`
/// and `client` against them.
pub fn with_triples<H, C>(backend: Backend, slots: usize, holder: H, client: C)
where
    H: FnOnce(&mut Channel, &mut HolderTriples) + Send,
    C: FnOnce(&mut Channel, &mut ClientTriples) + Send,
{
    let f = field();
    let params = HeParams::new(backend, slots, &f);
    run_pair(
        1,
        |ch| {
            let mut t = HolderTriples::setup(ch, f, &params, ChaCha20Rng::seed_from_u64(1), ChaCha20Rng::seed_from_u64(2))
                .expect("holder setup");
            holder(ch, &mut t)
        },
        |ch| {
            let mut t = ClientTriples::setup(ch, f, ChaCha20Rng::seed_from_u64(3), ChaCha20Rng::seed_from_u64(4))
                .expect("client setup");
            client(ch, &mut t)
        },
    );
}
