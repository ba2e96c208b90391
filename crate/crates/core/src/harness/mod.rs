//! Two-party runtime: channels, file formats, tamper injection and the party
//! runners behind the command-line tool.

pub mod channel;
pub mod files;
pub mod runner;
pub mod session;
pub mod tamper;

pub use channel::{ByteCounters, Channel, Phase};

/// Runs the holder and client closures on two threads joined by an in-process
/// channel and returns both results. A panic on either side is propagated.
pub fn run_pair<A, B, RA, RB>(session: u64, holder: A, client: B) -> (RA, RB)
where
    A: FnOnce(&mut Channel) -> RA + Send,
    B: FnOnce(&mut Channel) -> RB + Send,
    RA: Send,
    RB: Send,
{
    let (mut ch0, mut ch1) = Channel::pair(session);
    std::thread::scope(|s| {
        let h = std::thread::Builder::new()
            .name("holder".into())
            .stack_size(64 << 20)
            .spawn_scoped(s, move || holder(&mut ch0))
            .expect("spawn holder thread");
        let c = std::thread::Builder::new()
            .name("client".into())
            .stack_size(64 << 20)
            .spawn_scoped(s, move || client(&mut ch1))
            .expect("spawn client thread");
        let rc = c.join();
        let rh = h.join();
        match (rh, rc) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => std::panic::resume_unwind(e),
        }
    })
}
