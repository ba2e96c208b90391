//! Batched 1-out-of-2 oblivious transfer of 128-bit messages.
//!
//! The group backend is the Chou-Orlandi protocol over Ristretto255: the
//! sender publishes `A = a G`, the receiver answers `B = b G` (choice 0) or
//! `A + b G` (choice 1), and the pads are hashes of `a B` and `a (B - A)`.
//! Each receiver point is bound to its index and the full exchange so a
//! malicious receiver cannot reuse one point for two wires.

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::channel::{kind, Channel};
use crate::wire::{Reader, Writer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtBackend {
    Group,
    /// Sends both messages in the clear. Insecure; for tests only.
    Simulated,
}

impl OtBackend {
    fn tag(self) -> u8 {
        match self {
            OtBackend::Group => 1,
            OtBackend::Simulated => 2,
        }
    }
}

impl std::str::FromStr for OtBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(OtBackend::Group),
            "simulated" => Ok(OtBackend::Simulated),
            _ => Err(Error::Param(format!("unknown OT backend {s:?}"))),
        }
    }
}

fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

fn pad(batch: u64, index: usize, a: &CompressedRistretto, b: &CompressedRistretto, key: &RistrettoPoint) -> u128 {
    let mut h = Sha256::new();
    h.update(b"auditml/ot");
    h.update(batch.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.update(a.as_bytes());
    h.update(b.as_bytes());
    h.update(key.compress().as_bytes());
    let d = h.finalize();
    u128::from_le_bytes(d[..16].try_into().expect("digest is 32 bytes"))
}

fn read_point(r: &mut Reader<'_>) -> Result<(CompressedRistretto, RistrettoPoint)> {
    let c = CompressedRistretto::from_slice(r.bytes(32)?).expect("32 bytes");
    let p = c
        .decompress()
        .ok_or_else(|| Error::Framing("invalid group element".into()))?;
    Ok((c, p))
}

/// Sender half. `batch` labels the transfer in both parties' transcripts and
/// must match on both sides.
pub fn send<R: Rng + ?Sized>(
    ch: &mut Channel,
    backend: OtBackend,
    batch: u64,
    pairs: &[(u128, u128)],
    rng: &mut R,
) -> Result<()> {
    let n = pairs.len();
    let mut w = Writer::new();
    w.u8(backend.tag()).u64(batch).u32(n as u32);
    match backend {
        OtBackend::Simulated => {
            for &(m0, m1) in pairs {
                w.u128(m0).u128(m1);
            }
            ch.send(kind::OT_SETUP, w.finish())
        }
        OtBackend::Group => {
            let a = random_scalar(rng);
            let big_a = RISTRETTO_BASEPOINT_POINT * a;
            let ca = big_a.compress();
            w.bytes(ca.as_bytes());
            ch.send(kind::OT_SETUP, w.finish())?;

            let body = ch.recv(kind::OT_CHOICE)?;
            let mut r = Reader::new(&body);
            let mut out = Writer::with_capacity(32 * n);
            for (i, &(m0, m1)) in pairs.iter().enumerate() {
                let (cb, b) = read_point(&mut r)?;
                let k0 = pad(batch, i, &ca, &cb, &(b * a));
                let k1 = pad(batch, i, &ca, &cb, &((b - big_a) * a));
                out.u128(m0 ^ k0).u128(m1 ^ k1);
            }
            r.finish()?;
            ch.send(kind::OT_TRANSFER, out.finish())
        }
    }
}

/// Receiver half: returns `pairs[i].choices[i]` for each `i`.
pub fn receive<R: Rng + ?Sized>(
    ch: &mut Channel,
    backend: OtBackend,
    batch: u64,
    choices: &[bool],
    rng: &mut R,
) -> Result<Vec<u128>> {
    let n = choices.len();
    let body = ch.recv(kind::OT_SETUP)?;
    let mut r = Reader::new(&body);
    if r.u8()? != backend.tag() {
        return Err(Error::BackendMismatch);
    }
    let got_batch = r.u64()?;
    let count = r.u32()? as usize;
    if got_batch != batch {
        return Err(Error::Framing(format!("OT batch {got_batch}, expected {batch}")));
    }
    if count != n {
        return Err(Error::LengthMismatch { expected: n, got: count });
    }
    match backend {
        OtBackend::Simulated => {
            let mut out = Vec::with_capacity(n);
            for &c in choices {
                let (m0, m1) = (r.u128()?, r.u128()?);
                out.push(if c { m1 } else { m0 });
            }
            r.finish()?;
            Ok(out)
        }
        OtBackend::Group => {
            let (ca, big_a) = read_point(&mut r)?;
            r.finish()?;
            let mut w = Writer::with_capacity(32 * n);
            let mut keys = Vec::with_capacity(n);
            for (i, &c) in choices.iter().enumerate() {
                let b = random_scalar(rng);
                let mut big_b = RISTRETTO_BASEPOINT_POINT * b;
                if c {
                    big_b += big_a;
                }
                let cb = big_b.compress();
                w.bytes(cb.as_bytes());
                keys.push(pad(batch, i, &ca, &cb, &(big_a * b)));
            }
            ch.send(kind::OT_CHOICE, w.finish())?;
            let body = ch.recv(kind::OT_TRANSFER)?;
            let mut r = Reader::new(&body);
            let mut out = Vec::with_capacity(n);
            for (&c, k) in choices.iter().zip(keys) {
                let (e0, e1) = (r.u128()?, r.u128()?);
                out.push(k ^ if c { e1 } else { e0 });
            }
            r.finish()?;
            Ok(out)
        }
    }
}
