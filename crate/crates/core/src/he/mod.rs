//! Packed homomorphic encryption over `F_p` slot vectors.
//!
//! Two backends share one interface:
//!
//! * `sim` keeps the plaintext slot vector inside the "ciphertext" and only
//!   counts operations. It serializes to a fixed nominal size so byte
//!   accounting is deterministic. It offers no secrecy at all.
//! * `rlwe` is a BFV implementation with toy parameters (see [`rlwe`]).
//!
//! Both enforce the same depth budget: one ciphertext-ciphertext
//! multiplication per ciphertext, any number of additions, rotations and
//! plaintext multiplications.

pub mod rlwe;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::wire::{Reader, Writer};

/// Ciphertext-ciphertext multiplications a ciphertext may have gone through.
pub const MAX_CT_DEPTH: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Sim,
    Rlwe,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Backend::Sim),
            "rlwe" => Ok(Backend::Rlwe),
            other => Err(Error::Param(format!("unknown HE backend {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RlweParams {
    /// Number of ciphertext RNS primes.
    pub q_primes: usize,
    pub q_bits: u32,
    /// Generate power-of-two rotation keys. Required by ciphertext matrix
    /// products.
    pub rotation_keys: bool,
}

impl Default for RlweParams {
    fn default() -> Self {
        Self {
            q_primes: 7,
            q_bits: 50,
            rotation_keys: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeParams {
    pub backend: Backend,
    /// Slot count `N`, a power of two.
    pub slots: usize,
    /// Equal to the field prime.
    pub plain_modulus: u64,
    /// Serialized size of a sim ciphertext. Defaults to `2 * N * 8`.
    #[serde(default)]
    pub sim_ct_bytes: Option<usize>,
    #[serde(default)]
    pub rlwe: RlweParams,
}

pub const DEFAULT_SLOTS: usize = 4096;

impl HeParams {
    pub fn new(backend: Backend, slots: usize, field: &Field) -> Self {
        Self {
            backend,
            slots,
            plain_modulus: field.p(),
            sim_ct_bytes: None,
            rlwe: RlweParams::default(),
        }
    }

    pub fn sim(field: &Field) -> Self {
        Self::new(Backend::Sim, DEFAULT_SLOTS, field)
    }

    pub fn nominal_ct_bytes(&self) -> usize {
        self.sim_ct_bytes.unwrap_or(2 * self.slots * 8)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.slots.is_power_of_two() || self.slots < 2 {
            return Err(Error::Param(format!("slot count {} is not a power of two", self.slots)));
        }
        if self.backend == Backend::Rlwe && (self.plain_modulus - 1) % (4 * self.slots as u64) != 0 {
            return Err(Error::Param(format!(
                "rlwe backend with {} slots needs p = 1 mod {}",
                self.slots,
                4 * self.slots
            )));
        }
        Ok(())
    }
}

/// Operation counters for one session. Shared by every evaluator clone.
#[derive(Debug, Default)]
pub struct OpCounters {
    rotations: AtomicU64,
    ct_mults: AtomicU64,
    plain_mults: AtomicU64,
    adds: AtomicU64,
    bytes_sent: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub rotations: u64,
    pub ct_mults: u64,
    pub plain_mults: u64,
    pub adds: u64,
    pub bytes_sent: u64,
}

impl CounterSnapshot {
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            rotations: self.rotations - earlier.rotations,
            ct_mults: self.ct_mults - earlier.ct_mults,
            plain_mults: self.plain_mults - earlier.plain_mults,
            adds: self.adds - earlier.adds,
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
        }
    }
}

impl OpCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            rotations: self.rotations.load(Ordering::Relaxed),
            ct_mults: self.ct_mults.load(Ordering::Relaxed),
            plain_mults: self.plain_mults.load(Ordering::Relaxed),
            adds: self.adds.load(Ordering::Relaxed),
            bytes_sent: self.bytes_sent.load(Ordering::Relaxed),
        }
    }

    fn bump(c: &AtomicU64, by: u64) {
        c.fetch_add(by, Ordering::Relaxed);
    }

    pub fn add_bytes_sent(&self, n: u64) {
        Self::bump(&self.bytes_sent, n);
    }
}

enum KeyMaterial {
    Sim,
    Rlwe {
        ctx: Arc<rlwe::Context>,
        keys: Arc<rlwe::EvalKeys>,
    },
}

/// Public encryption and evaluation key. Cheap to clone.
#[derive(Clone)]
pub struct PublicKey {
    id: u64,
    params: HeParams,
    material: Arc<KeyMaterial>,
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PublicKey")
            .field("id", &self.id)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

pub struct SecretKey {
    id: u64,
    slots: usize,
    material: SecretMaterial,
}

enum SecretMaterial {
    Sim,
    Rlwe {
        ctx: Arc<rlwe::Context>,
        sk: rlwe::SecretKey,
    },
}

impl PublicKey {
    /// Identifier drawn at key generation; distinct for every key pair.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn slots(&self) -> usize {
        self.params.slots
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.id);
        let params = serde_json::to_vec(&self.params).expect("params serialize");
        w.blob(&params);
        match &*self.material {
            KeyMaterial::Sim => {
                w.u8(0);
            }
            KeyMaterial::Rlwe { ctx, keys } => {
                w.u8(1);
                w.blob(&ctx.keys_to_bytes(keys));
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let id = r.u64()?;
        let params: HeParams = serde_json::from_slice(r.blob()?)
            .map_err(|e| Error::Framing(format!("public key parameters: {e}")))?;
        params.validate()?;
        let material = match (r.u8()?, params.backend) {
            (0, Backend::Sim) => KeyMaterial::Sim,
            (1, Backend::Rlwe) => {
                let ctx = Arc::new(rlwe_context(&params)?);
                let keys = Arc::new(ctx.keys_from_bytes(r.blob()?)?);
                KeyMaterial::Rlwe { ctx, keys }
            }
            _ => return Err(Error::BackendMismatch),
        };
        r.finish()?;
        Ok(Self {
            id,
            params,
            material: Arc::new(material),
        })
    }
}

fn rlwe_context(params: &HeParams) -> Result<rlwe::Context> {
    rlwe::Context::new(
        params.plain_modulus,
        params.slots,
        params.rlwe.q_primes,
        params.rlwe.q_bits,
    )
}

pub fn keygen<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Result<(PublicKey, SecretKey)> {
    params.validate()?;
    let id = rng.next_u64();
    let (pk, sk) = match params.backend {
        Backend::Sim => (KeyMaterial::Sim, SecretMaterial::Sim),
        Backend::Rlwe => {
            let ctx = Arc::new(rlwe_context(params)?);
            let (sk, keys) = ctx.keygen(params.rlwe.rotation_keys, rng);
            (
                KeyMaterial::Rlwe {
                    ctx: ctx.clone(),
                    keys: Arc::new(keys),
                },
                SecretMaterial::Rlwe { ctx, sk },
            )
        }
    };
    Ok((
        PublicKey {
            id,
            params: params.clone(),
            material: Arc::new(pk),
        },
        SecretKey {
            id,
            slots: params.slots,
            material: sk,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Payload {
    Sim(Vec<u64>),
    Rlwe(rlwe::Ct),
}

/// A packed ciphertext over `N` slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    payload: Payload,
    slots: usize,
    depth: u8,
}

impl Ciphertext {
    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Ciphertext-ciphertext multiplications behind this ciphertext.
    pub fn depth(&self) -> u8 {
        self.depth
    }
}

impl SecretKey {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn decrypt(&self, field: &Field, ct: &Ciphertext) -> Result<Vec<Fe>> {
        if ct.slots != self.slots {
            return Err(Error::DecryptionFailure(format!(
                "ciphertext has {} slots, key has {}",
                ct.slots, self.slots
            )));
        }
        let raw = match (&self.material, &ct.payload) {
            (SecretMaterial::Sim, Payload::Sim(v)) => v.clone(),
            (SecretMaterial::Rlwe { ctx, sk }, Payload::Rlwe(c)) => ctx.decrypt(sk, c),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(raw.into_iter().map(|x| field.elem(x)).collect())
    }

    /// Remaining noise budget in bits, `None` for the sim backend.
    pub fn noise_budget(&self, ct: &Ciphertext) -> Option<f64> {
        match (&self.material, &ct.payload) {
            (SecretMaterial::Rlwe { ctx, sk }, Payload::Rlwe(c)) => Some(ctx.noise_budget(sk, c)),
            _ => None,
        }
    }
}

/// Elementwise operations accepted by [`Evaluator::eval_elementwise`].
pub enum Elementwise<'a> {
    Add(&'a Ciphertext),
    MulPlain(&'a [Fe]),
    MulCt(&'a Ciphertext),
}

/// Homomorphic evaluator bound to a public key and a counter set.
#[derive(Clone)]
pub struct Evaluator {
    pk: PublicKey,
    field: Field,
    counters: Arc<OpCounters>,
}

impl Evaluator {
    pub fn new(pk: PublicKey, field: Field) -> Result<Self> {
        if pk.params.plain_modulus != field.p() {
            return Err(Error::Param(
                "HE plaintext modulus differs from the field prime".into(),
            ));
        }
        Ok(Self {
            pk,
            field,
            counters: Arc::new(OpCounters::default()),
        })
    }

    pub fn with_counters(mut self, counters: Arc<OpCounters>) -> Self {
        self.counters = counters;
        self
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn slots(&self) -> usize {
        self.pk.params.slots
    }

    pub fn counters(&self) -> &Arc<OpCounters> {
        &self.counters
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        self.counters.snapshot()
    }

    fn padded(&self, v: &[Fe]) -> Result<Vec<u64>> {
        let n = self.slots();
        if v.len() > n {
            return Err(Error::SlotOverflow {
                got: v.len(),
                slots: n,
            });
        }
        let mut out: Vec<u64> = v.iter().map(|x| x.value()).collect();
        out.resize(n, 0);
        Ok(out)
    }

    fn rlwe(&self) -> Option<(&rlwe::Context, &rlwe::EvalKeys)> {
        match &*self.pk.material {
            KeyMaterial::Rlwe { ctx, keys } => Some((ctx, keys)),
            KeyMaterial::Sim => None,
        }
    }

    fn wrap(&self, payload: Payload, depth: u8) -> Ciphertext {
        Ciphertext {
            payload,
            slots: self.slots(),
            depth,
        }
    }

    fn check(&self, ct: &Ciphertext) -> Result<()> {
        if ct.slots != self.slots() {
            return Err(Error::LengthMismatch {
                expected: self.slots(),
                got: ct.slots,
            });
        }
        let ok = matches!(
            (&ct.payload, &*self.pk.material),
            (Payload::Sim(_), KeyMaterial::Sim) | (Payload::Rlwe(_), KeyMaterial::Rlwe { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::BackendMismatch)
        }
    }

    /// Encrypts `v`, zero-padded to `N` slots.
    pub fn encrypt<R: Rng + ?Sized>(&self, v: &[Fe], rng: &mut R) -> Result<Ciphertext> {
        let slots = self.padded(v)?;
        let payload = match self.rlwe() {
            None => Payload::Sim(slots),
            Some((ctx, keys)) => Payload::Rlwe(ctx.encrypt(keys, &slots, rng)),
        };
        Ok(self.wrap(payload, 0))
    }

    fn zip_sim(&self, a: &[u64], b: &[u64], f: impl Fn(Fe, Fe) -> Fe) -> Vec<u64> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| f(self.field.elem(x), self.field.elem(y)).value())
            .collect()
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        OpCounters::bump(&self.counters.adds, 1);
        let payload = match (&a.payload, &b.payload, self.rlwe()) {
            (Payload::Sim(x), Payload::Sim(y), None) => {
                Payload::Sim(self.zip_sim(x, y, |u, v| self.field.add(u, v)))
            }
            (Payload::Rlwe(x), Payload::Rlwe(y), Some((ctx, _))) => Payload::Rlwe(ctx.add(x, y)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth.max(b.depth)))
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let nb = self.neg(b)?;
        self.add(a, &nb)
    }

    fn neg(&self, a: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => {
                Payload::Sim(x.iter().map(|&u| self.field.neg(self.field.elem(u)).value()).collect())
            }
            (Payload::Rlwe(x), Some((ctx, _))) => Payload::Rlwe(ctx.neg(x)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    pub fn add_plain(&self, a: &Ciphertext, v: &[Fe]) -> Result<Ciphertext> {
        self.check(a)?;
        let p = self.padded(v)?;
        OpCounters::bump(&self.counters.adds, 1);
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => Payload::Sim(self.zip_sim(x, &p, |u, v| self.field.add(u, v))),
            (Payload::Rlwe(x), Some((ctx, _))) => Payload::Rlwe(ctx.add_plain(x, &p)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    pub fn sub_plain(&self, a: &Ciphertext, v: &[Fe]) -> Result<Ciphertext> {
        let neg: Vec<Fe> = v.iter().map(|&x| self.field.neg(x)).collect();
        self.add_plain(a, &neg)
    }

    pub fn mul_plain(&self, a: &Ciphertext, v: &[Fe]) -> Result<Ciphertext> {
        self.check(a)?;
        let p = self.padded(v)?;
        OpCounters::bump(&self.counters.plain_mults, 1);
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => Payload::Sim(self.zip_sim(x, &p, |u, v| self.field.mul(u, v))),
            (Payload::Rlwe(x), Some((ctx, _))) => Payload::Rlwe(ctx.mul_plain(x, &p)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    /// Multiplies every slot by the same public constant.
    pub fn mul_const(&self, a: &Ciphertext, c: Fe) -> Result<Ciphertext> {
        self.check(a)?;
        OpCounters::bump(&self.counters.plain_mults, 1);
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => Payload::Sim(
                x.iter()
                    .map(|&u| self.field.mul(self.field.elem(u), c).value())
                    .collect(),
            ),
            (Payload::Rlwe(x), Some((ctx, _))) => Payload::Rlwe(ctx.mul_scalar(x, c.value())),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    pub fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        let depth = a.depth.max(b.depth) + 1;
        if depth > MAX_CT_DEPTH {
            return Err(Error::DepthExhausted);
        }
        OpCounters::bump(&self.counters.ct_mults, 1);
        let payload = match (&a.payload, &b.payload, self.rlwe()) {
            (Payload::Sim(x), Payload::Sim(y), None) => {
                Payload::Sim(self.zip_sim(x, y, |u, v| self.field.mul(u, v)))
            }
            (Payload::Rlwe(x), Payload::Rlwe(y), Some((ctx, keys))) => Payload::Rlwe(ctx.mul(x, y, keys)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, depth))
    }

    pub fn eval_elementwise(&self, a: &Ciphertext, op: Elementwise<'_>) -> Result<Ciphertext> {
        match op {
            Elementwise::Add(b) => self.add(a, b),
            Elementwise::MulPlain(v) => self.mul_plain(a, v),
            Elementwise::MulCt(b) => self.mul_ct(a, b),
        }
    }

    /// Cyclic left shift by `j` slots.
    pub fn rotate(&self, a: &Ciphertext, j: usize) -> Result<Ciphertext> {
        self.check(a)?;
        let n = self.slots();
        let j = j % n;
        OpCounters::bump(&self.counters.rotations, 1);
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => {
                let mut v = x.clone();
                v.rotate_left(j);
                Payload::Sim(v)
            }
            (Payload::Rlwe(x), Some((ctx, keys))) => Payload::Rlwe(ctx.rotate(x, j, keys)?),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    /// Fresh re-randomization before a ciphertext goes back to the key owner.
    /// A no-op for the sim backend.
    pub fn rerandomize<R: Rng + ?Sized>(&self, a: &Ciphertext, rng: &mut R) -> Result<Ciphertext> {
        self.check(a)?;
        let payload = match (&a.payload, self.rlwe()) {
            (Payload::Sim(x), None) => Payload::Sim(x.clone()),
            (Payload::Rlwe(x), Some((ctx, keys))) => Payload::Rlwe(ctx.rerandomize(x, keys, rng)),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, a.depth))
    }

    /// Wire form: backend tag, slot count, payload length, payload.
    pub fn to_bytes(&self, ct: &Ciphertext) -> Vec<u8> {
        let mut body = Writer::new();
        body.u8(ct.depth);
        let tag = match &ct.payload {
            Payload::Sim(v) => {
                let w = self.field.config().byte_len();
                for &x in v {
                    body.uint(x as u128, w);
                }
                let nominal = self.pk.params.nominal_ct_bytes();
                if body.len() < nominal {
                    body.bytes(&vec![0u8; nominal - body.len()]);
                }
                0u8
            }
            Payload::Rlwe(c) => {
                let (ctx, _) = self.rlwe().expect("rlwe ciphertext under rlwe key");
                body.bytes(&ctx.ct_to_bytes(c));
                1u8
            }
        };
        let body = body.finish();
        let mut w = Writer::with_capacity(body.len() + 9);
        w.u8(tag).u32(ct.slots as u32).blob(&body);
        w.finish()
    }

    pub fn from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let slots = r.u32()? as usize;
        if slots != self.slots() {
            return Err(Error::Framing(format!("ciphertext with {slots} slots")));
        }
        let body = r.blob()?;
        r.finish()?;
        let mut b = Reader::new(body);
        let depth = b.u8()?;
        if depth > MAX_CT_DEPTH {
            return Err(Error::Framing("ciphertext depth out of range".into()));
        }
        let payload = match (tag, self.rlwe()) {
            (0, None) => {
                let w = self.field.config().byte_len();
                let v = (0..slots)
                    .map(|_| {
                        let x = b.uint(w)? as u64;
                        if x >= self.field.p() {
                            return Err(Error::Framing("slot value out of range".into()));
                        }
                        Ok(x)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Payload::Sim(v)
            }
            (1, Some((ctx, _))) => Payload::Rlwe(ctx.ct_from_bytes(b.bytes(b.remaining())?)?),
            _ => return Err(Error::BackendMismatch),
        };
        Ok(self.wrap(payload, depth))
    }

    /// Serializes for sending and charges the bytes to the counters.
    pub fn export(&self, ct: &Ciphertext) -> Vec<u8> {
        let bytes = self.to_bytes(ct);
        self.counters.add_bytes_sent(bytes.len() as u64);
        bytes
    }
}
