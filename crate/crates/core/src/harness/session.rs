//! Party-side session drivers over an open channel: offline, online and check
//! phases, separately or back to back.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::engine::{
    client_check, client_offline, client_online, holder_check, holder_offline, holder_online, Architecture,
    CheckLedger, ClientOffline, HolderOffline, ModelSpec, OnlineContext,
};
use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::harness::channel::{kind, ByteCounters, Channel, Phase};
use crate::harness::tamper::{ledger_tamper, TamperSpec};
use crate::he::{Backend, CounterSnapshot, HeParams, DEFAULT_SLOTS};
use crate::nonlinear::ReluGadget;
use crate::ot::OtBackend;
use crate::sharing::Shares;
use crate::triples::{ClientTriples, HolderTriples};
use crate::wire::{Reader, Writer};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionConfig {
    pub backend: Backend,
    pub slots: usize,
    pub ot: OtBackend,
    pub seed: u64,
    /// Honoured by the holder only.
    pub tamper: Vec<TamperSpec>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Sim,
            slots: DEFAULT_SLOTS,
            ot: OtBackend::Group,
            seed: 0,
            tamper: Vec::new(),
        }
    }
}

impl SessionConfig {
    /// An independent random stream per `(party, purpose)`.
    pub fn rng(&self, label: &str) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(b"auditml/seed");
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// Wall-clock seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub offline: f64,
    pub online: f64,
    pub check: f64,
}

/// Holder: publishes the architecture, learns the batch size, then generates
/// triples and receives the garbled material.
pub fn holder_offline_phase(ch: &mut Channel, model: &ModelSpec, cfg: &SessionConfig) -> Result<(HolderOffline, CounterSnapshot)> {
    ch.set_phase(Phase::Offline);
    model.validate()?;
    let arch = model.architecture();
    let field = Field::new(model.field);
    let plan = serde_json::to_vec(&arch).map_err(|e| Error::Framing(e.to_string()))?;
    ch.send(kind::PLAN, plan)?;
    let body = ch.recv(kind::PLAN)?;
    let mut r = Reader::new(&body);
    let queries = r.u32()? as usize;
    r.finish()?;
    let params = HeParams::new(cfg.backend, cfg.slots, &field);
    params.validate()?;
    let mut tr = HolderTriples::setup(ch, field, &params, cfg.rng("holder/shares"), cfg.rng("holder/enc"))?;
    let gadget = ReluGadget::new(field)?;
    let bundle = holder_offline(ch, &mut tr, &gadget, &arch, queries)?;
    Ok((bundle, tr.evaluator().snapshot()))
}

/// Client: receives and checks the architecture and asks for `queries`
/// queries' worth of material.
pub fn client_offline_phase(
    ch: &mut Channel,
    queries: usize,
    cfg: &SessionConfig,
) -> Result<(Architecture, ClientOffline, CounterSnapshot)> {
    ch.set_phase(Phase::Offline);
    let body = ch.recv(kind::PLAN)?;
    let arch: Architecture = serde_json::from_slice(&body).map_err(|e| Error::Framing(format!("plan: {e}")))?;
    arch.validate()?;
    let mut w = Writer::new();
    w.u32(queries as u32);
    ch.send(kind::PLAN, w.finish())?;
    let field = Field::new(arch.field);
    let mut tr = ClientTriples::setup(ch, field, cfg.rng("client/shares"), cfg.rng("client/enc"))?;
    let gadget = ReluGadget::new(field)?;
    let bundle = client_offline(ch, &mut tr, &gadget, &arch, queries, &mut cfg.rng("client/garble"))?;
    Ok((arch, bundle, tr.evaluator().snapshot()))
}

pub fn holder_online_phase(
    ch: &mut Channel,
    model: &ModelSpec,
    bundle: &mut HolderOffline,
    cfg: &SessionConfig,
) -> Result<CheckLedger> {
    ch.set_phase(Phase::Online);
    let arch = model.architecture();
    let field = Field::new(model.field);
    let gadget = ReluGadget::new(field)?;
    let sh = Shares::new(field, bundle.key);
    let cx = OnlineContext {
        sh: &sh,
        gadget: &gadget,
        ot: cfg.ot,
        arch: &arch,
    };
    let weights = model.flat_weights(&field)?;
    let mut ledger = CheckLedger::with_tamper(ledger_tamper(&field, &cfg.tamper));
    holder_online(ch, &cx, &weights, bundle, &mut ledger, &cfg.tamper, &mut cfg.rng("holder/online"))?;
    Ok(ledger)
}

/// Encodes raw features under the session's field.
pub fn encode_inputs(field: &Field, arch: &Architecture, inputs: &[Vec<f64>]) -> Result<Vec<Vec<Fe>>> {
    inputs
        .iter()
        .map(|x| {
            if x.len() != arch.input_len {
                return Err(Error::LengthMismatch {
                    expected: arch.input_len,
                    got: x.len(),
                });
            }
            x.iter().map(|&v| field.encode_signed(v)).collect()
        })
        .collect()
}

pub fn client_online_phase(
    ch: &mut Channel,
    arch: &Architecture,
    bundle: &mut ClientOffline,
    inputs: &[Vec<Fe>],
    cfg: &SessionConfig,
) -> Result<(Vec<Vec<Fe>>, CheckLedger)> {
    ch.set_phase(Phase::Online);
    let field = Field::new(arch.field);
    let gadget = ReluGadget::new(field)?;
    let sh = Shares::new(field, bundle.key);
    let cx = OnlineContext {
        sh: &sh,
        gadget: &gadget,
        ot: cfg.ot,
        arch,
    };
    let mut ledger = CheckLedger::new();
    let outs = client_online(ch, &cx, bundle, inputs, &mut ledger, &mut cfg.rng("client/online"))?;
    Ok((outs, ledger))
}

pub fn holder_check_phase(ch: &mut Channel, field: &Field, bundle: &HolderOffline, ledger: &CheckLedger) -> Result<()> {
    ch.set_phase(Phase::Check);
    holder_check(ch, field, &bundle.key, ledger)
}

pub fn client_check_phase(
    ch: &mut Channel,
    field: &Field,
    bundle: &ClientOffline,
    ledger: &CheckLedger,
    cfg: &SessionConfig,
) -> Result<()> {
    ch.set_phase(Phase::Check);
    client_check(ch, field, &bundle.key, ledger, &mut cfg.rng("client/check"))
}

#[derive(Clone, Debug)]
pub struct HolderOutcome {
    pub counters: ByteCounters,
    pub he: CounterSnapshot,
    pub timings: Timings,
}

/// All three holder phases on one channel.
pub fn run_holder_all(ch: &mut Channel, model: &ModelSpec, cfg: &SessionConfig) -> Result<HolderOutcome> {
    let field = Field::new(model.field);
    let t = Instant::now();
    let (mut bundle, he) = holder_offline_phase(ch, model, cfg)?;
    let offline = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ledger = holder_online_phase(ch, model, &mut bundle, cfg)?;
    let online = t.elapsed().as_secs_f64();
    let t = Instant::now();
    holder_check_phase(ch, &field, &bundle, &ledger)?;
    Ok(HolderOutcome {
        counters: ch.counters(),
        he,
        timings: Timings {
            offline,
            online,
            check: t.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Clone, Debug)]
pub struct ClientOutcome {
    pub arch: Architecture,
    /// Verified output vectors, one per query.
    pub outputs: Vec<Vec<Fe>>,
    pub counters: ByteCounters,
    pub he: CounterSnapshot,
    pub timings: Timings,
}

/// All three client phases on one channel. Outputs are returned only when
/// the check passes.
pub fn run_client_all(ch: &mut Channel, inputs: &[Vec<f64>], cfg: &SessionConfig) -> Result<ClientOutcome> {
    let t = Instant::now();
    let (arch, mut bundle, he) = client_offline_phase(ch, inputs.len(), cfg)?;
    let offline = t.elapsed().as_secs_f64();
    let field = Field::new(arch.field);
    let encoded = encode_inputs(&field, &arch, inputs)?;
    let t = Instant::now();
    let (outputs, ledger) = client_online_phase(ch, &arch, &mut bundle, &encoded, cfg)?;
    let online = t.elapsed().as_secs_f64();
    let t = Instant::now();
    client_check_phase(ch, &field, &bundle, &ledger, cfg)?;
    Ok(ClientOutcome {
        arch,
        outputs,
        counters: ch.counters(),
        he,
        timings: Timings {
            offline,
            online,
            check: t.elapsed().as_secs_f64(),
        },
    })
}
