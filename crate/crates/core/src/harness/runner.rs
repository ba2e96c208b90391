//! Process-level party runners behind the command-line tool.
//!
//! Each stage opens its own connection. Between stages the offline store, the
//! check ledger and the client's pending outputs live in a state directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::{Architecture, CheckLedger, ClientOffline, HolderOffline, OfflineBundle};
use crate::error::{Error, Result};
use crate::fairness::{argmax, build_report, phase_name, FairnessReport, Metrics, Sample};
use crate::field::{Fe, Field};
use crate::harness::channel::{write_transcript, ByteCounters, Channel, Phase, DEFAULT_TIMEOUT};
use crate::harness::files::{load_dataset, load_model, pack_state, unpack_state, write_atomic, write_report};
use crate::harness::session::{
    client_check_phase, client_offline_phase, client_online_phase, encode_inputs, holder_check_phase,
    holder_offline_phase, holder_online_phase, SessionConfig,
};
use crate::harness::tamper::{check_targets, ledger_tamper};
use crate::nonlinear::ReluGadget;
use crate::wire::{Reader, Writer};

/// Environment variable that overrides the session seed.
pub const SEED_ENV: &str = "AUDITML_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_PARSE: i32 = 3;

pub fn exit_code<T>(r: &Result<T>) -> i32 {
    match r {
        Ok(_) => EXIT_OK,
        Err(Error::Abort) => EXIT_ABORT,
        Err(Error::Parse { .. }) => EXIT_PARSE,
        Err(_) => EXIT_FAILURE,
    }
}

/// The seed from [`SEED_ENV`] when set, else `fallback`.
pub fn seed_from_env(fallback: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::parse(SEED_ENV, format!("{s:?} is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Offline,
    Online,
    Check,
    All,
}

#[derive(Clone, Debug)]
pub struct Connection {
    pub endpoint: String,
    pub session: u64,
    pub timeout: Duration,
    /// How long the client keeps retrying the connect.
    pub patience: Duration,
    pub transcript: Option<PathBuf>,
}

impl Connection {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            session: 1,
            timeout: DEFAULT_TIMEOUT,
            patience: Duration::from_secs(30),
            transcript: None,
        }
    }

    fn listen(&self) -> Result<Channel> {
        let mut ch = Channel::listen(self.endpoint.as_str(), self.session)?;
        self.prepare(&mut ch);
        Ok(ch)
    }

    fn connect(&self) -> Result<Channel> {
        let mut ch = Channel::connect(&self.endpoint, self.session, self.patience)?;
        self.prepare(&mut ch);
        Ok(ch)
    }

    fn prepare(&self, ch: &mut Channel) {
        ch.set_timeout(self.timeout);
        if self.transcript.is_some() {
            ch.record_transcript();
        }
    }

    fn dump(&self, ch: &Channel) -> Result<()> {
        if let (Some(path), Some(frames)) = (&self.transcript, ch.transcript()) {
            let mut buf = Vec::new();
            write_transcript(frames, &mut buf)?;
            write_atomic(path, &buf)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HolderOptions {
    pub model: PathBuf,
    pub conn: Connection,
    pub state_dir: PathBuf,
    pub cfg: SessionConfig,
}

#[derive(Clone, Debug)]
pub struct ClientOptions {
    pub dataset: PathBuf,
    pub conn: Connection,
    pub state_dir: PathBuf,
    pub cfg: SessionConfig,
    pub epsilon: f64,
    pub delta: f64,
    pub report: PathBuf,
    /// Groups expected in the dataset; missing ones are reported as excluded.
    pub groups: Vec<String>,
}

const OFFLINE_FILE: &str = "offline.bin";
const LEDGER_FILE: &str = "ledger.bin";
const OUTPUTS_FILE: &str = "outputs.bin";
const METRICS_FILE: &str = "metrics.json";

/// Counters accumulated across stage invocations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct StageMetrics {
    counters: ByteCounters,
    rotations: u64,
    ct_mults: u64,
    seconds: BTreeMap<String, f64>,
}

impl StageMetrics {
    fn load(dir: &Path) -> Self {
        fs::read(dir.join(METRICS_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(METRICS_FILE), &serde_json::to_vec(self).expect("metrics serialize"))
    }

    fn absorb(&mut self, delta: &ByteCounters, stage: Phase, seconds: f64) {
        for i in 0..3 {
            self.counters.sent[i] += delta.sent[i];
            self.counters.received[i] += delta.received[i];
        }
        *self.seconds.entry(phase_name(stage).to_string()).or_default() += seconds;
    }

    fn report_metrics(&self, queries: usize, relus: usize) -> Metrics {
        let mut m = Metrics::from_counters(&self.counters);
        m.queries = queries as u64;
        m.relu_count = (queries * relus) as u64;
        m.rotations = self.rotations;
        m.ct_mults = self.ct_mults;
        m.seconds = self.seconds.clone();
        m
    }
}

fn read_state<N: crate::engine::PrepItem>(dir: &Path) -> Result<(Architecture, OfflineBundle<N>)> {
    let bytes = fs::read(dir.join(OFFLINE_FILE))
        .map_err(|e| Error::Param(format!("no offline store in {}: {e}", dir.display())))?;
    let (arch, blob) = unpack_state(&bytes)?;
    let gadget = ReluGadget::new(Field::new(arch.field))?;
    let bundle = OfflineBundle::from_bytes(&gadget, &blob)?;
    Ok((arch, bundle))
}

fn write_state<N: crate::engine::PrepItem>(dir: &Path, arch: &Architecture, bundle: &OfflineBundle<N>) -> Result<()> {
    let gadget = ReluGadget::new(Field::new(arch.field))?;
    write_atomic(&dir.join(OFFLINE_FILE), &pack_state(arch, &bundle.to_bytes(&gadget)))
}

fn read_ledger(dir: &Path, field: &Field, tamper: crate::engine::LedgerTamper) -> Result<CheckLedger> {
    let bytes = fs::read(dir.join(LEDGER_FILE))
        .map_err(|e| Error::Param(format!("no ledger in {}: {e}", dir.display())))?;
    CheckLedger::from_bytes(field, &bytes, tamper)
}

fn write_outputs(dir: &Path, field: &Field, outs: &[Vec<Fe>]) -> Result<()> {
    let mut w = Writer::new();
    w.u32(outs.len() as u32);
    for o in outs {
        w.fes(field, o);
    }
    write_atomic(&dir.join(OUTPUTS_FILE), &w.finish())
}

fn read_outputs(dir: &Path, field: &Field) -> Result<Vec<Vec<Fe>>> {
    let bytes = fs::read(dir.join(OUTPUTS_FILE))?;
    let mut r = Reader::new(&bytes);
    let n = r.u32()? as usize;
    let out = (0..n).map(|_| r.fes(field)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(out)
}

/// Runs one holder stage, or all of them on a single connection.
pub fn run_holder(opts: &HolderOptions, stage: Stage) -> Result<()> {
    let model = load_model(&opts.model)?;
    let field = Field::new(model.field);
    let arch = model.architecture();
    check_targets(&opts.cfg.tamper, &arch)?;
    let dir = &opts.state_dir;
    let mut ch = opts.conn.listen()?;
    let result = (|| -> Result<()> {
        match stage {
            Stage::Offline => {
                let (bundle, _) = holder_offline_phase(&mut ch, &model, &opts.cfg)?;
                write_state(dir, &arch, &bundle)
            }
            Stage::Online => {
                let (stored, mut bundle): (_, HolderOffline) = read_state(dir)?;
                if stored != arch {
                    return Err(Error::Param("offline store belongs to a different model".into()));
                }
                let ledger = holder_online_phase(&mut ch, &model, &mut bundle, &opts.cfg)?;
                write_state(dir, &arch, &bundle)?;
                write_atomic(&dir.join(LEDGER_FILE), &ledger.to_bytes(&field))
            }
            Stage::Check => {
                let (_, bundle): (_, HolderOffline) = read_state(dir)?;
                let ledger = read_ledger(dir, &field, ledger_tamper(&field, &opts.cfg.tamper))?;
                holder_check_phase(&mut ch, &field, &bundle, &ledger)
            }
            Stage::All => crate::harness::session::run_holder_all(&mut ch, &model, &opts.cfg).map(|_| ()),
        }
    })();
    opts.conn.dump(&ch)?;
    result
}

fn report_for(
    opts: &ClientOptions,
    samples: &[Sample],
    arch: &Architecture,
    outputs: &[Vec<Fe>],
    metrics: Metrics,
) -> Result<FairnessReport> {
    let field = Field::new(arch.field);
    let preds: Vec<usize> = outputs
        .iter()
        .map(|o| argmax(&field, o).ok_or_else(|| Error::Shape("empty model output".into())))
        .collect::<Result<_>>()?;
    build_report(&preds, samples, &opts.groups, opts.epsilon, opts.delta, metrics)
}

fn features(samples: &[Sample]) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s.features.clone()).collect()
}

/// Runs one client stage, or all of them. The check stage (and `All`) writes
/// the report; on abort the report carries only the abort flag and metrics.
pub fn run_client(opts: &ClientOptions, stage: Stage) -> Result<Option<FairnessReport>> {
    let samples = load_dataset(&opts.dataset)?;
    let dir = &opts.state_dir;
    let mut ch = opts.conn.connect()?;
    let mut metrics = if stage == Stage::All {
        StageMetrics::default()
    } else {
        StageMetrics::load(dir)
    };
    let before = ch.counters();
    let started = Instant::now();
    let result = (|| -> Result<Option<(FairnessReport, usize)>> {
        match stage {
            Stage::Offline => {
                let (arch, bundle, he) = client_offline_phase(&mut ch, samples.len(), &opts.cfg)?;
                metrics.rotations += he.rotations;
                metrics.ct_mults += he.ct_mults;
                write_state(dir, &arch, &bundle)?;
                Ok(None)
            }
            Stage::Online => {
                let (arch, mut bundle): (_, ClientOffline) = read_state(dir)?;
                let field = Field::new(arch.field);
                let inputs = encode_inputs(&field, &arch, &features(&samples))?;
                let (outs, ledger) = client_online_phase(&mut ch, &arch, &mut bundle, &inputs, &opts.cfg)?;
                write_state(dir, &arch, &bundle)?;
                write_atomic(&dir.join(LEDGER_FILE), &ledger.to_bytes(&field))?;
                write_outputs(dir, &field, &outs)?;
                Ok(None)
            }
            Stage::Check => {
                let (arch, bundle): (_, ClientOffline) = read_state(dir)?;
                let field = Field::new(arch.field);
                let ledger = read_ledger(dir, &field, Default::default())?;
                client_check_phase(&mut ch, &field, &bundle, &ledger, &opts.cfg)?;
                let outs = read_outputs(dir, &field)?;
                Ok(Some((report_for(opts, &samples, &arch, &outs, Metrics::default())?, arch.relu_count())))
            }
            Stage::All => {
                let out = crate::harness::session::run_client_all(&mut ch, &features(&samples), &opts.cfg)?;
                metrics.rotations += out.he.rotations;
                metrics.ct_mults += out.he.ct_mults;
                for (name, s) in [("offline", out.timings.offline), ("online", out.timings.online), ("check", out.timings.check)] {
                    metrics.seconds.insert(name.to_string(), s);
                }
                Ok(Some((
                    report_for(opts, &samples, &out.arch, &out.outputs, Metrics::default())?,
                    out.arch.relu_count(),
                )))
            }
        }
    })();
    let spent = ch.counters().since(&before);
    let phase = match stage {
        Stage::Offline => Phase::Offline,
        Stage::Online => Phase::Online,
        _ => Phase::Check,
    };
    if stage == Stage::All {
        metrics.counters = spent;
    } else {
        metrics.absorb(&spent, phase, started.elapsed().as_secs_f64());
        metrics.save(dir)?;
    }
    opts.conn.dump(&ch)?;

    match result {
        Ok(Some((mut report, relus))) => {
            report.metrics = metrics.report_metrics(samples.len(), relus);
            write_report(&opts.report, &report)?;
            Ok(Some(report))
        }
        Ok(None) => Ok(None),
        Err(Error::Abort) => {
            let relus = fs::read(dir.join(OFFLINE_FILE))
                .ok()
                .and_then(|b| unpack_state(&b).ok())
                .map_or(0, |(a, _)| a.relu_count());
            let report = FairnessReport::aborted(
                opts.epsilon,
                opts.delta,
                samples.len(),
                metrics.report_metrics(samples.len(), relus),
            );
            write_report(&opts.report, &report)?;
            Err(Error::Abort)
        }
        Err(e) => Err(e),
    }
}
