//! Garbled ReLU with authenticated outputs.
//!
//! The client garbles one sign circuit per activation offline and, for every
//! output wire, encrypts a pair of field elements under the truncated bodies of
//! the two output labels. Output wire `j < kappa` unlocks `iota_r + b alpha`
//! for the bit `b` of `v`; wire `kappa + j` unlocks `eta_r + b` and
//! `gamma_r + b alpha` for the sign bit (`j = 0`) or a constant zero. The
//! holder evaluates, decrypts the one entry its label selects, and the two
//! parties recombine the bit-weighted sums into `<alpha v>`, `<sign>` and
//! `<alpha sign>`. The first is a second, independent MAC share of the ReLU
//! input and goes into the consistency check; the sign is multiplied with the
//! input by a Beaver triple.

use rand::Rng;

use crate::engine::CheckLedger;
use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::gc::{build_sign_circuit, garble, gc_eval, BoolCircuit, GarbledCircuit, GarblerKeys, Hasher, Label};
use crate::harness::channel::{kind, Channel};
use crate::ot::{self, OtBackend};
use crate::sharing::{beaver_mul, AuthVec, Fresh, Party, ScalarTriple, Shares};
use crate::wire::{Reader, Writer};

/// The sign circuit and hash shared by both parties.
#[derive(Clone)]
pub struct ReluGadget {
    field: Field,
    circuit: BoolCircuit,
    hasher: Hasher,
}

impl ReluGadget {
    pub fn new(field: Field) -> Result<Self> {
        let circuit = build_sign_circuit(field.kappa(), field.p())?;
        Ok(Self {
            field,
            circuit,
            hasher: Hasher::new(),
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn circuit(&self) -> &BoolCircuit {
        &self.circuit
    }

    fn kappa(&self) -> usize {
        self.field.kappa() as usize
    }

    fn narrow_width(&self) -> usize {
        self.kappa().div_ceil(8)
    }

    fn wide_width(&self) -> usize {
        (2 * self.kappa()).div_ceil(8)
    }
}

/// What the holder receives per activation: the garbled circuit and the two
/// pad tables, each indexed by output wire and then label colour.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HolderPrep {
    pub gc: GarbledCircuit,
    pub ct: Vec<[u64; 2]>,
    pub ct_hat: Vec<[u128; 2]>,
}

/// The client's garbling secrets and pad randomness for one activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientPrep {
    pub keys: GarblerKeys,
    pub iota: Vec<Fe>,
    pub eta: Vec<Fe>,
    pub gamma: Vec<Fe>,
}

/// Garbles `count` sign circuits and builds the pad tables under `alpha`.
pub fn nl_preprocess<R: Rng + ?Sized>(
    gadget: &ReluGadget,
    alpha: Fe,
    count: usize,
    rng: &mut R,
) -> (Vec<HolderPrep>, Vec<ClientPrep>) {
    let f = &gadget.field;
    let k = gadget.kappa();
    let mut holder = Vec::with_capacity(count);
    let mut client = Vec::with_capacity(count);
    for _ in 0..count {
        let (gc, keys) = garble(&gadget.circuit, &gadget.hasher, rng);
        let iota = f.random_vec(k, rng);
        let eta = f.random_vec(k, rng);
        let gamma = f.random_vec(k, rng);
        let mut ct = vec![[0u64; 2]; k];
        let mut ct_hat = vec![[0u128; 2]; k];
        for i in 0..k {
            for b in [false, true] {
                let bit = f.elem(b as u64);
                let lab = keys.output_label(i, b);
                let iv = f.add(iota[i], f.mul(bit, alpha));
                ct[i][lab.color() as usize] = iv.value() ^ lab.trun(k as u32) as u64;

                let lab = keys.output_label(k + i, b);
                let ev = f.add(eta[i], bit);
                let gv = f.add(gamma[i], f.mul(bit, alpha));
                let packed = ((ev.value() as u128) << k) | gv.value() as u128;
                ct_hat[i][lab.color() as usize] = packed ^ lab.trun(2 * k as u32);
            }
        }
        holder.push(HolderPrep { gc, ct, ct_hat });
        client.push(ClientPrep { keys, iota, eta, gamma });
    }
    (holder, client)
}

impl HolderPrep {
    pub fn write(&self, gadget: &ReluGadget, w: &mut Writer) {
        self.gc.write(w);
        let (nw, ww) = (gadget.narrow_width(), gadget.wide_width());
        for pair in &self.ct {
            for &e in pair {
                w.uint(e as u128, nw);
            }
        }
        for pair in &self.ct_hat {
            for &e in pair {
                w.uint(e, ww);
            }
        }
    }

    pub fn read(gadget: &ReluGadget, r: &mut Reader<'_>) -> Result<Self> {
        let gc = GarbledCircuit::read(r)?;
        let k = gadget.kappa();
        let (nw, ww) = (gadget.narrow_width(), gadget.wide_width());
        let mut ct = vec![[0u64; 2]; k];
        for pair in ct.iter_mut() {
            for e in pair.iter_mut() {
                *e = r.uint(nw)? as u64;
            }
        }
        let mut ct_hat = vec![[0u128; 2]; k];
        for pair in ct_hat.iter_mut() {
            for e in pair.iter_mut() {
                *e = r.uint(ww)?;
            }
        }
        Ok(Self { gc, ct, ct_hat })
    }
}

impl ClientPrep {
    pub fn write(&self, field: &Field, w: &mut Writer) {
        self.keys.write(w);
        w.fes(field, &self.iota).fes(field, &self.eta).fes(field, &self.gamma);
    }

    pub fn read(field: &Field, r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            keys: GarblerKeys::read(r)?,
            iota: r.fes(field)?,
            eta: r.fes(field)?,
            gamma: r.fes(field)?,
        })
    }
}

/// Client side of the offline transfer: all garbled material in one frame.
pub fn send_prep(ch: &mut Channel, gadget: &ReluGadget, prep: &[HolderPrep]) -> Result<()> {
    let mut w = Writer::new();
    w.u32(prep.len() as u32);
    for p in prep {
        p.write(gadget, &mut w);
    }
    ch.send(kind::GARBLED_CIRCUIT, w.finish())
}

pub fn recv_prep(ch: &mut Channel, gadget: &ReluGadget) -> Result<Vec<HolderPrep>> {
    let body = ch.recv(kind::GARBLED_CIRCUIT)?;
    let mut r = Reader::new(&body);
    let n = r.u32()? as usize;
    let out = (0..n.min(r.remaining())).map(|_| HolderPrep::read(gadget, &mut r)).collect::<Result<Vec<_>>>()?;
    if out.len() != n {
        return Err(Error::Framing(format!("{n} garbled circuits announced")));
    }
    r.finish()?;
    Ok(out)
}

/// How the bit-weighted sums are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recombine {
    Plain,
    /// Drops the low `s` bits from the `alpha v` sum, giving `alpha (v >> s)`.
    /// The sign sums are unaffected.
    TruncateS(u32),
}

/// One party's shares of `alpha v`, `sign` and `alpha sign` for a batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GShares {
    pub g1: Vec<Fe>,
    pub g2: Vec<Fe>,
    pub g3: Vec<Fe>,
}

fn weighted(field: &Field, bits: &[Fe], shift: u32) -> Fe {
    let mut acc = Fe::ZERO;
    for (j, &b) in bits.iter().enumerate().rev() {
        if (j as u32) < shift {
            break;
        }
        acc = field.add(field.add(acc, acc), b);
    }
    acc
}

/// Recombines per-activation bit values. The holder passes its decrypted
/// `(c, d, e)`; the client passes its `(iota_r, eta_r, gamma_r)` and gets the
/// negated sums, so the two results add to the intended values.
pub fn recombine(field: &Field, party: Party, bits: [&[Vec<Fe>]; 3], mode: Recombine) -> Result<GShares> {
    let n = bits[0].len();
    if bits[1].len() != n || bits[2].len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: bits[1].len().min(bits[2].len()),
        });
    }
    let shift = match mode {
        Recombine::Plain => 0,
        Recombine::TruncateS(s) => s,
    };
    let sign = |x: Fe| if party.is_holder() { x } else { field.neg(x) };
    let mut out = GShares::default();
    for ((c, d), e) in bits[0].iter().zip(bits[1]).zip(bits[2]).take(n) {
        out.g1.push(sign(weighted(field, c, shift)));
        out.g2.push(sign(weighted(field, d, 0)));
        out.g3.push(sign(weighted(field, e, 0)));
    }
    Ok(out)
}

/// Holder-side deviations in the garbled evaluation, indexed by activation
/// within the call.
#[derive(Clone, Debug, Default)]
pub struct NlTamper {
    /// Added to the holder's input share before it is bit-decomposed.
    pub input_delta: Vec<(usize, Fe)>,
    /// `(activation, input wire)`: flips the low bit of that input label.
    pub label_flip: Vec<(usize, usize)>,
}

/// Per-call protocol settings shared by both parties.
#[derive(Clone, Copy)]
pub struct NlContext<'a> {
    pub sh: &'a Shares,
    pub gadget: &'a ReluGadget,
    pub ot: OtBackend,
    /// Distinguishes OT batches within a session.
    pub batch: u64,
}

/// One party's output of a ReLU batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonlinResult {
    pub relu: AuthVec,
    /// This party's share of `alpha v` derived from the garbled outputs.
    pub xi: Vec<Fe>,
}

fn bits(v: u64, k: usize) -> impl Iterator<Item = bool> {
    (0..k).map(move |i| (v >> i) & 1 == 1)
}

fn take_all<T>(fresh: &mut [Fresh<T>], n: usize) -> Result<Vec<T>> {
    if fresh.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: fresh.len(),
        });
    }
    fresh.iter_mut().map(Fresh::take).collect()
}

fn finish(
    ch: &mut Channel,
    cx: &NlContext<'_>,
    v: &AuthVec,
    g: GShares,
    triples: &mut [Fresh<ScalarTriple>],
    ledger: &mut CheckLedger,
) -> Result<NonlinResult> {
    ledger.record_pairs(&v.mac, &g.g1);
    let sign = AuthVec::new(g.g2, g.g3);
    let relu = beaver_mul(ch, cx.sh, v, &sign, triples, ledger)?;
    Ok(NonlinResult { relu, xi: g.g1 })
}

/// Holder half of a ReLU batch over the shares `v`.
#[allow(clippy::too_many_arguments)]
pub fn holder_relu<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &NlContext<'_>,
    v: &AuthVec,
    prep: &mut [Fresh<HolderPrep>],
    triples: &mut [Fresh<ScalarTriple>],
    ledger: &mut CheckLedger,
    tamper: &NlTamper,
    rng: &mut R,
) -> Result<NonlinResult> {
    let f = &cx.gadget.field;
    let k = cx.gadget.kappa();
    let n = v.len();
    let prep = take_all(prep, n)?;

    let mut input = v.val.clone();
    for &(a, d) in &tamper.input_delta {
        if a < n {
            input[a] = f.add(input[a], d);
        }
    }
    let choices: Vec<bool> = input.iter().flat_map(|x| bits(x.value(), k)).collect();
    let mine = ot::receive(ch, cx.ot, cx.batch, &choices, rng)?;
    let body = ch.recv(kind::CLIENT_LABELS)?;
    let mut r = Reader::new(&body);
    let theirs = (0..n * k).map(|_| r.u128()).collect::<Result<Vec<_>>>()?;
    r.finish()?;

    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mask = (1u128 << k) - 1;
    for (a, p) in prep.iter().enumerate() {
        let mut labels: Vec<Label> = theirs[a * k..(a + 1) * k].iter().map(|&l| Label(l)).collect();
        labels.extend(mine[a * k..(a + 1) * k].iter().map(|&l| Label(l)));
        for &(ta, w) in &tamper.label_flip {
            if ta == a && w < labels.len() {
                labels[w].0 ^= 1;
            }
        }
        let out = gc_eval(&cx.gadget.circuit, &p.gc, &cx.gadget.hasher, &labels)?;
        let (mut ca, mut da, mut ea) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
        for i in 0..k {
            let lab = out[i];
            let x = p.ct[i][lab.color() as usize] ^ lab.trun(k as u32) as u64;
            ca.push(f.elem(x));
            let lab = out[k + i];
            let y = p.ct_hat[i][lab.color() as usize] ^ lab.trun(2 * k as u32);
            da.push(f.elem((y >> k) as u64));
            ea.push(f.elem((y & mask) as u64));
        }
        c.push(ca);
        d.push(da);
        e.push(ea);
    }
    let g = recombine(f, Party::Holder, [&c, &d, &e], Recombine::Plain)?;
    finish(ch, cx, v, g, triples, ledger)
}

/// Client half of a ReLU batch over the shares `v`.
pub fn client_relu<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &NlContext<'_>,
    v: &AuthVec,
    prep: &mut [Fresh<ClientPrep>],
    triples: &mut [Fresh<ScalarTriple>],
    ledger: &mut CheckLedger,
    rng: &mut R,
) -> Result<NonlinResult> {
    let f = &cx.gadget.field;
    let k = cx.gadget.kappa();
    let n = v.len();
    let prep = take_all(prep, n)?;

    let pairs: Vec<(u128, u128)> = prep
        .iter()
        .flat_map(|p| (k..2 * k).map(move |w| (p.keys.input_label(w, false).0, p.keys.input_label(w, true).0)))
        .collect();
    ot::send(ch, cx.ot, cx.batch, &pairs, rng)?;
    let mut w = Writer::with_capacity(16 * n * k);
    for (p, x) in prep.iter().zip(&v.val) {
        for (i, b) in bits(x.value(), k).enumerate() {
            w.u128(p.keys.input_label(i, b).0);
        }
    }
    ch.send(kind::CLIENT_LABELS, w.finish())?;

    let iota: Vec<Vec<Fe>> = prep.iter().map(|p| p.iota.clone()).collect();
    let eta: Vec<Vec<Fe>> = prep.iter().map(|p| p.eta.clone()).collect();
    let gamma: Vec<Vec<Fe>> = prep.iter().map(|p| p.gamma.clone()).collect();
    let g = recombine(f, Party::Client, [&iota, &eta, &gamma], Recombine::Plain)?;
    finish(ch, cx, v, g, triples, ledger)
}
