//! Online phase: weight and input sharing, layer evaluation and the batched
//! MAC check.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::harness::channel::{kind, Channel};
use crate::harness::tamper::{linear_delta, nonlinear_tamper, TamperSpec};
use crate::linalg::{conv_direct, ConvParams};
use crate::nonlinear::{client_relu, holder_relu, ClientPrep, HolderPrep, NlContext, ReluGadget};
use crate::ot::OtBackend;
use crate::sharing::{open, open_to_client, AuthShare, AuthVec, Fresh, MacKey, Shares};
use crate::wire::{Reader, Writer};

use super::ledger::CheckLedger;
use super::model::{Architecture, LayerKind};
use super::prep::{LayerPrep, LinearTriple, OfflineBundle};

/// Holder: learns `R = R_0 + R_1` from the client's mask share, publishes
/// `L - R`, and both parties shift `[[R]]` by it to get `[[L]]`.
pub fn share_model_weights_holder(ch: &mut Channel, sh: &Shares, weights: &[Fe], masks: &AuthVec) -> Result<AuthVec> {
    let f = &sh.field;
    if masks.len() < weights.len() {
        return Err(Error::MaskExhausted("weight masks"));
    }
    let masks = masks.slice(0..weights.len());
    let r1 = ch.recv_fes(kind::WEIGHT_OFFSET, f, weights.len())?;
    let offset: Vec<Fe> = weights
        .iter()
        .zip(masks.val.iter().zip(&r1))
        .map(|(&l, (&a, &b))| f.sub(l, f.add(a, b)))
        .collect();
    ch.send_fes(kind::WEIGHT_OFFSET, f, &offset)?;
    Ok(sh.add_public_vec(&masks, &offset))
}

pub fn share_model_weights_client(ch: &mut Channel, sh: &Shares, count: usize, masks: &AuthVec) -> Result<AuthVec> {
    let f = &sh.field;
    if masks.len() < count {
        return Err(Error::MaskExhausted("weight masks"));
    }
    let masks = masks.slice(0..count);
    ch.send_fes(kind::WEIGHT_OFFSET, f, &masks.val)?;
    let offset = ch.recv_fes(kind::WEIGHT_OFFSET, f, count)?;
    Ok(sh.add_public_vec(&masks, &offset))
}

/// Client: sends `(x - xi, alpha x - zeta)` and keeps `(xi, zeta)`.
pub fn share_client_input<R: Rng + ?Sized>(ch: &mut Channel, sh: &Shares, x: &[Fe], rng: &mut R) -> Result<AuthVec> {
    let f = &sh.field;
    let alpha = sh.key.alpha.ok_or(Error::Param("only the client shares inputs".into()))?;
    let xi = f.random_vec(x.len(), rng);
    let zeta = f.random_vec(x.len(), rng);
    let mut w = Writer::new();
    let theirs: Vec<Fe> = x.iter().zip(&xi).map(|(&a, &b)| f.sub(a, b)).collect();
    let theirs_mac: Vec<Fe> = x.iter().zip(&zeta).map(|(&a, &b)| f.sub(f.mul(alpha, a), b)).collect();
    w.fes(f, &theirs).fes(f, &theirs_mac);
    ch.send(kind::INPUT_SHARE, w.finish())?;
    Ok(AuthVec::new(xi, zeta))
}

pub fn recv_client_input(ch: &mut Channel, sh: &Shares, n: usize) -> Result<AuthVec> {
    let body = ch.recv(kind::INPUT_SHARE)?;
    let mut r = Reader::new(&body);
    let val = r.fes_exact(&sh.field, n)?;
    let mac = r.fes_exact(&sh.field, n)?;
    r.finish()?;
    Ok(AuthVec::new(val, mac))
}

fn sub_vec(sh: &Shares, a: &AuthVec, b: &AuthVec) -> AuthVec {
    let s: Vec<AuthShare> = (0..a.len()).map(|i| sh.sub(a.get(i), b.get(i))).collect();
    AuthVec::from_shares(&s)
}

fn shape_err(what: &str) -> Error {
    Error::Shape(format!("triple does not match the {what} layer"))
}

/// Evaluates one linear layer on `[[input]]` with weights `[[weights]]`,
/// consuming `triple` and recording the openings in `ledger`.
pub fn linear_eval(
    ch: &mut Channel,
    sh: &Shares,
    layer: &LayerKind,
    weights: &AuthVec,
    input: &AuthVec,
    triple: &mut Fresh<LinearTriple>,
    ledger: &mut CheckLedger,
) -> Result<AuthVec> {
    let f = &sh.field;
    match (layer, triple.peek()) {
        (LayerKind::FullyConnected { d_in, d_out }, Some(LinearTriple::MatVec(t))) => {
            if (t.d1, t.d2) != (*d_out, *d_in) || weights.len() != d_in * d_out || input.len() != *d_in {
                return Err(shape_err("fully connected"));
            }
        }
        (LayerKind::Convolution { params }, Some(LinearTriple::Conv(t))) => {
            if t.par != *params || weights.len() != params.kernel_len() || input.len() != params.input_len() {
                return Err(shape_err("convolution"));
            }
        }
        (LayerKind::Relu, _) => return Err(Error::Shape("ReLU is not a linear layer".into())),
        (_, None) => return Err(Error::TripleReuse),
        _ => return Err(shape_err(layer.name())),
    }
    match triple.take()? {
        LinearTriple::MatVec(t) => {
            let (d1, d2) = (t.d1, t.d2);
            let mut diff = sub_vec(sh, weights, &t.x);
            diff.extend(&sub_vec(sh, input, &t.y));
            let opened = open(ch, sh, &diff, ledger)?;
            let (e, g) = opened.split_at(d1 * d2);
            let mut out = Vec::with_capacity(d1);
            for i in 0..d1 {
                let row = &e[i * d2..(i + 1) * d2];
                let xr = t.x.slice(i * d2..(i + 1) * d2);
                let val = f.add(f.add(f.dot(row, &t.y.val), f.dot(&xr.val, g)), t.z.val[i]);
                let mac = f.add(f.add(f.dot(row, &t.y.mac), f.dot(&xr.mac, g)), t.z.mac[i]);
                out.push(sh.add_public(AuthShare { val, mac }, f.dot(row, g)));
            }
            Ok(AuthVec::from_shares(&out))
        }
        LinearTriple::Conv(t) => {
            let par: ConvParams = t.par;
            let mut diff = sub_vec(sh, input, &t.x);
            diff.extend(&sub_vec(sh, weights, &t.y));
            let opened = open(ch, sh, &diff, ledger)?;
            let (e, g) = opened.split_at(par.input_len());
            let public = conv_direct(f, e, g, &par)?;
            let conv_pair = |x: &[Fe], y: &[Fe]| conv_direct(f, x, y, &par);
            let val = add3(f, &conv_pair(e, &t.y.val)?, &conv_pair(&t.x.val, g)?, &t.z.val);
            let mac = add3(f, &conv_pair(e, &t.y.mac)?, &conv_pair(&t.x.mac, g)?, &t.z.mac);
            Ok(sh.add_public_vec(&AuthVec::new(val, mac), &public))
        }
    }
}

fn add3(f: &Field, a: &[Fe], b: &[Fe], c: &[Fe]) -> Vec<Fe> {
    a.iter().zip(b).zip(c).map(|((&x, &y), &z)| f.add(f.add(x, y), z)).collect()
}

/// Settings shared by both parties for an online session.
#[derive(Clone, Copy)]
pub struct OnlineContext<'a> {
    pub sh: &'a Shares,
    pub gadget: &'a ReluGadget,
    pub ot: OtBackend,
    pub arch: &'a Architecture,
}

/// Splits the concatenated weight shares into one vector per layer.
pub fn split_weights(arch: &Architecture, all: &AuthVec) -> Result<Vec<AuthVec>> {
    if all.len() != arch.weight_count() {
        return Err(Error::LengthMismatch {
            expected: arch.weight_count(),
            got: all.len(),
        });
    }
    let mut at = 0;
    Ok(arch
        .layers
        .iter()
        .map(|l| {
            let n = l.weight_len();
            at += n;
            all.slice(at - n..at)
        })
        .collect())
}

type ReluStep<'s, N> =
    dyn FnMut(&mut Channel, usize, u64, &AuthVec, &mut LayerPrep<N>, &mut CheckLedger) -> Result<AuthVec> + 's;

#[allow(clippy::too_many_arguments)]
fn forward<N>(
    ch: &mut Channel,
    cx: &OnlineContext<'_>,
    weights: &[AuthVec],
    prep: &mut [LayerPrep<N>],
    query: usize,
    input: AuthVec,
    ledger: &mut CheckLedger,
    linear_hook: &dyn Fn(usize, &mut AuthVec),
    relu: &mut ReluStep<'_, N>,
) -> Result<AuthVec> {
    if prep.len() != cx.arch.layers.len() {
        return Err(Error::MaskExhausted("query material"));
    }
    let mut x = input;
    for (i, layer) in cx.arch.layers.iter().enumerate() {
        x = if layer.is_linear() {
            let t = prep[i].linear.as_mut().ok_or(Error::MaskExhausted("linear triple"))?;
            let mut v = linear_eval(ch, cx.sh, layer, &weights[i], &x, t, ledger)?;
            linear_hook(i, &mut v);
            v
        } else {
            let batch = (query * cx.arch.layers.len() + i) as u64;
            relu(ch, i, batch, &x, &mut prep[i], ledger)?
        };
    }
    Ok(x)
}

/// Holder side of one query. The result is only released to the client.
#[allow(clippy::too_many_arguments)]
pub fn holder_query<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &OnlineContext<'_>,
    weights: &[AuthVec],
    prep: &mut [LayerPrep<HolderPrep>],
    query: usize,
    ledger: &mut CheckLedger,
    tamper: &[TamperSpec],
    rng: &mut R,
) -> Result<()> {
    let f = cx.sh.field;
    let input = recv_client_input(ch, cx.sh, cx.arch.input_len)?;
    let hook = |layer: usize, v: &mut AuthVec| {
        if let (Some(d), Some(x)) = (linear_delta(&f, tamper, layer), v.val.first_mut()) {
            *x = f.add(*x, d);
        }
    };
    let mut relu = |ch: &mut Channel, layer: usize, batch: u64, v: &AuthVec, lp: &mut LayerPrep<HolderPrep>, ledger: &mut CheckLedger| {
        let nx = NlContext {
            sh: cx.sh,
            gadget: cx.gadget,
            ot: cx.ot,
            batch,
        };
        let t = nonlinear_tamper(&f, tamper, layer);
        Ok(holder_relu(ch, &nx, v, &mut lp.relu, &mut lp.scalars, ledger, &t, rng)?.relu)
    };
    let out = forward(ch, cx, weights, prep, query, input, ledger, &hook, &mut relu)?;
    open_to_client(ch, cx.sh, &out, ledger)?;
    Ok(())
}

/// Client side of one query: returns the reconstructed, not yet verified,
/// output vector.
#[allow(clippy::too_many_arguments)]
pub fn client_query<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &OnlineContext<'_>,
    weights: &[AuthVec],
    prep: &mut [LayerPrep<ClientPrep>],
    query: usize,
    x: &[Fe],
    ledger: &mut CheckLedger,
    rng: &mut R,
) -> Result<Vec<Fe>> {
    if x.len() != cx.arch.input_len {
        return Err(Error::LengthMismatch {
            expected: cx.arch.input_len,
            got: x.len(),
        });
    }
    let input = share_client_input(ch, cx.sh, x, rng)?;
    let mut relu = |ch: &mut Channel, _layer: usize, batch: u64, v: &AuthVec, lp: &mut LayerPrep<ClientPrep>, ledger: &mut CheckLedger| {
        let nx = NlContext {
            sh: cx.sh,
            gadget: cx.gadget,
            ot: cx.ot,
            batch,
        };
        Ok(client_relu(ch, &nx, v, &mut lp.relu, &mut lp.scalars, ledger, rng)?.relu)
    };
    let out = forward(ch, cx, weights, prep, query, input, ledger, &|_, _| {}, &mut relu)?;
    open_to_client(ch, cx.sh, &out, ledger)?.ok_or(Error::Abort)
}

fn first_fresh<N>(bundle: &OfflineBundle<N>) -> usize {
    bundle
        .queries
        .iter()
        .position(|q| q.iter().all(|l| l.linear.as_ref().is_none_or(|t| !t.is_consumed()) && l.relu.iter().all(|t| !t.is_consumed())))
        .unwrap_or(bundle.queries.len())
}

fn claim<N>(bundle: &OfflineBundle<N>, start: usize, count: usize) -> Result<()> {
    if start + count > bundle.queries.len() || first_fresh(bundle) > start {
        return Err(Error::MaskExhausted("offline queries"));
    }
    Ok(())
}

/// Holder side of a query batch: weight sharing, then every query the client
/// announces. Offline material is consumed in order.
#[allow(clippy::too_many_arguments)]
pub fn holder_online<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &OnlineContext<'_>,
    weights: &[Fe],
    bundle: &mut OfflineBundle<HolderPrep>,
    ledger: &mut CheckLedger,
    tamper: &[TamperSpec],
    rng: &mut R,
) -> Result<usize> {
    let body = ch.recv(kind::HELLO)?;
    let mut r = Reader::new(&body);
    let (start, count) = (r.u32()? as usize, r.u32()? as usize);
    r.finish()?;
    claim(bundle, start, count)?;
    let all = share_model_weights_holder(ch, cx.sh, weights, &bundle.masks)?;
    let per_layer = split_weights(cx.arch, &all)?;
    for q in start..start + count {
        holder_query(ch, cx, &per_layer, &mut bundle.queries[q], q, ledger, tamper, rng)?;
    }
    Ok(count)
}

/// Client side of a query batch. Returns the unverified outputs; release
/// them only after [`client_check`] passes.
pub fn client_online<R: Rng + ?Sized>(
    ch: &mut Channel,
    cx: &OnlineContext<'_>,
    bundle: &mut OfflineBundle<ClientPrep>,
    inputs: &[Vec<Fe>],
    ledger: &mut CheckLedger,
    rng: &mut R,
) -> Result<Vec<Vec<Fe>>> {
    let start = first_fresh(bundle);
    claim(bundle, start, inputs.len())?;
    let mut w = Writer::new();
    w.u32(start as u32).u32(inputs.len() as u32);
    ch.send(kind::HELLO, w.finish())?;
    let all = share_model_weights_client(ch, cx.sh, cx.arch.weight_count(), &bundle.masks)?;
    let per_layer = split_weights(cx.arch, &all)?;
    let mut outs = Vec::with_capacity(inputs.len());
    for (k, x) in inputs.iter().enumerate() {
        let q = start + k;
        outs.push(client_query(ch, cx, &per_layer, &mut bundle.queries[q], q, x, ledger, rng)?);
    }
    Ok(outs)
}

/// Holder side of the batched check. Returns `Err(Abort)` when the client
/// rejects.
pub fn holder_check(ch: &mut Channel, field: &Field, key: &MacKey, ledger: &CheckLedger) -> Result<()> {
    let body = ch.recv(kind::CHECK_SEED)?;
    let mut r = Reader::new(&body);
    let seed: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
    r.finish()?;
    let mut w = Writer::new();
    w.u64(ledger.open_count() as u64)
        .u64(ledger.pairs().len() as u64)
        .fe(field, ledger.q_share(field, key, seed));
    ch.send(kind::CHECK_SHARE, w.finish())?;
    let v = ch.recv(kind::VERDICT)?;
    match v.as_slice() {
        [1] => Ok(()),
        _ => Err(Error::Abort),
    }
}

/// Client side of the batched check. The seed is drawn here, after every
/// opening of the batch has been recorded.
pub fn client_check<R: Rng + ?Sized>(
    ch: &mut Channel,
    field: &Field,
    key: &MacKey,
    ledger: &CheckLedger,
    rng: &mut R,
) -> Result<()> {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    ch.send(kind::CHECK_SEED, seed.to_vec())?;
    let body = ch.recv(kind::CHECK_SHARE)?;
    let mut r = Reader::new(&body);
    let opened = r.u64()? as usize;
    let pairs = r.u64()? as usize;
    let q0 = r.fe(field)?;
    r.finish()?;
    let pass = opened == ledger.open_count()
        && pairs == ledger.pairs().len()
        && field.add(q0, ledger.q_share(field, key, seed)).is_zero();
    ch.send(kind::VERDICT, vec![pass as u8])?;
    if pass {
        Ok(())
    } else {
        Err(Error::Abort)
    }
}
