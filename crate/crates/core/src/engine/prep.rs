//! Offline material for a batch of queries and its on-disk encoding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::harness::channel::Channel;
use crate::linalg::ConvParams;
use crate::nonlinear::{nl_preprocess, recv_prep, send_prep, ClientPrep, HolderPrep, ReluGadget};
use crate::sharing::{AuthShare, AuthVec, Fresh, MacKey, Party, ScalarTriple};
use crate::triples::{ClientTriples, ConvTriple, HolderTriples, MatVecTriple};
use crate::wire::{Reader, Writer};

use super::model::{Architecture, LayerKind};

const MAGIC: &[u8; 8] = b"AUDITPRE";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinearTriple {
    MatVec(MatVecTriple),
    Conv(ConvTriple),
}

/// One layer's share of a query's correlated randomness.
#[derive(Clone, Debug)]
pub struct LayerPrep<N> {
    pub linear: Option<Fresh<LinearTriple>>,
    pub scalars: Vec<Fresh<ScalarTriple>>,
    pub relu: Vec<Fresh<N>>,
}

impl<N> LayerPrep<N> {
    fn empty() -> Self {
        Self {
            linear: None,
            scalars: Vec::new(),
            relu: Vec::new(),
        }
    }
}

/// Everything one party needs to run a batch of queries online.
#[derive(Clone, Debug)]
pub struct OfflineBundle<N> {
    pub key: MacKey,
    /// Authenticated random masks covering every weight, in layer order.
    pub masks: AuthVec,
    pub queries: Vec<Vec<LayerPrep<N>>>,
}

pub type HolderOffline = OfflineBundle<HolderPrep>;
pub type ClientOffline = OfflineBundle<ClientPrep>;

/// Per-activation garbled material that can be stored.
pub trait PrepItem: Sized {
    fn write_item(&self, gadget: &ReluGadget, w: &mut Writer);
    fn read_item(gadget: &ReluGadget, r: &mut Reader<'_>) -> Result<Self>;
}

impl PrepItem for HolderPrep {
    fn write_item(&self, gadget: &ReluGadget, w: &mut Writer) {
        self.write(gadget, w);
    }

    fn read_item(gadget: &ReluGadget, r: &mut Reader<'_>) -> Result<Self> {
        HolderPrep::read(gadget, r)
    }
}

impl PrepItem for ClientPrep {
    fn write_item(&self, gadget: &ReluGadget, w: &mut Writer) {
        self.write(gadget.field(), w);
    }

    fn read_item(gadget: &ReluGadget, r: &mut Reader<'_>) -> Result<Self> {
        ClientPrep::read(gadget.field(), r)
    }
}

/// Holder half of the offline phase for `queries` queries of `arch`.
pub fn holder_offline(
    ch: &mut Channel,
    tr: &mut HolderTriples,
    gadget: &ReluGadget,
    arch: &Architecture,
    queries: usize,
) -> Result<HolderOffline> {
    let masks = tr.gen_masks(ch, arch.weight_count())?;
    let mut out = Vec::with_capacity(queries);
    for _ in 0..queries {
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (l, &(d_in, _)) in arch.layers.iter().zip(&arch.dims()) {
            let mut lp = LayerPrep::empty();
            match l {
                LayerKind::FullyConnected { d_in, d_out } => {
                    lp.linear = Some(Fresh::new(LinearTriple::MatVec(tr.gen_matvec(ch, *d_out, *d_in)?)));
                }
                LayerKind::Convolution { params } => {
                    lp.linear = Some(Fresh::new(LinearTriple::Conv(tr.gen_conv(ch, params)?)));
                }
                LayerKind::Relu => {
                    lp.scalars = tr.gen_scalar(ch, d_in)?.into_iter().map(Fresh::new).collect();
                    let gcs = recv_prep(ch, gadget)?;
                    if gcs.len() != d_in {
                        return Err(Error::LengthMismatch {
                            expected: d_in,
                            got: gcs.len(),
                        });
                    }
                    lp.relu = gcs.into_iter().map(Fresh::new).collect();
                }
            }
            layers.push(lp);
        }
        out.push(layers);
    }
    Ok(OfflineBundle {
        key: tr.mac_key(),
        masks,
        queries: out,
    })
}

/// Client half of the offline phase. `gc_rng` drives garbling.
pub fn client_offline<R: Rng + ?Sized>(
    ch: &mut Channel,
    tr: &mut ClientTriples,
    gadget: &ReluGadget,
    arch: &Architecture,
    queries: usize,
    gc_rng: &mut R,
) -> Result<ClientOffline> {
    let masks = tr.gen_masks(ch, arch.weight_count())?;
    let mut out = Vec::with_capacity(queries);
    for _ in 0..queries {
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (l, &(d_in, _)) in arch.layers.iter().zip(&arch.dims()) {
            let mut lp = LayerPrep::empty();
            match l {
                LayerKind::FullyConnected { d_in, d_out } => {
                    lp.linear = Some(Fresh::new(LinearTriple::MatVec(tr.gen_matvec(ch, *d_out, *d_in)?)));
                }
                LayerKind::Convolution { params } => {
                    lp.linear = Some(Fresh::new(LinearTriple::Conv(tr.gen_conv(ch, params)?)));
                }
                LayerKind::Relu => {
                    lp.scalars = tr.gen_scalar(ch, d_in)?.into_iter().map(Fresh::new).collect();
                    let (hp, cp) = nl_preprocess(gadget, tr.alpha(), d_in, gc_rng);
                    send_prep(ch, gadget, &hp)?;
                    lp.relu = cp.into_iter().map(Fresh::new).collect();
                }
            }
            layers.push(lp);
        }
        out.push(layers);
    }
    Ok(OfflineBundle {
        key: tr.mac_key(),
        masks,
        queries: out,
    })
}

fn write_auth(field: &Field, w: &mut Writer, a: &AuthVec) {
    w.fes(field, &a.val).fes(field, &a.mac);
}

fn read_auth(field: &Field, r: &mut Reader<'_>) -> Result<AuthVec> {
    let val = r.fes(field)?;
    let mac = r.fes_exact(field, val.len())?;
    Ok(AuthVec::new(val, mac))
}

fn write_conv_params(w: &mut Writer, p: &ConvParams) {
    for v in [p.in_w, p.in_h, p.in_c, p.half, p.out_c, p.pad, p.stride] {
        w.u32(v as u32);
    }
}

fn read_conv_params(r: &mut Reader<'_>) -> Result<ConvParams> {
    let mut v = [0usize; 7];
    for x in v.iter_mut() {
        *x = r.u32()? as usize;
    }
    let p = ConvParams {
        in_w: v[0],
        in_h: v[1],
        in_c: v[2],
        half: v[3],
        out_c: v[4],
        pad: v[5],
        stride: v[6],
    };
    p.validate()?;
    Ok(p)
}

fn write_key(field: &Field, w: &mut Writer, k: &MacKey) {
    w.u8(k.party as u8).fe(field, k.alpha_share);
    match k.alpha {
        Some(a) => w.u8(1).fe(field, a),
        None => w.u8(0),
    };
}

fn read_key(field: &Field, r: &mut Reader<'_>) -> Result<MacKey> {
    let party = match r.u8()? {
        0 => Party::Holder,
        1 => Party::Client,
        t => return Err(Error::Framing(format!("unknown party tag {t}"))),
    };
    let alpha_share = r.fe(field)?;
    let alpha = match r.u8()? {
        0 => None,
        _ => Some(r.fe(field)?),
    };
    Ok(MacKey {
        party,
        alpha_share,
        alpha,
    })
}

fn write_scalar(field: &Field, w: &mut Writer, t: &ScalarTriple) {
    for s in [t.x, t.y, t.z] {
        w.fe(field, s.val).fe(field, s.mac);
    }
}

fn read_scalar(field: &Field, r: &mut Reader<'_>) -> Result<ScalarTriple> {
    let mut s = [AuthShare::default(); 3];
    for x in s.iter_mut() {
        x.val = r.fe(field)?;
        x.mac = r.fe(field)?;
    }
    Ok(ScalarTriple {
        x: s[0],
        y: s[1],
        z: s[2],
    })
}

fn write_linear(field: &Field, w: &mut Writer, t: &LinearTriple) {
    match t {
        LinearTriple::MatVec(m) => {
            w.u8(1).u32(m.d1 as u32).u32(m.d2 as u32);
            for a in [&m.x, &m.y, &m.z] {
                write_auth(field, w, a);
            }
        }
        LinearTriple::Conv(c) => {
            w.u8(2);
            write_conv_params(w, &c.par);
            for a in [&c.x, &c.y, &c.z] {
                write_auth(field, w, a);
            }
        }
    }
}

fn read_linear(field: &Field, r: &mut Reader<'_>) -> Result<LinearTriple> {
    match r.u8()? {
        1 => {
            let d1 = r.u32()? as usize;
            let d2 = r.u32()? as usize;
            let x = read_auth(field, r)?;
            let y = read_auth(field, r)?;
            let z = read_auth(field, r)?;
            if x.len() != d1 * d2 || y.len() != d2 || z.len() != d1 {
                return Err(Error::Framing("matrix-vector triple shape".into()));
            }
            Ok(LinearTriple::MatVec(MatVecTriple { d1, d2, x, y, z }))
        }
        2 => {
            let par = read_conv_params(r)?;
            let x = read_auth(field, r)?;
            let y = read_auth(field, r)?;
            let z = read_auth(field, r)?;
            if x.len() != par.input_len() || y.len() != par.kernel_len() || z.len() != par.output_len() {
                return Err(Error::Framing("convolution triple shape".into()));
            }
            Ok(LinearTriple::Conv(ConvTriple { par, x, y, z }))
        }
        t => Err(Error::Framing(format!("unknown triple tag {t}"))),
    }
}

/// Consumed entries are written as absent and read back as consumed.
fn write_fresh<T>(w: &mut Writer, f: &Fresh<T>, mut item: impl FnMut(&mut Writer, &T)) {
    match f.peek() {
        Some(t) => {
            w.u8(1);
            item(w, t);
        }
        None => {
            w.u8(0);
        }
    }
}

fn read_fresh<T>(r: &mut Reader<'_>, item: impl FnOnce(&mut Reader<'_>) -> Result<T>) -> Result<Fresh<T>> {
    Ok(match r.u8()? {
        0 => Fresh::consumed(),
        _ => Fresh::new(item(r)?),
    })
}

impl<N: PrepItem> OfflineBundle<N> {
    pub fn to_bytes(&self, gadget: &ReluGadget) -> Vec<u8> {
        let field = gadget.field();
        let mut w = Writer::new();
        w.bytes(MAGIC).u64(field.p());
        write_key(field, &mut w, &self.key);
        write_auth(field, &mut w, &self.masks);
        w.u32(self.queries.len() as u32);
        for q in &self.queries {
            w.u32(q.len() as u32);
            for l in q {
                match &l.linear {
                    Some(t) => {
                        w.u8(1);
                        write_fresh(&mut w, t, |w, t| write_linear(field, w, t));
                    }
                    None => {
                        w.u8(0);
                    }
                }
                w.u32(l.scalars.len() as u32);
                for s in &l.scalars {
                    write_fresh(&mut w, s, |w, t| write_scalar(field, w, t));
                }
                w.u32(l.relu.len() as u32);
                for p in &l.relu {
                    write_fresh(&mut w, p, |w, t| t.write_item(gadget, w));
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(gadget: &ReluGadget, bytes: &[u8]) -> Result<Self> {
        let field = gadget.field();
        let mut r = Reader::new(bytes);
        if r.bytes(8)? != MAGIC {
            return Err(Error::Framing("not an offline store".into()));
        }
        let p = r.u64()?;
        if p != field.p() {
            return Err(Error::Param(format!("store was generated for p = {p}")));
        }
        let key = read_key(field, &mut r)?;
        let masks = read_auth(field, &mut r)?;
        let nq = r.u32()? as usize;
        let mut queries = Vec::with_capacity(nq.min(r.remaining()));
        for _ in 0..nq {
            let nl = r.u32()? as usize;
            let mut layers = Vec::with_capacity(nl.min(r.remaining()));
            for _ in 0..nl {
                let linear = match r.u8()? {
                    0 => None,
                    _ => Some(read_fresh(&mut r, |r| read_linear(field, r))?),
                };
                let ns = r.u32()? as usize;
                let scalars = (0..ns)
                    .map(|_| read_fresh(&mut r, |r| read_scalar(field, r)))
                    .collect::<Result<_>>()?;
                let np = r.u32()? as usize;
                let relu = (0..np)
                    .map(|_| read_fresh(&mut r, |r| N::read_item(gadget, r)))
                    .collect::<Result<_>>()?;
                layers.push(LayerPrep { linear, scalars, relu });
            }
            queries.push(layers);
        }
        r.finish()?;
        Ok(Self { key, masks, queries })
    }

    /// Queries whose material is still entirely unused.
    pub fn fresh_queries(&self) -> usize {
        self.queries
            .iter()
            .filter(|q| {
                q.iter().all(|l| {
                    l.linear.as_ref().is_none_or(|t| !t.is_consumed())
                        && l.scalars.iter().all(|t| !t.is_consumed())
                        && l.relu.iter().all(|t| !t.is_consumed())
                })
            })
            .count()
    }
}
