//! Boolean circuits and half-gates garbling with free XOR and
//! point-and-permute, plus the sign circuit used for ReLU.
//!
//! Labels are 128-bit. The permute (colour) bit is the most significant bit;
//! the remaining 127 bits form the label body that the nonlinear layer
//! truncates into one-time-pad keys.

use aes::cipher::{BlockCipherEncrypt, KeyInit};
use aes::{Aes128, Block};
use rand::Rng;

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

/// Label length in bits.
pub const LABEL_BITS: u32 = 128;
pub const LABEL_BYTES: usize = 16;

const COLOR: u128 = 1 << 127;

/// A garbled wire label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Label(pub u128);

impl Label {
    /// Point-and-permute bit.
    pub fn color(self) -> bool {
        self.0 & COLOR != 0
    }

    /// The bits after the colour bit.
    pub fn body(self) -> u128 {
        self.0 & !COLOR
    }

    /// The `h` least-significant bits of the body.
    pub fn trun(self, h: u32) -> u128 {
        assert!(h < LABEL_BITS, "truncation wider than the label body");
        self.body() & ((1u128 << h) - 1)
    }

    fn xor(self, o: Label) -> Label {
        Label(self.0 ^ o.0)
    }
}

/// Splits a `lambda`-bit label into its leading colour bit and the remaining
/// `lambda - 1` bits.
pub fn parse_label(bits: u128, lambda: u32) -> (bool, u128) {
    assert!((2..=LABEL_BITS).contains(&lambda));
    let top = 1u128 << (lambda - 1);
    (bits & top != 0, bits & (top - 1))
}

/// A circuit wire or a folded constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bit {
    Const(bool),
    Wire(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gate {
    Xor(usize, usize),
    And(usize, usize),
    Not(usize),
}

/// A boolean circuit in topological order. Wires `0..inputs` are inputs and
/// gate `g` drives wire `inputs + g`.
#[derive(Clone, Debug)]
pub struct BoolCircuit {
    inputs: usize,
    gates: Vec<Gate>,
    outputs: Vec<Bit>,
    and_count: usize,
}

/// Incremental circuit construction with constant folding.
pub struct Builder {
    inputs: usize,
    gates: Vec<Gate>,
    and_count: usize,
}

impl Builder {
    pub fn new(inputs: usize) -> Self {
        Self {
            inputs,
            gates: Vec::new(),
            and_count: 0,
        }
    }

    pub fn input(&self, i: usize) -> Bit {
        assert!(i < self.inputs);
        Bit::Wire(i)
    }

    fn push(&mut self, g: Gate) -> Bit {
        self.gates.push(g);
        Bit::Wire(self.inputs + self.gates.len() - 1)
    }

    pub fn not(&mut self, a: Bit) -> Bit {
        match a {
            Bit::Const(v) => Bit::Const(!v),
            Bit::Wire(w) => self.push(Gate::Not(w)),
        }
    }

    pub fn xor(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Const(x), Bit::Const(y)) => Bit::Const(x ^ y),
            (Bit::Const(false), w) | (w, Bit::Const(false)) => w,
            (Bit::Const(true), w) | (w, Bit::Const(true)) => self.not(w),
            (Bit::Wire(x), Bit::Wire(y)) if x == y => Bit::Const(false),
            (Bit::Wire(x), Bit::Wire(y)) => self.push(Gate::Xor(x, y)),
        }
    }

    pub fn and(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Const(x), Bit::Const(y)) => Bit::Const(x & y),
            (Bit::Const(false), _) | (_, Bit::Const(false)) => Bit::Const(false),
            (Bit::Const(true), w) | (w, Bit::Const(true)) => w,
            (Bit::Wire(x), Bit::Wire(y)) if x == y => Bit::Wire(x),
            (Bit::Wire(x), Bit::Wire(y)) => {
                self.and_count += 1;
                self.push(Gate::And(x, y))
            }
        }
    }

    /// `if s { x } else { y }`, one AND per call.
    pub fn mux(&mut self, s: Bit, x: Bit, y: Bit) -> Bit {
        let d = self.xor(x, y);
        let t = self.and(s, d);
        self.xor(y, t)
    }

    /// Ripple-carry `x + y + carry_in`; returns `(sum bits, carry out)`.
    pub fn add(&mut self, x: &[Bit], y: &[Bit], carry_in: Bit) -> (Vec<Bit>, Bit) {
        assert_eq!(x.len(), y.len());
        let mut c = carry_in;
        let mut out = Vec::with_capacity(x.len());
        for (&a, &b) in x.iter().zip(y) {
            let axc = self.xor(a, c);
            let bxc = self.xor(b, c);
            out.push(self.xor(axc, b));
            let t = self.and(axc, bxc);
            c = self.xor(t, c);
        }
        (out, c)
    }

    /// `x - k` for a public `k` over `x.len()` bits; the carry out is set iff
    /// `x >= k`.
    pub fn sub_const(&mut self, x: &[Bit], k: u128) -> (Vec<Bit>, Bit) {
        let nk: Vec<Bit> = (0..x.len()).map(|i| Bit::Const((k >> i) & 1 == 0)).collect();
        self.add(x, &nk, Bit::Const(true))
    }

    pub fn finish(self, outputs: Vec<Bit>) -> BoolCircuit {
        BoolCircuit {
            inputs: self.inputs,
            gates: self.gates,
            outputs,
            and_count: self.and_count,
        }
    }
}

fn bits_of(v: u128, n: usize) -> Vec<bool> {
    (0..n).map(|i| (v >> i) & 1 == 1).collect()
}

impl BoolCircuit {
    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn and_count(&self) -> usize {
        self.and_count
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn outputs(&self) -> &[Bit] {
        &self.outputs
    }

    /// Plaintext evaluation.
    pub fn eval(&self, input: &[bool]) -> Result<Vec<bool>> {
        if input.len() != self.inputs {
            return Err(Error::LengthMismatch {
                expected: self.inputs,
                got: input.len(),
            });
        }
        let mut w = input.to_vec();
        w.reserve(self.gates.len());
        for g in &self.gates {
            let v = match *g {
                Gate::Xor(a, b) => w[a] ^ w[b],
                Gate::And(a, b) => w[a] & w[b],
                Gate::Not(a) => !w[a],
            };
            w.push(v);
        }
        Ok(self
            .outputs
            .iter()
            .map(|o| match *o {
                Bit::Const(v) => v,
                Bit::Wire(i) => w[i],
            })
            .collect())
    }
}

/// The ReLU sign circuit over `kappa`-bit shares of `v` in `F_p`.
///
/// Inputs `0..kappa` are the client's share bits and `kappa..2 kappa` the
/// holder's, both LSB-first. The holder's share is first reduced mod `p` so
/// any `kappa`-bit string is a valid input. Outputs `0..kappa` are the bits
/// of `v`, output `kappa` is 1 iff `v < ceil(p / 2)`, and the remaining
/// `kappa - 1` outputs are constant zero.
pub fn build_sign_circuit(kappa: u32, p: u64) -> Result<BoolCircuit> {
    let k = kappa as usize;
    if !(2..=63).contains(&kappa) || p >= 1u64 << kappa || p <= 1u64 << (kappa - 1) {
        return Err(Error::Param(format!("prime {p} is not a {kappa}-bit number")));
    }
    let mut b = Builder::new(2 * k);
    let client: Vec<Bit> = (0..k).map(|i| b.input(i)).collect();
    let holder: Vec<Bit> = (k..2 * k).map(|i| b.input(i)).collect();

    let (less_p, ge) = b.sub_const(&holder, p as u128);
    let holder: Vec<Bit> = (0..k).map(|i| b.mux(ge, less_p[i], holder[i])).collect();

    let (mut sum, carry) = b.add(&client, &holder, Bit::Const(false));
    sum.push(carry);
    let (reduced, ge) = b.sub_const(&sum, p as u128);
    let v: Vec<Bit> = (0..k).map(|i| b.mux(ge, reduced[i], sum[i])).collect();

    let half = p.div_ceil(2) as u128;
    let (_, ge_half) = b.sub_const(&v, half);
    let sign = b.not(ge_half);

    let mut outputs = v;
    outputs.push(sign);
    outputs.extend(std::iter::repeat_n(Bit::Const(false), k - 1));
    Ok(b.finish(outputs))
}

/// Plaintext reference for the sign circuit's input layout.
pub fn sign_circuit_inputs(kappa: u32, client_share: u64, holder_share: u64) -> Vec<bool> {
    let mut v = bits_of(client_share as u128, kappa as usize);
    v.extend(bits_of(holder_share as u128, kappa as usize));
    v
}

/// Fixed-key AES correlation-robust hash.
#[derive(Clone)]
pub struct Hasher {
    aes: Aes128,
}

impl Default for Hasher {
    fn default() -> Self {
        Self::new()
    }
}

impl Hasher {
    pub fn new() -> Self {
        let key: [u8; 16] = *b"auditml-fixedkey";
        Self {
            aes: Aes128::new(&key.into()),
        }
    }

    /// `pi(x) xor x` with `x = 2 L xor tweak` (doubling in GF(2^128)).
    fn hash(&self, l: Label, tweak: u64) -> Label {
        let doubled = (l.0 << 1) ^ if l.0 >> 127 == 1 { 0x87 } else { 0 };
        let x = doubled ^ tweak as u128;
        let mut blk = Block::from(x.to_le_bytes());
        self.aes.encrypt_block(&mut blk);
        let mut out = [0u8; 16];
        out.copy_from_slice(&blk);
        Label(u128::from_le_bytes(out) ^ x)
    }
}

/// Garbled tables and constant-output labels, as sent to the evaluator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledCircuit {
    tables: Vec<[Label; 2]>,
    const_labels: Vec<Label>,
}

/// Garbler-side secrets: the free-XOR offset and every input/output zero
/// label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarblerKeys {
    delta: Label,
    input_zero: Vec<Label>,
    output_zero: Vec<Label>,
}

impl GarblerKeys {
    pub fn delta(&self) -> Label {
        self.delta
    }

    pub fn input_label(&self, wire: usize, bit: bool) -> Label {
        self.select(self.input_zero[wire], bit)
    }

    pub fn output_label(&self, wire: usize, bit: bool) -> Label {
        self.select(self.output_zero[wire], bit)
    }

    /// Decodes an output label, failing on anything that is neither label.
    pub fn decode_output(&self, wire: usize, l: Label) -> Result<bool> {
        if l == self.output_zero[wire] {
            Ok(false)
        } else if l == self.output_zero[wire].xor(self.delta) {
            Ok(true)
        } else {
            Err(Error::MalformedLabels(format!("output wire {wire}")))
        }
    }

    /// Offset, then `u32`-counted input and output zero labels.
    pub fn write(&self, w: &mut Writer) {
        w.u128(self.delta.0);
        for labels in [&self.input_zero, &self.output_zero] {
            w.u32(labels.len() as u32);
            for l in labels {
                w.u128(l.0);
            }
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let delta = Label(r.u128()?);
        let read_labels = |r: &mut Reader<'_>| -> Result<Vec<Label>> {
            let n = r.u32()? as usize;
            if n > r.remaining() / LABEL_BYTES {
                return Err(Error::Framing(format!("{n} labels exceed the buffer")));
            }
            (0..n).map(|_| r.u128().map(Label)).collect()
        };
        let input_zero = read_labels(r)?;
        let output_zero = read_labels(r)?;
        Ok(Self {
            delta,
            input_zero,
            output_zero,
        })
    }

    fn select(&self, zero: Label, bit: bool) -> Label {
        if bit {
            zero.xor(self.delta)
        } else {
            zero
        }
    }
}

fn random_label<R: Rng + ?Sized>(rng: &mut R) -> Label {
    Label(((rng.next_u64() as u128) << 64) | rng.next_u64() as u128)
}

/// Garbles `c`. The offset has its colour bit set, so the two labels of
/// every wire carry opposite colours.
pub fn garble<R: Rng + ?Sized>(c: &BoolCircuit, h: &Hasher, rng: &mut R) -> (GarbledCircuit, GarblerKeys) {
    let delta = Label(random_label(rng).0 | COLOR);
    let mut zero: Vec<Label> = (0..c.inputs).map(|_| random_label(rng)).collect();
    zero.reserve(c.gates.len());
    let mut tables = Vec::with_capacity(c.and_count);
    for (gi, g) in c.gates.iter().enumerate() {
        let out = match *g {
            Gate::Xor(a, b) => zero[a].xor(zero[b]),
            Gate::Not(a) => zero[a].xor(delta),
            Gate::And(a, b) => {
                let j = 2 * (c.inputs + gi) as u64;
                let (a0, b0) = (zero[a], zero[b]);
                let (a1, b1) = (a0.xor(delta), b0.xor(delta));
                let (pa, pb) = (a0.color(), b0.color());
                let ha0 = h.hash(a0, j);
                let mut tg = ha0.xor(h.hash(a1, j));
                if pb {
                    tg = tg.xor(delta);
                }
                let mut wg = ha0;
                if pa {
                    wg = wg.xor(tg);
                }
                let hb0 = h.hash(b0, j + 1);
                let te = hb0.xor(h.hash(b1, j + 1)).xor(a0);
                let mut we = hb0;
                if pb {
                    we = we.xor(te.xor(a0));
                }
                tables.push([tg, te]);
                wg.xor(we)
            }
        };
        zero.push(out);
    }
    let mut const_labels = Vec::new();
    let output_zero = c
        .outputs
        .iter()
        .map(|o| match *o {
            Bit::Wire(i) => zero[i],
            Bit::Const(v) => {
                let l = random_label(rng);
                const_labels.push(if v { l.xor(delta) } else { l });
                l
            }
        })
        .collect();
    let input_zero = zero[..c.inputs].to_vec();
    (
        GarbledCircuit { tables, const_labels },
        GarblerKeys {
            delta,
            input_zero,
            output_zero,
        },
    )
}

/// Evaluates with one label per input wire and returns one label per output.
pub fn gc_eval(c: &BoolCircuit, gc: &GarbledCircuit, h: &Hasher, input: &[Label]) -> Result<Vec<Label>> {
    if input.len() != c.inputs {
        return Err(Error::MalformedLabels(format!(
            "{} input labels for {} wires",
            input.len(),
            c.inputs
        )));
    }
    if gc.tables.len() != c.and_count {
        return Err(Error::MalformedLabels(format!(
            "{} tables for {} AND gates",
            gc.tables.len(),
            c.and_count
        )));
    }
    let mut w = input.to_vec();
    w.reserve(c.gates.len());
    let mut t = gc.tables.iter();
    for (gi, g) in c.gates.iter().enumerate() {
        let out = match *g {
            Gate::Xor(a, b) => w[a].xor(w[b]),
            Gate::Not(a) => w[a],
            Gate::And(a, b) => {
                let j = 2 * (c.inputs + gi) as u64;
                let [tg, te] = *t.next().expect("table count checked");
                let (la, lb) = (w[a], w[b]);
                let mut wg = h.hash(la, j);
                if la.color() {
                    wg = wg.xor(tg);
                }
                let mut we = h.hash(lb, j + 1);
                if lb.color() {
                    we = we.xor(te.xor(la));
                }
                wg.xor(we)
            }
        };
        w.push(out);
    }
    let mut consts = gc.const_labels.iter();
    c.outputs
        .iter()
        .map(|o| match *o {
            Bit::Wire(i) => Ok(w[i]),
            Bit::Const(_) => consts
                .next()
                .copied()
                .ok_or_else(|| Error::MalformedLabels("missing constant output label".into())),
        })
        .collect()
}

impl GarbledCircuit {
    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Serialized size in bytes.
    pub fn wire_len(&self) -> usize {
        8 + LABEL_BYTES * (2 * self.tables.len() + self.const_labels.len())
    }

    /// `u32` table count, the tables (two labels each), `u32` constant-label
    /// count, the constant labels; labels little-endian.
    pub fn write(&self, w: &mut Writer) {
        w.u32(self.tables.len() as u32);
        for [a, b] in &self.tables {
            w.u128(a.0).u128(b.0);
        }
        w.u32(self.const_labels.len() as u32);
        for l in &self.const_labels {
            w.u128(l.0);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.u32()? as usize;
        if n > r.remaining() / (2 * LABEL_BYTES) {
            return Err(Error::Framing(format!("{n} garbled tables exceed the frame")));
        }
        let mut tables = Vec::with_capacity(n);
        for _ in 0..n {
            tables.push([Label(r.u128()?), Label(r.u128()?)]);
        }
        let m = r.u32()? as usize;
        if m > r.remaining() / LABEL_BYTES {
            return Err(Error::Framing(format!("{m} constant labels exceed the frame")));
        }
        let const_labels = (0..m).map(|_| r.u128().map(Label)).collect::<Result<_>>()?;
        Ok(Self { tables, const_labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sign_oracle(p: u64, c: u64, h: u64) -> (u64, bool) {
        let v = ((c as u128 + (h % p) as u128) % p as u128) as u64;
        (v, 2 * v < p)
    }

    fn decode(outs: &[bool], k: usize) -> (u64, bool) {
        let v = outs[..k].iter().enumerate().map(|(i, &b)| (b as u64) << i).sum();
        assert!(outs[k + 1..].iter().all(|&b| !b));
        (v, outs[k])
    }

    #[test]
    fn small_prime_examples() {
        let c = build_sign_circuit(4, 13).unwrap();
        for (a, b, v, s) in [(3, 2, 5, true), (6, 8, 1, true), (4, 5, 9, false)] {
            let out = c.eval(&sign_circuit_inputs(4, a, b)).unwrap();
            assert_eq!(decode(&out, 4), (v, s));
        }
    }

    #[test]
    fn and_count_within_bound() {
        for (k, p) in [(8u32, 251u64), (44, crate::field::default_prime())] {
            let c = build_sign_circuit(k, p).unwrap();
            assert!(c.and_count() <= 6 * k as usize, "{} ANDs", c.and_count());
            assert_eq!(c.output_count(), 2 * k as usize);
        }
    }

    #[test]
    fn rejects_loose_prime() {
        assert!(build_sign_circuit(8, 97).is_err());
        assert!(build_sign_circuit(6, 97).is_err());
    }

    #[test]
    fn xor_gate_all_inputs() {
        let mut b = Builder::new(2);
        let (x, y) = (b.input(0), b.input(1));
        let o = b.xor(x, y);
        let c = b.finish(vec![o]);
        let h = Hasher::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (gc, keys) = garble(&c, &h, &mut rng);
        for (u, v) in [(false, false), (false, true), (true, false), (true, true)] {
            let out = gc_eval(&c, &gc, &h, &[keys.input_label(0, u), keys.input_label(1, v)]).unwrap();
            assert_eq!(keys.decode_output(0, out[0]).unwrap(), u ^ v);
        }
    }

    #[test]
    fn garbled_sign_matches_plain() {
        let p = 251;
        let c = build_sign_circuit(8, p).unwrap();
        let h = Hasher::new();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (gc, keys) = garble(&c, &h, &mut rng);
            let a = rng.next_u64() % p;
            let b = rng.next_u64() % 256;
            let input = sign_circuit_inputs(8, a, b);
            let labels: Vec<Label> = input.iter().enumerate().map(|(i, &x)| keys.input_label(i, x)).collect();
            let out = gc_eval(&c, &gc, &h, &labels).unwrap();
            let bits: Vec<bool> = out.iter().enumerate().map(|(i, &l)| keys.decode_output(i, l).unwrap()).collect();
            assert_eq!(decode(&bits, 8), sign_oracle(p, a, b));
            for i in 0..c.output_count() {
                assert_ne!(keys.output_label(i, false).color(), keys.output_label(i, true).color());
            }
        }
    }

    #[test]
    fn flipped_input_label_is_garbage() {
        let c = build_sign_circuit(8, 251).unwrap();
        let h = Hasher::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (gc, keys) = garble(&c, &h, &mut rng);
        let input = sign_circuit_inputs(8, 100, 20);
        let mut labels: Vec<Label> = input.iter().enumerate().map(|(i, &x)| keys.input_label(i, x)).collect();
        labels[9].0 ^= 1 << 5;
        let out = gc_eval(&c, &gc, &h, &labels).unwrap();
        let bad = (0..8).filter(|&i| keys.decode_output(i, out[i]).is_err()).count();
        assert!(bad > 0);
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_label(0b1011_0110, 8), (true, 0b011_0110));
        let l = Label(COLOR | 0xabc);
        assert!(l.color());
        assert_eq!(l.body(), 0xabc);
        assert_eq!(l.trun(4), 0xc);
        assert!(parse_label(u128::MAX, 128).1 < 1 << 127);
    }

    #[test]
    fn wire_roundtrip() {
        let c = build_sign_circuit(8, 251).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (gc, _) = garble(&c, &Hasher::new(), &mut rng);
        let mut w = Writer::new();
        gc.write(&mut w);
        let bytes = w.finish();
        assert_eq!(bytes.len(), gc.wire_len());
        let mut r = Reader::new(&bytes);
        assert_eq!(GarbledCircuit::read(&mut r).unwrap(), gc);
        r.finish().unwrap();
    }
}
