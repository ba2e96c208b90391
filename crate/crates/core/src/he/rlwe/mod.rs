//! A from-scratch BFV scheme over `Z_Q[X]/(X^n + 1)` with plaintext modulus
//! `t = p`, RNS ciphertext arithmetic and batching.
//!
//! The logical slot vector is the first row of the `2 x n/2` batching grid, so
//! a Galois automorphism `X -> X^(3^k)` is a cyclic left shift by `k` over
//! `n/2` slots. The second row is kept at zero.
//!
//! Parameters are toy-grade: defaults favour fast tests over any security
//! level and must not protect real data.

mod arith;

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::Rng;

pub use arith::{ntt_primes, Modulus, NttTable};

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

/// Half-width of the centered binomial error distribution.
const CBD_K: u32 = 21;
const SPECIAL_BITS: u32 = 61;
const AUX_BITS: u32 = 61;

/// Polynomial in RNS form: one evaluation vector per prime.
pub type RnsPoly = Vec<Vec<u64>>;

/// Exact CRT reconstruction over a fixed basis.
#[derive(Clone, Debug)]
struct Crt {
    product: BigUint,
    half: BigUint,
    basis: Vec<BigUint>,
}

impl Crt {
    fn new(moduli: &[u64]) -> Self {
        let product = moduli.iter().fold(BigUint::from(1u8), |acc, &m| acc * m);
        let basis = moduli
            .iter()
            .map(|&m| {
                let rest = &product / m;
                let rest_mod = (&rest % m).iter_u64_digits().next().unwrap_or(0);
                let inv = Modulus::new(m).inv(rest_mod);
                rest * inv
            })
            .collect();
        Self {
            half: &product >> 1,
            product,
            basis,
        }
    }

    fn reconstruct(&self, residues: impl Iterator<Item = u64>) -> BigUint {
        let mut acc = BigUint::default();
        for (r, b) in residues.zip(&self.basis) {
            acc += b * r;
        }
        acc % &self.product
    }
}

fn big_mod(x: &BigUint, m: u64) -> u64 {
    (x % m).iter_u64_digits().next().unwrap_or(0)
}

/// Ring, modulus chain and batching tables shared by keys and ciphertexts.
#[derive(Debug)]
pub struct Context {
    pub n: usize,
    pub slots: usize,
    t: NttTable,
    q: Vec<NttTable>,
    special: NttTable,
    aux: Vec<NttTable>,
    q_crt: Crt,
    aux_crt: Crt,
    delta: Vec<u64>,
    delta_big: BigUint,
    t_big: BigUint,
    /// NTT position holding evaluation exponent `e`.
    pos_of_exp: Vec<usize>,
    exp_of_pos: Vec<usize>,
    /// Position of each logical slot in the plaintext NTT.
    slot_pos: Vec<usize>,
    special_inv: Vec<u64>,
    special_mod_q: Vec<u64>,
}

impl Context {
    /// `slots` logical slots need ring degree `2 * slots`, so `t` must be
    /// `1 mod 4 * slots`.
    pub fn new(t: u64, slots: usize, q_count: usize, q_bits: u32) -> Result<Self> {
        if !slots.is_power_of_two() || slots < 2 {
            return Err(Error::Param(format!("slot count {slots} must be a power of two")));
        }
        let n = 2 * slots;
        let two_n = 2 * n as u64;
        if (t - 1) % two_n != 0 {
            return Err(Error::Param(format!(
                "plaintext modulus {t} is not 1 mod {two_n}; pick a prime with more two-adicity"
            )));
        }
        if q_bits > 60 || q_bits <= t.ilog2() + 2 || q_count == 0 {
            return Err(Error::Param("ciphertext primes must be wider than the plaintext modulus and at most 60 bits".into()));
        }
        let q_primes = ntt_primes(q_bits, two_n, q_count, &[t]);
        let special = ntt_primes(SPECIAL_BITS, two_n, 1, &q_primes)[0];
        let q_crt = Crt::new(&q_primes);
        // The tensor basis must hold n * Q^2 in centered form.
        let need_bits = 2 * q_crt.product.bits() + n.ilog2() as u64 + 2;
        let aux_count = need_bits.div_ceil((AUX_BITS - 1) as u64) as usize;
        let mut excl = q_primes.clone();
        excl.push(special);
        excl.push(t);
        let aux_primes = ntt_primes(AUX_BITS, two_n, aux_count, &excl);
        let aux_crt = Crt::new(&aux_primes);

        let t_table = NttTable::new(t, n);
        let exp_of_pos = t_table.evaluation_exponents();
        let q_tables: Vec<NttTable> = q_primes.iter().map(|&q| NttTable::new(q, n)).collect();
        debug_assert_eq!(q_tables[0].evaluation_exponents(), exp_of_pos);
        let mut pos_of_exp = vec![usize::MAX; 2 * n];
        for (pos, &e) in exp_of_pos.iter().enumerate() {
            pos_of_exp[e] = pos;
        }
        let mut slot_pos = Vec::with_capacity(slots);
        let mut e = 1usize;
        for _ in 0..slots {
            slot_pos.push(pos_of_exp[e]);
            e = e * 3 % (2 * n);
        }

        let delta_big = &q_crt.product / t;
        let delta = q_primes.iter().map(|&q| big_mod(&delta_big, q)).collect();
        let special_mod_q: Vec<u64> = q_primes.iter().map(|&q| special % q).collect();
        let special_inv = q_primes
            .iter()
            .zip(&special_mod_q)
            .map(|(&q, &s)| Modulus::new(q).inv(s))
            .collect();
        Ok(Self {
            n,
            slots,
            t: t_table,
            special: NttTable::new(special, n),
            aux: aux_primes.iter().map(|&q| NttTable::new(q, n)).collect(),
            q: q_tables,
            q_crt,
            aux_crt,
            delta,
            delta_big,
            t_big: BigUint::from(t),
            pos_of_exp,
            exp_of_pos,
            slot_pos,
            special_inv,
            special_mod_q,
        })
    }

    pub fn plain_modulus(&self) -> u64 {
        self.t.m.q
    }

    pub fn q_bits(&self) -> u64 {
        self.q_crt.product.bits()
    }

    pub fn q_moduli(&self) -> Vec<u64> {
        self.q.iter().map(|t| t.m.q).collect()
    }

    fn qp_tables(&self) -> impl Iterator<Item = &NttTable> {
        self.q.iter().chain(std::iter::once(&self.special))
    }

    /// Plaintext polynomial coefficients (in `[0, t)`) carrying `slots`.
    fn encode(&self, values: &[u64]) -> Vec<u64> {
        let mut evals = vec![0u64; self.n];
        for (i, &v) in values.iter().enumerate() {
            evals[self.slot_pos[i]] = v % self.t.m.q;
        }
        self.t.inverse(&mut evals);
        evals
    }

    fn decode(&self, mut coeffs: Vec<u64>) -> Vec<u64> {
        self.t.forward(&mut coeffs);
        self.slot_pos.iter().map(|&p| coeffs[p]).collect()
    }

    /// Small signed coefficients to NTT form over the given tables.
    fn small_to_ntt<'a>(&self, c: &[i64], tables: impl Iterator<Item = &'a NttTable>) -> RnsPoly {
        tables
            .map(|tb| {
                let mut v: Vec<u64> = c.iter().map(|&x| tb.m.from_i64(x)).collect();
                tb.forward(&mut v);
                v
            })
            .collect()
    }

    fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n)
            .map(|_| match rng.next_u32() % 3 {
                0 => -1,
                1 => 0,
                _ => 1,
            })
            .collect()
    }

    fn sample_error<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let mask = (1u64 << CBD_K) - 1;
        (0..self.n)
            .map(|_| {
                let bits = rng.next_u64();
                (bits & mask).count_ones() as i64 - ((bits >> CBD_K) & mask).count_ones() as i64
            })
            .collect()
    }

    fn sample_uniform<'a, R: Rng + ?Sized>(&self, tables: impl Iterator<Item = &'a NttTable>, rng: &mut R) -> RnsPoly {
        tables
            .map(|tb| {
                let q = tb.m.q;
                let bound = u64::MAX - u64::MAX % q;
                (0..self.n)
                    .map(|_| loop {
                        let x = rng.next_u64();
                        if x < bound {
                            break x % q;
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Applies `X -> X^g` in the evaluation domain.
    fn automorphism(&self, poly: &RnsPoly, g: usize) -> RnsPoly {
        let two_n = 2 * self.n;
        let src: Vec<usize> = self
            .exp_of_pos
            .iter()
            .map(|&e| self.pos_of_exp[e * g % two_n])
            .collect();
        poly.iter()
            .map(|v| src.iter().map(|&s| v[s]).collect())
            .collect()
    }

    /// Galois element for a left rotation by `2^bit` slots.
    fn galois_elt(&self, bit: u32) -> usize {
        let two_n = 2 * self.n;
        let mut g = 3usize;
        for _ in 0..bit {
            g = g * g % two_n;
        }
        g
    }
}

fn poly_add(tables: &[&NttTable], a: &mut RnsPoly, b: &RnsPoly) {
    for ((x, y), tb) in a.iter_mut().zip(b).zip(tables) {
        for (u, &v) in x.iter_mut().zip(y) {
            *u = tb.m.add(*u, v);
        }
    }
}

fn poly_mul(tables: &[&NttTable], a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
    a.iter()
        .zip(b)
        .zip(tables)
        .map(|((x, y), tb)| x.iter().zip(y).map(|(&u, &v)| tb.m.mul(u, v)).collect())
        .collect()
}

fn poly_neg(tables: &[&NttTable], a: &RnsPoly) -> RnsPoly {
    a.iter()
        .zip(tables)
        .map(|(x, tb)| x.iter().map(|&u| tb.m.neg(u)).collect())
        .collect()
}

/// Key-switching key from some `s'` to `s`, one component pair per RNS digit,
/// over the ciphertext primes plus the special prime.
#[derive(Clone, Debug)]
struct SwitchKey {
    b: Vec<RnsPoly>,
    a: Vec<RnsPoly>,
}

#[derive(Debug)]
pub struct SecretKey {
    /// Secret in evaluation form over the ciphertext primes and the special prime.
    s: RnsPoly,
}

#[derive(Debug)]
pub struct EvalKeys {
    pk0: RnsPoly,
    pk1: RnsPoly,
    relin: SwitchKey,
    galois: BTreeMap<usize, SwitchKey>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ct {
    polys: Vec<RnsPoly>,
}

impl Context {
    fn q_refs(&self) -> Vec<&NttTable> {
        self.q.iter().collect()
    }

    fn qp_refs(&self) -> Vec<&NttTable> {
        self.qp_tables().collect()
    }

    fn switch_key<R: Rng + ?Sized>(&self, sk: &SecretKey, target: &RnsPoly, rng: &mut R) -> SwitchKey {
        let qp = self.qp_refs();
        let l = self.q.len();
        let mut bs = Vec::with_capacity(l);
        let mut as_ = Vec::with_capacity(l);
        for i in 0..l {
            let a = self.sample_uniform(self.qp_tables(), rng);
            let e = self.small_to_ntt(&self.sample_error(rng), self.qp_tables());
            let mut b = poly_neg(&qp, &poly_mul(&qp, &a, &sk.s));
            poly_add(&qp, &mut b, &e);
            let m = self.q[i].m;
            let ps = self.special_mod_q[i];
            for (u, &v) in b[i].iter_mut().zip(&target[i]) {
                *u = m.add(*u, m.mul(ps, v));
            }
            bs.push(b);
            as_.push(a);
        }
        SwitchKey { b: bs, a: as_ }
    }

    /// Generates a key pair. `rotation_keys` adds Galois keys for every
    /// power-of-two rotation.
    pub fn keygen<R: Rng + ?Sized>(&self, rotation_keys: bool, rng: &mut R) -> (SecretKey, EvalKeys) {
        let s_small = self.sample_ternary(rng);
        let sk = SecretKey {
            s: self.small_to_ntt(&s_small, self.qp_tables()),
        };
        let q = self.q_refs();
        let l = self.q.len();
        let s_q: RnsPoly = sk.s[..l].to_vec();
        let pk1 = self.sample_uniform(self.q.iter(), rng);
        let e = self.small_to_ntt(&self.sample_error(rng), self.q.iter());
        let mut pk0 = poly_neg(&q, &poly_mul(&q, &pk1, &s_q));
        poly_add(&q, &mut pk0, &e);

        let s2 = poly_mul(&q, &s_q, &s_q);
        let relin = self.switch_key(&sk, &s2, rng);
        let mut galois = BTreeMap::new();
        if rotation_keys {
            for bit in 0..self.slots.trailing_zeros() {
                let g = self.galois_elt(bit);
                let sg = self.automorphism(&s_q, g);
                galois.insert(g, self.switch_key(&sk, &sg, rng));
            }
        }
        (sk, EvalKeys { pk0, pk1, relin, galois })
    }

    /// Returns `(u0, u1)` with `u0 + u1 s ~= d s'` for the switch key's `s'`.
    fn key_switch(&self, d: &RnsPoly, key: &SwitchKey) -> (RnsPoly, RnsPoly) {
        let qp = self.qp_refs();
        let l = self.q.len();
        let mut acc0: RnsPoly = vec![vec![0u64; self.n]; l + 1];
        let mut acc1: RnsPoly = vec![vec![0u64; self.n]; l + 1];
        for (i, di) in d.iter().enumerate().take(l) {
            let mut digit = di.clone();
            self.q[i].inverse(&mut digit);
            for (j, tb) in qp.iter().enumerate() {
                let dj: Vec<u64> = if j == i {
                    di.clone()
                } else {
                    let mut v: Vec<u64> = digit.iter().map(|&x| x % tb.m.q).collect();
                    tb.forward(&mut v);
                    v
                };
                let (kb, ka) = (&key.b[i][j], &key.a[i][j]);
                let m = tb.m;
                for k in 0..self.n {
                    acc0[j][k] = m.add(acc0[j][k], m.mul(dj[k], kb[k]));
                    acc1[j][k] = m.add(acc1[j][k], m.mul(dj[k], ka[k]));
                }
            }
        }
        (self.mod_down(acc0), self.mod_down(acc1))
    }

    /// Divides a polynomial over `Q * P` by the special prime `P`, rounding.
    fn mod_down(&self, mut u: RnsPoly) -> RnsPoly {
        let l = self.q.len();
        let mut last = u.pop().expect("special component");
        self.special.inverse(&mut last);
        let p = self.special.m.q;
        for ((tb, ui), &inv) in self.q.iter().zip(u.iter_mut()).zip(&self.special_inv).take(l) {
            let m = tb.m;
            let mut r: Vec<u64> = last.iter().map(|&x| m.lift_centered(x, p)).collect();
            tb.forward(&mut r);
            for (x, &y) in ui.iter_mut().zip(&r) {
                *x = m.mul(m.sub(*x, y), inv);
            }
        }
        u
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, pk: &EvalKeys, values: &[u64], rng: &mut R) -> Ct {
        let q = self.q_refs();
        let m = self.encode(values);
        let u = self.small_to_ntt(&self.sample_ternary(rng), self.q.iter());
        let e1 = self.small_to_ntt(&self.sample_error(rng), self.q.iter());
        let e2 = self.small_to_ntt(&self.sample_error(rng), self.q.iter());
        let mut c0 = poly_mul(&q, &pk.pk0, &u);
        poly_add(&q, &mut c0, &e1);
        poly_add(&q, &mut c0, &self.scaled_plain(&m));
        let mut c1 = poly_mul(&q, &pk.pk1, &u);
        poly_add(&q, &mut c1, &e2);
        Ct {
            polys: vec![c0, c1],
        }
    }

    /// `Delta * m` in evaluation form.
    fn scaled_plain(&self, m: &[u64]) -> RnsPoly {
        self.q
            .iter()
            .zip(&self.delta)
            .map(|(tb, &d)| {
                let mut v: Vec<u64> = m.iter().map(|&x| tb.m.mul(x % tb.m.q, d)).collect();
                tb.forward(&mut v);
                v
            })
            .collect()
    }

    /// Plaintext with centered coefficients in evaluation form.
    fn plain_poly(&self, values: &[u64]) -> RnsPoly {
        let m = self.encode(values);
        let t = self.t.m.q;
        self.q
            .iter()
            .map(|tb| {
                let mut v: Vec<u64> = m.iter().map(|&x| tb.m.lift_centered(x, t)).collect();
                tb.forward(&mut v);
                v
            })
            .collect()
    }

    /// `c0 + c1 s` in coefficient form, each coefficient reconstructed in `[0, Q)`.
    fn phase(&self, sk: &SecretKey, ct: &Ct) -> Vec<BigUint> {
        let q = self.q_refs();
        let l = self.q.len();
        let s = &sk.s[..l].to_vec();
        let mut acc = ct.polys[0].clone();
        let mut s_pow = s.clone();
        for c in &ct.polys[1..] {
            poly_add(&q, &mut acc, &poly_mul(&q, c, &s_pow));
            s_pow = poly_mul(&q, &s_pow, s);
        }
        for (v, tb) in acc.iter_mut().zip(&self.q) {
            tb.inverse(v);
        }
        (0..self.n)
            .map(|k| self.q_crt.reconstruct(acc.iter().map(|v| v[k])))
            .collect()
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ct) -> Vec<u64> {
        let t = self.t.m.q;
        let qh = &self.q_crt.half;
        let coeffs: Vec<u64> = self
            .phase(sk, ct)
            .iter()
            .map(|x| {
                let r = (x * &self.t_big + qh) / &self.q_crt.product;
                big_mod(&r, t)
            })
            .collect();
        self.decode(coeffs)
    }

    /// Remaining noise budget in bits: `log2(Delta / 2) - log2(|noise|)`.
    pub fn noise_budget(&self, sk: &SecretKey, ct: &Ct) -> f64 {
        let t = self.t.m.q;
        let qp = &self.q_crt.product;
        let mut worst = BigUint::default();
        for x in self.phase(sk, ct) {
            let m = big_mod(&((&x * &self.t_big + &self.q_crt.half) / qp), t);
            let dm = (&self.delta_big * m) % qp;
            let diff = if x >= dm { x - dm } else { x + qp - dm };
            let mag = if diff > self.q_crt.half { qp - diff } else { diff };
            if mag > worst {
                worst = mag;
            }
        }
        let noise_bits = worst.bits() as f64;
        (self.delta_big.bits() as f64 - 1.0) - noise_bits
    }

    pub fn add(&self, a: &Ct, b: &Ct) -> Ct {
        let q = self.q_refs();
        let mut out = a.clone();
        for (x, y) in out.polys.iter_mut().zip(&b.polys) {
            poly_add(&q, x, y);
        }
        out
    }

    pub fn neg(&self, a: &Ct) -> Ct {
        let q = self.q_refs();
        Ct {
            polys: a.polys.iter().map(|p| poly_neg(&q, p)).collect(),
        }
    }

    pub fn add_plain(&self, a: &Ct, values: &[u64]) -> Ct {
        let q = self.q_refs();
        let mut out = a.clone();
        poly_add(&q, &mut out.polys[0], &self.scaled_plain(&self.encode(values)));
        out
    }

    pub fn mul_plain(&self, a: &Ct, values: &[u64]) -> Ct {
        let q = self.q_refs();
        let pt = self.plain_poly(values);
        Ct {
            polys: a.polys.iter().map(|p| poly_mul(&q, p, &pt)).collect(),
        }
    }

    pub fn mul_scalar(&self, a: &Ct, c: u64) -> Ct {
        let t = self.t.m.q;
        Ct {
            polys: a
                .polys
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&self.q)
                        .map(|(v, tb)| {
                            let s = tb.m.lift_centered(c % t, t);
                            v.iter().map(|&x| tb.m.mul(x, s)).collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Centered lift of a ciphertext polynomial into the tensor basis.
    fn to_aux(&self, poly: &RnsPoly) -> RnsPoly {
        let mut coeff = poly.clone();
        for (v, tb) in coeff.iter_mut().zip(&self.q) {
            tb.inverse(v);
        }
        let mut out: RnsPoly = vec![vec![0u64; self.n]; self.aux.len()];
        let qp = &self.q_crt.product;
        for k in 0..self.n {
            let x = self.q_crt.reconstruct(coeff.iter().map(|v| v[k]));
            if x > self.q_crt.half {
                let neg = qp - &x;
                for (o, tb) in out.iter_mut().zip(&self.aux) {
                    o[k] = tb.m.neg(big_mod(&neg, tb.m.q));
                }
            } else {
                for (o, tb) in out.iter_mut().zip(&self.aux) {
                    o[k] = big_mod(&x, tb.m.q);
                }
            }
        }
        for (v, tb) in out.iter_mut().zip(&self.aux) {
            tb.forward(v);
        }
        out
    }

    /// `round(t * x / Q)` for a centered tensor-basis polynomial, back to the
    /// ciphertext primes in evaluation form.
    fn scale_down(&self, mut poly: RnsPoly) -> RnsPoly {
        for (v, tb) in poly.iter_mut().zip(&self.aux) {
            tb.inverse(v);
        }
        let mut out: RnsPoly = vec![vec![0u64; self.n]; self.q.len()];
        let qp = &self.q_crt.product;
        let q_half = &self.q_crt.half;
        for k in 0..self.n {
            let x = self.aux_crt.reconstruct(poly.iter().map(|v| v[k]));
            let (mag, negative) = if x > self.aux_crt.half {
                (&self.aux_crt.product - x, true)
            } else {
                (x, false)
            };
            let r = (mag * &self.t_big + q_half) / qp;
            for (o, tb) in out.iter_mut().zip(&self.q) {
                let v = big_mod(&r, tb.m.q);
                o[k] = if negative { tb.m.neg(v) } else { v };
            }
        }
        for (v, tb) in out.iter_mut().zip(&self.q) {
            tb.forward(v);
        }
        out
    }

    pub fn mul(&self, a: &Ct, b: &Ct, keys: &EvalKeys) -> Ct {
        let aux: Vec<&NttTable> = self.aux.iter().collect();
        let q = self.q_refs();
        let (a0, a1) = (self.to_aux(&a.polys[0]), self.to_aux(&a.polys[1]));
        let (b0, b1) = (self.to_aux(&b.polys[0]), self.to_aux(&b.polys[1]));
        let t0 = poly_mul(&aux, &a0, &b0);
        let mut t1 = poly_mul(&aux, &a0, &b1);
        poly_add(&aux, &mut t1, &poly_mul(&aux, &a1, &b0));
        let t2 = poly_mul(&aux, &a1, &b1);
        let mut c0 = self.scale_down(t0);
        let mut c1 = self.scale_down(t1);
        let c2 = self.scale_down(t2);
        let (u0, u1) = self.key_switch(&c2, &keys.relin);
        poly_add(&q, &mut c0, &u0);
        poly_add(&q, &mut c1, &u1);
        Ct {
            polys: vec![c0, c1],
        }
    }

    /// Left rotation by `steps` slots, composed from power-of-two Galois keys.
    pub fn rotate(&self, a: &Ct, steps: usize, keys: &EvalKeys) -> Result<Ct> {
        let steps = steps % self.slots;
        let q = self.q_refs();
        let mut cur = a.clone();
        for bit in 0..self.slots.trailing_zeros() {
            if steps >> bit & 1 == 0 {
                continue;
            }
            let g = self.galois_elt(bit);
            let key = keys
                .galois
                .get(&g)
                .ok_or_else(|| Error::Param("rotation keys were not generated".into()))?;
            let c0 = self.automorphism(&cur.polys[0], g);
            let c1 = self.automorphism(&cur.polys[1], g);
            let (u0, u1) = self.key_switch(&c1, key);
            let mut n0 = c0;
            poly_add(&q, &mut n0, &u0);
            cur = Ct {
                polys: vec![n0, u1],
            };
        }
        Ok(cur)
    }

    /// Adds a fresh encryption of zero.
    pub fn rerandomize<R: Rng + ?Sized>(&self, a: &Ct, keys: &EvalKeys, rng: &mut R) -> Ct {
        let z = self.encrypt(keys, &[], rng);
        self.add(a, &z)
    }

    fn residue_width(&self, q: u64) -> usize {
        (64 - q.leading_zeros()).div_ceil(8) as usize
    }

    fn write_poly(&self, w: &mut Writer, p: &RnsPoly, tables: &[&NttTable]) {
        for (v, tb) in p.iter().zip(tables) {
            let width = self.residue_width(tb.m.q);
            for &x in v {
                w.uint(x as u128, width);
            }
        }
    }

    fn read_poly(&self, r: &mut Reader, tables: &[&NttTable]) -> Result<RnsPoly> {
        tables
            .iter()
            .map(|tb| {
                let width = self.residue_width(tb.m.q);
                (0..self.n)
                    .map(|_| {
                        let x = r.uint(width)? as u64;
                        if x >= tb.m.q {
                            return Err(Error::Framing("ciphertext residue out of range".into()));
                        }
                        Ok(x)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn ct_to_bytes(&self, ct: &Ct) -> Vec<u8> {
        let q = self.q_refs();
        let mut w = Writer::new();
        w.u8(ct.polys.len() as u8);
        for p in &ct.polys {
            self.write_poly(&mut w, p, &q);
        }
        w.finish()
    }

    pub fn ct_from_bytes(&self, bytes: &[u8]) -> Result<Ct> {
        let q = self.q_refs();
        let mut r = Reader::new(bytes);
        let count = r.u8()? as usize;
        if count != 2 {
            return Err(Error::Framing(format!("ciphertext with {count} components")));
        }
        let polys = (0..count)
            .map(|_| self.read_poly(&mut r, &q))
            .collect::<Result<_>>()?;
        r.finish()?;
        Ok(Ct { polys })
    }

    pub fn keys_to_bytes(&self, keys: &EvalKeys) -> Vec<u8> {
        let q = self.q_refs();
        let qp = self.qp_refs();
        let mut w = Writer::new();
        self.write_poly(&mut w, &keys.pk0, &q);
        self.write_poly(&mut w, &keys.pk1, &q);
        let write_switch = |w: &mut Writer, k: &SwitchKey| {
            for (b, a) in k.b.iter().zip(&k.a) {
                self.write_poly(w, b, &qp);
                self.write_poly(w, a, &qp);
            }
        };
        write_switch(&mut w, &keys.relin);
        w.u32(keys.galois.len() as u32);
        for (&g, k) in &keys.galois {
            w.u32(g as u32);
            write_switch(&mut w, k);
        }
        w.finish()
    }

    pub fn keys_from_bytes(&self, bytes: &[u8]) -> Result<EvalKeys> {
        let q = self.q_refs();
        let qp = self.qp_refs();
        let mut r = Reader::new(bytes);
        let pk0 = self.read_poly(&mut r, &q)?;
        let pk1 = self.read_poly(&mut r, &q)?;
        let read_switch = |r: &mut Reader| -> Result<SwitchKey> {
            let mut b = Vec::new();
            let mut a = Vec::new();
            for _ in 0..self.q.len() {
                b.push(self.read_poly(r, &qp)?);
                a.push(self.read_poly(r, &qp)?);
            }
            Ok(SwitchKey { b, a })
        };
        let relin = read_switch(&mut r)?;
        let count = r.u32()?;
        let mut galois = BTreeMap::new();
        for _ in 0..count {
            let g = r.u32()? as usize;
            if g % 2 == 0 || g >= 2 * self.n {
                return Err(Error::Framing(format!("bad Galois element {g}")));
            }
            galois.insert(g, read_switch(&mut r)?);
        }
        r.finish()?;
        Ok(EvalKeys {
            pk0,
            pk1,
            relin,
            galois,
        })
    }
}
