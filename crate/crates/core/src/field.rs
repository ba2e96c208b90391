//! Prime-field arithmetic, signed fixed-point encoding and bit decomposition.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-adicity of `p - 1` required of the default prime. Covers negacyclic
/// batching for RLWE ring degree up to 8192 (4096 logical slots).
pub const DEFAULT_TWO_ADICITY: u32 = 14;
/// Bit length of the default prime.
pub const DEFAULT_PRIME_BITS: u32 = 44;

const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Miller-Rabin with the first twelve prime bases, deterministic for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &sp in &MR_BASES {
        if n % sp == 0 {
            return n == sp;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &MR_BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest prime below `2^bits` that is congruent to 1 modulo `2^two_adicity`.
pub fn search_prime(bits: u32, two_adicity: u32) -> Option<u64> {
    let step = 1u64 << two_adicity;
    let mut k = ((1u64 << bits) - 1) / step;
    while k > 0 {
        let candidate = k * step + 1;
        if candidate < 1u64 << (bits - 1) {
            return None;
        }
        if is_prime(candidate) {
            return Some(candidate);
        }
        k -= 1;
    }
    None
}

/// The default 44-bit field prime, found by search on first use.
pub fn default_prime() -> u64 {
    static PRIME: OnceLock<u64> = OnceLock::new();
    *PRIME.get_or_init(|| {
        search_prime(DEFAULT_PRIME_BITS, DEFAULT_TWO_ADICITY).expect("a 44-bit NTT prime exists")
    })
}

/// Field and security parameters shared by both parties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub p: u64,
    pub kappa: u32,
    #[serde(default)]
    pub scale_bits: u32,
    #[serde(default = "default_lambda")]
    pub lambda: u32,
    #[serde(default = "default_sigma")]
    pub sigma_stat: u32,
}

fn default_lambda() -> u32 {
    128
}

fn default_sigma() -> u32 {
    40
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self::new(default_prime()).expect("default prime is valid")
    }
}

impl FieldConfig {
    pub fn new(p: u64) -> Result<Self> {
        let cfg = Self {
            p,
            kappa: bit_length(p - 1).max(1),
            scale_bits: 0,
            lambda: default_lambda(),
            sigma_stat: default_sigma(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scale_bits(mut self, scale_bits: u32) -> Result<Self> {
        self.scale_bits = scale_bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_prime(self.p) {
            return Err(Error::Param(format!("{} is not prime", self.p)));
        }
        if self.kappa != bit_length(self.p - 1).max(1) {
            return Err(Error::Param(format!(
                "kappa {} does not match ceil(log2 {})",
                self.kappa, self.p
            )));
        }
        if self.kappa > 60 {
            return Err(Error::Param("field elements must fit in 60 bits".into()));
        }
        if self.scale_bits + 1 >= self.kappa {
            return Err(Error::Param("scale_bits leaves no integer range".into()));
        }
        if self.lambda < 2 * self.kappa || self.lambda > 128 {
            return Err(Error::Param(format!(
                "lambda {} must lie in [2*kappa, 128]",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Bytes used to carry one field element on the wire.
    pub fn byte_len(&self) -> usize {
        (self.kappa as usize).div_ceil(8)
    }
}

/// `ceil(log2(x + 1))`: number of bits needed to write `x`.
fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// A field element. Always reduced below the modulus of the [`Field`] that
/// produced it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fe(u64);

impl Fe {
    pub const ZERO: Fe = Fe(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for Fe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Arithmetic context over `F_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Field {
    cfg: FieldConfig,
}

impl Field {
    pub fn new(cfg: FieldConfig) -> Self {
        Self { cfg }
    }

    /// Field over a bare prime with default security parameters relaxed to
    /// whatever the prime allows. Handy for toy primes in tests.
    pub fn with_prime(p: u64) -> Result<Self> {
        let kappa = bit_length(p - 1).max(1);
        let cfg = FieldConfig {
            p,
            kappa,
            scale_bits: 0,
            lambda: default_lambda(),
            sigma_stat: default_sigma(),
        };
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn p(&self) -> u64 {
        self.cfg.p
    }

    pub fn kappa(&self) -> u32 {
        self.cfg.kappa
    }

    pub fn elem(&self, x: u64) -> Fe {
        Fe(x % self.cfg.p)
    }

    pub fn from_i64(&self, x: i64) -> Fe {
        let p = self.cfg.p as i128;
        Fe((x as i128).rem_euclid(p) as u64)
    }

    pub fn one(&self) -> Fe {
        Fe(1)
    }

    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a.0 + b.0;
        Fe(if s >= self.cfg.p { s - self.cfg.p } else { s })
    }

    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        Fe(if a.0 >= b.0 {
            a.0 - b.0
        } else {
            a.0 + self.cfg.p - b.0
        })
    }

    pub fn neg(&self, a: Fe) -> Fe {
        if a.0 == 0 {
            a
        } else {
            Fe(self.cfg.p - a.0)
        }
    }

    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        Fe(mul_mod(a.0, b.0, self.cfg.p))
    }

    pub fn pow(&self, a: Fe, e: u64) -> Fe {
        Fe(pow_mod(a.0, e, self.cfg.p))
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: Fe) -> Option<Fe> {
        (!a.is_zero()).then(|| self.pow(a, self.cfg.p - 2))
    }

    pub fn sum<I: IntoIterator<Item = Fe>>(&self, it: I) -> Fe {
        it.into_iter().fold(Fe::ZERO, |acc, x| self.add(acc, x))
    }

    pub fn dot(&self, a: &[Fe], b: &[Fe]) -> Fe {
        // Accumulate in u128 and reduce once per chunk: products are < 2^120.
        let p = self.cfg.p as u128;
        let mut acc: u128 = 0;
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            acc += x.0 as u128 * y.0 as u128;
            if i % 128 == 127 {
                acc %= p;
            }
        }
        Fe((acc % p) as u64)
    }

    /// Uniform element by rejection sampling on `kappa`-bit draws.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Fe {
        let mask = if self.cfg.kappa >= 64 {
            u64::MAX
        } else {
            (1u64 << self.cfg.kappa) - 1
        };
        loop {
            let v = rng.next_u64() & mask;
            if v < self.cfg.p {
                return Fe(v);
            }
        }
    }

    pub fn random_vec<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Fe> {
        (0..n).map(|_| self.random(rng)).collect()
    }

    /// Largest magnitude (exclusive) representable by the signed encoding
    /// before scaling: `2^(kappa - 1)`.
    fn signed_bound(&self) -> f64 {
        (1u64 << (self.cfg.kappa - 1)) as f64
    }

    /// Encode a signed rational as `round(x * 2^scale_bits)` lifted mod p.
    pub fn encode_signed(&self, x: f64) -> Result<Fe> {
        let scaled = (x * (1u64 << self.cfg.scale_bits) as f64).round();
        if !scaled.is_finite() || scaled.abs() >= self.signed_bound() || scaled.abs() >= self.half() as f64
        {
            return Err(Error::Overflow(x));
        }
        Ok(self.from_i64(scaled as i64))
    }

    pub fn decode_signed(&self, e: Fe) -> f64 {
        self.decode_int(e) as f64 / (1u64 << self.cfg.scale_bits) as f64
    }

    /// Integer embedding without scaling, negatives in the upper half.
    pub fn encode_int(&self, x: i64) -> Result<Fe> {
        if x.unsigned_abs() >= self.half() || x.unsigned_abs() as f64 >= self.signed_bound() {
            return Err(Error::Overflow(x as f64));
        }
        Ok(self.from_i64(x))
    }

    /// Values above `p/2` decode negative.
    pub fn decode_int(&self, e: Fe) -> i64 {
        if e.0 > self.cfg.p / 2 {
            -((self.cfg.p - e.0) as i64)
        } else {
            e.0 as i64
        }
    }

    /// `ceil(p / 2)`. Elements in `[0, half)` decode non-negative.
    pub fn half(&self) -> u64 {
        self.cfg.p.div_ceil(2)
    }

    /// LSB-first bits: `e = sum bits[i] * 2^i` (position `i` is the one-based
    /// index `i + 1`).
    pub fn bit_decompose(&self, e: Fe) -> Vec<bool> {
        bit_decompose(e.0, self.cfg.kappa).expect("field elements fit in kappa bits")
    }
}

/// LSB-first decomposition of `value` into exactly `bits` bits.
pub fn bit_decompose(value: u64, bits: u32) -> Result<Vec<bool>> {
    if bits < 64 && value >> bits != 0 {
        return Err(Error::Range { value, bits });
    }
    Ok((0..bits).map(|i| (value >> i) & 1 == 1).collect())
}

pub fn bits_recompose(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
}
