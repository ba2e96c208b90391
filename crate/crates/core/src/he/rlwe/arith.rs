//! Word-sized modular arithmetic and negacyclic number-theoretic transforms.

use crate::field::is_prime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    pub q: u64,
}

impl Modulus {
    pub fn new(q: u64) -> Self {
        debug_assert!(q < 1 << 62);
        Self { q }
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    /// Precomputed quotient for repeated multiplication by the fixed `w`.
    #[inline]
    pub fn shoup(self, w: u64) -> u64 {
        (((w as u128) << 64) / self.q as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.q));
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    pub fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    pub fn inv(self, a: u64) -> u64 {
        self.pow(a, self.q - 2)
    }

    /// Reduces a signed integer.
    #[inline]
    pub fn from_i64(self, x: i64) -> u64 {
        let r = x.rem_euclid(self.q as i64);
        r as u64
    }

    /// Lifts `a` from a smaller modulus `from` (centered) into this modulus.
    #[inline]
    pub fn lift_centered(self, a: u64, from: u64) -> u64 {
        if a > from / 2 {
            self.sub(0, (from - a) % self.q)
        } else {
            a % self.q
        }
    }
}

/// Primes of exactly `bits` bits with `q = 1 mod modulus_step`, largest first,
/// skipping anything in `exclude`.
pub fn ntt_primes(bits: u32, modulus_step: u64, count: usize, exclude: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let top = (1u64 << bits) - 1;
    let mut q = top - (top % modulus_step) + 1;
    if q > top {
        q -= modulus_step;
    }
    while out.len() < count && q > 1u64 << (bits - 1) {
        if is_prime(q) && !exclude.contains(&q) {
            out.push(q);
        }
        q -= modulus_step;
    }
    assert_eq!(out.len(), count, "not enough {bits}-bit NTT primes");
    out
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Negacyclic NTT over `Z_q[X]/(X^n + 1)`.
#[derive(Clone, Debug)]
pub struct NttTable {
    pub m: Modulus,
    pub n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
    /// A primitive `2n`-th root of unity.
    pub psi: u64,
}

/// Smallest-generator primitive `2n`-th root of unity mod `q`.
pub fn primitive_root_2n(m: Modulus, n: usize) -> u64 {
    let two_n = 2 * n as u64;
    assert_eq!((m.q - 1) % two_n, 0, "modulus does not support this ring degree");
    for g in 2..m.q {
        let psi = m.pow(g, (m.q - 1) / two_n);
        if m.pow(psi, n as u64) == m.q - 1 {
            return psi;
        }
    }
    unreachable!("prime modulus always has a primitive root")
}

impl NttTable {
    pub fn new(q: u64, n: usize) -> Self {
        assert!(n.is_power_of_two());
        let m = Modulus::new(q);
        let psi = primitive_root_2n(m, n);
        let psi_inv = m.inv(psi);
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = m.mul(pw, psi);
            pw_inv = m.mul(pw_inv, psi_inv);
        }
        let n_inv = m.inv(n as u64);
        Self {
            m,
            n,
            psi_rev_shoup: psi_rev.iter().map(|&w| m.shoup(w)).collect(),
            psi_inv_rev_shoup: psi_inv_rev.iter().map(|&w| m.shoup(w)).collect(),
            psi_rev,
            psi_inv_rev,
            n_inv,
            n_inv_shoup: m.shoup(n_inv),
            psi,
        }
    }

    /// Coefficients to evaluations (bit-reversed order).
    pub fn forward(&self, a: &mut [u64]) {
        let m = self.m;
        let n = self.n;
        let mut t = n;
        let mut groups = 1;
        while groups < n {
            t >>= 1;
            for i in 0..groups {
                let j1 = 2 * i * t;
                let w = self.psi_rev[groups + i];
                let ws = self.psi_rev_shoup[groups + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = m.mul_shoup(a[j + t], w, ws);
                    a[j] = m.add(u, v);
                    a[j + t] = m.sub(u, v);
                }
            }
            groups <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        let m = self.m;
        let n = self.n;
        let mut t = 1;
        let mut groups = n;
        while groups > 1 {
            let h = groups >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = m.add(u, v);
                    a[j + t] = m.mul_shoup(m.sub(u, v), w, ws);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            groups = h;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Odd exponent `e` such that output position `j` of [`NttTable::forward`]
    /// holds the evaluation at `psi^e`.
    pub fn evaluation_exponents(&self) -> Vec<usize> {
        let n = self.n;
        let mut x = vec![0u64; n];
        x[1] = 1;
        self.forward(&mut x);
        let mut by_value = std::collections::HashMap::with_capacity(2 * n);
        let mut pw = 1u64;
        for e in 0..2 * n {
            by_value.insert(pw, e);
            pw = self.m.mul(pw, self.psi);
        }
        x.iter().map(|v| by_value[v]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schoolbook_negacyclic(a: &[u64], b: &[u64], m: Modulus) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                if i + j < n {
                    out[i + j] = m.add(out[i + j], p);
                } else {
                    out[i + j - n] = m.sub(out[i + j - n], p);
                }
            }
        }
        out
    }

    #[test]
    fn ntt_multiplication_matches_schoolbook() {
        let n = 64;
        let q = ntt_primes(50, 2 * n as u64, 1, &[])[0];
        let t = NttTable::new(q, n);
        let m = t.m;
        let a: Vec<u64> = (0..n as u64).map(|i| (i * 7919 + 3) % q).collect();
        let b: Vec<u64> = (0..n as u64).map(|i| (i * i * 104729 + 11) % q).collect();
        let want = schoolbook_negacyclic(&a, &b, m);
        let (mut fa, mut fb) = (a.clone(), b.clone());
        t.forward(&mut fa);
        t.forward(&mut fb);
        let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| m.mul(x, y)).collect();
        t.inverse(&mut prod);
        assert_eq!(prod, want);
        t.inverse(&mut fa);
        assert_eq!(fa, a);
    }

    #[test]
    fn exponents_are_distinct_odd() {
        let n = 32;
        let q = ntt_primes(40, 2 * n as u64, 1, &[])[0];
        let e = NttTable::new(q, n).evaluation_exponents();
        let mut sorted = e.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), n);
        assert!(e.iter().all(|x| x % 2 == 1));
    }

    #[test]
    fn shoup_matches_plain() {
        let m = Modulus::new(ntt_primes(61, 1024, 1, &[])[0]);
        for (a, w) in [(1u64, 2u64), (m.q - 1, m.q - 1), (123456789, 987654321012)] {
            assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }
    }
}
