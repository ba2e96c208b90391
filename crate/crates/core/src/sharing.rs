//! Additive and MAC-authenticated secret sharing.
//!
//! Party 0 is the model holder, party 1 the client. A value `x` is held as
//! `[[x]]_b = (<x>_b, <alpha x>_b)` with both coordinates additive over `F_p`.
//! Openings reveal only the value coordinate; MAC shares go into the
//! [`CheckLedger`] and are verified once, in batch, at the end of a session.

use rand::Rng;

use crate::engine::CheckLedger;
use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::harness::channel::{kind, Channel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    Holder = 0,
    Client = 1,
}

impl Party {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_holder(self) -> bool {
        self == Party::Holder
    }
}

/// One party's view of the MAC key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacKey {
    pub party: Party,
    pub alpha_share: Fe,
    /// The full key; only the client knows it.
    pub alpha: Option<Fe>,
}

/// Client picks `alpha` and splits it. Returns `(holder, client)` views.
pub fn mac_key_setup<R: Rng + ?Sized>(field: &Field, rng: &mut R) -> (MacKey, MacKey) {
    let alpha = field.random(rng);
    split_key(field, alpha, rng)
}

pub fn split_key<R: Rng + ?Sized>(field: &Field, alpha: Fe, rng: &mut R) -> (MacKey, MacKey) {
    let s0 = field.random(rng);
    (
        MacKey {
            party: Party::Holder,
            alpha_share: s0,
            alpha: None,
        },
        MacKey {
            party: Party::Client,
            alpha_share: field.sub(alpha, s0),
            alpha: Some(alpha),
        },
    )
}

/// Client side of the key exchange: sample `alpha` and ship the holder's share.
pub fn send_mac_key<R: Rng + ?Sized>(ch: &mut Channel, field: &Field, rng: &mut R) -> Result<MacKey> {
    let (holder, client) = mac_key_setup(field, rng);
    ch.send_fes(kind::MAC_KEY_SHARE, field, &[holder.alpha_share])?;
    Ok(client)
}

pub fn recv_mac_key(ch: &mut Channel, field: &Field) -> Result<MacKey> {
    let s = ch.recv_fes(kind::MAC_KEY_SHARE, field, 1)?;
    Ok(MacKey {
        party: Party::Holder,
        alpha_share: s[0],
        alpha: None,
    })
}

/// One party's authenticated share of a single element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuthShare {
    pub val: Fe,
    pub mac: Fe,
}

/// Authenticated shares of a vector, stored column-wise.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuthVec {
    pub val: Vec<Fe>,
    pub mac: Vec<Fe>,
}

impl AuthVec {
    pub fn new(val: Vec<Fe>, mac: Vec<Fe>) -> Self {
        assert_eq!(val.len(), mac.len());
        Self { val, mac }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![Fe::ZERO; n], vec![Fe::ZERO; n])
    }

    pub fn len(&self) -> usize {
        self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.val.is_empty()
    }

    pub fn get(&self, i: usize) -> AuthShare {
        AuthShare {
            val: self.val[i],
            mac: self.mac[i],
        }
    }

    pub fn from_shares(s: &[AuthShare]) -> Self {
        Self::new(s.iter().map(|x| x.val).collect(), s.iter().map(|x| x.mac).collect())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self::new(self.val[range.clone()].to_vec(), self.mac[range].to_vec())
    }

    pub fn gather(&self, idx: &[usize]) -> Self {
        Self::new(
            idx.iter().map(|&i| self.val[i]).collect(),
            idx.iter().map(|&i| self.mac[i]).collect(),
        )
    }

    pub fn extend(&mut self, other: &AuthVec) {
        self.val.extend_from_slice(&other.val);
        self.mac.extend_from_slice(&other.mac);
    }
}

/// Dealer-style split of `x` with a known key: `(holder, client)` shares.
pub fn deal<R: Rng + ?Sized>(field: &Field, alpha: Fe, x: Fe, rng: &mut R) -> (AuthShare, AuthShare) {
    let r = field.random(rng);
    let m = field.random(rng);
    let mac = field.mul(alpha, x);
    (
        AuthShare {
            val: field.sub(x, r),
            mac: field.sub(mac, m),
        },
        AuthShare { val: r, mac: m },
    )
}

pub fn deal_vec<R: Rng + ?Sized>(field: &Field, alpha: Fe, xs: &[Fe], rng: &mut R) -> (AuthVec, AuthVec) {
    let (a, b): (Vec<_>, Vec<_>) = xs.iter().map(|&x| deal(field, alpha, x, rng)).unzip();
    (AuthVec::from_shares(&a), AuthVec::from_shares(&b))
}

/// Reconstructs `(x, alpha x)` from both halves.
pub fn reveal(field: &Field, a: AuthShare, b: AuthShare) -> (Fe, Fe) {
    (field.add(a.val, b.val), field.add(a.mac, b.mac))
}

/// True iff both halves reconstruct to a correctly authenticated value.
pub fn mac_holds(field: &Field, alpha: Fe, a: AuthShare, b: AuthShare) -> bool {
    let (x, m) = reveal(field, a, b);
    field.mul(alpha, x) == m
}

pub fn reveal_vec(field: &Field, a: &AuthVec, b: &AuthVec) -> Vec<Fe> {
    a.val.iter().zip(&b.val).map(|(&x, &y)| field.add(x, y)).collect()
}

pub fn mac_holds_vec(field: &Field, alpha: Fe, a: &AuthVec, b: &AuthVec) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| mac_holds(field, alpha, a.get(i), b.get(i)))
}

/// Local share arithmetic for one party.
#[derive(Clone, Copy, Debug)]
pub struct Shares {
    pub field: Field,
    pub key: MacKey,
}

impl Shares {
    pub fn new(field: Field, key: MacKey) -> Self {
        Self { field, key }
    }

    pub fn party(&self) -> Party {
        self.key.party
    }

    pub fn add(&self, a: AuthShare, b: AuthShare) -> AuthShare {
        let f = &self.field;
        AuthShare {
            val: f.add(a.val, b.val),
            mac: f.add(a.mac, b.mac),
        }
    }

    pub fn sub(&self, a: AuthShare, b: AuthShare) -> AuthShare {
        let f = &self.field;
        AuthShare {
            val: f.sub(a.val, b.val),
            mac: f.sub(a.mac, b.mac),
        }
    }

    pub fn scale(&self, a: AuthShare, c: Fe) -> AuthShare {
        let f = &self.field;
        AuthShare {
            val: f.mul(a.val, c),
            mac: f.mul(a.mac, c),
        }
    }

    /// `[[x + c]]` for a public `c`: party 0 shifts its value share, both
    /// parties shift their MAC share by `<alpha>_b * c`.
    pub fn add_public(&self, a: AuthShare, c: Fe) -> AuthShare {
        let f = &self.field;
        let val = if self.party().is_holder() {
            f.add(a.val, c)
        } else {
            a.val
        };
        AuthShare {
            val,
            mac: f.add(a.mac, f.mul(self.key.alpha_share, c)),
        }
    }

    pub fn add_public_vec(&self, a: &AuthVec, c: &[Fe]) -> AuthVec {
        assert_eq!(a.len(), c.len());
        let s: Vec<_> = (0..a.len()).map(|i| self.add_public(a.get(i), c[i])).collect();
        AuthVec::from_shares(&s)
    }

    pub fn lincomb(&self, coeffs: &[Fe], shares: &[AuthShare]) -> Result<AuthShare> {
        if coeffs.len() != shares.len() {
            return Err(Error::LengthMismatch {
                expected: coeffs.len(),
                got: shares.len(),
            });
        }
        let f = &self.field;
        let vals: Vec<Fe> = shares.iter().map(|s| s.val).collect();
        let macs: Vec<Fe> = shares.iter().map(|s| s.mac).collect();
        Ok(AuthShare {
            val: f.dot(coeffs, &vals),
            mac: f.dot(coeffs, &macs),
        })
    }

    /// Local half of a Beaver multiplication once `e = c - x` and `f = d - y`
    /// are public: `[[c d]] = e f + <x> f + e <y> + <z>`, with the constant
    /// `e f` on party 0's value share and `<alpha>_b e f` on both MAC shares.
    pub fn beaver_combine(&self, t: &ScalarTriple, e: Fe, d: Fe) -> AuthShare {
        let f = &self.field;
        let ef = f.mul(e, d);
        let val = f.add(
            f.add(f.mul(t.x.val, d), f.mul(e, t.y.val)),
            t.z.val,
        );
        let mac = f.add(
            f.add(f.mul(t.x.mac, d), f.mul(e, t.y.mac)),
            t.z.mac,
        );
        self.add_public(AuthShare { val, mac }, ef)
    }
}

/// One party's share of an authenticated multiplication triple `z = x y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScalarTriple {
    pub x: AuthShare,
    pub y: AuthShare,
    pub z: AuthShare,
}

/// Single-use wrapper for correlated randomness.
#[derive(Clone, Debug)]
pub struct Fresh<T> {
    inner: Option<T>,
}

impl<T> Fresh<T> {
    pub fn new(t: T) -> Self {
        Self { inner: Some(t) }
    }

    /// A slot whose contents were already used.
    pub fn consumed() -> Self {
        Self { inner: None }
    }

    pub fn is_consumed(&self) -> bool {
        self.inner.is_none()
    }

    pub fn take(&mut self) -> Result<T> {
        self.inner.take().ok_or(Error::TripleReuse)
    }

    pub fn peek(&self) -> Option<&T> {
        self.inner.as_ref()
    }
}

/// Opens value shares to both parties and appends every opened value with
/// this party's MAC share to the ledger. The holder speaks first.
pub fn open(ch: &mut Channel, sh: &Shares, shares: &AuthVec, ledger: &mut CheckLedger) -> Result<Vec<Fe>> {
    let field = &sh.field;
    let n = shares.len();
    let mut mine = shares.val.clone();
    let theirs = if sh.party().is_holder() {
        for (i, d) in ledger.open_offsets(n) {
            mine[i] = field.add(mine[i], d);
        }
        ch.send_fes(kind::OPEN, field, &mine)?;
        ch.recv_fes(kind::OPEN, field, n)?
    } else {
        let theirs = ch.recv_fes(kind::OPEN, field, n)?;
        ch.send_fes(kind::OPEN, field, &mine)?;
        theirs
    };
    let opened: Vec<Fe> = mine.iter().zip(&theirs).map(|(&a, &b)| field.add(a, b)).collect();
    ledger.record_opened(&opened, &shares.mac);
    Ok(opened)
}

/// Reveals values to the client only. The holder's MAC shares still enter its
/// ledger so the client can verify the revealed values in the batched check.
pub fn open_to_client(ch: &mut Channel, sh: &Shares, shares: &AuthVec, ledger: &mut CheckLedger) -> Result<Option<Vec<Fe>>> {
    let field = &sh.field;
    if sh.party().is_holder() {
        ch.send_fes(kind::OUTPUT_SHARE, field, &shares.val)?;
        ledger.record_private(None, &shares.mac);
        Ok(None)
    } else {
        let theirs = ch.recv_fes(kind::OUTPUT_SHARE, field, shares.len())?;
        let v: Vec<Fe> = shares.val.iter().zip(&theirs).map(|(&a, &b)| field.add(a, b)).collect();
        ledger.record_private(Some(&v), &shares.mac);
        Ok(Some(v))
    }
}

/// Networked Beaver multiplication of `a * b` elementwise, consuming one
/// triple per element. Both differences `a - x` and `b - y` are opened through
/// the ledger.
pub fn beaver_mul(
    ch: &mut Channel,
    sh: &Shares,
    a: &AuthVec,
    b: &AuthVec,
    triples: &mut [Fresh<ScalarTriple>],
    ledger: &mut CheckLedger,
) -> Result<AuthVec> {
    let n = a.len();
    if b.len() != n || triples.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len().min(triples.len()),
        });
    }
    let ts: Vec<ScalarTriple> = triples.iter_mut().map(|t| t.take()).collect::<Result<_>>()?;
    let mut diff = AuthVec::zeros(2 * n);
    for (i, t) in ts.iter().enumerate() {
        let e = sh.sub(a.get(i), t.x);
        let d = sh.sub(b.get(i), t.y);
        diff.val[i] = e.val;
        diff.mac[i] = e.mac;
        diff.val[n + i] = d.val;
        diff.mac[n + i] = d.mac;
    }
    let opened = open(ch, sh, &diff, ledger)?;
    let out: Vec<AuthShare> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| sh.beaver_combine(t, opened[i], opened[n + i]))
        .collect();
    Ok(AuthVec::from_shares(&out))
}
