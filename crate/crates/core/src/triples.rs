//! Offline generation of authenticated correlated randomness: matrix-vector
//! triples, convolution triples, scalar Beaver triples and input masks.
//!
//! The holder owns the HE secret key and contributes encrypted random shares;
//! the client (who knows `alpha`) folds in its own shares, computes the MACs
//! and the products under encryption, masks everything with fresh randomness
//! and sends it back. The holder only ever decrypts values blinded by the
//! client, so no distributed decryption is needed.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::harness::channel::{kind, Channel};
use crate::he::{keygen, Ciphertext, Evaluator, HeParams, PublicKey, SecretKey};
use crate::linalg::{self, ConvParams, Matrix};
use crate::sharing::{recv_mac_key, send_mac_key, AuthShare, AuthVec, MacKey, ScalarTriple};
use crate::wire::{Reader, Writer};

/// Opaque proof that the sender knows the plaintext of a ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopkProof(pub Vec<u8>);

/// Plaintext-knowledge proof system for the holder's ciphertexts.
pub trait Popk: Send + Sync {
    fn prove(&self, ct: &[u8]) -> PopkProof;
    fn verify(&self, ct: &[u8], proof: &PopkProof) -> bool;
    /// Verifier material the prover hands over at setup.
    fn verifier_bytes(&self) -> Vec<u8>;
}

/// Stand-in proof system: the holder's encryptor tags every ciphertext it
/// produced in this session with a keyed hash, and the client accepts exactly
/// the tagged ones. It detects ciphertexts from outside the session's
/// encryptor, not malformed plaintexts.
#[derive(Clone)]
pub struct TrustedEncryptorStub {
    key: [u8; 32],
}

impl TrustedEncryptorStub {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self { key }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let key = bytes
            .try_into()
            .map_err(|_| Error::Framing(format!("proof key of {} bytes", bytes.len())))?;
        Ok(Self { key })
    }

    fn tag(&self, ct: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(ct);
        h.finalize().into()
    }
}

impl Popk for TrustedEncryptorStub {
    fn prove(&self, ct: &[u8]) -> PopkProof {
        PopkProof(self.tag(ct).to_vec())
    }

    fn verify(&self, ct: &[u8], proof: &PopkProof) -> bool {
        proof.0 == self.tag(ct)
    }

    fn verifier_bytes(&self) -> Vec<u8> {
        self.key.to_vec()
    }
}

/// One party's half of a matrix-vector triple `z = X y` with `X` of shape
/// `d1 x d2` (row-major).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatVecTriple {
    pub d1: usize,
    pub d2: usize,
    pub x: AuthVec,
    pub y: AuthVec,
    pub z: AuthVec,
}

/// One party's half of a convolution triple `Z = Conv(X, Y)`; tensors use the
/// flattenings documented on [`ConvParams`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvTriple {
    pub par: ConvParams,
    pub x: AuthVec,
    pub y: AuthVec,
    pub z: AuthVec,
}

fn transcript_hash(pk: &[u8], popk: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"auditml/pk");
    h.update((pk.len() as u64).to_le_bytes());
    h.update(pk);
    h.update(popk);
    h.finalize().into()
}

fn slot_chunks(n: usize, slots: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(slots)).map(move |c| c * slots..((c + 1) * slots).min(n))
}

/// Holder side of the offline phase. Owns the HE secret key.
pub struct HolderTriples {
    field: Field,
    key: MacKey,
    ev: Evaluator,
    sk: SecretKey,
    popk: Box<dyn Popk>,
    rng: ChaCha20Rng,
    enc_rng: ChaCha20Rng,
    forge_proofs: bool,
}

/// Client side of the offline phase. Knows `alpha`.
pub struct ClientTriples {
    field: Field,
    key: MacKey,
    ev: Evaluator,
    popk: Box<dyn Popk>,
    rng: ChaCha20Rng,
    enc_rng: ChaCha20Rng,
}

impl HolderTriples {
    /// Generates the HE key pair, hands the client the public key and proof
    /// verifier, and receives the holder's MAC key share. `rng` drives share
    /// sampling, `enc_rng` key generation and encryption.
    pub fn setup(
        ch: &mut Channel,
        field: Field,
        params: &HeParams,
        rng: ChaCha20Rng,
        mut enc_rng: ChaCha20Rng,
    ) -> Result<Self> {
        let (pk, sk) = keygen(params, &mut enc_rng)?;
        let popk = TrustedEncryptorStub::new(&mut enc_rng);
        let pk_bytes = pk.to_bytes();
        let popk_bytes = popk.verifier_bytes();
        let mut w = Writer::new();
        w.blob(&pk_bytes).blob(&popk_bytes).bytes(&transcript_hash(&pk_bytes, &popk_bytes));
        ch.send(kind::PUBLIC_KEY, w.finish())?;
        let key = recv_mac_key(ch, &field)?;
        let ev = Evaluator::new(pk, field)?;
        Ok(Self {
            field,
            key,
            ev,
            sk,
            popk: Box::new(popk),
            rng,
            enc_rng,
            forge_proofs: false,
        })
    }

    pub fn mac_key(&self) -> MacKey {
        self.key
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.ev
    }

    pub fn public_key(&self) -> &PublicKey {
        self.ev.public_key()
    }

    /// Test hook: ship ciphertexts the session encryptor never tagged.
    pub fn forge_proofs(&mut self, on: bool) {
        self.forge_proofs = on;
    }

    fn send_request(&mut self, ch: &mut Channel, plains: &[Vec<Fe>]) -> Result<()> {
        let mut w = Writer::new();
        w.u32(plains.len() as u32);
        for p in plains {
            let ct = self.ev.encrypt(p, &mut self.enc_rng)?;
            let bytes = self.ev.export(&ct);
            let proof = self.popk.prove(&bytes);
            let bytes = if self.forge_proofs {
                let other = self.ev.encrypt(p, &mut self.enc_rng)?;
                let mut b = self.ev.to_bytes(&other);
                // Sim ciphertexts are deterministic; perturb a slot byte.
                let last = b.len() - 1;
                b[last] ^= 1;
                b
            } else {
                bytes
            };
            w.blob(&bytes).blob(&proof.0);
        }
        ch.send(kind::TRIPLE_REQUEST, w.finish())
    }

    fn recv_response(&self, ch: &mut Channel, expected: usize) -> Result<Vec<Vec<Fe>>> {
        let body = ch.recv(kind::TRIPLE_RESPONSE)?;
        let mut r = Reader::new(&body);
        if r.u8()? != 0 {
            return Err(Error::ProofRejected);
        }
        let n = r.u32()? as usize;
        if n != expected {
            return Err(Error::LengthMismatch { expected, got: n });
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let ct = self.ev.from_bytes(r.blob()?)?;
            out.push(self.sk.decrypt(&self.field, &ct)?);
        }
        r.finish()?;
        Ok(out)
    }

    fn sample(&mut self, n: usize) -> Vec<Fe> {
        self.field.random_vec(n, &mut self.rng)
    }

    /// Returns `(<alpha a>_0, <alpha b>_0, <alpha a b>_0, <a b>_0)`.
    fn product(&mut self, ch: &mut Channel, a0: &[Fe], b0: &[Fe]) -> Result<[Vec<Fe>; 4]> {
        let mut out: [Vec<Fe>; 4] = Default::default();
        for r in slot_chunks(a0.len(), self.ev.slots()) {
            self.send_request(ch, &[a0[r.clone()].to_vec(), b0[r.clone()].to_vec()])?;
            let dec = self.recv_response(ch, 4)?;
            for (o, d) in out.iter_mut().zip(dec) {
                o.extend_from_slice(&d[..r.len()]);
            }
        }
        Ok(out)
    }

    /// Returns `<alpha a>_0`.
    fn authenticate(&mut self, ch: &mut Channel, a0: &[Fe]) -> Result<Vec<Fe>> {
        let mut out = Vec::with_capacity(a0.len());
        for r in slot_chunks(a0.len(), self.ev.slots()) {
            self.send_request(ch, &[a0[r.clone()].to_vec()])?;
            let dec = self.recv_response(ch, 1)?;
            out.extend_from_slice(&dec[0][..r.len()]);
        }
        Ok(out)
    }

    pub fn gen_matvec(&mut self, ch: &mut Channel, d1: usize, d2: usize) -> Result<MatVecTriple> {
        check_dims(d1, d2)?;
        let x0 = self.sample(d1 * d2);
        let y0 = self.sample(d2);
        let big_y0 = linalg::replicate_rows(&y0, d1).into_data();
        let [ax, ay, az, z] = self.product(ch, &x0, &big_y0)?;
        Ok(finish_matvec(&self.field, d1, d2, x0, y0, ax, ay, az, z))
    }

    pub fn gen_scalar(&mut self, ch: &mut Channel, n: usize) -> Result<Vec<ScalarTriple>> {
        let x0 = self.sample(n);
        let y0 = self.sample(n);
        let [ax, ay, az, z] = self.product(ch, &x0, &y0)?;
        Ok(zip_scalar(&x0, &ax, &y0, &ay, &z, &az))
    }

    /// Authenticated random masks whose client value shares are later
    /// revealed to the holder (see [`ClientTriples::gen_masks`]).
    pub fn gen_masks(&mut self, ch: &mut Channel, n: usize) -> Result<AuthVec> {
        let r0 = self.sample(n);
        let mac = self.authenticate(ch, &r0)?;
        Ok(AuthVec::new(r0, mac))
    }

    pub fn gen_conv(&mut self, ch: &mut Channel, par: &ConvParams) -> Result<ConvTriple> {
        par.validate()?;
        let g = ConvGrid::new(par, self.ev.slots());
        let x0 = self.sample(par.input_len());
        let y0 = self.sample(par.kernel_len());
        let xl = linalg::conv_lower(&x0, par)?;
        let yl = linalg::kernel_lower(&y0, par)?;
        let mut plains = Vec::with_capacity(g.x_blocks() + g.y_blocks());
        for (bi, bj) in g.x_coords() {
            plains.push(linalg::encode_sigma(&xl.block(g.b, bi, bj)));
        }
        for (bj, bk) in g.y_coords() {
            plains.push(linalg::encode_tau(&yl.block(g.b, bj, bk), g.slots));
        }
        self.send_request(ch, &plains)?;
        let dec = self.recv_response(ch, g.x_blocks() + g.y_blocks() + 2 * g.z_blocks())?;
        let mut it = dec.into_iter();

        let mut ax = Matrix::zeros(g.rows, g.cols);
        for (bi, bj) in g.x_coords() {
            ax.put_block(g.b, bi, bj, &linalg::decode_sigma(g.b, &it.next().expect("counted")));
        }
        let mut ay = Matrix::zeros(g.cols, g.outs);
        for (bj, bk) in g.y_coords() {
            ay.put_block(g.b, bj, bk, &linalg::decode_tau(g.b, &it.next().expect("counted")));
        }
        let mut az = Matrix::zeros(g.rows, g.outs);
        for (bi, bk) in g.z_coords() {
            az.put_block(g.b, bi, bk, &linalg::decode_plain(g.b, &it.next().expect("counted")));
        }
        let mut z = Matrix::zeros(g.rows, g.outs);
        for (bi, bk) in g.z_coords() {
            z.put_block(g.b, bi, bk, &linalg::decode_plain(g.b, &it.next().expect("counted")));
        }
        Ok(ConvTriple {
            par: *par,
            x: AuthVec::new(x0, linalg::conv_raise_input(&ax, par)?),
            y: AuthVec::new(y0, ay.into_data()),
            z: AuthVec::new(linalg::mat_raise(&z, par)?, linalg::mat_raise(&az, par)?),
        })
    }
}

impl ClientTriples {
    /// Receives the public key and proof verifier and sends the holder its
    /// MAC key share. `alpha` is sampled from `rng`.
    pub fn setup(ch: &mut Channel, field: Field, mut rng: ChaCha20Rng, enc_rng: ChaCha20Rng) -> Result<Self> {
        let body = ch.recv(kind::PUBLIC_KEY)?;
        let mut r = Reader::new(&body);
        let pk_bytes = r.blob()?;
        let popk_bytes = r.blob()?;
        let hash = r.bytes(32)?;
        r.finish()?;
        if hash != transcript_hash(pk_bytes, popk_bytes) {
            return Err(Error::Framing("public key transcript hash mismatch".into()));
        }
        let pk = PublicKey::from_bytes(pk_bytes)?;
        if pk.params().plain_modulus != field.p() {
            return Err(Error::Param(format!(
                "public key plaintext modulus {} differs from field prime {}",
                pk.params().plain_modulus,
                field.p()
            )));
        }
        let popk = TrustedEncryptorStub::from_bytes(popk_bytes)?;
        let key = send_mac_key(ch, &field, &mut rng)?;
        let ev = Evaluator::new(pk, field)?;
        Ok(Self {
            field,
            key,
            ev,
            popk: Box::new(popk),
            rng,
            enc_rng,
        })
    }

    pub fn mac_key(&self) -> MacKey {
        self.key
    }

    pub fn alpha(&self) -> Fe {
        self.key.alpha.expect("client key carries alpha")
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.ev
    }

    fn recv_request(&self, ch: &mut Channel, expected: usize) -> Result<Vec<Ciphertext>> {
        let body = ch.recv(kind::TRIPLE_REQUEST)?;
        let mut r = Reader::new(&body);
        let n = r.u32()? as usize;
        if n != expected {
            return Err(Error::LengthMismatch { expected, got: n });
        }
        let mut raw = Vec::with_capacity(n);
        for _ in 0..n {
            let ct = r.blob()?;
            let proof = PopkProof(r.blob()?.to_vec());
            raw.push((ct, proof));
        }
        r.finish()?;
        if !raw.iter().all(|(ct, proof)| self.popk.verify(ct, proof)) {
            ch.send(kind::TRIPLE_RESPONSE, vec![1])?;
            return Err(Error::ProofRejected);
        }
        raw.into_iter().map(|(ct, _)| self.ev.from_bytes(ct)).collect()
    }

    fn send_response(&mut self, ch: &mut Channel, cts: &[Ciphertext]) -> Result<()> {
        let mut w = Writer::new();
        w.u8(0).u32(cts.len() as u32);
        for ct in cts {
            let fresh = self.ev.rerandomize(ct, &mut self.enc_rng)?;
            w.blob(&self.ev.export(&fresh));
        }
        ch.send(kind::TRIPLE_RESPONSE, w.finish())
    }

    fn sample(&mut self, n: usize) -> Vec<Fe> {
        self.field.random_vec(n, &mut self.rng)
    }

    /// `Enc(alpha (c + mine) - mac)`, with `c + mine` returned as well.
    fn mac_of(&self, c: &Ciphertext, mine: &[Fe], mac: &[Fe]) -> Result<(Ciphertext, Ciphertext)> {
        let full = self.ev.add_plain(c, mine)?;
        let tagged = self.ev.sub_plain(&self.ev.mul_const(&full, self.alpha())?, mac)?;
        Ok((full, tagged))
    }

    /// Client inputs: its shares `a1, b1` and the sampled output shares.
    fn product(&mut self, ch: &mut Channel, a1: &[Fe], b1: &[Fe], out1: &[Vec<Fe>; 4]) -> Result<()> {
        let [aa, ab, az, z] = out1;
        for r in slot_chunks(a1.len(), self.ev.slots()) {
            let cts = self.recv_request(ch, 2)?;
            let (ca, c3) = self.mac_of(&cts[0], &a1[r.clone()], &aa[r.clone()])?;
            let (cb, c4) = self.mac_of(&cts[1], &b1[r.clone()], &ab[r.clone()])?;
            let cab = self.ev.mul_ct(&ca, &cb)?;
            let c5 = self.ev.sub_plain(&self.ev.mul_const(&cab, self.alpha())?, &az[r.clone()])?;
            let c6 = self.ev.sub_plain(&cab, &z[r.clone()])?;
            self.send_response(ch, &[c3, c4, c5, c6])?;
        }
        Ok(())
    }

    fn authenticate(&mut self, ch: &mut Channel, a1: &[Fe], mac1: &[Fe]) -> Result<()> {
        for r in slot_chunks(a1.len(), self.ev.slots()) {
            let cts = self.recv_request(ch, 1)?;
            let (_, c3) = self.mac_of(&cts[0], &a1[r.clone()], &mac1[r])?;
            self.send_response(ch, &[c3])?;
        }
        Ok(())
    }

    pub fn gen_matvec(&mut self, ch: &mut Channel, d1: usize, d2: usize) -> Result<MatVecTriple> {
        check_dims(d1, d2)?;
        let n = d1 * d2;
        let x1 = self.sample(n);
        let y1 = self.sample(d2);
        let big_y1 = linalg::replicate_rows(&y1, d1).into_data();
        let out1 = [self.sample(n), self.sample(n), self.sample(n), self.sample(n)];
        self.product(ch, &x1, &big_y1, &out1)?;
        let [ax, ay, az, z] = out1;
        Ok(finish_matvec(&self.field, d1, d2, x1, y1, ax, ay, az, z))
    }

    pub fn gen_scalar(&mut self, ch: &mut Channel, n: usize) -> Result<Vec<ScalarTriple>> {
        let x1 = self.sample(n);
        let y1 = self.sample(n);
        let out1 = [self.sample(n), self.sample(n), self.sample(n), self.sample(n)];
        self.product(ch, &x1, &y1, &out1)?;
        let [ax, ay, az, z] = out1;
        Ok(zip_scalar(&x1, &ax, &y1, &ay, &z, &az))
    }

    /// The client's value shares of these masks must be sent to the holder
    /// before the masks are used to input holder data.
    pub fn gen_masks(&mut self, ch: &mut Channel, n: usize) -> Result<AuthVec> {
        let r1 = self.sample(n);
        let mac1 = self.sample(n);
        self.authenticate(ch, &r1, &mac1)?;
        Ok(AuthVec::new(r1, mac1))
    }

    pub fn gen_conv(&mut self, ch: &mut Channel, par: &ConvParams) -> Result<ConvTriple> {
        par.validate()?;
        let g = ConvGrid::new(par, self.ev.slots());
        let x1 = self.sample(par.input_len());
        let y1 = self.sample(par.kernel_len());
        let ax1 = self.sample(par.input_len());
        let ay1 = self.sample(par.kernel_len());
        let az1 = self.sample(par.output_len());
        let z1 = self.sample(par.output_len());

        let cts = self.recv_request(ch, g.x_blocks() + g.y_blocks())?;
        let (cx, cy) = cts.split_at(g.x_blocks());
        let xl = linalg::conv_lower(&x1, par)?;
        let axl = linalg::conv_lower(&ax1, par)?;
        let yl = linalg::kernel_lower(&y1, par)?;
        let ayl = linalg::kernel_lower(&ay1, par)?;
        let azl = Matrix::new(g.rows, g.outs, az1.clone())?;
        let zl = Matrix::new(g.rows, g.outs, z1.clone())?;

        let mut full_x = Vec::with_capacity(cx.len());
        let mut out = Vec::with_capacity(g.x_blocks() + g.y_blocks() + 2 * g.z_blocks());
        for (c, (bi, bj)) in cx.iter().zip(g.x_coords()) {
            let (full, tagged) = self.mac_of(
                c,
                &linalg::encode_sigma(&xl.block(g.b, bi, bj)),
                &linalg::encode_sigma(&axl.block(g.b, bi, bj)),
            )?;
            full_x.push(full);
            out.push(tagged);
        }
        let mut full_y = Vec::with_capacity(cy.len());
        for (c, (bj, bk)) in cy.iter().zip(g.y_coords()) {
            let (full, tagged) = self.mac_of(
                c,
                &linalg::encode_tau(&yl.block(g.b, bj, bk), g.slots),
                &linalg::encode_tau(&ayl.block(g.b, bj, bk), g.slots),
            )?;
            full_y.push(full);
            out.push(tagged);
        }
        let mut products = Vec::with_capacity(g.z_blocks());
        for (bi, bk) in g.z_coords() {
            let mut acc: Option<Ciphertext> = None;
            for bj in 0..g.col_blocks {
                let term = linalg::ct_matmul(
                    &self.ev,
                    &full_x[bi * g.col_blocks + bj],
                    &full_y[bj * g.out_blocks + bk],
                    g.b,
                )?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => self.ev.add(&a, &term)?,
                });
            }
            products.push(acc.expect("at least one column block"));
        }
        for (p, (bi, bk)) in products.iter().zip(g.z_coords()) {
            let scaled = self.ev.mul_const(p, self.alpha())?;
            out.push(self.ev.sub_plain(&scaled, azl.block(g.b, bi, bk).data())?);
        }
        for (p, (bi, bk)) in products.iter().zip(g.z_coords()) {
            out.push(self.ev.sub_plain(p, zl.block(g.b, bi, bk).data())?);
        }
        self.send_response(ch, &out)?;
        Ok(ConvTriple {
            par: *par,
            x: AuthVec::new(x1, ax1),
            y: AuthVec::new(y1, ay1),
            z: AuthVec::new(z1, az1),
        })
    }
}

fn check_dims(d1: usize, d2: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::Shape(format!("matrix-vector triple of shape {d1}x{d2}")));
    }
    Ok(())
}

/// Row sums and first-row extraction shared by both parties.
#[allow(clippy::too_many_arguments)]
fn finish_matvec(
    field: &Field,
    d1: usize,
    d2: usize,
    x: Vec<Fe>,
    y: Vec<Fe>,
    ax: Vec<Fe>,
    ay: Vec<Fe>,
    az: Vec<Fe>,
    z: Vec<Fe>,
) -> MatVecTriple {
    let sums = |v: Vec<Fe>| linalg::row_sum(field, &Matrix::new(d1, d2, v).expect("sized"));
    MatVecTriple {
        d1,
        d2,
        x: AuthVec::new(x, ax),
        y: AuthVec::new(y, ay[..d2].to_vec()),
        z: AuthVec::new(sums(z), sums(az)),
    }
}

fn zip_scalar(x: &[Fe], ax: &[Fe], y: &[Fe], ay: &[Fe], z: &[Fe], az: &[Fe]) -> Vec<ScalarTriple> {
    (0..x.len())
        .map(|i| ScalarTriple {
            x: AuthShare { val: x[i], mac: ax[i] },
            y: AuthShare { val: y[i], mac: ay[i] },
            z: AuthShare { val: z[i], mac: az[i] },
        })
        .collect()
}

/// Square blocking of the lowered product `X' (rows x cols) * Y' (cols x outs)`.
struct ConvGrid {
    rows: usize,
    cols: usize,
    outs: usize,
    b: usize,
    slots: usize,
    row_blocks: usize,
    col_blocks: usize,
    out_blocks: usize,
}

impl ConvGrid {
    fn new(par: &ConvParams, slots: usize) -> Self {
        let (rows, cols) = par.lowered_shape();
        let outs = par.out_c;
        let b = linalg::block_order(rows.max(cols).max(outs), slots);
        Self {
            rows,
            cols,
            outs,
            b,
            slots,
            row_blocks: linalg::block_count(rows, b),
            col_blocks: linalg::block_count(cols, b),
            out_blocks: linalg::block_count(outs, b),
        }
    }

    fn x_blocks(&self) -> usize {
        self.row_blocks * self.col_blocks
    }

    fn y_blocks(&self) -> usize {
        self.col_blocks * self.out_blocks
    }

    fn z_blocks(&self) -> usize {
        self.row_blocks * self.out_blocks
    }

    fn x_coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let c = self.col_blocks;
        (0..self.row_blocks).flat_map(move |i| (0..c).map(move |j| (i, j)))
    }

    fn y_coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = self.out_blocks;
        (0..self.col_blocks).flat_map(move |j| (0..k).map(move |o| (j, o)))
    }

    fn z_coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = self.out_blocks;
        (0..self.row_blocks).flat_map(move |i| (0..k).map(move |o| (i, o)))
    }
}

/// Block order the convolution triple protocol uses for `par`.
pub fn conv_block_order(par: &ConvParams, slots: usize) -> usize {
    ConvGrid::new(par, slots).b
}
