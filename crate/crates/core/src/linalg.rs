//! Matrix layouts for packed ciphertexts, the permutation-based ciphertext
//! matrix product, and convolution lowering.
//!
//! A `d x d` matrix occupies slots `0..d^2` row-major. With the four index
//! permutations
//!
//! ```text
//! sigma(X)[i][j] = X[i][i+j]    tau(X)[i][j] = X[i+j][j]
//! phi(X)[i][j]   = X[i][j+1]    psi(X)[i][j] = X[i+1][j]     (indices mod d)
//! ```
//!
//! the product is `X Y = sum_k phi^k(sigma X) * psi^k(tau Y)` with `*` taken
//! slotwise. `sigma` and `tau` are applied to plaintexts before encryption, so
//! only the `phi^k` / `psi^k` shifts cost rotations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::he::{Ciphertext, Evaluator};

/// Dense row-major matrix over `F_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Fe>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Fe>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Fe::ZERO; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Fe] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Fe> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Fe {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Fe) {
        self.data[i * self.cols + j] = v;
    }

    /// Schoolbook product.
    pub fn matmul(&self, field: &Field, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let t = other.transpose();
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.cols {
                out.data[i * other.cols + j] = field.dot(row, &t.data[j * t.cols..(j + 1) * t.cols]);
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, field: &Field, v: &[Fe]) -> Result<Vec<Fe>> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| field.dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// The `b x b` block at block coordinates `(bi, bj)`, zero-padded past the
    /// matrix edge.
    pub fn block(&self, b: usize, bi: usize, bj: usize) -> SquareMat {
        let mut out = SquareMat::zeros(b);
        for i in 0..b {
            let r = bi * b + i;
            if r >= self.rows {
                break;
            }
            for j in 0..b {
                let c = bj * b + j;
                if c >= self.cols {
                    break;
                }
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }

    /// Writes a block back, dropping entries past the matrix edge.
    pub fn put_block(&mut self, b: usize, bi: usize, bj: usize, blk: &SquareMat) {
        for i in 0..b {
            let r = bi * b + i;
            if r >= self.rows {
                break;
            }
            for j in 0..b {
                let c = bj * b + j;
                if c >= self.cols {
                    break;
                }
                self.set(r, c, blk.get(i, j));
            }
        }
    }
}

/// Square matrix of order `d`, row-major; slot `d*i + j` carries entry `(i, j)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquareMat {
    d: usize,
    data: Vec<Fe>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Perm {
    Sigma,
    Tau,
    /// Columns shifted left `k` times.
    Phi(usize),
    /// Rows shifted up `k` times.
    Psi(usize),
}

impl SquareMat {
    pub fn new(d: usize, data: Vec<Fe>) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::Shape(format!("{} entries for order {d}", data.len())));
        }
        Ok(Self { d, data })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![Fe::ZERO; d * d],
        }
    }

    pub fn identity(field: &Field, d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.set(i, i, field.one());
        }
        m
    }

    pub fn random<R: rand::Rng + ?Sized>(field: &Field, d: usize, rng: &mut R) -> Self {
        Self {
            d,
            data: field.random_vec(d * d, rng),
        }
    }

    pub fn order(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[Fe] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Fe {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Fe) {
        self.data[i * self.d + j] = v;
    }

    pub fn as_matrix(&self) -> Matrix {
        Matrix {
            rows: self.d,
            cols: self.d,
            data: self.data.clone(),
        }
    }

    fn map_index(&self, f: impl Fn(usize, usize) -> (usize, usize)) -> SquareMat {
        let d = self.d;
        let mut out = SquareMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let (si, sj) = f(i, j);
                out.data[i * d + j] = self.data[(si % d) * d + (sj % d)];
            }
        }
        out
    }

    pub fn permute(&self, perm: Perm) -> SquareMat {
        match perm {
            Perm::Sigma => self.map_index(|i, j| (i, i + j)),
            Perm::Tau => self.map_index(|i, j| (i + j, j)),
            Perm::Phi(k) => self.map_index(|i, j| (i, j + k)),
            Perm::Psi(k) => self.map_index(|i, j| (i + k, j)),
        }
    }

    /// Inverse of [`Perm::Sigma`].
    pub fn unsigma(&self) -> SquareMat {
        let d = self.d;
        self.map_index(|i, j| (i, j + d - i % d))
    }

    /// Inverse of [`Perm::Tau`].
    pub fn untau(&self) -> SquareMat {
        let d = self.d;
        self.map_index(|i, j| (i + d - j % d, j))
    }

    pub fn hadamard(&self, field: &Field, other: &SquareMat) -> SquareMat {
        SquareMat {
            d: self.d,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| field.mul(a, b))
                .collect(),
        }
    }

    pub fn add(&self, field: &Field, other: &SquareMat) -> SquareMat {
        SquareMat {
            d: self.d,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| field.add(a, b))
                .collect(),
        }
    }

    pub fn matmul(&self, field: &Field, other: &SquareMat) -> SquareMat {
        let m = self.as_matrix().matmul(field, &other.as_matrix()).expect("same order");
        SquareMat { d: self.d, data: m.data }
    }
}

/// `sum_k phi^k(sigma X) * psi^k(tau Y)` computed in the clear.
pub fn permutation_product(field: &Field, x: &SquareMat, y: &SquareMat) -> SquareMat {
    let sx = x.permute(Perm::Sigma);
    let ty = y.permute(Perm::Tau);
    let mut acc = SquareMat::zeros(x.order());
    for k in 0..x.order() {
        acc = acc.add(field, &sx.permute(Perm::Phi(k)).hadamard(field, &ty.permute(Perm::Psi(k))));
    }
    acc
}

/// Matrix whose `rows` rows all equal `y`.
pub fn replicate_rows(y: &[Fe], rows: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows * y.len());
    for _ in 0..rows {
        data.extend_from_slice(y);
    }
    Matrix {
        rows,
        cols: y.len(),
        data,
    }
}

pub fn row_sum(field: &Field, m: &Matrix) -> Vec<Fe> {
    (0..m.rows)
        .map(|i| field.sum(m.data[i * m.cols..(i + 1) * m.cols].iter().copied()))
        .collect()
}

/// Whether the right-hand operand of an order-`d` product is stored twice
/// (slots `0..d^2` and `d^2..2d^2`) so a row shift is a single rotation.
pub fn replicates_rhs(d: usize, slots: usize) -> bool {
    2 * d * d <= slots
}

/// Largest block order usable with `slots` slots.
pub fn max_block(slots: usize) -> usize {
    slots.isqrt()
}

/// Block order for a product whose largest dimension is `dim`.
pub fn block_order(dim: usize, slots: usize) -> usize {
    dim.clamp(1, max_block(slots))
}

/// Number of `b`-wide blocks covering `n`.
pub fn block_count(n: usize, b: usize) -> usize {
    n.div_ceil(b)
}

/// Slot vector of `sigma(X)`.
pub fn encode_sigma(x: &SquareMat) -> Vec<Fe> {
    x.permute(Perm::Sigma).data
}

/// Slot vector of `tau(Y)`, replicated when [`replicates_rhs`] allows.
pub fn encode_tau(y: &SquareMat, slots: usize) -> Vec<Fe> {
    let t = y.permute(Perm::Tau).data;
    if replicates_rhs(y.order(), slots) {
        let mut v = t.clone();
        v.extend_from_slice(&t);
        v
    } else {
        t
    }
}

/// Inverse of [`encode_sigma`] on decrypted slots.
pub fn decode_sigma(d: usize, slots: &[Fe]) -> SquareMat {
    SquareMat {
        d,
        data: slots[..d * d].to_vec(),
    }
    .unsigma()
}

/// Inverse of [`encode_tau`] on decrypted slots (first copy).
pub fn decode_tau(d: usize, slots: &[Fe]) -> SquareMat {
    SquareMat {
        d,
        data: slots[..d * d].to_vec(),
    }
    .untau()
}

pub fn decode_plain(d: usize, slots: &[Fe]) -> SquareMat {
    SquareMat {
        d,
        data: slots[..d * d].to_vec(),
    }
}

/// 0/1 mask over the first `d^2` slots selecting entries with `keep(i, j)`.
fn mask(field: &Field, d: usize, keep: impl Fn(usize, usize) -> bool) -> Vec<Fe> {
    let mut m = vec![Fe::ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            if keep(i, j) {
                m[i * d + j] = field.one();
            }
        }
    }
    m
}

/// Left rotation by a signed amount.
fn rot(ev: &Evaluator, c: &Ciphertext, by: isize) -> Result<Ciphertext> {
    let n = ev.slots() as isize;
    ev.rotate(c, by.rem_euclid(n) as usize)
}

/// `phi^k` on an order-`d` matrix in slots `0..d^2`: two rotations and masks.
fn ct_phi(ev: &Evaluator, c: &Ciphertext, d: usize, k: usize) -> Result<Ciphertext> {
    if k == 0 {
        return Ok(c.clone());
    }
    let f = ev.field();
    let left = ev.mul_plain(&rot(ev, c, k as isize)?, &mask(f, d, |_, j| j < d - k))?;
    let wrap = ev.mul_plain(&rot(ev, c, k as isize - d as isize)?, &mask(f, d, |_, j| j >= d - k))?;
    ev.add(&left, &wrap)
}

/// `psi^k`: a single rotation by `k d` on a replicated or slot-filling operand,
/// otherwise two rotations and masks.
fn ct_psi(ev: &Evaluator, c: &Ciphertext, d: usize, k: usize) -> Result<Ciphertext> {
    if k == 0 {
        return Ok(c.clone());
    }
    let n = ev.slots();
    if replicates_rhs(d, n) || d * d == n {
        return rot(ev, c, (k * d) as isize);
    }
    let f = ev.field();
    let up = ev.mul_plain(&rot(ev, c, (k * d) as isize)?, &mask(f, d, |i, _| i < d - k))?;
    let wrap = ev.mul_plain(
        &rot(ev, c, (k * d) as isize - (d * d) as isize)?,
        &mask(f, d, |i, _| i >= d - k),
    )?;
    ev.add(&up, &wrap)
}

/// Encrypted product from `Enc(sigma X)` and `Enc(tau Y)` (laid out by
/// [`encode_sigma`] / [`encode_tau`]). The result holds `X Y` in slots
/// `0..d^2` and zeros elsewhere in the first `d^2` positions' complement.
pub fn ct_matmul(ev: &Evaluator, c_sigma_x: &Ciphertext, c_tau_y: &Ciphertext, d: usize) -> Result<Ciphertext> {
    if d == 0 || d * d > ev.slots() {
        return Err(Error::Shape(format!("order {d} does not fit {} slots", ev.slots())));
    }
    let f = ev.field();
    let mut acc: Option<Ciphertext> = None;
    for k in 0..d {
        let mut a = ct_phi(ev, c_sigma_x, d, k)?;
        if k == 0 && d * d < ev.slots() {
            // Clear anything the operand carries past the matrix.
            a = ev.mul_plain(&a, &mask(f, d, |_, _| true))?;
        }
        let b = ct_psi(ev, c_tau_y, d, k)?;
        let term = ev.mul_ct(&a, &b)?;
        acc = Some(match acc {
            None => term,
            Some(s) => ev.add(&s, &term)?,
        });
    }
    Ok(acc.expect("d >= 1"))
}

/// Reference variant that receives `Enc(X)` and `Enc(Y)` in plain row-major
/// layout (with `Y` replicated per [`replicates_rhs`]) and applies `sigma`
/// and `tau` under encryption before calling [`ct_matmul`]. Exists to
/// measure the rotations the plaintext-side permutations save.
pub fn ct_matmul_unoptimized(ev: &Evaluator, c_x: &Ciphertext, c_y: &Ciphertext, d: usize) -> Result<Ciphertext> {
    if d == 0 || d * d > ev.slots() {
        return Err(Error::Shape(format!("order {d} does not fit {} slots", ev.slots())));
    }
    let f = ev.field();
    let n = ev.slots();
    // sigma: row i shifts left by i. Entries with j < d - i come from a left
    // rotation by i, the rest from a right rotation by d - i.
    let mut sx = ev.mul_plain(c_x, &mask(f, d, |i, _| i == 0))?;
    for s in 1..d {
        let a = ev.mul_plain(&rot(ev, c_x, s as isize)?, &mask(f, d, |i, j| i == s && j < d - s))?;
        let b = ev.mul_plain(
            &rot(ev, c_x, s as isize - d as isize)?,
            &mask(f, d, |i, j| i == s && j >= d - s),
        )?;
        sx = ev.add(&sx, &ev.add(&a, &b)?)?;
    }
    // tau: column j shifts up by j.
    let replicated = replicates_rhs(d, n);
    let mut ty = ev.mul_plain(c_y, &mask(f, d, |_, j| j == 0))?;
    for s in 1..d {
        let part = if replicated || d * d == n {
            ev.mul_plain(&rot(ev, c_y, (s * d) as isize)?, &mask(f, d, |_, j| j == s))?
        } else {
            let a = ev.mul_plain(&rot(ev, c_y, (s * d) as isize)?, &mask(f, d, |i, j| j == s && i < d - s))?;
            let b = ev.mul_plain(
                &rot(ev, c_y, (s * d) as isize - (d * d) as isize)?,
                &mask(f, d, |i, j| j == s && i >= d - s),
            )?;
            ev.add(&a, &b)?
        };
        ty = ev.add(&ty, &part)?;
    }
    if replicated {
        let copy = rot(ev, &ty, -((d * d) as isize))?;
        ty = ev.add(&ty, &copy)?;
    }
    ct_matmul(ev, &sx, &ty, d)
}

/// Geometry of a convolution layer.
///
/// Input tensors are `in_w x in_h x in_c`, flattened as
/// `(i * in_h + j) * in_c + k`. Kernels hold one `(2 half + 1)^2` tap grid per
/// (input channel, output channel) pair, flattened as
/// `((di * side + dj) * in_c + k) * out_c + k_out`, which is exactly the
/// row-major lowered kernel matrix. Outputs are flattened like inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_w: usize,
    pub in_h: usize,
    pub in_c: usize,
    /// Kernel half-size: the kernel side is `2 * half + 1`.
    pub half: usize,
    pub out_c: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl ConvParams {
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    fn out_dim(&self, u: usize) -> Result<usize> {
        let span = u + 2 * self.pad;
        if span < self.side() {
            return Err(Error::Shape(format!(
                "kernel side {} exceeds padded input {span}",
                self.side()
            )));
        }
        if (span - self.side()) % self.stride != 0 {
            return Err(Error::Shape(format!(
                "stride {} does not tile padded input {span} with kernel side {}",
                self.stride,
                self.side()
            )));
        }
        Ok((span - self.side()) / self.stride + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_w == 0 || self.in_h == 0 || self.in_c == 0 || self.out_c == 0 || self.stride == 0 {
            return Err(Error::Shape("convolution dimensions must be positive".into()));
        }
        if self.stride > self.side() {
            return Err(Error::Shape(format!(
                "stride {} skips input positions of a side-{} kernel",
                self.stride,
                self.side()
            )));
        }
        if self.pad > 2 * self.half {
            return Err(Error::Shape(format!(
                "padding {} leaves windows entirely outside the input",
                self.pad
            )));
        }
        self.out_dim(self.in_w)?;
        self.out_dim(self.in_h)?;
        Ok(())
    }

    pub fn out_w(&self) -> usize {
        self.out_dim(self.in_w).expect("validated")
    }

    pub fn out_h(&self) -> usize {
        self.out_dim(self.in_h).expect("validated")
    }

    pub fn input_len(&self) -> usize {
        self.in_w * self.in_h * self.in_c
    }

    pub fn kernel_len(&self) -> usize {
        self.side() * self.side() * self.in_c * self.out_c
    }

    pub fn output_len(&self) -> usize {
        self.out_w() * self.out_h() * self.out_c
    }

    /// Lowered input shape: one row per output position, one column per tap.
    pub fn lowered_shape(&self) -> (usize, usize) {
        (self.out_w() * self.out_h(), self.side() * self.side() * self.in_c)
    }

    /// For each lowered entry, the input index it copies, or `None` for a
    /// padding tap.
    pub fn lowering_map(&self) -> Vec<Option<usize>> {
        let (rows, cols) = self.lowered_shape();
        let side = self.side();
        let (ow, oh) = (self.out_w(), self.out_h());
        let mut map = vec![None; rows * cols];
        for oi in 0..ow {
            for oj in 0..oh {
                let r = oi * oh + oj;
                for di in 0..side {
                    for dj in 0..side {
                        let x = (oi * self.stride + di) as isize - self.pad as isize;
                        let y = (oj * self.stride + dj) as isize - self.pad as isize;
                        if x < 0 || y < 0 || x >= self.in_w as isize || y >= self.in_h as isize {
                            continue;
                        }
                        for k in 0..self.in_c {
                            let c = (di * side + dj) * self.in_c + k;
                            let src = (x as usize * self.in_h + y as usize) * self.in_c + k;
                            map[r * cols + c] = Some(src);
                        }
                    }
                }
            }
        }
        map
    }

    /// For each input index, the first lowered position that copies it.
    pub fn first_occurrence(&self) -> Vec<usize> {
        let mut first = vec![usize::MAX; self.input_len()];
        for (pos, src) in self.lowering_map().into_iter().enumerate() {
            if let Some(s) = src {
                if first[s] == usize::MAX {
                    first[s] = pos;
                }
            }
        }
        debug_assert!(first.iter().all(|&p| p != usize::MAX));
        first
    }
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!("{what} has {got} entries, expected {expected}")));
    }
    Ok(())
}

/// Lowers an input tensor so the convolution becomes `X' Y'`.
pub fn conv_lower(x: &[Fe], par: &ConvParams) -> Result<Matrix> {
    par.validate()?;
    check_len(x.len(), par.input_len(), "input tensor")?;
    let (rows, cols) = par.lowered_shape();
    let data = par
        .lowering_map()
        .into_iter()
        .map(|s| s.map_or(Fe::ZERO, |i| x[i]))
        .collect();
    Matrix::new(rows, cols, data)
}

/// The kernel tensor viewed as its `(side^2 in_c) x out_c` lowered matrix.
pub fn kernel_lower(y: &[Fe], par: &ConvParams) -> Result<Matrix> {
    par.validate()?;
    check_len(y.len(), par.kernel_len(), "kernel tensor")?;
    Matrix::new(par.side() * par.side() * par.in_c, par.out_c, y.to_vec())
}

/// Reads an input tensor back out of a lowered matrix.
pub fn conv_raise_input(xl: &Matrix, par: &ConvParams) -> Result<Vec<Fe>> {
    par.validate()?;
    check_len(xl.data.len(), par.lowered_shape().0 * par.lowered_shape().1, "lowered input")?;
    Ok(par.first_occurrence().into_iter().map(|p| xl.data[p]).collect())
}

/// The lowered product `Z'` reshaped to the output tensor.
pub fn mat_raise(z: &Matrix, par: &ConvParams) -> Result<Vec<Fe>> {
    par.validate()?;
    if (z.rows, z.cols) != (par.out_w() * par.out_h(), par.out_c) {
        return Err(Error::Shape(format!(
            "product is {}x{}, expected {}x{}",
            z.rows,
            z.cols,
            par.out_w() * par.out_h(),
            par.out_c
        )));
    }
    Ok(z.data.clone())
}

/// Direct convolution, tap by tap.
pub fn conv_direct(field: &Field, x: &[Fe], y: &[Fe], par: &ConvParams) -> Result<Vec<Fe>> {
    par.validate()?;
    check_len(x.len(), par.input_len(), "input tensor")?;
    check_len(y.len(), par.kernel_len(), "kernel tensor")?;
    let side = par.side();
    let (ow, oh) = (par.out_w(), par.out_h());
    let mut z = vec![Fe::ZERO; par.output_len()];
    for oi in 0..ow {
        for oj in 0..oh {
            for ko in 0..par.out_c {
                let mut acc = Fe::ZERO;
                for di in 0..side {
                    for dj in 0..side {
                        let xi = (oi * par.stride + di) as isize - par.pad as isize;
                        let xj = (oj * par.stride + dj) as isize - par.pad as isize;
                        if xi < 0 || xj < 0 || xi >= par.in_w as isize || xj >= par.in_h as isize {
                            continue;
                        }
                        for k in 0..par.in_c {
                            let xv = x[(xi as usize * par.in_h + xj as usize) * par.in_c + k];
                            let yv = y[((di * side + dj) * par.in_c + k) * par.out_c + ko];
                            acc = field.add(acc, field.mul(xv, yv));
                        }
                    }
                }
                z[(oi * oh + oj) * par.out_c + ko] = acc;
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use crate::he::{keygen, Backend, HeParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn field() -> Field {
        Field::new(FieldConfig::default())
    }

    fn sq(f: &Field, d: usize, v: &[u64]) -> SquareMat {
        SquareMat::new(d, v.iter().map(|&x| f.elem(x)).collect()).unwrap()
    }

    #[test]
    fn permutation_examples() {
        let f = field();
        let m = sq(&f, 3, &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(m.permute(Perm::Sigma), sq(&f, 3, &[1, 2, 3, 5, 6, 4, 9, 7, 8]));
        assert_eq!(m.permute(Perm::Tau), sq(&f, 3, &[1, 5, 9, 4, 8, 3, 7, 2, 6]));
        assert_eq!(m.permute(Perm::Phi(0)), m);
        assert_eq!(m.permute(Perm::Sigma).unsigma(), m);
        assert_eq!(m.permute(Perm::Tau).untau(), m);
    }

    #[test]
    fn replicate_and_row_sum() {
        let f = field();
        let y = [f.elem(1), f.elem(2)];
        let r = replicate_rows(&y, 3);
        assert_eq!(r.rows(), 3);
        assert!((0..3).all(|i| r.get(i, 1) == f.elem(2)));
        let m = Matrix::new(2, 2, [1, 2, 3, 4].iter().map(|&x| f.elem(x)).collect()).unwrap();
        assert_eq!(row_sum(&f, &m), vec![f.elem(3), f.elem(7)]);
    }

    fn run_ct_matmul(backend: Backend, slots: usize, d: usize, seed: u64) {
        let f = field();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = keygen(&HeParams::new(backend, slots, &f), &mut rng).unwrap();
        let ev = Evaluator::new(pk, f).unwrap();
        let x = SquareMat::random(&f, d, &mut rng);
        let y = SquareMat::random(&f, d, &mut rng);
        let cx = ev.encrypt(&encode_sigma(&x), &mut rng).unwrap();
        let cy = ev.encrypt(&encode_tau(&y, slots), &mut rng).unwrap();
        let z = ct_matmul(&ev, &cx, &cy, d).unwrap();
        let slots_out = sk.decrypt(&f, &z).unwrap();
        assert_eq!(decode_plain(d, &slots_out), x.matmul(&f, &y), "d={d} slots={slots}");
        if let Some(b) = sk.noise_budget(&z) {
            assert!(b > 20.0, "noise budget {b}");
        }
    }

    #[test]
    fn ct_matmul_worked_example() {
        let f = field();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (pk, sk) = keygen(&HeParams::new(Backend::Sim, 16, &f), &mut rng).unwrap();
        let ev = Evaluator::new(pk, f).unwrap();
        let x = sq(&f, 2, &[1, 2, 3, 4]);
        let y = sq(&f, 2, &[5, 6, 7, 8]);
        let cx = ev.encrypt(&encode_sigma(&x), &mut rng).unwrap();
        let cy = ev.encrypt(&encode_tau(&y, 16), &mut rng).unwrap();
        let z = ct_matmul(&ev, &cx, &cy, 2).unwrap();
        assert_eq!(decode_plain(2, &sk.decrypt(&f, &z).unwrap()), sq(&f, 2, &[19, 22, 43, 50]));
        let ci = ev.encrypt(&encode_tau(&SquareMat::identity(&f, 2), 16), &mut rng).unwrap();
        let zi = ct_matmul(&ev, &cx, &ci, 2).unwrap();
        assert_eq!(decode_plain(2, &sk.decrypt(&f, &zi).unwrap()), x);
    }

    #[test]
    fn ct_matmul_all_layouts_sim() {
        // Replicated, exactly full, and in-between slot budgets.
        for (slots, d) in [(64, 4), (16, 4), (16, 3), (32, 5), (128, 8), (4096, 64)] {
            run_ct_matmul(Backend::Sim, slots, d, d as u64);
        }
    }

    #[test]
    fn ct_matmul_rlwe() {
        for (slots, d) in [(64, 4), (32, 4), (256, 16)] {
            run_ct_matmul(Backend::Rlwe, slots, d, 7);
        }
    }

    #[test]
    fn unoptimized_matches_and_costs_more() {
        let f = field();
        for (slots, d) in [(256, 8), (64, 8), (32, 5)] {
            let mut rng = ChaCha20Rng::seed_from_u64(5);
            let (pk, sk) = keygen(&HeParams::new(Backend::Sim, slots, &f), &mut rng).unwrap();
            let ev = Evaluator::new(pk, f).unwrap();
            let x = SquareMat::random(&f, d, &mut rng);
            let y = SquareMat::random(&f, d, &mut rng);
            let mut yv = y.data().to_vec();
            if replicates_rhs(d, slots) {
                yv.extend_from_slice(y.data());
            }
            let cx = ev.encrypt(x.data(), &mut rng).unwrap();
            let cy = ev.encrypt(&yv, &mut rng).unwrap();
            let before = ev.snapshot();
            let z = ct_matmul_unoptimized(&ev, &cx, &cy, d).unwrap();
            let slow = ev.snapshot().since(&before).rotations;
            assert_eq!(decode_plain(d, &sk.decrypt(&f, &z).unwrap()), x.matmul(&f, &y));

            let cx = ev.encrypt(&encode_sigma(&x), &mut rng).unwrap();
            let cy = ev.encrypt(&encode_tau(&y, slots), &mut rng).unwrap();
            let before = ev.snapshot();
            ct_matmul(&ev, &cx, &cy, d).unwrap();
            let fast = ev.snapshot().since(&before).rotations;
            if replicates_rhs(d, slots) {
                assert_eq!(fast, 3 * (d as u64 - 1));
                assert_eq!(slow, 6 * d as u64 - 5);
            }
            assert!(2 * fast <= slow, "fast {fast} slow {slow}");
        }
    }

    #[test]
    fn five_by_five_lowering_shape() {
        let par = ConvParams {
            in_w: 5,
            in_h: 5,
            in_c: 3,
            half: 1,
            out_c: 3,
            pad: 0,
            stride: 1,
        };
        let f = field();
        let x = vec![f.one(); par.input_len()];
        let xl = conv_lower(&x, &par).unwrap();
        assert_eq!((xl.rows(), xl.cols()), (9, 27));
        let yl = kernel_lower(&vec![f.one(); par.kernel_len()], &par).unwrap();
        assert_eq!((yl.rows(), yl.cols()), (27, 3));
    }

    #[test]
    fn pointwise_kernel_is_channel_mixing() {
        let par = ConvParams {
            in_w: 3,
            in_h: 2,
            in_c: 4,
            half: 0,
            out_c: 2,
            pad: 0,
            stride: 1,
        };
        let f = field();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = f.random_vec(par.input_len(), &mut rng);
        let xl = conv_lower(&x, &par).unwrap();
        assert_eq!((xl.rows(), xl.cols()), (6, 4));
        assert_eq!(xl.data(), &x[..]);
    }

    #[test]
    fn shape_errors() {
        let bad = ConvParams {
            in_w: 6,
            in_h: 6,
            in_c: 1,
            half: 1,
            out_c: 1,
            pad: 0,
            stride: 2,
        };
        assert!(matches!(bad.validate(), Err(Error::Shape(_))));
        let f = field();
        let good = ConvParams { stride: 1, ..bad };
        assert!(conv_lower(&[f.one(); 3], &good).is_err());
    }

    #[test]
    fn lowered_product_matches_direct() {
        let f = field();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for par in [
            ConvParams { in_w: 8, in_h: 8, in_c: 2, half: 1, out_c: 3, pad: 1, stride: 1 },
            ConvParams { in_w: 7, in_h: 5, in_c: 3, half: 1, out_c: 2, pad: 0, stride: 2 },
            ConvParams { in_w: 6, in_h: 6, in_c: 1, half: 2, out_c: 2, pad: 2, stride: 1 },
        ] {
            let x = f.random_vec(par.input_len(), &mut rng);
            let y = f.random_vec(par.kernel_len(), &mut rng);
            let z = conv_lower(&x, &par).unwrap().matmul(&f, &kernel_lower(&y, &par).unwrap()).unwrap();
            assert_eq!(mat_raise(&z, &par).unwrap(), conv_direct(&f, &x, &y, &par).unwrap());
            assert_eq!(conv_raise_input(&conv_lower(&x, &par).unwrap(), &par).unwrap(), x);
        }
    }
}
