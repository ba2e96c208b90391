//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints its own pass/fail line. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 8`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use auditml_core::engine::{CheckLedger, LayerKind};
use auditml_core::fairness::{argmax, build_report, Sample};
use auditml_core::gc::{build_sign_circuit, garble, gc_eval, sign_circuit_inputs, Hasher, Label};
use auditml_core::harness::run_pair;
use auditml_core::harness::session::SessionConfig;
use auditml_core::harness::tamper::{TamperSpec, TamperTarget};
use auditml_core::he::{keygen, Backend, Evaluator, HeParams};
use auditml_core::linalg::{
    ct_matmul, ct_matmul_unoptimized, encode_sigma, encode_tau, permutation_product, replicates_rhs, ConvParams,
    SquareMat,
};
use auditml_core::nonlinear::{client_relu, holder_relu, nl_preprocess, NlContext, NlTamper, ReluGadget};
use auditml_core::ot::OtBackend;
use auditml_core::sharing::{deal_vec, mac_holds_vec, reveal_vec, split_key, AuthVec, Fresh, ScalarTriple, Shares};
use auditml_core::triples::{ClientTriples, HolderTriples};
use auditml_core::{Error, Fe, Field, FieldConfig};
use common::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

fn field() -> Field {
    Field::new(FieldConfig::default())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Maps `f` over `items` on all cores.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let out: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                *out[i].lock().unwrap() = Some(f(&items[i]));
            });
        }
    });
    out.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

// Modular oracles on raw residues.

fn mulmod(p: u64, a: u64, b: u64) -> u64 {
    (a as u128 * b as u128 % p as u128) as u64
}

fn matvec_oracle(p: u64, x: &[u64], y: &[u64], d1: usize, d2: usize) -> Vec<u64> {
    (0..d1)
        .map(|i| (0..d2).fold(0u128, |acc, j| (acc + x[i * d2 + j] as u128 * y[j] as u128) % p as u128) as u64)
        .collect()
}

fn matmul_oracle(p: u64, x: &[u64], y: &[u64], d: usize) -> Vec<u64> {
    let mut z = vec![0u64; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0u128;
            for k in 0..d {
                acc = (acc + x[i * d + k] as u128 * y[k * d + j] as u128) % p as u128;
            }
            z[i * d + j] = acc as u64;
        }
    }
    z
}

fn raw(v: &[Fe]) -> Vec<u64> {
    v.iter().map(|x| x.value()).collect()
}

/// Reconstructs a shared vector and checks every MAC against `alpha`.
fn open_checked(f: &Field, alpha: Fe, a: &AuthVec, b: &AuthVec, what: &str) -> Result<Vec<u64>, String> {
    ensure!(mac_holds_vec(f, alpha, a, b), "{what}: MAC relation broken");
    Ok(raw(&reveal_vec(f, a, b)))
}

/// Both halves of the offline triple machinery over an in-memory channel.
fn triple_session<H, C, RH, RC>(backend: Backend, slots: usize, seed: u64, holder: H, client: C) -> (RH, RC, Fe)
where
    H: FnOnce(&mut auditml_core::harness::channel::Channel, &mut HolderTriples) -> RH + Send,
    C: FnOnce(&mut auditml_core::harness::channel::Channel, &mut ClientTriples) -> RC + Send,
    RH: Send,
    RC: Send,
{
    let f = field();
    let params = HeParams::new(backend, slots, &f);
    let (rh, (rc, alpha)) = run_pair(
        seed,
        |ch| {
            let mut t = HolderTriples::setup(
                ch,
                f,
                &params,
                ChaCha20Rng::seed_from_u64(seed),
                ChaCha20Rng::seed_from_u64(seed ^ 0x5555),
            )
            .expect("holder setup");
            holder(ch, &mut t)
        },
        |ch| {
            let mut t = ClientTriples::setup(
                ch,
                f,
                ChaCha20Rng::seed_from_u64(seed ^ 0xaaaa),
                ChaCha20Rng::seed_from_u64(seed ^ 0xffff),
            )
            .expect("client setup");
            let alpha = t.alpha();
            (client(ch, &mut t), alpha)
        },
    );
    (rh, rc, alpha)
}

fn efg_oracle(preds: &[usize], labels: &[usize], groups: &[&str]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for g in groups {
        if !names.contains(g) {
            names.push(g);
        }
    }
    // Risks as (errors, count); the gap is the largest pairwise difference.
    let risks: Vec<(u64, u64)> = names
        .iter()
        .map(|g| {
            let idx: Vec<usize> = (0..preds.len()).filter(|&i| groups[i] == *g).collect();
            let e = idx.iter().filter(|&&i| preds[i] != labels[i]).count() as u64;
            (e, idx.len() as u64)
        })
        .collect();
    let (mut num, mut den) = (0u64, 1u64);
    for a in &risks {
        for b in &risks {
            let (n, d) = ((a.0 * b.1).abs_diff(b.0 * a.1), a.1 * b.1);
            if n * den > num * d {
                (num, den) = (n, d);
            }
        }
    }
    let g = gcd(num, den);
    let (num, den) = (num / g, den / g);
    if den == 1 {
        num.to_string()
    } else {
        format!("{num}/{den}")
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let m = model(784, vec![fc(784, 32, 127, &mut rng), relu(), fc(32, 10, 127, &mut rng)]);
    for l in &m.layers {
        if let Some(w) = &l.weights {
            ensure!(w.iter().all(|&x| (-128..=127).contains(&x)), "weights exceed 8 bits");
        }
    }
    let inputs: Vec<Vec<i64>> = (0..100).map(|_| (0..784).map(|_| rng.random_range(0..=255)).collect()).collect();
    let want: Vec<Vec<i128>> = inputs.iter().map(|x| plain_forward(&m, x)).collect();
    let plain_preds: Vec<usize> = want.iter().map(|o| argmax_i128(o)).collect();
    let labels: Vec<usize> = plain_preds
        .iter()
        .map(|&p| if rng.random_range(0..10) < 7 { p } else { rng.random_range(0..10) })
        .collect();
    let groups: Vec<&str> = (0..100).map(|i| if i % 3 == 0 { "north" } else { "south" }).collect();

    let cfg = |seed| SessionConfig {
        seed,
        ..SessionConfig::default()
    };
    let (h, c) = session(&m, &inputs, &cfg(1), &cfg(2));
    h.map_err(|e| format!("holder: {e}"))?;
    let c = c.map_err(|e| format!("client: {e}"))?;
    let f = Field::new(m.field);
    for (i, (got, want)) in c.outputs.iter().zip(&want).enumerate() {
        let got: Vec<i128> = got.iter().map(|&v| f.decode_int(v) as i128).collect();
        ensure!(&got == want, "sample {i}: secure {got:?} != plaintext {want:?}");
    }
    let preds: Vec<usize> = c.outputs.iter().map(|o| argmax(&f, o).unwrap()).collect();
    let samples: Vec<Sample> = inputs
        .iter()
        .zip(&labels)
        .zip(&groups)
        .map(|((x, &label), g)| Sample {
            features: x.iter().map(|&a| a as f64).collect(),
            label,
            group: g.to_string(),
        })
        .collect();
    let report = build_report(&preds, &samples, &[], 0.1, 0.05, Default::default()).map_err(|e| e.to_string())?;
    let want_efg = efg_oracle(&plain_preds, &labels, &groups);
    ensure!(report.efg.as_deref() == Some(want_efg.as_str()), "EFG {:?} != oracle {want_efg}", report.efg);
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs.total_cmp(&600.0).is_le(), "took {secs:.0} s");
    Ok(format!("100/100 outputs exact, EFG {want_efg} exact, {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let f = field();
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    for d in 1..=16 {
        for t in 0..100 {
            let x = SquareMat::random(&f, d, &mut rng);
            let y = SquareMat::random(&f, d, &mut rng);
            let got = permutation_product(&f, &x, &y);
            let want = matmul_oracle(f.p(), &raw(x.data()), &raw(y.data()), d);
            ensure!(raw(got.data()) == want, "d={d} trial {t}");
        }
    }
    Ok("d = 1..16, 100 trials each".into())
}

fn conv_shape(rng: &mut ChaCha20Rng) -> ConvParams {
    ConvParams {
        in_w: rng.random_range(1..=8),
        in_h: rng.random_range(1..=8),
        in_c: rng.random_range(1..=4),
        half: 1,
        out_c: 4,
        pad: 1,
        stride: 1,
    }
}

/// `(d1, d2, X, y, z)` in the clear.
type OpenedMatVec = (usize, usize, Vec<u64>, Vec<u64>, Vec<u64>);
type OpenedConv = (ConvParams, Vec<u64>, Vec<u64>, Vec<u64>);

/// Matrix-vector and convolution triples from one offline session, with the
/// rotations each side spent on every matrix-vector triple.
struct TripleBatch {
    matvec: Vec<OpenedMatVec>,
    conv: Vec<OpenedConv>,
    matvec_rotations: Vec<u64>,
}

fn triple_batch() -> Result<TripleBatch, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let mut dims: Vec<(usize, usize)> = (0..98).map(|_| (rng.random_range(1..=64), rng.random_range(1..=128))).collect();
    dims.extend([(64, 128), (1, 1)]);
    let mut convs: Vec<ConvParams> = (0..19).map(|_| conv_shape(&mut rng)).collect();
    convs.push(ConvParams {
        in_w: 8,
        in_h: 8,
        in_c: 4,
        half: 1,
        out_c: 4,
        pad: 1,
        stride: 1,
    });
    let f = field();
    let (h, c, alpha) = triple_session(
        Backend::Sim,
        4096,
        7,
        |ch, t| {
            let mut rot = Vec::new();
            let mut mv = Vec::new();
            for &(d1, d2) in &dims {
                let before = t.evaluator().snapshot();
                mv.push(t.gen_matvec(ch, d1, d2).unwrap());
                rot.push(t.evaluator().snapshot().since(&before).rotations);
            }
            let cv: Vec<_> = convs.iter().map(|p| t.gen_conv(ch, p).unwrap()).collect();
            (mv, cv, rot)
        },
        |ch, t| {
            let mut rot = Vec::new();
            let mut mv = Vec::new();
            for &(d1, d2) in &dims {
                let before = t.evaluator().snapshot();
                mv.push(t.gen_matvec(ch, d1, d2).unwrap());
                rot.push(t.evaluator().snapshot().since(&before).rotations);
            }
            let cv: Vec<_> = convs.iter().map(|p| t.gen_conv(ch, p).unwrap()).collect();
            (mv, cv, rot)
        },
    );
    let mut batch = TripleBatch {
        matvec: Vec::new(),
        conv: Vec::new(),
        matvec_rotations: h.2.iter().zip(&c.2).map(|(a, b)| a + b).collect(),
    };
    for (a, b) in h.0.iter().zip(&c.0) {
        let x = open_checked(&f, alpha, &a.x, &b.x, "matvec X")?;
        let y = open_checked(&f, alpha, &a.y, &b.y, "matvec y")?;
        let z = open_checked(&f, alpha, &a.z, &b.z, "matvec z")?;
        batch.matvec.push((a.d1, a.d2, x, y, z));
    }
    for (a, b) in h.1.iter().zip(&c.1) {
        let x = open_checked(&f, alpha, &a.x, &b.x, "conv X")?;
        let y = open_checked(&f, alpha, &a.y, &b.y, "conv Y")?;
        let z = open_checked(&f, alpha, &a.z, &b.z, "conv Z")?;
        batch.conv.push((a.par, x, y, z));
    }
    Ok(batch)
}

fn criterion_3(batch: &TripleBatch) -> Outcome {
    let p = field().p();
    for (n, (d1, d2, x, y, z)) in batch.matvec.iter().enumerate() {
        ensure!(*z == matvec_oracle(p, x, y, *d1, *d2), "matvec triple {n} ({d1}x{d2}) product wrong");
    }
    for (n, (par, x, y, z)) in batch.conv.iter().enumerate() {
        let xi: Vec<i128> = x.iter().map(|&a| a as i128).collect();
        let yi: Vec<i128> = y.iter().map(|&a| a as i128).collect();
        let want: Vec<u64> = conv_scatter(par, &xi, &yi).iter().map(|v| v.rem_euclid(p as i128) as u64).collect();
        ensure!(*z == want, "conv triple {n} ({par:?}) product wrong");
    }
    let largest = batch.matvec.iter().map(|t| t.0 * t.1).max().unwrap_or(0);
    Ok(format!(
        "{} matvec (largest {largest} entries) and {} conv triples, products and MACs exact",
        batch.matvec.len(),
        batch.conv.len()
    ))
}

fn criterion_4(batch: &TripleBatch) -> Outcome {
    let total: u64 = batch.matvec_rotations.iter().sum();
    ensure!(total == 0, "{total} rotations across matvec triples");
    let (h, c, _) = triple_session(
        Backend::Rlwe,
        256,
        11,
        |ch, t| {
            t.gen_matvec(ch, 12, 40).unwrap();
            t.evaluator().snapshot().rotations
        },
        |ch, t| {
            t.gen_matvec(ch, 12, 40).unwrap();
            t.evaluator().snapshot().rotations
        },
    );
    ensure!(h + c == 0, "rlwe matvec rotated {} times", h + c);
    Ok(format!("0 rotations over {} sim shapes and one rlwe shape", batch.matvec_rotations.len()))
}

fn rotation_counts(slots: usize, d: usize, seed: u64) -> Result<(u64, u64), String> {
    let f = field();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (pk, sk) = keygen(&HeParams::new(Backend::Sim, slots, &f), &mut rng).map_err(|e| e.to_string())?;
    let ev = Evaluator::new(pk, f).map_err(|e| e.to_string())?;
    let x = SquareMat::random(&f, d, &mut rng);
    let y = SquareMat::random(&f, d, &mut rng);
    let want = matmul_oracle(f.p(), &raw(x.data()), &raw(y.data()), d);

    let cx = ev.encrypt(&encode_sigma(&x), &mut rng).unwrap();
    let cy = ev.encrypt(&encode_tau(&y, slots), &mut rng).unwrap();
    let before = ev.snapshot();
    let z = ct_matmul(&ev, &cx, &cy, d).unwrap();
    let fast = ev.snapshot().since(&before).rotations;
    ensure!(raw(&sk.decrypt(&f, &z).unwrap()[..d * d]) == want, "optimized product wrong at d={d}");

    let mut yv = y.data().to_vec();
    if replicates_rhs(d, slots) {
        yv.extend_from_slice(y.data());
    }
    let cx = ev.encrypt(x.data(), &mut rng).unwrap();
    let cy = ev.encrypt(&yv, &mut rng).unwrap();
    let before = ev.snapshot();
    let z = ct_matmul_unoptimized(&ev, &cx, &cy, d).unwrap();
    let slow = ev.snapshot().since(&before).rotations;
    ensure!(raw(&sk.decrypt(&f, &z).unwrap()[..d * d]) == want, "reference product wrong at d={d}");
    Ok((fast, slow))
}

fn criterion_5() -> Outcome {
    let mut parts = Vec::new();
    for d in [4usize, 8, 16] {
        for slots in [4096, d * d] {
            let (fast, slow) = rotation_counts(slots, d, d as u64)?;
            ensure!(2 * fast <= slow, "d={d} slots={slots}: {fast} vs {slow}");
            parts.push(format!("d={d}/N={slots}: {fast}/{slow}"));
        }
    }
    Ok(parts.join(", "))
}

fn matvec_offline_bytes(d1: usize, d2: usize) -> u64 {
    let (h, _, _) = triple_session(
        Backend::Sim,
        4096,
        13,
        |ch, t| {
            let before = ch.counters();
            t.gen_matvec(ch, d1, d2).unwrap();
            ch.counters().since(&before).total()
        },
        |ch, t| {
            t.gen_matvec(ch, d1, d2).unwrap();
        },
    );
    h
}

fn criterion_6() -> Outcome {
    let small = matvec_offline_bytes(16, 2048);
    let large = matvec_offline_bytes(64, 2048);
    let ratio = large as f64 / small as f64;
    ensure!((3.5..=4.5).contains(&ratio), "ratio {ratio:.3}");
    Ok(format!("16x2048 {small} B, 64x2048 {large} B, ratio {ratio:.3}"))
}

fn random_scalar_triples(
    f: &Field,
    alpha: Fe,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> (Vec<Fresh<ScalarTriple>>, Vec<Fresh<ScalarTriple>>) {
    let x = f.random_vec(n, rng);
    let y = f.random_vec(n, rng);
    let z: Vec<Fe> = x.iter().zip(&y).map(|(&a, &b)| f.mul(a, b)).collect();
    let (x0, x1) = deal_vec(f, alpha, &x, rng);
    let (y0, y1) = deal_vec(f, alpha, &y, rng);
    let (z0, z1) = deal_vec(f, alpha, &z, rng);
    let mk = |x: &AuthVec, y: &AuthVec, z: &AuthVec| -> Vec<Fresh<ScalarTriple>> {
        (0..n).map(|i| Fresh::new(ScalarTriple { x: x.get(i), y: y.get(i), z: z.get(i) })).collect()
    };
    (mk(&x0, &y0, &z0), mk(&x1, &y1, &z1))
}

struct ReluRun {
    relu: Vec<u64>,
    mac_ok: bool,
    check_ok: bool,
    bytes: u64,
}

/// The garbled ReLU protocol on `vals`, dealt from random shares.
fn relu_protocol(f: Field, vals: &[Fe], ot: OtBackend, seed: u64) -> ReluRun {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alpha = f.random_vec(1, &mut rng)[0];
    let (k0, k1) = split_key(&f, alpha, &mut rng);
    let (sh0, sh1) = (Shares::new(f, k0), Shares::new(f, k1));
    let gadget = ReluGadget::new(f).unwrap();
    let (v0, v1) = deal_vec(&f, alpha, vals, &mut rng);
    let (hp, cp) = nl_preprocess(&gadget, alpha, vals.len(), &mut rng);
    let (mut t0, mut t1) = random_scalar_triples(&f, alpha, vals.len(), &mut rng);
    let mut hp: Vec<_> = hp.into_iter().map(Fresh::new).collect();
    let mut cp: Vec<_> = cp.into_iter().map(Fresh::new).collect();
    let check_seed = [9u8; 32];
    let ((r0, q0, bytes), (r1, q1)) = run_pair(
        seed,
        |ch| {
            let cx = NlContext { sh: &sh0, gadget: &gadget, ot, batch: 0 };
            let mut ledger = CheckLedger::new();
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
            let before = ch.counters();
            let r = holder_relu(ch, &cx, &v0, &mut hp, &mut t0, &mut ledger, &NlTamper::default(), &mut rng).unwrap();
            let bytes = ch.counters().since(&before).total();
            (r, ledger.q_share(&f, &sh0.key, check_seed), bytes)
        },
        |ch| {
            let cx = NlContext { sh: &sh1, gadget: &gadget, ot, batch: 0 };
            let mut ledger = CheckLedger::new();
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 2);
            let r = client_relu(ch, &cx, &v1, &mut cp, &mut t1, &mut ledger, &mut rng).unwrap();
            (r, ledger.q_share(&f, &sh1.key, check_seed))
        },
    );
    ReluRun {
        relu: raw(&reveal_vec(&f, &r0.relu, &r1.relu)),
        mac_ok: mac_holds_vec(&f, alpha, &r0.relu, &r1.relu),
        check_ok: f.add(q0, q1) == Fe::ZERO,
        bytes,
    }
}

fn criterion_7() -> Outcome {
    let f = field();
    ensure!(f.kappa() == 44, "kappa {}", f.kappa());
    let n = 64;
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let vals = f.random_vec(n, &mut rng);
    let run = relu_protocol(f, &vals, OtBackend::Group, 17);
    ensure!(run.check_ok && run.mac_ok, "honest ReLU batch failed its checks");
    let per = run.bytes as f64 / n as f64;
    ensure!(per.total_cmp(&16_700.0).is_le(), "{per:.0} B per ReLU");
    Ok(format!("{per:.0} B per ReLU online ({n} activations, group OT, 128-bit labels)"))
}

fn sign_oracle(p: u64, v: u64) -> u64 {
    if 2 * v < p {
        v
    } else {
        0
    }
}

/// Garbles the sign circuit once per value with a fresh random split and
/// checks the decoded value bits and sign bit.
fn garbled_sign_sweep(kappa: u32, p: u64, vals: &[u64], splits: usize, rng: &mut ChaCha20Rng) -> Result<usize, String> {
    let c = build_sign_circuit(kappa, p).map_err(|e| e.to_string())?;
    let h = Hasher::new();
    let k = kappa as usize;
    let mut runs = 0;
    for &v in vals {
        for _ in 0..splits {
            let client = rng.random_range(0..p);
            let mut holder = (v + p - client) % p;
            // The holder share may arrive unreduced when it still fits in kappa bits.
            if rng.random_range(0..2) == 1 && holder + p < 1 << kappa {
                holder += p;
            }
            let (gc, keys) = garble(&c, &h, rng);
            let labels: Vec<Label> = sign_circuit_inputs(kappa, client, holder)
                .iter()
                .enumerate()
                .map(|(i, &b)| keys.input_label(i, b))
                .collect();
            let out = gc_eval(&c, &gc, &h, &labels).map_err(|e| e.to_string())?;
            let bits: Vec<bool> = out
                .iter()
                .enumerate()
                .map(|(i, &l)| keys.decode_output(i, l))
                .collect::<auditml_core::Result<_>>()
                .map_err(|e| e.to_string())?;
            let got: u64 = bits[..k].iter().enumerate().map(|(i, &b)| (b as u64) << i).sum();
            ensure!(got == v, "value bits {got} for v={v}");
            ensure!(bits[k] == (2 * v < p), "sign bit wrong for v={v}");
            runs += 1;
        }
    }
    Ok(runs)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    let small: Vec<u64> = (0..251).collect();
    let n_small = garbled_sign_sweep(8, 251, &small, 4, &mut rng)?;
    let f = field();
    let p = f.p();
    let half = p.div_ceil(2);
    let boundary = [0, 1, half - 1, half, p - 1];
    let n_big = garbled_sign_sweep(44, p, &boundary, 20, &mut rng)?;

    let f251 = Field::with_prime(251).unwrap();
    let vals: Vec<Fe> = small.iter().map(|&v| f251.elem(v)).collect();
    let run = relu_protocol(f251, &vals, OtBackend::Group, 81);
    ensure!(run.mac_ok && run.check_ok, "p=251 protocol checks failed");
    for (&v, &got) in small.iter().zip(&run.relu) {
        ensure!(got == sign_oracle(251, v), "p=251 ReLU({v}) = {got}");
    }
    let vals: Vec<Fe> = boundary.iter().map(|&v| f.elem(v)).collect();
    let run = relu_protocol(f, &vals, OtBackend::Group, 82);
    ensure!(run.mac_ok && run.check_ok, "44-bit protocol checks failed");
    for (&v, &got) in boundary.iter().zip(&run.relu) {
        ensure!(got == sign_oracle(p, v), "44-bit ReLU({v}) = {got}");
    }
    Ok(format!(
        "{n_small} garbled evaluations at p=251, {n_big} at the boundary set, ReLU protocol exact on both"
    ))
}

fn small_model() -> auditml_core::engine::ModelSpec {
    let mut rng = ChaCha20Rng::seed_from_u64(109);
    model(4, vec![fc(4, 3, 9, &mut rng), relu(), fc(3, 2, 9, &mut rng)])
}

fn fast_cfg(seed: u64, tamper: Vec<TamperSpec>) -> SessionConfig {
    SessionConfig {
        seed,
        slots: 64,
        tamper,
        ..SessionConfig::default()
    }
}

fn criterion_9() -> Outcome {
    let m = small_model();
    debug_assert!(matches!(m.layers[1].kind, LayerKind::Relu));
    let f = Field::new(m.field);
    let variants: [fn(&mut ChaCha20Rng) -> TamperTarget; 6] = [
        |_| TamperTarget::LinearShare { layer: 0 },
        |_| TamperTarget::LinearShare { layer: 2 },
        |_| TamperTarget::NonlinearInput { layer: 1 },
        |r| TamperTarget::OpenedDiff { index: r.random_range(0..12) },
        |r| TamperTarget::MacShare { index: r.random_range(0..12) },
        |r| TamperTarget::GcInputLabel { layer: 1, wire: r.random_range(0..88) },
    ];
    let runs: Vec<(Option<usize>, u64)> = (0..100u64)
        .map(|i| (None, i))
        .chain((0..variants.len()).flat_map(|v| (0..100u64).map(move |i| (Some(v), i))))
        .collect();
    let results = par_map(&runs, |&(variant, i)| {
        let seed = 1_000 + i + 1_000 * variant.map_or(0, |v| v as u64 + 1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let inputs = random_inputs(2, 4, 30, &mut rng);
        let tamper = match variant {
            None => Vec::new(),
            Some(v) => {
                let mut delta: i64 = rng.random_range(1..1 << 40);
                if rng.random_range(0..2) == 1 {
                    delta = -delta;
                }
                vec![TamperSpec { target: variants[v](&mut rng), delta }]
            }
        };
        let (h, c) = session(&m, &inputs, &fast_cfg(seed, tamper), &fast_cfg(seed + 7, vec![]));
        match variant {
            None => match (h, c) {
                (Ok(_), Ok(out)) => {
                    let exact = inputs.iter().zip(&out.outputs).all(|(x, o)| {
                        o.iter().map(|&v| f.decode_int(v) as i128).collect::<Vec<_>>() == plain_forward(&m, x)
                    });
                    if exact {
                        Ok(())
                    } else {
                        Err(format!("honest run {i}: wrong outputs"))
                    }
                }
                (h, c) => Err(format!("honest run {i}: holder {:?}, client {:?}", h.err(), c.err())),
            },
            Some(v) => match (h, c) {
                (Err(Error::Abort), Err(Error::Abort)) => Ok(()),
                (h, c) => Err(format!("variant {v} run {i}: holder {:?}, client {:?}", h.err(), c.err().map(|e| e.to_string()))),
            },
        }
    });
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    ensure!(failures.is_empty(), "{} failures, first: {}", failures.len(), failures[0]);
    Ok(format!("{} tamper variants x 100 runs all aborted, 0/100 honest runs aborted", variants.len()))
}

type TripleDump = (
    Vec<auditml_core::triples::MatVecTriple>,
    Vec<auditml_core::triples::ConvTriple>,
    Vec<ScalarTriple>,
    AuthVec,
);

fn pipeline(backend: Backend) -> (TripleDump, TripleDump, Fe) {
    let dims = [(1, 1), (3, 7), (16, 16), (9, 16)];
    let convs = [
        ConvParams { in_w: 4, in_h: 4, in_c: 1, half: 1, out_c: 2, pad: 1, stride: 1 },
        ConvParams { in_w: 3, in_h: 2, in_c: 2, half: 0, out_c: 3, pad: 0, stride: 1 },
    ];
    let work = |ch: &mut auditml_core::harness::channel::Channel,
                mv: &mut dyn FnMut(&mut auditml_core::harness::channel::Channel, usize, usize) -> auditml_core::triples::MatVecTriple,
                cv: &mut dyn FnMut(&mut auditml_core::harness::channel::Channel, &ConvParams) -> auditml_core::triples::ConvTriple| {
        let m: Vec<_> = dims.iter().map(|&(a, b)| mv(ch, a, b)).collect();
        let c: Vec<_> = convs.iter().map(|p| cv(ch, p)).collect();
        (m, c)
    };
    triple_session(
        backend,
        256,
        31,
        |ch, t| {
            let (m, c) = {
                let t = std::cell::RefCell::new(&mut *t);
                work(ch, &mut |ch, a, b| t.borrow_mut().gen_matvec(ch, a, b).unwrap(), &mut |ch, p| {
                    t.borrow_mut().gen_conv(ch, p).unwrap()
                })
            };
            (m, c, t.gen_scalar(ch, 20).unwrap(), t.gen_masks(ch, 30).unwrap())
        },
        |ch, t| {
            let (m, c) = {
                let t = std::cell::RefCell::new(&mut *t);
                work(ch, &mut |ch, a, b| t.borrow_mut().gen_matvec(ch, a, b).unwrap(), &mut |ch, p| {
                    t.borrow_mut().gen_conv(ch, p).unwrap()
                })
            };
            (m, c, t.gen_scalar(ch, 20).unwrap(), t.gen_masks(ch, 30).unwrap())
        },
    )
}

fn criterion_10() -> Outcome {
    let (sim_h, sim_c, sim_alpha) = pipeline(Backend::Sim);
    let (rlwe_h, rlwe_c, rlwe_alpha) = pipeline(Backend::Rlwe);
    ensure!(sim_alpha == rlwe_alpha, "MAC keys differ");
    ensure!(sim_h == rlwe_h, "holder's decrypted shares differ between backends");
    ensure!(sim_c == rlwe_c, "client shares differ between backends");
    let f = field();
    for (a, b) in sim_h.0.iter().zip(&sim_c.0) {
        let x = open_checked(&f, sim_alpha, &a.x, &b.x, "X")?;
        let y = open_checked(&f, sim_alpha, &a.y, &b.y, "y")?;
        let z = open_checked(&f, sim_alpha, &a.z, &b.z, "z")?;
        ensure!(z == matvec_oracle(f.p(), &x, &y, a.d1, a.d2), "{}x{} product wrong", a.d1, a.d2);
    }
    for (a, b) in sim_h.2.iter().zip(&sim_c.2) {
        let (x, y, z) = (f.add(a.x.val, b.x.val), f.add(a.y.val, b.y.val), f.add(a.z.val, b.z.val));
        ensure!(z.value() == mulmod(f.p(), x.value(), y.value()), "scalar triple wrong");
    }
    Ok(format!(
        "{} matvec, {} conv, {} scalar triples and {} masks identical under sim and rlwe (N=256)",
        sim_h.0.len(),
        sim_h.1.len(),
        sim_h.2.len(),
        sim_h.3.len()
    ))
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let titles = [
        "end-to-end MLP 784-32-10 over 100 samples",
        "plaintext permutation identity",
        "triple soundness",
        "rotation-free matrix-vector triples",
        "rotation halving in ciphertext matmul",
        "offline communication scaling",
        "online bytes per ReLU",
        "garbled sign correctness",
        "soundness against tampering",
        "sim and rlwe backend equivalence",
    ];
    let mut batch: Option<Result<TripleBatch, String>> = None;
    let mut failed = 0;
    for (i, title) in titles.iter().enumerate() {
        let n = i + 1;
        if !on(n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| -> Outcome {
            match n {
                1 => criterion_1(),
                2 => criterion_2(),
                3 | 4 => {
                    let b = batch.get_or_insert_with(triple_batch).as_ref().map_err(Clone::clone)?;
                    if n == 3 {
                        criterion_3(b)
                    } else {
                        criterion_4(b)
                    }
                }
                5 => criterion_5(),
                6 => criterion_6(),
                7 => criterion_7(),
                8 => criterion_8(),
                9 => criterion_9(),
                _ => criterion_10(),
            }
        }))
        .unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
