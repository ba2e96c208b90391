//! Two-party secure inference for auditing the fairness of a neural network.
//!
//! A client holding a labelled test set with group annotations queries a model
//! holder's network without either side revealing its inputs. Linear layers run
//! on authenticated Beaver-style triples generated offline with packed
//! homomorphic encryption; ReLU layers run through a garbled sign circuit whose
//! output labels unlock authenticated bit shares. A single randomized MAC check
//! at the end catches any deviation by the model holder before the client
//! computes per-group risks from the reconstructed predictions.
//!
//! Module map:
//!
//! * [`field`]: prime-field arithmetic, signed fixed-point encoding, bit decomposition
//! * [`sharing`]: additive and MAC-authenticated shares, Beaver multiplication
//! * [`he`]: packed homomorphic encryption behind a simulation backend and an RLWE backend
//! * [`linalg`]: slot permutations, ciphertext matrix products, convolution lowering
//! * [`triples`]: offline matrix-vector, convolution and scalar triple generation
//! * [`gc`]: half-gates garbling and the ReLU sign circuit
//! * [`ot`]: 1-out-of-2 oblivious transfer
//! * [`nonlinear`]: garbled ReLU preprocessing and online evaluation
//! * [`engine`]: online orchestration and the batched consistency check
//! * [`fairness`]: empirical per-group risk, fairness gap and reports
//! * [`harness`]: channels, framing, file formats, tamper injection, party runners
#![deny(unsafe_code)]

pub mod engine;
pub mod error;
pub mod fairness;
pub mod field;
pub mod gc;
pub mod harness;
pub mod he;
pub mod linalg;
pub mod nonlinear;
pub mod ot;
pub mod sharing;
pub mod triples;
pub mod wire;

pub use engine::CheckLedger;
pub use error::{Error, Result};
pub use field::{Fe, Field, FieldConfig};
pub use sharing::{AuthShare, MacKey, Party};
pub use fairness::{FairnessReport, Sample};
