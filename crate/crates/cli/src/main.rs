//! `auditml`: run one party of a fairness audit.
//!
//! ```text
//! auditml holder all --model model.json --listen 127.0.0.1:7070
//! auditml client all --dataset data.csv --connect 127.0.0.1:7070 --epsilon 0.05 --report report.json
//! ```
//!
//! Exit status: 0 on success, 2 when the protocol aborts, 3 on malformed
//! input or flags, 1 on anything else.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use auditml_core::harness::runner::{
    exit_code, run_client, run_holder, seed_from_env, ClientOptions, Connection, HolderOptions, Stage, EXIT_OK,
    EXIT_PARSE,
};
use auditml_core::harness::session::SessionConfig;
use auditml_core::harness::tamper::TamperSpec;
use auditml_core::he::{Backend, DEFAULT_SLOTS};
use auditml_core::ot::OtBackend;
use auditml_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "auditml", version, about = "Two-party fairness audit of a private neural network")]
struct Cli {
    #[command(subcommand)]
    role: Role,
}

#[derive(Subcommand, Debug)]
enum Role {
    /// Model holder: serves its network to one client.
    Holder {
        #[arg(value_enum)]
        stage: StageArg,
        /// Model description (JSON).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
        /// Deviate from the protocol, e.g. `linear_share(1),delta=1`. Repeat or
        /// separate with `;`.
        #[arg(long)]
        tamper: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Auditor: queries the model on its dataset and reports the fairness gap.
    Client {
        #[arg(value_enum)]
        stage: StageArg,
        /// Rows of `features..., label, group` (CSV).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7070")]
        connect: String,
        /// Fairness threshold on the largest pairwise risk gap.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Failure probability recorded with the report.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        /// Groups expected in the dataset; comma-separated.
        #[arg(long, value_delimiter = ',')]
        groups: Vec<String>,
        /// Seconds to keep retrying the initial connect.
        #[arg(long, default_value_t = 30)]
        patience: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Where offline material and pending results live between stages.
    #[arg(long, default_value = "auditml-state")]
    state_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = HeArg::Sim)]
    he_backend: HeArg,
    /// Ciphertext slot count.
    #[arg(long, default_value_t = DEFAULT_SLOTS)]
    slots: usize,
    #[arg(long, value_enum, default_value_t = OtArg::Group)]
    ot: OtArg,
    /// Randomness seed; AUDITML_SEED takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session id; both parties must agree.
    #[arg(long, default_value_t = 1)]
    session: u64,
    /// Per-message receive timeout in seconds.
    #[arg(long, default_value_t = 300)]
    timeout: u64,
    /// Dump every framed message of this invocation to a file.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    Offline,
    Online,
    Check,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HeArg {
    Sim,
    Rlwe,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OtArg {
    Group,
    /// Both messages in the clear. Testing only.
    Simulated,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Offline => Stage::Offline,
            StageArg::Online => Stage::Online,
            StageArg::Check => Stage::Check,
            StageArg::All => Stage::All,
        }
    }
}

impl Common {
    fn connection(&self, endpoint: &str) -> Connection {
        Connection {
            session: self.session,
            timeout: Duration::from_secs(self.timeout.max(1)),
            transcript: self.transcript.clone(),
            ..Connection::new(endpoint)
        }
    }

    fn config(&self, tamper: Vec<TamperSpec>) -> Result<SessionConfig> {
        Ok(SessionConfig {
            backend: match self.he_backend {
                HeArg::Sim => Backend::Sim,
                HeArg::Rlwe => Backend::Rlwe,
            },
            slots: self.slots,
            ot: match self.ot {
                OtArg::Group => OtBackend::Group,
                OtArg::Simulated => OtBackend::Simulated,
            },
            seed: seed_from_env(self.seed)?,
            tamper,
        })
    }
}

fn run(role: Role) -> Result<()> {
    match role {
        Role::Holder {
            stage,
            model,
            listen,
            tamper,
            common,
        } => {
            let mut specs = Vec::new();
            for t in &tamper {
                specs.extend(TamperSpec::parse_list(t)?);
            }
            let opts = HolderOptions {
                model,
                conn: common.connection(&listen),
                state_dir: common.state_dir.clone(),
                cfg: common.config(specs)?,
            };
            run_holder(&opts, stage.into())
        }
        Role::Client {
            stage,
            dataset,
            connect,
            epsilon,
            delta,
            report,
            groups,
            patience,
            common,
        } => {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(Error::parse("--epsilon", "must be a non-negative number"));
            }
            if !(0.0..1.0).contains(&delta) {
                return Err(Error::parse("--delta", "must lie in [0, 1)"));
            }
            let mut conn = common.connection(&connect);
            conn.patience = Duration::from_secs(patience);
            let opts = ClientOptions {
                dataset,
                conn,
                state_dir: common.state_dir.clone(),
                cfg: common.config(Vec::new())?,
                epsilon,
                delta,
                report,
                groups,
            };
            let out = run_client(&opts, stage.into())?;
            if let Some(r) = out {
                let verdict = match r.fair {
                    Some(true) => "fair",
                    Some(false) => "unfair",
                    None => "no verdict",
                };
                println!(
                    "EFG {} ({verdict} at epsilon {}), report written to {}",
                    r.efg.as_deref().unwrap_or("-"),
                    r.epsilon,
                    opts.report.display()
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_PARSE as u8)
            } else {
                ExitCode::from(EXIT_OK as u8)
            };
        }
    };
    let result = run(cli.role);
    if let Err(e) = &result {
        match e {
            Error::Abort => eprintln!("auditml: protocol aborted: consistency check failed"),
            other => eprintln!("auditml: {other}"),
        }
    }
    ExitCode::from(exit_code(&result) as u8)
}
