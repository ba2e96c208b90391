//! Online orchestration: model and input sharing, layer-by-layer evaluation
//! and the batched consistency check.

mod ledger;
mod model;
mod online;
mod prep;

pub use ledger::{CheckLedger, LedgerTamper, Opened};
pub use model::{Architecture, LayerKind, LayerSpec, ModelSpec};
pub use online::{
    client_check, client_online, client_query, holder_check, holder_online, holder_query, linear_eval,
    recv_client_input, share_client_input, share_model_weights_client, share_model_weights_holder, split_weights,
    OnlineContext,
};
pub use prep::{
    client_offline, holder_offline, ClientOffline, HolderOffline, LayerPrep, LinearTriple, OfflineBundle, PrepItem,
};
