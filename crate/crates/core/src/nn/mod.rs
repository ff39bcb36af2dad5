//! Network blocks built from graph primitives. Each block registers its
//! parameters under a name prefix and appends nodes to a caller-owned graph,
//! so two branches that call the same block share weights by construction.

mod init;
mod layers;
mod net;

pub use init::{dropout_mask, glorot_uniform};
pub use layers::{Conv, Deconv, Dense, Lstm, LstmState};
pub use net::{
    reparameterize, ConvEncoder, ConvOut, Encoded, ImageDecoder, MetricArch, MetricNet, SeqBatch,
    SeqDecoder, SeqEncoder, VaeHead, METRIC_PREFIX,
};
