//! Tokenization, skip-gram training and pooled text encoding.

mod skipgram;
mod table;

pub use skipgram::{sgns_loss_and_grad, train_skipgram, SgnsGrad, SkipgramConfig, TrainedEmbeddings, Vocab};
pub use table::{distance, Encoding, EmbeddingTable};
pub(crate) use table::squared_distance;

/// Lowercases and splits on every maximal run of non-alphanumeric
/// characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
