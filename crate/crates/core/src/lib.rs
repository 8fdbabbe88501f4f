//! Symbolic music tokenization toolkit: MIDI file I/O, beat-grid
//! quantization, four token schemes, byte pair encoding, token syntax error
//! validation, corpus statistics and embedding diagnostics.

pub mod analysis;
pub mod bpe;
pub mod embed;
pub mod faults;
pub mod score;
pub mod smf;
pub mod tok;
pub mod tse;

pub use analysis::{note_histograms, succession_matrix, Histogram, SuccessionMatrix};
pub use bpe::{bpe_decode, bpe_encode, bpe_train, BpeModel};
pub use embed::{contrastive_loss, cosine_pair_density, load_embeddings, EmbeddingSet};
pub use score::{augment, quantize, QNote, Score};
pub use smf::{parse_smf, write_smf, RawNote, RawSong};
pub use tok::{build_vocab, detokenize, tokenize, Scheme, TokenSequence, TokenType, Vocabulary};
pub use tse::{validate, ErrorCategory, ErrorPolicy, TseReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
