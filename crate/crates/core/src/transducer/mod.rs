//! Character-level encoder-decoder transformer for two-source reinflection.

mod config;
mod decode;
mod model;
mod predict;
mod train;
mod vocab;

pub use config::{Activation, BatchUnit, ModelConfig, PositionEncoding};
pub use decode::{
    beam_decode, beam_search, greedy_decode_batch, greedy_search, BeamOutput, Hypothesis, ModelScorer, StepScorer,
    FORBIDDEN,
};
pub use model::{Architecture, Batch, CrossCache, Encoded, Transducer};
pub use predict::{predict_examples, read_predictions, PredictionRow, PREDICTIONS_HEADER};
pub use train::{
    checkpoint_of, evaluate_dev, load_model, make_batches, train, CheckpointRecord, EncodedSet, EpochRecord,
    TrainOptions, TrainReport, Trained, CHECKPOINT_KIND,
};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};
