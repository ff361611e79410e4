pub mod corpus_io;
pub mod dense_retrieval;
pub mod evaluation;
pub mod pipeline;
pub mod query_expansion;
pub mod ranking;
pub mod sparse_retrieval;
pub mod text_analysis;
pub mod training_objectives;

mod codec;

pub use codec::CodecError;
