//! Left-nested implicational encodings of token sequences, an LJT prover over them,
//! fragment retrieval, and the Arrow operator language model.

pub mod formula;
pub mod prover;
pub mod retrieval;
pub mod corpus;
pub mod model;
pub mod inference;
