pub mod calibrator;
pub mod corpus;
pub mod correlator;
pub mod evaluator;
pub mod provenance;
pub mod retriever;
pub mod synthgen;
pub mod tagger;
