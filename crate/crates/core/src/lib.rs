//! Self-supervised graph learning with hyperbolic code embeddings for
//! temporal health-event prediction.
//!
//! The pipeline runs in stages:
//!
//! 1. [`hyperbolic`] pre-trains Poincaré-ball embeddings of the code
//!    [`ontology`] with shared/local information flow.
//! 2. [`graph`] builds the directed co-occurrence graph of codes.
//! 3. [`encoder`] runs a GNN over that graph and pools admissions into a
//!    patient vector with code- and admission-level attention.
//! 4. [`decoder`] trains the encoder on the hierarchy-enhanced historical
//!    prediction task; [`training`] then fine-tunes it for diagnosis or
//!    heart-failure prediction.
//! 5. [`metrics`] and [`interpret`] evaluate and explain the result.
//!
//! [`pipeline`] chains the stages over on-disk artifacts.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod graph;
pub mod hyperbolic;
pub mod interpret;
pub mod metrics;
pub mod ontology;
pub mod pipeline;
pub mod tensor;
pub mod training;
