//! Thematic-diversity profiling of social-media timelines and detection of
//! "on-mission" accounts: profiles that post across many themes yet push a
//! disproportionate, toxic volume into one narrow topic.
//!
//! Stages, in pipeline order:
//!
//! - [`corpus`]: JSONL ingestion, normalization, filtering
//! - [`scores`]: toxicity and bot scores behind pluggable backends with a cache
//! - [`topics`]: topic probability vectors and the topic → category catalog
//! - [`diversity`]: category probability vectors, entropy, groups I–VIII
//! - [`metrics`]: per-profile toxicity, lexical, activity and hashtag metrics
//! - [`mission`]: normalized topic vectors, topic labels, cluster designation
//! - [`classifier`]: feature extraction, SVM / CART / random forest, ablation
//! - [`synth`]: seeded synthetic corpora with ground truth
//! - [`pipeline`]: configuration, stage caching, reports and plot exports

pub mod classifier;
pub mod corpus;
pub mod diversity;
pub mod error;
pub mod metrics;
pub mod mission;
pub mod pipeline;
pub mod scores;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
