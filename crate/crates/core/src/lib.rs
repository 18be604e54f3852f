//! Real-time related-query suggestion and spelling correction.
//!
//! Query sessions and the tweet firehose are replayed in event time into
//! in-memory stores with exponentially decayed counts. Periodic ranking
//! cycles score co-occurring query pairs with soft-count association
//! metrics and publish atomic snapshots, which an HTTP frontend blends
//! with longer-horizon background snapshots at serve time.

pub mod analytics;
pub mod association;
pub mod background;
pub mod engine;
pub mod model;
pub mod serving;
pub mod snapshot;
pub mod spelling;
pub mod stores;
pub mod streams;
pub mod synth;

pub use engine::Engine;
pub use model::{DecayFn, EngineConfig, Query, QueryEvent, QuerySource, TweetEvent};
pub use snapshot::{Manifest, Profile, Snapshot};
