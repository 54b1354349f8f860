//! Labeled direction-of-arrival datasets: torus source sampling, rendering
//! through RIRs, SNR augmentation and on-disk shards.

mod bank;
mod render;
mod resample;
mod snr;
mod store;
mod torus;

pub use bank::{synthesize, BankEntry, SignalBank, SignalSource, SyntheticKind};
pub use render::{render_example, render_with_rir, unit_label, LabeledExample, RenderConfig};
pub use resample::resample;
pub use snr::{add_noise, augment_snr, SnrPolicy, AUGMENT_MAX_SNR_DB, AUGMENT_NOISELESS_PROB};
pub use store::{
    build_dataset, read_shard, render_indexed, split_counts, Dataset, DatasetConfig, DatasetManifest, ExampleMeta,
    Record, Split, SplitCounts, FORMAT_VERSION, MANIFEST_FILE,
};
pub use torus::{sample_torus, TorusSpec};
