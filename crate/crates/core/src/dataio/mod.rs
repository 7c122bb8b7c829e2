//! File formats, manifests, the synthetic dataset generator and
//! checkpoints.

pub mod checkpoint;
pub mod manifest;
pub mod pgm;
pub mod predictions;
pub mod record;
pub mod synth;

pub use checkpoint::{Checkpoint, StoredParam};
pub use manifest::{manifest_base, Manifest, ManifestEntry, Sample, Split};
pub use pgm::Pgm;
pub use predictions::{read_predictions, write_predictions, PredictionRow};
pub use record::{read_record, write_record, EmbeddingRecord, RecordHeader};
pub use synth::{generate_synthetic, SynthConfig};
