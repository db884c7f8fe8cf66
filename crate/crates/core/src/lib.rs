//! Feature-isolation ablations, Fourier amplitude/phase augmentations,
//! cue-planted synthetic datasets and linear probes for measuring which image
//! cues a classifier relies on.

pub mod ablation;
pub mod dataset;
pub mod error;
pub mod imgcore;
pub mod probe;
pub mod protocol;
pub mod spectral;
pub mod synthgen;

pub use ablation::{apply_ablation, AblationConfig, AblationKind, SketchParams};
pub use error::{Error, Result};
pub use imgcore::{Image, Mask, MeanRgb, RngStream};
pub use spectral::{AprVariant, LabelSource, SpectralPlanes};
pub use dataset::{Dataset, Sample, SpectralSetting, Split};
pub use probe::{FeatureKind, Metrics, ProbeConfig, ProbeModel};
pub use protocol::{run_protocol, MetricsTable, Protocol, ProtocolConfig};
pub use synthgen::{Cue, CueSpec, SplitCounts};
