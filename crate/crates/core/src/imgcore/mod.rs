//! Raster types, color statistics, patch grids, PNG I/O and RNG streams.

mod image;
mod io;
mod mask;
mod patch;
mod rng;
mod stats;

pub use self::image::{quantize_value, Image, CHANNELS, MIN_TRANSFORM_SIDE};
pub use self::io::{load_image, load_image_with, load_mask, save_image, save_mask, LoadOptions};
pub use self::mask::{Mask, MASK_THRESHOLD};
pub use self::patch::{classify_patches, PatchClass, PatchGrid};
pub use self::rng::RngStream;
pub use self::stats::{channel_histogram, region_histogram, ColorStats, MeanAccumulator, MeanRgb};
