//! File formats: binary weights and descriptor files, PNM images and the
//! tab-separated text formats.

mod binary;
pub mod descriptors;
pub mod pnm;
pub mod text;
pub mod weights;

pub use descriptors::{decode_descriptors, encode_descriptors, load_descriptors, save_descriptors, DescriptorSet};
pub use pnm::{decode_image, encode_pgm, encode_ppm, read_image, write_pgm, write_ppm};
pub use text::*;
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
