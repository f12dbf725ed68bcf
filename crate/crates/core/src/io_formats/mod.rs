//! Readers and writers for images, audio, sampled signals, kernels and
//! checkpoints. Multi-byte binary payloads are little-endian unless a format
//! header says otherwise.

pub mod audio;
pub mod checkpoint;
pub mod csv;
pub mod image;
pub mod kernel_json;

pub use audio::{read_wav, write_wav, AudioBuffer};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use csv::{read_csv, write_csv, CsvSignal};
pub use image::{
    frames_to_grid_field, linear_to_srgb, read_frames, read_image, read_pfm, read_png,
    srgb_to_linear, write_image, write_pfm, write_png, ImageBuffer,
};
pub use kernel_json::{read_kernel_json, write_kernel_json, KernelMeta};
