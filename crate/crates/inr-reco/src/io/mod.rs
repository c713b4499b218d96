//! On-disk formats: the portable complex-array interchange format, 8-bit
//! PGM export, key=value job configuration, and binary model checkpoints.

pub mod array;
pub mod checkpoint;
pub mod config;
pub mod pgm;

pub use array::{
    decode_raw, parse_header, read_complex_array, read_image, read_mask, read_real_image,
    read_volume, write_complex_array, write_image, write_mask, write_real_image, write_volume,
    write_sensitivities, read_sensitivities,
};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::parse_job_config;
pub use pgm::write_pgm;
