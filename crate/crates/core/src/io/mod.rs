//! File formats: PGM and PFM images, ASCII PLY clouds, the rig config and
//! the CSV tables exchanged by the command-line tool.

mod config;
mod netpbm;
mod ply;
mod tables;

use thiserror::Error;

pub use config::{parse_config, read_config, write_config, ConfigError, RigConfig};
pub use netpbm::{read_pfm, read_pgm, write_pfm, write_pgm, FloatImage, PgmDepth};
pub use ply::{read_ply, write_ply};
pub use tables::{
    read_observations, read_search_domain, write_observations, write_scene_meta, write_search_domain,
    write_truth_match,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed {format} data: {message}")]
    Format { format: &'static str, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IoError {
    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        IoError::Format {
            format,
            message: message.into(),
        }
    }
}
