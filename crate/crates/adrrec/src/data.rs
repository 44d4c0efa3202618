//! Locating, parsing and filtering a dataset.

use std::path::Path;

use adrrec_core::corpus::{build_sequences, UserSequences};
use adrrec_core::config::DataConfig;

use crate::cache;
use crate::error::{AppError, AppResult};
use crate::formats::{read_interactions, Format};

#[derive(Clone, Debug)]
pub struct Loaded {
    pub sequences: UserSequences,
    pub malformed: usize,
}

/// Reads a corpus cache as-is, or parses a raw log and applies the count filter.
/// `max_users` then truncates either one.
pub fn load(data: &DataConfig) -> AppResult<Loaded> {
    let path = data.path.as_deref().ok_or_else(|| AppError::Config("data.path: no dataset given (use --dataset)".into()))?;
    let path = Path::new(path);
    let (sequences, malformed) = if cache::is_cache(path) {
        (cache::load(path)?, 0)
    } else {
        let format: Format = data.format.as_deref().ok_or_else(|| AppError::Config("data.format: raw input needs --format".into()))?.parse()?;
        let ingested = read_interactions(path, format)?;
        (build_sequences(&ingested.interactions, data.min_count)?, ingested.malformed)
    };
    let sequences = match data.max_users {
        Some(n) => sequences.take_users(n),
        None => sequences,
    };
    Ok(Loaded { sequences, malformed })
}
