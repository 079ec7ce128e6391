//! Flat `key = value` helpers shared by the config-section parsers.

use crate::error::{Error, Result};

pub(crate) fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value `{value}` for `{key}`")))
}

pub(crate) fn unknown(key: &str) -> Error {
    Error::InvalidInput(format!("unknown key `{key}`"))
}
