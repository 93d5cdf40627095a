//! Planning case model: buses, branches, devices, scenarios, operating
//! states and the investment catalogue, plus JSON I/O and validation.

mod case;
pub mod matpower;
mod validate;

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

pub use case::{
    Bus, BusLoading, BusOverride, FlexProvider, Generator, InvestmentOption, Line, NetworkCase,
    OptionKind, Scenario, SystemState,
};
pub use validate::{has_errors, is_connected, validate_case, Diagnostic, Severity};

use crate::error::{Error, Result};

/// The bundled five-bus planning case.
pub const CASE5_JSON: &str = include_str!("../../data/case5.json");

/// Parses a case from JSON text without validating it.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        what: "case".into(),
        message: e.to_string(),
    })
}

/// Reads, parses and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let case = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    ensure_valid(case)
}

/// Validates an in-memory case, returning it unchanged when it has no errors.
pub fn ensure_valid(case: NetworkCase) -> Result<NetworkCase> {
    let diags = validate_case(&case);
    if has_errors(&diags) {
        return Err(Error::Validation(
            diags
                .into_iter()
                .filter(|d| d.severity == Severity::Error)
                .collect(),
        ));
    }
    Ok(case)
}

pub fn to_json(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialization cannot fail")
}

pub fn save_case(case: &NetworkCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(case)).map_err(|e| Error::io(path, e))
}

/// The bundled five-bus case, already validated.
pub fn case5() -> NetworkCase {
    ensure_valid(parse_case(CASE5_JSON).expect("bundled case parses"))
        .expect("bundled case is valid")
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn case_hash(case: &NetworkCase) -> String {
    let bytes = serde_json::to_vec(case).expect("case serialization cannot fail");
    hex_digest(&bytes)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
