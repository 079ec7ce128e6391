use thiserror::Error;

use crate::frame::{FrameId, PsuId, UnitId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate unit id {0}")]
    DuplicateUnit(UnitId),
    #[error("duplicate frame id {0}")]
    DuplicateFrame(FrameId),
    #[error("duplicate psu id {psu} in frame {frame}")]
    DuplicatePsu { frame: FrameId, psu: PsuId },
    #[error("unit {0} belongs to no frame")]
    EmptyMembership(UnitId),
    #[error("unit {unit} listed in psus {first} and {second} of frame {frame}")]
    SsuInTwoPsus {
        frame: FrameId,
        unit: UnitId,
        first: PsuId,
        second: PsuId,
    },
    #[error("unit {unit}: membership in frame {frame} does not match the frame's partition")]
    MembershipMismatch { unit: UnitId, frame: FrameId },
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),
    #[error("psu {psu} is not part of frame {frame}")]
    UnknownPsu { frame: FrameId, psu: PsuId },
    #[error("unit {0} has no yield value")]
    MissingYield(UnitId),
    #[error("invalid design for frame {frame}: {reason}")]
    InvalidDesign { frame: FrameId, reason: String },
    #[error("psu {psu} of frame {frame} lists {listed} of {size} ssus; second-stage selection needs a fully enumerated psu")]
    PsuNotEnumerated {
        frame: FrameId,
        psu: PsuId,
        listed: usize,
        size: usize,
    },
    #[error("sample space has {cardinality} draws, above the cap of {cap}")]
    EnumerationCap { cardinality: u128, cap: u128 },
    #[error("sample space has more than 2^128 draws")]
    SampleSpaceOverflow,
    #[error("between-psu variance undefined for frame {frame}: only {n} psu sampled")]
    BetweenPsuUndefined { frame: FrameId, n: usize },
    #[error("no weight for observation (frame {frame}, psu {psu}, unit {unit})")]
    MissingWeight {
        frame: FrameId,
        psu: PsuId,
        unit: UnitId,
    },
    #[error("no allocation known for psu {psu} of frame {frame} (unit {unit})")]
    MissingAllocation {
        frame: FrameId,
        psu: PsuId,
        unit: UnitId,
    },
    #[error("point ({x}, {y}) lies outside the raster extent")]
    PointOutside { x: f64, y: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("clustering: {0}")]
    Cluster(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidInput(message.into())
}
