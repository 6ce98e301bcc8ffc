//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Errors produced by validation and numerical routines in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix shape is empty or inconsistent (n = 0, d = 0, bad buffer length).
    InvalidShape(String),
    /// Id list length does not match the sample count.
    IdCountMismatch { expected: usize, found: usize },
    /// Id list contains a duplicate value.
    DuplicateId(u64),
    /// A row had (near-)zero norm where a unit norm was required.
    ZeroNormRow(usize),
    /// A matrix flagged as normalized has a row outside the unit-norm band.
    NotNormalized { row: usize, norm: f64 },
    /// An operation requires unit-norm inputs but the flag is unset.
    NormalizationRequired(&'static str),
    /// Paired matrices have different sample counts.
    LengthMismatch { left: usize, right: usize },
    /// Paired matrices carry ids that differ; position of first mismatch.
    IdMismatch(usize),
    /// Embedding or moment dimensions disagree.
    DimMismatch { left: usize, right: usize },
    /// Score vector contains a non-finite value.
    NonFiniteScore(usize),
    /// Requested k is zero or exceeds the number of scores.
    KOutOfRange { k: usize, n: usize },
    /// Threshold or other scalar parameter must be finite.
    NonFiniteParam(&'static str),
    /// Requested target exceeds the stage-1 survivor count.
    TargetExceedsStage1 { target: usize, stage1: usize },
    /// Requested target exceeds the input set size.
    TargetExceedsInput { target: usize, input: usize },
    /// A selection stage produced an empty survivor set.
    EmptyStage(&'static str),
    /// The greedy schedule needs at least one round.
    TauZero,
    /// Id remapping requested but the matrix carries no ids.
    MissingIds,
    /// Rank-1 downdate denominator fell below the stability floor.
    SingularDowndate { denom: f64 },
    /// Simulator configuration violates an invariant.
    ConfigInvalid(String),
    /// Training subset must contain at least two samples.
    SubsetTooSmall(usize),
    /// Test split is empty.
    EmptyTest,
    /// Classification setup has fewer than two classes or empty classes.
    DegenerateClasses,
    /// Teacher map shape does not match the world.
    ShapeMismatch(&'static str),
    /// Exhaustive subset search would exceed the enumeration budget.
    CombinatorialBlowup { combinations: u128, budget: u128 },
    /// Truncation rank is degenerate: trailing kept and first dropped
    /// singular values coincide, so the rank-r factor is not unique.
    DegenerateSpectrum { rank: usize, value: f64 },
    /// Histogram bin count must be at least one.
    BadBinCount,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidShape(msg) => write!(f, "InvalidShape: {msg}"),
            Error::IdCountMismatch { expected, found } => {
                write!(f, "IdCountMismatch: expected {expected} ids, found {found}")
            }
            Error::DuplicateId(id) => write!(f, "DuplicateId: {id}"),
            Error::ZeroNormRow(i) => write!(f, "ZeroNormRow: row {i} has near-zero norm"),
            Error::NotNormalized { row, norm } => {
                write!(f, "NotNormalized: row {row} has norm {norm}")
            }
            Error::NormalizationRequired(side) => {
                write!(f, "NotNormalized: {side} input must be normalized")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "LengthMismatch: {left} vs {right} samples")
            }
            Error::IdMismatch(pos) => write!(f, "IdMismatch: first differing position {pos}"),
            Error::DimMismatch { left, right } => {
                write!(f, "DimMismatch: {left} vs {right}")
            }
            Error::NonFiniteScore(i) => write!(f, "NonFiniteScore: index {i}"),
            Error::KOutOfRange { k, n } => write!(f, "KOutOfRange: k={k} with n={n}"),
            Error::NonFiniteParam(name) => write!(f, "NonFiniteParam: {name}"),
            Error::TargetExceedsStage1 { target, stage1 } => {
                write!(f, "TargetExceedsStage1: target {target} > stage-1 size {stage1}")
            }
            Error::TargetExceedsInput { target, input } => {
                write!(f, "TargetExceedsInput: target {target} > input size {input}")
            }
            Error::EmptyStage(name) => write!(f, "EmptyStage: stage {name} kept nothing"),
            Error::TauZero => write!(f, "TauZero: schedule needs tau >= 1"),
            Error::MissingIds => write!(f, "MissingIds: matrix carries no ids"),
            Error::SingularDowndate { denom } => {
                write!(f, "SingularDowndate: denominator {denom}")
            }
            Error::ConfigInvalid(msg) => write!(f, "ConfigInvalid: {msg}"),
            Error::SubsetTooSmall(n) => write!(f, "SubsetTooSmall: {n} samples"),
            Error::EmptyTest => write!(f, "EmptyTest: test split is empty"),
            Error::DegenerateClasses => write!(f, "DegenerateClasses"),
            Error::ShapeMismatch(what) => write!(f, "ShapeMismatch: {what}"),
            Error::CombinatorialBlowup { combinations, budget } => {
                write!(f, "CombinatorialBlowup: {combinations} subsets exceeds budget {budget}")
            }
            Error::DegenerateSpectrum { rank, value } => {
                write!(f, "DegenerateSpectrum: sigma_{rank} == sigma_{} == {value}", rank + 1)
            }
            Error::BadBinCount => write!(f, "BadBinCount: bins must be >= 1"),
        }
    }
}
