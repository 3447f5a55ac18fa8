//! Independent reference implementations used to validate `pbgc` end to end,
//! and the bookkeeping for the acceptance run.
//!
//! Nothing here is used by the library itself. The oracles are deliberately
//! naive (scalar loops, explicit trigonometry) so that they share no code
//! path with the vectorized implementations they check.

pub mod gradcheck;
pub mod oracle;
pub mod report;
