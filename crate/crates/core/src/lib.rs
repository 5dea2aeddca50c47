//! Rollover-preventive active suspension: vehicle roll model, disjunctive
//! wheel lift-off constraints, optimal force allocation and closed-loop
//! validation.

pub mod alpha;
pub mod closed_loop;
pub mod disjunction;
pub mod io;
pub mod nlp;
pub mod rollover;
pub mod synthesis;
pub mod transcription;
pub mod vehicle;
