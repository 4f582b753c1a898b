//! Consumer-to-clinical terminology shift analysis.
//!
//! The crate pairs AI-draft and finalized document sections, counts
//! dictionary terms on both sides with a boundary-aware phrase matcher, and
//! derives occurrence accounting, dictionary-confirmed substitution events,
//! nonparametric statistics and clinician editing profiles from those counts.
//!
//! Per-section work runs on rayon when the `parallel` feature is enabled
//! (the default); every reduction is order independent so results do not
//! depend on the worker count.

pub mod cluster;
pub mod corpus;
pub mod dictionary;
pub mod diff;
pub mod exec;
pub mod frequency;
pub mod matcher;
pub mod stats;
pub mod synthgen;
pub mod transform;

pub use corpus::{Clinician, Corpus, Credential, IngestReport, NoteSection, SectionLabel, SpecialtyGroup};
pub use dictionary::{BuildReport, DictionaryConfig, MappingEntry, TermDictionary};
pub use exec::Parallelism;
pub use frequency::{CorpusSummary, NoteChange, SectionDelta, SectionMetrics, SideDelta};
pub use matcher::{PhraseMatcher, TermCounts, TokenSpan};
pub use transform::{FilterConfig, PairSummary, TransformationEvent};
