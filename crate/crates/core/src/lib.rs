//! Dimensional aspect-based sentiment analysis toolkit.
//!
//! * [`model`]: VA pairs, terms, categories and annotated records.
//! * [`dataio`]: the task JSON formats, flattening and submission writing.
//! * [`metrics`]: RMSE / PCC / CCC and continuous F1.
//! * [`regressor`]: aspect-conditioned VA regression over a pluggable encoder.
//! * [`genio`]: prompts, generated-JSON parsing and adapter configuration.
//! * [`eda`]: split statistics, NULL analysis and PSI drift.
//! * [`scoring`]: whole-submission scoring against gold.

pub mod dataio;
pub mod eda;
pub mod genio;
pub mod metrics;
pub mod model;
pub mod regressor;
pub mod scoring;
pub mod synthetic;

pub use model::{
    AnnotatedRecord, Annotation, AspectEntry, Category, Domain, Language, NormalizedVA, Review,
    SentimentTuple, SplitKind, Subtask, Term, VAPair,
};
