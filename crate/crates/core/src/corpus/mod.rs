//! Data model and corpus operations for rhetorical-role annotated judgments.

mod adjudicate;
mod foreign;
mod ingest;
mod model;
mod split;
mod stats;
pub mod webanno;

pub use webanno::import_webanno;

pub use adjudicate::{adjudicate, reduce_labels, Adjudication, Reduced};
pub use foreign::{load_foreign_corpus, LabelMapping, MappedLabel};
pub use ingest::{
    ingest_raw, PreprocessRule, PunctuationSplitter, RuleAction, RuleSet, SentenceSplitter,
};
pub use model::{
    load_corpus, save_corpus, AnnotationCell, DocumentRecord, Domain, MainLabel, Reduction,
    RhetoricalRole, SentenceRecord,
};
pub use split::{split_by_domain, split_corpus, CorpusSplit, Part, SplitRatios};
pub use stats::{label_distribution, shift_statistic, LabelDistribution, ShiftStatistic};
