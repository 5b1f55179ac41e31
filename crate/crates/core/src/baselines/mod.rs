//! The comparison classifiers: training-free CCA frequency recognition and
//! shrinkage LDA on band magnitudes.

pub mod cca;
pub mod lda;

pub use cca::{build_references, cca_classify, cca_classify_matrix, max_canonical_correlation, Correlation, ReferenceBank};
pub use lda::{band_features, lda_fit, lda_predict, ledoit_wolf_shrinkage, LdaModel};

/// Reference harmonics used by CCA unless configured otherwise.
pub const DEFAULT_CCA_HARMONICS: usize = 2;
