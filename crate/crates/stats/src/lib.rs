//! Statistical procedures used to compare assessment cohorts.
//!
//! Every rank-based test supports an exact mode that enumerates the
//! permutation distribution (conditional on ties) and an asymptotic mode.
//! [`compare::compare_groups`] implements the branch selection between the
//! parametric and nonparametric families based on an omnibus normality check.

pub mod compare;
pub mod dist;
pub mod error;
pub mod kruskal;
pub mod mann_whitney;
pub mod normality;
pub mod parametric;
pub mod rank;
pub mod result;
pub mod wilcoxon;

pub use compare::{
    compare_groups, compare_proportions, Branch, CompareOptions, ComparisonReport, Descriptives, MarkerStyle,
    NormalityVerdict, PairedDetail, PairwiseResult, ProportionSlice, Sample,
};
pub use error::StatsError;
pub use kruskal::{kruskal_wallis, kruskal_wallis_with};
pub use mann_whitney::{mann_whitney_u, mann_whitney_u_with};
pub use normality::dagostino_pearson_k2;
pub use parametric::{anova_oneway, t_test_unpaired, z_two_proportions};
pub use result::{Alternative, Exactness, Method, TestResult};
pub use wilcoxon::{wilcoxon_critical_value, wilcoxon_signed_rank, wilcoxon_signed_rank_with};

pub type Result<T> = std::result::Result<T, StatsError>;
