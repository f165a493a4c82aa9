use std::fmt;

use serde::{Deserialize, Serialize};

/// Direction of the alternative hypothesis. `Less` means the first sample
/// (or the paired differences) is shifted towards smaller values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Less,
    Greater,
}

impl Alternative {
    pub fn tails(self) -> u8 {
        match self {
            Alternative::TwoSided => 2,
            Alternative::Less | Alternative::Greater => 1,
        }
    }
}

/// How a rank test should obtain its p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exactness {
    /// Exact enumeration below the size thresholds, asymptotic above.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DagostinoPearson,
    MannWhitney,
    KruskalWallis,
    WilcoxonSignedRank,
    TTestUnpaired,
    AnovaOneway,
    ZTwoProportions,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::DagostinoPearson => "D'Agostino-Pearson K2",
            Method::MannWhitney => "Mann-Whitney U",
            Method::KruskalWallis => "Kruskal-Wallis H",
            Method::WilcoxonSignedRank => "Wilcoxon signed-rank",
            Method::TTestUnpaired => "unpaired t-test",
            Method::AnovaOneway => "one-way ANOVA",
            Method::ZTwoProportions => "two-proportion z-test",
        };
        f.write_str(name)
    }
}

/// Outcome of a single hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    /// Sample size per group (a single entry for one-sample and paired tests).
    pub n: Vec<usize>,
    /// Degrees of freedom of the reference distribution, when there is one.
    pub df: Vec<f64>,
    pub exact: bool,
    /// `(favourable, total)` permutation counts behind an exact p-value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_counts: Option<(u128, u128)>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl TestResult {
    pub(crate) fn new(method: Method, statistic: f64, p_value: f64) -> Self {
        TestResult {
            method,
            statistic,
            p_value: clamp_p(p_value),
            alternative: Alternative::TwoSided,
            n: Vec::new(),
            df: Vec::new(),
            exact: false,
            exact_counts: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn exact_from_counts(method: Method, statistic: f64, hits: u128, total: u128) -> Self {
        let mut r = TestResult::new(method, statistic, hits as f64 / total as f64);
        r.exact = true;
        r.exact_counts = Some((hits, total));
        r
    }

    pub(crate) fn alternative(mut self, alternative: Alternative) -> Self {
        self.alternative = alternative;
        self
    }

    pub(crate) fn sizes(mut self, n: Vec<usize>) -> Self {
        self.n = n;
        self
    }

    pub(crate) fn df(mut self, df: Vec<f64>) -> Self {
        self.df = df;
        self
    }

    pub(crate) fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub(crate) fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}
