//! Cohort comparison decision tree.
//!
//! Each slice is first checked for normality. When every slice passes, the
//! means are compared with a t-test (two slices) or a one-way ANOVA followed
//! by pairwise t-tests. Otherwise Mann-Whitney (two slices) or Kruskal-Wallis
//! followed by pairwise Mann-Whitney tests are used. Paired slices always go
//! to the Wilcoxon signed-rank test, and pass proportions to pairwise z-tests.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::normality::dagostino_pearson_k2;
use crate::parametric::{anova_oneway, mean, sample_sd, t_test_unpaired, z_two_proportions};
use crate::result::{Alternative, TestResult};
use crate::{kruskal_wallis, mann_whitney_u, wilcoxon_critical_value, wilcoxon_signed_rank, Result, StatsError};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Sample { label: label.into(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionSlice {
    pub label: String,
    pub passed: u64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Parametric,
    Nonparametric,
    Paired,
    Proportion,
}

impl Branch {
    pub fn describe(self, groups: usize) -> &'static str {
        match (self, groups) {
            (Branch::Parametric, 2) => "parametric: unpaired two-tailed t-test",
            (Branch::Parametric, _) => "parametric: one-way ANOVA + unpaired t-test post hoc",
            (Branch::Nonparametric, 2) => "nonparametric: Mann-Whitney U",
            (Branch::Nonparametric, _) => "nonparametric: Kruskal-Wallis + Mann-Whitney post hoc",
            (Branch::Paired, _) => "paired: Wilcoxon signed-rank",
            (Branch::Proportion, _) => "proportions: pairwise two-proportion z-tests",
        }
    }
}

/// Symbols attached to significant pairwise results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStyle {
    /// The last slice is the reference group: last vs first is `*`, last vs
    /// second is `#`, first vs second is `$`; further pairs use `†`, `‡`, `§`.
    #[default]
    Reference,
    /// Every pair is a before/after comparison within one cohort: `¶`.
    Period,
}

impl MarkerStyle {
    pub fn marker(self, i: usize, j: usize, k: usize) -> String {
        let (i, j) = (i.min(j), i.max(j));
        match self {
            MarkerStyle::Period => "¶".into(),
            MarkerStyle::Reference => {
                let last = k - 1;
                match (i, j) {
                    (0, j) if j == last => "*".into(),
                    (1, j) if j == last => "#".into(),
                    (0, 1) => "$".into(),
                    _ => {
                        const EXTRA: [&str; 3] = ["†", "‡", "§"];
                        EXTRA[(i * k + j) % EXTRA.len()].into()
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub title: String,
    pub alpha: f64,
    pub paired: bool,
    pub markers: MarkerStyle,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            title: String::from("comparison"),
            alpha: DEFAULT_ALPHA,
            paired: false,
            markers: MarkerStyle::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityVerdict {
    pub label: String,
    pub normal: bool,
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub first: String,
    pub second: String,
    pub result: TestResult,
    pub significant: bool,
    /// Marker symbol for this pair; meaningful only when `significant`.
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub title: String,
    pub alpha: f64,
    pub branch: Branch,
    pub descriptives: Vec<Descriptives>,
    pub normality: Vec<NormalityVerdict>,
    pub omnibus: Option<TestResult>,
    pub omnibus_significant: bool,
    pub pairwise: Vec<PairwiseResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub proportions: Vec<ProportionSlice>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub paired_detail: Option<PairedDetail>,
}

/// Both tails of a paired comparison, with table critical values for the
/// number of nonzero differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDetail {
    /// One-sided test in the direction of the observed effect.
    pub one_sided: TestResult,
    pub critical_one_sided: Option<u32>,
    pub critical_two_sided: Option<u32>,
}

fn descriptives(sample: &Sample) -> Descriptives {
    Descriptives {
        label: sample.label.clone(),
        n: sample.values.len(),
        mean: mean(&sample.values),
        sd: sample_sd(&sample.values),
    }
}

/// Normality verdict for one slice. Slices too small or too degenerate for
/// the omnibus test are treated as non-normal.
pub fn normality_verdict(sample: &Sample, alpha: f64) -> NormalityVerdict {
    match dagostino_pearson_k2(&sample.values) {
        Ok(result) => NormalityVerdict {
            label: sample.label.clone(),
            normal: result.p_value >= alpha,
            result: Some(result),
            reason: None,
        },
        Err(err) => NormalityVerdict {
            label: sample.label.clone(),
            normal: false,
            result: None,
            reason: Some(format!("normality not testable ({err}); treated as non-normal")),
        },
    }
}

/// Runs the decision tree over two or more score slices.
pub fn compare_groups(slices: &[Sample], options: &CompareOptions) -> Result<ComparisonReport> {
    if slices.len() < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: slices.len() });
    }
    if let Some(i) = slices.iter().position(|s| s.values.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let alpha = options.alpha;
    let descriptives: Vec<Descriptives> = slices.iter().map(descriptives).collect();
    let normality: Vec<NormalityVerdict> = slices.iter().map(|s| normality_verdict(s, alpha)).collect();
    let k = slices.len();
    let pair = |i: usize, j: usize, result: TestResult| PairwiseResult {
        first: slices[i].label.clone(),
        second: slices[j].label.clone(),
        significant: result.significant(alpha),
        marker: options.markers.marker(i, j, k),
        result,
    };

    let mut paired_detail = None;
    let (branch, omnibus, pairwise) = if options.paired {
        if k != 2 {
            return Err(StatsError::InvalidArgument(format!("paired comparison needs exactly two slices, got {k}")));
        }
        let (x, y) = (&slices[0].values, &slices[1].values);
        let result = wilcoxon_signed_rank(x, y, Alternative::TwoSided)?;
        let greater = wilcoxon_signed_rank(x, y, Alternative::Greater)?;
        let less = wilcoxon_signed_rank(x, y, Alternative::Less)?;
        let one_sided = if greater.p_value <= less.p_value { greater } else { less };
        let direction = one_sided.alternative;
        let n = result.n[0];
        paired_detail = Some(PairedDetail {
            critical_one_sided: wilcoxon_critical_value(n, alpha, direction),
            critical_two_sided: wilcoxon_critical_value(n, alpha, Alternative::TwoSided),
            one_sided,
        });
        (Branch::Paired, result.clone(), vec![pair(0, 1, result)])
    } else if normality.iter().all(|v| v.normal) {
        let mut pairs = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let r = t_test_unpaired(&slices[i].values, &slices[j].values, Alternative::TwoSided)?;
                pairs.push(pair(i, j, r));
            }
        }
        let omnibus = if k == 2 {
            pairs[0].result.clone()
        } else {
            let groups: Vec<Vec<f64>> = slices.iter().map(|s| s.values.clone()).collect();
            anova_oneway(&groups)?
        };
        (Branch::Parametric, omnibus, pairs)
    } else {
        let mut pairs = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let r = mann_whitney_u(&slices[i].values, &slices[j].values, Alternative::TwoSided)?;
                pairs.push(pair(i, j, r));
            }
        }
        let omnibus = if k == 2 {
            pairs[0].result.clone()
        } else {
            let groups: Vec<Vec<f64>> = slices.iter().map(|s| s.values.clone()).collect();
            kruskal_wallis(&groups)?
        };
        (Branch::Nonparametric, omnibus, pairs)
    };

    Ok(ComparisonReport {
        title: options.title.clone(),
        alpha,
        branch,
        descriptives,
        normality,
        omnibus_significant: omnibus.significant(alpha),
        omnibus: Some(omnibus),
        pairwise,
        proportions: Vec::new(),
        paired_detail,
    })
}

/// Pairwise two-proportion z-tests between slices.
pub fn compare_proportions(slices: &[ProportionSlice], options: &CompareOptions) -> Result<ComparisonReport> {
    if slices.len() < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: slices.len() });
    }
    if let Some(i) = slices.iter().position(|s| s.n == 0) {
        return Err(StatsError::EmptyGroup(i));
    }
    let k = slices.len();
    let mut pairwise = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&slices[i], &slices[j]);
            let result = z_two_proportions(a.passed, a.n, b.passed, b.n, Alternative::TwoSided)?;
            pairwise.push(PairwiseResult {
                first: a.label.clone(),
                second: b.label.clone(),
                significant: result.significant(options.alpha),
                marker: options.markers.marker(i, j, k),
                result,
            });
        }
    }
    let descriptives = slices
        .iter()
        .map(|s| {
            let p = s.passed as f64 / s.n as f64;
            Descriptives { label: s.label.clone(), n: s.n as usize, mean: p, sd: (p * (1.0 - p)).sqrt() }
        })
        .collect();
    Ok(ComparisonReport {
        title: options.title.clone(),
        alpha: options.alpha,
        branch: Branch::Proportion,
        descriptives,
        normality: Vec::new(),
        omnibus: None,
        omnibus_significant: pairwise.iter().any(|p| p.significant),
        pairwise,
        proportions: slices.to_vec(),
        paired_detail: None,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ComparisonReport {
    pub fn group_count(&self) -> usize {
        self.descriptives.len()
    }

    /// Plain-text report: mean ± SD table, normality verdicts, omnibus and
    /// pairwise results with significance markers.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.title);
        let _ = writeln!(out, "branch: {}", self.branch.describe(self.group_count()));
        let _ = writeln!(out, "significance: p < {}", self.alpha);
        let _ = writeln!(out);
        if self.branch == Branch::Proportion {
            let _ = writeln!(out, "{:<24} {:>6} {:>6} {:>10}", "group", "passed", "n", "proportion");
            for p in &self.proportions {
                let _ =
                    writeln!(out, "{:<24} {:>6} {:>6} {:>10.4}", p.label, p.passed, p.n, p.passed as f64 / p.n as f64);
            }
        } else {
            let _ = writeln!(out, "{:<24} {:>6} {:>18}", "group", "n", "mean ± SD");
            for d in &self.descriptives {
                let ms = format!("{:.2} ± {:.2}", d.mean, d.sd);
                let _ = writeln!(out, "{:<24} {:>6} {:>18}", d.label, d.n, ms);
            }
        }
        if !self.normality.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "normality (D'Agostino-Pearson K2):");
            for v in &self.normality {
                match &v.result {
                    Some(r) => {
                        let _ = writeln!(
                            out,
                            "  {:<22} K2 = {:.4}, p = {:.4} -> {}",
                            v.label,
                            r.statistic,
                            r.p_value,
                            if v.normal { "normal" } else { "not normal" }
                        );
                    }
                    None => {
                        let _ = writeln!(out, "  {:<22} {}", v.label, v.reason.as_deref().unwrap_or("not tested"));
                    }
                }
            }
        }
        if let Some(o) = &self.omnibus {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "omnibus: {} = {:.4}, p = {:.4}{}{}",
                o.method,
                o.statistic,
                o.p_value,
                if o.exact { " (exact)" } else { "" },
                if self.omnibus_significant { " *" } else { "" }
            );
        }
        if let Some(d) = &self.paired_detail {
            let critical = |c: Option<u32>| c.map_or("none".to_string(), |w| w.to_string());
            let _ = writeln!(
                out,
                "one-sided ({}): p = {:.4}; critical W at {}: one-sided {}, two-sided {}",
                match d.one_sided.alternative {
                    Alternative::Less => "first < second",
                    _ => "first > second",
                },
                d.one_sided.p_value,
                self.alpha,
                critical(d.critical_one_sided),
                critical(d.critical_two_sided)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "pairwise:");
        for p in &self.pairwise {
            let _ = writeln!(
                out,
                "  {} vs {}: {} = {:.4}, p = {:.4} {}",
                p.first,
                p.second,
                p.result.method,
                p.result.statistic,
                p.result.p_value,
                if p.significant { p.marker.as_str() } else { "" }
            );
        }
        out
    }

    /// CSV of the pairwise table.
    pub fn pairwise_csv(&self) -> String {
        let mut out = String::from("report,first,second,method,statistic,p_value,exact,significant,marker\n");
        self.append_pairwise_rows(&mut out);
        out
    }

    pub fn append_pairwise_rows(&self, out: &mut String) {
        for p in &self.pairwise {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&self.title),
                csv_field(&p.first),
                csv_field(&p.second),
                csv_field(&p.result.method.to_string()),
                p.result.statistic,
                p.result.p_value,
                p.result.exact,
                p.significant,
                if p.significant { p.marker.as_str() } else { "" }
            );
        }
    }
}
