//! Corpus statistics over module records: size distributions, comment
//! density and functional classes.
//!
//! Statistics are generic over the float type used for means and densities.
//! Medians are the lower middle element for even counts.

pub mod report;
pub mod taxonomy;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModuleRecord;
use crate::scan::comment_chars;
pub use report::{render_report, render_table, ReportFiles};
pub use taxonomy::{classify_by_keywords, classify_module, Classifier, Taxonomy, CLASS_COUNT};

/// Lower bounds of the line and token histogram buckets; the last is open.
pub const SIZE_EDGES: &[u64] = &[0, 10, 25, 50, 100, 250, 500, 1000, 2500, 5000, 10000];
pub const PORT_EDGES: &[u64] = &[0, 1, 2, 4, 8, 16, 32, 64];
/// Upper bounds (inclusive) of the comment density buckets, in percent.
pub const DENSITY_UPPER: &[f64] = &[12.5, 25.0, 37.5, 50.0, 62.5, 75.0, 100.0];

/// Lines with at least one non-whitespace character.
pub fn line_count(code: &str) -> u64 {
    code.lines().filter(|l| !l.trim().is_empty()).count() as u64
}

/// Percentage of characters inside comments, delimiters included. Zero for
/// empty code.
pub fn comment_density<T: Float>(code: &str) -> T {
    let total = code.chars().count();
    if total == 0 {
        return T::zero();
    }
    let inside = comment_chars(code);
    T::from(inside).unwrap() * T::from(100).unwrap() / T::from(total).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub count: usize,
    pub mean: T,
    pub median: T,
    pub min: T,
    pub max: T,
}

impl<T: Float> Summary<T> {
    pub fn right_skewed(&self) -> bool {
        self.mean > self.median
    }
}

/// Mean, lower median and extremes; `None` for no values.
pub fn summarize<T: Float>(values: &[T]) -> Option<Summary<T>> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(T::zero(), |a, &b| a + b);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(Summary {
        count: values.len(),
        mean: sum / T::from(values.len()).unwrap(),
        median: sorted[(sorted.len() - 1) / 2],
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Buckets `[edge_i, edge_{i+1})`, the last unbounded above.
    pub fn from_edges(edges: &[u64], values: impl IntoIterator<Item = u64>) -> Self {
        let labels = edges
            .iter()
            .enumerate()
            .map(|(i, lo)| match edges.get(i + 1) {
                Some(hi) => format!("[{lo},{hi})"),
                None => format!("[{lo},inf)"),
            })
            .collect();
        let mut counts = vec![0; edges.len()];
        for v in values {
            let i = edges.partition_point(|&e| e <= v).saturating_sub(1);
            counts[i] += 1;
        }
        Histogram { labels, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric<T> {
    pub summary: Option<Summary<T>>,
    pub histogram: Histogram,
}

impl<T: Float> Metric<T> {
    fn of(values: &[u64], edges: &[u64]) -> Self {
        let floats: Vec<T> = values.iter().map(|&v| T::from(v).unwrap()).collect();
        Metric {
            summary: summarize(&floats),
            histogram: Histogram::from_edges(edges, values.iter().copied()),
        }
    }

    pub fn right_skewed(&self) -> bool {
        self.summary.as_ref().is_some_and(Summary::right_skewed)
    }
}

/// Bucket index for a density in `(0, 100]`; `None` for uncommented code.
pub fn density_bucket<T: Float>(density: T) -> Option<usize> {
    if density <= T::zero() {
        return None;
    }
    DENSITY_UPPER
        .iter()
        .position(|&hi| density <= T::from(hi).unwrap())
        .or(Some(DENSITY_UPPER.len() - 1))
}

pub fn density_labels() -> Vec<String> {
    let mut lo = 0.0;
    DENSITY_UPPER
        .iter()
        .map(|&hi| {
            let label = format!("({lo},{hi}]");
            lo = hi;
            label
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentStats<T> {
    pub commented: u64,
    pub uncommented: u64,
    /// Commented modules per density bucket.
    pub buckets: Vec<u64>,
    /// Density over commented modules only.
    pub density: Option<Summary<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats<T> {
    pub modules: u64,
    pub lines: Metric<T>,
    pub tokens: Metric<T>,
    pub ports: Metric<T>,
    pub comments: CommentStats<T>,
    /// Modules per class, index 0 holding class 1.
    pub classes: Vec<u64>,
}

/// Statistics with classes from the keyword classifier.
pub fn compute_stats<T: Float + Send + Sync>(records: &[ModuleRecord]) -> CorpusStats<T> {
    let taxonomy = Taxonomy::builtin();
    let classes: Vec<u8> = records
        .par_iter()
        .map(|r| classify_by_keywords(r, taxonomy))
        .collect();
    compute_stats_with_classes(records, &classes)
}

/// Statistics with externally assigned class ids (one per record).
pub fn compute_stats_with_classes<T: Float + Send + Sync>(
    records: &[ModuleRecord],
    classes: &[u8],
) -> CorpusStats<T> {
    assert_eq!(records.len(), classes.len(), "one class per record");
    let per: Vec<(u64, u64, u64, T)> = records
        .par_iter()
        .map(|r| {
            (
                line_count(&r.verilog_code),
                r.token_count,
                r.ports.len() as u64,
                comment_density::<T>(&r.verilog_code),
            )
        })
        .collect();
    let lines: Vec<u64> = per.iter().map(|p| p.0).collect();
    let tokens: Vec<u64> = per.iter().map(|p| p.1).collect();
    let ports: Vec<u64> = per.iter().map(|p| p.2).collect();

    let mut buckets = vec![0u64; DENSITY_UPPER.len()];
    let mut densities = Vec::new();
    for &(_, _, _, d) in &per {
        if let Some(i) = density_bucket(d) {
            buckets[i] += 1;
            densities.push(d);
        }
    }
    let mut class_counts = vec![0u64; CLASS_COUNT];
    for &c in classes {
        class_counts[(c.clamp(1, CLASS_COUNT as u8) - 1) as usize] += 1;
    }
    let commented = densities.len() as u64;
    CorpusStats {
        modules: records.len() as u64,
        lines: Metric::of(&lines, SIZE_EDGES),
        tokens: Metric::of(&tokens, SIZE_EDGES),
        ports: Metric::of(&ports, PORT_EDGES),
        comments: CommentStats {
            commented,
            uncommented: records.len() as u64 - commented,
            buckets,
            density: summarize(&densities),
        },
        classes: class_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(tokens: u64, code: &str) -> ModuleRecord {
        ModuleRecord {
            module_name: "m".into(),
            ports: vec![],
            comments: vec![],
            verilog_code: code.into(),
            token_count: tokens,
            description: "M.".into(),
        }
    }

    #[test]
    fn line_counts() {
        assert_eq!(line_count(""), 0);
        assert_eq!(line_count("a\n\n b\n"), 2);
        assert_eq!(line_count("  \n\t\n"), 0);
    }

    #[test]
    fn density_cases() {
        assert_eq!(comment_density::<f64>("module m; endmodule"), 0.0);
        assert_eq!(comment_density::<f64>("// only a comment"), 100.0);
        assert_eq!(comment_density::<f64>("/* all */"), 100.0);
        assert_eq!(comment_density::<f64>(""), 0.0);
        // 50 comment chars padded to 200 total.
        let code = format!("{}/*{}*/", "x".repeat(150), "c".repeat(46));
        assert_eq!(comment_density::<f64>(&code), 25.0);
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(density_bucket(0.0f64), None);
        assert_eq!(density_bucket(0.1f64), Some(0));
        assert_eq!(density_bucket(12.5f64), Some(0));
        assert_eq!(density_bucket(12.6f64), Some(1));
        assert_eq!(density_bucket(75.0f64), Some(5));
        assert_eq!(density_bucket(100.0f64), Some(6));
        assert_eq!(density_labels()[0], "(0,12.5]");
        assert_eq!(density_labels()[6], "(75,100]");
    }

    #[test]
    fn small_fixture_means_and_medians() {
        let s: CorpusStats<f64> = compute_stats(&[rec(10, "a"), rec(20, "b"), rec(1000, "c")]);
        let t = s.tokens.summary.unwrap();
        assert!((t.mean - 343.333_333_333).abs() < 1e-6);
        assert_eq!(t.median, 20.0);
        assert!(s.tokens.right_skewed());
        let one: CorpusStats<f32> = compute_stats(&[rec(7, "a")]);
        let t = one.tokens.summary.unwrap();
        assert_eq!((t.mean, t.median), (7.0, 7.0));
        assert_eq!(summarize::<f64>(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.0);
    }

    #[test]
    fn empty_corpus() {
        let s: CorpusStats<f64> = compute_stats(&[]);
        assert_eq!(s.modules, 0);
        assert!(s.tokens.summary.is_none());
        assert_eq!(s.tokens.histogram.total(), 0);
    }

    #[test]
    fn histogram_bounds() {
        let h = Histogram::from_edges(&[0, 10, 25], [0, 9, 10, 24, 25, 1_000_000]);
        assert_eq!(h.counts, [2, 2, 2]);
        assert_eq!(h.labels, ["[0,10)", "[10,25)", "[25,inf)"]);
    }

    proptest! {
        #[test]
        fn buckets_sum_to_module_count(
            specs in prop::collection::vec((0u64..20_000, 0usize..40, 0usize..80, 0usize..30), 0..60)
        ) {
            let records: Vec<ModuleRecord> = specs
                .iter()
                .map(|&(tok, code_len, comment_len, nlines)| {
                    let mut code = "x".repeat(code_len);
                    code.push_str(&"\n".repeat(nlines));
                    if comment_len > 0 {
                        code.push_str(&format!("// {}", "c".repeat(comment_len)));
                    }
                    rec(tok, &code)
                })
                .collect();
            let s: CorpusStats<f64> = compute_stats(&records);
            let n = records.len() as u64;
            prop_assert_eq!(s.lines.histogram.total(), n);
            prop_assert_eq!(s.tokens.histogram.total(), n);
            prop_assert_eq!(s.ports.histogram.total(), n);
            prop_assert_eq!(s.classes.iter().sum::<u64>(), n);
            prop_assert_eq!(s.comments.buckets.iter().sum::<u64>(), s.comments.commented);
            prop_assert_eq!(s.comments.commented + s.comments.uncommented, n);
        }
    }
}
