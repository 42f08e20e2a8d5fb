//! Stream-evaluation bookkeeping: per-group accuracies and the two summary
//! statistics reported for a continual run.
//!
//! After finishing group `k` the harness evaluates every group seen so far,
//! producing one row of a lower-triangular matrix `a(k, j)` — accuracy on
//! group `j`'s held-out split after training through group `k`. From the
//! matrix:
//!
//! * average accuracy after `k` groups is the mean of row `k`;
//! * forgetting of group `j` is the best accuracy any earlier row achieved
//!   on `j` minus the current row's accuracy, and average forgetting is the
//!   mean over all strictly-earlier groups. With a single group there is no
//!   earlier row, so average forgetting is undefined — an error here, never
//!   a silent zero.
//!
//! Matrices serialize to a plain `k,j,accuracy` CSV. Floats are written with
//! the default shortest round-trip formatting, so parsing a written file
//! reproduces the matrix bit-for-bit.

use std::collections::BTreeMap;

use crate::dataset::ToolCall;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{what} is undefined for k = {k}")]
    UndefinedMetric { what: &'static str, k: usize },
    #[error("group index out of range: k={k}, j={j}, seen={seen}")]
    OutOfRange { k: usize, j: usize, seen: usize },
    #[error("row {got} must have exactly {expected} entries")]
    RaggedRow { expected: usize, got: usize },
    #[error("accuracy {value} is outside [0, 1]")]
    OutOfUnit { value: f64 },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// How predicted calls are compared against the reference calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Multisets of tool names must agree. The headline metric.
    NameOnly,
    /// Full calls — names and every parameter — must agree.
    Strict,
}

/// Exact-match scoring of one prediction. Order of calls does not matter
/// (the reference for a composite lists members in execution order, but a
/// set match keeps the metric from conflating ordering with tool choice);
/// multiplicity does. Two empty call lists agree.
pub fn tool_call_accuracy(pred: &[ToolCall], reference: &[ToolCall], mode: MatchMode) -> bool {
    match mode {
        MatchMode::NameOnly => {
            let mut a: Vec<&str> = pred.iter().map(|c| c.api_name.as_str()).collect();
            let mut b: Vec<&str> = reference.iter().map(|c| c.api_name.as_str()).collect();
            a.sort_unstable();
            b.sort_unstable();
            a == b
        }
        MatchMode::Strict => {
            let key = |c: &ToolCall| {
                (
                    c.api_name.clone(),
                    c.api_params
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect::<Vec<_>>(),
                )
            };
            let mut a: Vec<_> = pred.iter().map(key).collect();
            let mut b: Vec<_> = reference.iter().map(key).collect();
            a.sort();
            b.sort();
            a == b
        }
    }
}

/// Fraction of reference call names the prediction recovered (multiset
/// intersection over reference size). Diagnostic only — never the headline.
/// An empty reference scores 1.0 against an empty prediction, 0.0 otherwise.
pub fn partial_credit(pred: &[ToolCall], reference: &[ToolCall]) -> f64 {
    if reference.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in reference {
        *counts.entry(c.api_name.as_str()).or_insert(0) += 1;
    }
    let mut hit = 0usize;
    for c in pred {
        if let Some(n) = counts.get_mut(c.api_name.as_str()) {
            if *n > 0 {
                *n -= 1;
                hit += 1;
            }
        }
    }
    hit as f64 / reference.len() as f64
}

/// Lower-triangular accuracy matrix of a continual run. Row `k` (1-based)
/// holds `a(k, 1) ..= a(k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        AccuracyMatrix { rows: Vec::new() }
    }

    /// Number of groups evaluated so far.
    pub fn seen(&self) -> usize {
        self.rows.len()
    }

    /// Appends the evaluation row after training through the next group;
    /// row `k` must have exactly `k` entries, all in `[0, 1]`.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<(), MetricsError> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(MetricsError::RaggedRow {
                expected,
                got: row.len(),
            });
        }
        if let Some(&bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::OutOfUnit { value: bad });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Accuracy on group `j` after training through group `k` (1-based).
    pub fn a(&self, k: usize, j: usize) -> Result<f64, MetricsError> {
        if k == 0 || j == 0 || k > self.rows.len() || j > k {
            return Err(MetricsError::OutOfRange {
                k,
                j,
                seen: self.rows.len(),
            });
        }
        Ok(self.rows[k - 1][j - 1])
    }
}

impl Default for AccuracyMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean accuracy over all seen groups after training through group `k`.
pub fn average_accuracy(m: &AccuracyMatrix, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || k > m.seen() {
        return Err(MetricsError::OutOfRange { k, j: 0, seen: m.seen() });
    }
    let mut sum = 0.0;
    for j in 1..=k {
        sum += m.a(k, j)?;
    }
    Ok(sum / k as f64)
}

/// Forgetting of group `j` at step `k`: the best accuracy any earlier
/// checkpoint achieved on `j`, minus the current accuracy. Requires `j < k`.
pub fn forgetting(m: &AccuracyMatrix, k: usize, j: usize) -> Result<f64, MetricsError> {
    if j == 0 || j >= k {
        return Err(MetricsError::OutOfRange { k, j, seen: m.seen() });
    }
    let mut best = f64::NEG_INFINITY;
    for l in j..k {
        best = best.max(m.a(l, j)?);
    }
    Ok(best - m.a(k, j)?)
}

/// Mean forgetting over every group trained strictly before `k`.
///
/// Undefined at `k = 1`: there is no earlier group to forget.
pub fn average_forgetting(m: &AccuracyMatrix, k: usize) -> Result<f64, MetricsError> {
    if k == 1 {
        return Err(MetricsError::UndefinedMetric {
            what: "average forgetting",
            k,
        });
    }
    if k == 0 || k > m.seen() {
        return Err(MetricsError::OutOfRange { k, j: 0, seen: m.seen() });
    }
    let mut sum = 0.0;
    for j in 1..k {
        sum += forgetting(m, k, j)?;
    }
    Ok(sum / (k - 1) as f64)
}

/// Serializes the matrix as `k,j,accuracy` lines (1-based indices). The
/// default float formatting is shortest-round-trip, so the written text
/// parses back to the exact same matrix.
pub fn matrix_to_csv(m: &AccuracyMatrix) -> String {
    let mut out = String::from("k,j,accuracy\n");
    for (ki, row) in m.rows.iter().enumerate() {
        for (ji, v) in row.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", ki + 1, ji + 1, v));
        }
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<AccuracyMatrix, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "k,j,accuracy" => {}
        other => {
            return Err(MetricsError::Csv {
                line: 1,
                message: format!(
                    "expected header \"k,j,accuracy\", got {:?}",
                    other.map(|(_, l)| l).unwrap_or("")
                ),
            });
        }
    }
    let mut m = AccuracyMatrix::new();
    let mut pending: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>, what: &str| -> Result<f64, MetricsError> {
            s.ok_or_else(|| MetricsError::Csv {
                line: lineno,
                message: format!("missing {what}"),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| MetricsError::Csv {
                line: lineno,
                message: format!("bad {what}: {e}"),
            })
        };
        let k = parse(parts.next(), "k")? as usize;
        let j = parse(parts.next(), "j")? as usize;
        let v = parse(parts.next(), "accuracy")?;
        if parts.next().is_some() {
            return Err(MetricsError::Csv {
                line: lineno,
                message: "trailing fields".to_string(),
            });
        }
        let expect_k = m.seen() + 1;
        let expect_j = pending.len() + 1;
        if k != expect_k || j != expect_j {
            return Err(MetricsError::Csv {
                line: lineno,
                message: format!(
                    "expected entry ({expect_k},{expect_j}), got ({k},{j}); rows must \
                     appear in order"
                ),
            });
        }
        pending.push(v);
        if pending.len() == expect_k {
            m.push_row(std::mem::take(&mut pending))
                .map_err(|e| MetricsError::Csv {
                    line: lineno,
                    message: e.to_string(),
                })?;
        }
    }
    if !pending.is_empty() {
        return Err(MetricsError::Csv {
            line: 0,
            message: format!("matrix ends mid-row with {} entries", pending.len()),
        });
    }
    Ok(m)
}

/// Final-step summary: average accuracy and average forgetting at the last
/// group. Forgetting is the literal string `undefined` for a one-group run.
pub fn summary_to_csv(m: &AccuracyMatrix) -> Result<String, MetricsError> {
    let k = m.seen();
    if k == 0 {
        return Err(MetricsError::OutOfRange { k: 0, j: 0, seen: 0 });
    }
    let aa = average_accuracy(m, k)?;
    let af = if k == 1 {
        "undefined".to_string()
    } else {
        format!("{}", average_forgetting(m, k)?)
    };
    Ok(format!("metric,value\nAA_final,{aa}\nAF_final,{af}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn call(name: &str) -> ToolCall {
        ToolCall::new(name)
    }

    #[test]
    fn name_match_ignores_order_keeps_multiplicity() {
        let a = vec![call("asr"), call("ocr")];
        let b = vec![call("ocr"), call("asr")];
        assert!(tool_call_accuracy(&a, &b, MatchMode::NameOnly));
        let twice = vec![call("asr"), call("asr")];
        let once = vec![call("asr")];
        assert!(!tool_call_accuracy(&twice, &once, MatchMode::NameOnly));
        assert!(tool_call_accuracy(&[], &[], MatchMode::NameOnly));
    }

    #[test]
    fn strict_match_sees_params() {
        let p = vec![call("ocr").with_param("granularity", "word")];
        let r = vec![call("ocr").with_param("granularity", "page")];
        assert!(tool_call_accuracy(&p, &r, MatchMode::NameOnly));
        assert!(!tool_call_accuracy(&p, &r, MatchMode::Strict));
        let exact = vec![call("ocr").with_param("granularity", "page")];
        assert!(tool_call_accuracy(&exact, &r, MatchMode::Strict));
    }

    #[test]
    fn partial_credit_counts_name_hits() {
        let r = vec![call("asr"), call("ocr")];
        assert_eq!(partial_credit(&[call("asr")], &r), 0.5);
        assert_eq!(partial_credit(&r, &r), 1.0);
        assert_eq!(partial_credit(&[], &r), 0.0);
        assert_eq!(partial_credit(&[], &[]), 1.0);
        assert_eq!(partial_credit(&[call("asr")], &[]), 0.0);
        // Duplicates in the prediction cannot double-count one reference.
        assert_eq!(partial_credit(&[call("asr"), call("asr")], &r), 0.5);
    }

    #[test]
    fn hand_checked_two_group_run() {
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![1.0]).unwrap();
        m.push_row(vec![0.8, 0.7]).unwrap();
        assert!((average_accuracy(&m, 2).unwrap() - 0.75).abs() < 1e-15);
        assert!((forgetting(&m, 2, 1).unwrap() - 0.2).abs() < 1e-15);
        assert!((average_forgetting(&m, 2).unwrap() - 0.2).abs() < 1e-15);
        assert!((average_accuracy(&m, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forgetting_uses_the_best_earlier_checkpoint() {
        // Group 1 peaks at step 2, not step 1; forgetting at step 3 must
        // measure from the peak.
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![0.5]).unwrap();
        m.push_row(vec![0.9, 0.6]).unwrap();
        m.push_row(vec![0.4, 0.6, 0.8]).unwrap();
        assert!((forgetting(&m, 3, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((forgetting(&m, 3, 2).unwrap() - 0.0).abs() < 1e-15);
        assert!((average_forgetting(&m, 3).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_group_forgetting_is_an_error() {
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![0.9]).unwrap();
        assert!(matches!(
            average_forgetting(&m, 1),
            Err(MetricsError::UndefinedMetric { .. })
        ));
        let summary = summary_to_csv(&m).unwrap();
        assert!(summary.contains("AF_final,undefined"));
    }

    #[test]
    fn ragged_and_out_of_unit_rows_rejected() {
        let mut m = AccuracyMatrix::new();
        assert!(matches!(
            m.push_row(vec![0.5, 0.5]),
            Err(MetricsError::RaggedRow { expected: 1, got: 2 })
        ));
        assert!(matches!(
            m.push_row(vec![1.5]),
            Err(MetricsError::OutOfUnit { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![1.0 / 3.0]).unwrap();
        m.push_row(vec![0.1 + 0.2, 0.7]).unwrap();
        let text = matrix_to_csv(&m);
        let back = matrix_from_csv(&text).unwrap();
        assert_eq!(back, m, "shortest round-trip floats must re-parse exactly");
    }

    #[test]
    fn csv_rejects_disorder_and_truncation() {
        assert!(matrix_from_csv("k,j,accuracy\n2,1,0.5\n").is_err());
        assert!(matrix_from_csv("k,j,accuracy\n1,1,0.5\n2,1,0.5\n").is_err());
        assert!(matrix_from_csv("wrong,header,here\n1,1,0.5\n").is_err());
        assert!(matrix_from_csv("k,j,accuracy\n1,1,0.5\n2,1,0.4\n2,2,0.3,9\n").is_err());
    }

    // Straight-line re-implementations used as oracles: build the explicit
    // max table instead of scanning, and average with explicit indices.
    fn naive_aa(rows: &[Vec<f64>], k: usize) -> f64 {
        let row = &rows[k - 1];
        row.iter().take(k).sum::<f64>() / k as f64
    }

    fn naive_af(rows: &[Vec<f64>], k: usize) -> f64 {
        let mut total = 0.0;
        for j in 1..k {
            let mut best = rows[j - 1][j - 1];
            for l in j..k {
                if rows[l - 1][j - 1] > best {
                    best = rows[l - 1][j - 1];
                }
            }
            total += best - rows[k - 1][j - 1];
        }
        total / (k - 1) as f64
    }

    proptest! {
        #[test]
        fn metrics_agree_with_naive_oracle(
            flat in proptest::collection::vec(0.0f64..=1.0, 21)
        ) {
            // Unpack 21 values into a 6-row triangle.
            let mut rows = Vec::new();
            let mut it = flat.into_iter();
            let mut m = AccuracyMatrix::new();
            for k in 1..=6usize {
                let row: Vec<f64> = (0..k).map(|_| it.next().unwrap()).collect();
                rows.push(row.clone());
                m.push_row(row).unwrap();
            }
            for k in 1..=6usize {
                let aa = average_accuracy(&m, k).unwrap();
                prop_assert!((aa - naive_aa(&rows, k)).abs() < 1e-12);
                if k >= 2 {
                    let af = average_forgetting(&m, k).unwrap();
                    prop_assert!((af - naive_af(&rows, k)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn strict_match_implies_name_match(
            names in proptest::collection::vec("[a-c]", 0..4),
            param in proptest::option::of("[xy]")
        ) {
            let pred: Vec<ToolCall> = names
                .iter()
                .map(|n| {
                    let c = ToolCall::new(n.as_str());
                    match &param {
                        Some(p) => c.with_param("k", p.as_str()),
                        None => c,
                    }
                })
                .collect();
            let reference: Vec<ToolCall> =
                names.iter().map(|n| ToolCall::new(n.as_str())).collect();
            if tool_call_accuracy(&pred, &reference, MatchMode::Strict) {
                prop_assert!(tool_call_accuracy(&pred, &reference, MatchMode::NameOnly));
            }
        }

        #[test]
        fn csv_round_trip_property(
            flat in proptest::collection::vec(0.0f64..=1.0, 10)
        ) {
            let mut m = AccuracyMatrix::new();
            let mut it = flat.into_iter();
            for k in 1..=4usize {
                m.push_row((0..k).map(|_| it.next().unwrap()).collect()).unwrap();
            }
            let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
