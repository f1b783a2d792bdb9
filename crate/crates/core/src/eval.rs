//! ROC curves, AUROC and TPR at a fixed FPR.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::dataset::{ErrorCategory, EvaluationSet};
use crate::detectors::ErrorScore;
use crate::error::EvalError;

/// Threshold sweep from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Cumulative `(false positives, true positives)` behind each point.
    pub counts: Vec<(usize, usize)>,
}

/// Builds the ROC curve of `(score, y)` pairs. Examples sharing a score
/// switch together, so the curve crosses a tie block on a diagonal.
pub fn roc(scores: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    if let Some(&(bad, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFinite(bad));
    }
    let n_pos = scores.iter().filter(|(_, y)| *y).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::Degenerate { n_pos, n_neg });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut counts = vec![(0usize, 0usize)];
    // Twice the area in units of one (negative, positive) cell, kept exact.
    let mut twice_area: u128 = 0;
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        let (fp0, tp0) = (fp, tp);
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += ((fp - fp0) * (tp + tp0)) as u128;
        counts.push((fp, tp));
    }
    let points = counts
        .iter()
        .map(|&(f, t)| (f as f64 / n_neg as f64, t as f64 / n_pos as f64))
        .collect();
    let auroc = twice_area as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve {
        points,
        auroc,
        n_pos,
        n_neg,
        counts,
    })
}

/// Trapezoid area under `points`.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// TPR of the highest operating point whose FPR does not exceed `fpr`. No
/// interpolation between points.
pub fn tpr_at_fpr(curve: &RocCurve, fpr: f64) -> f64 {
    if fpr >= 1.0 {
        return 1.0;
    }
    let max_fp = fpr * curve.n_neg as f64 + 1e-9;
    curve
        .counts
        .iter()
        .filter(|(f, _)| *f as f64 <= max_fp)
        .map(|&(_, t)| t as f64 / curve.n_pos as f64)
        .fold(0.0, f64::max)
}

pub const DEFAULT_FPRS: [f64; 1] = [0.10];

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    /// `all` or an error category.
    pub slice: String,
    pub curve: RocCurve,
    pub tpr_at_fpr: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub detector: String,
    pub slices: Vec<SliceReport>,
}

impl EvalReport {
    pub fn slice(&self, name: &str) -> Option<&SliceReport> {
        self.slices.iter().find(|s| s.slice == name)
    }

    pub fn overall(&self) -> &SliceReport {
        &self.slices[0]
    }
}

/// Scores every example of `set`. The overall slice uses all examples; each
/// category slice keeps only that category's positives and every negative.
/// Categories without positives are left out.
pub fn evaluate(
    detector: &str,
    scores: &[ErrorScore],
    set: &EvaluationSet,
    fprs: &[f64],
) -> Result<EvalReport, EvalError> {
    let by_key: HashMap<(&str, usize), f64> = scores
        .iter()
        .rev()
        .map(|s| ((s.doc_id.as_str(), s.word_index), s.score))
        .collect();
    let mut missing = Vec::new();
    let mut scored = Vec::with_capacity(set.examples.len());
    for ex in &set.examples {
        match by_key.get(&(ex.doc_id.as_str(), ex.word_index)) {
            Some(&s) => scored.push((s, ex)),
            None => missing.push((ex.doc_id.clone(), ex.word_index)),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::Coverage(missing));
    }
    let slice = |name: &str, keep: &dyn Fn(&crate::dataset::EvalExample) -> bool| -> Result<SliceReport, EvalError> {
        let pairs: Vec<(f64, bool)> = scored
            .iter()
            .filter(|(_, e)| !e.y || keep(e))
            .map(|(s, e)| (*s, e.y))
            .collect();
        let curve = roc(&pairs)?;
        let tpr = fprs.iter().map(|&f| (f, tpr_at_fpr(&curve, f))).collect();
        Ok(SliceReport {
            slice: name.to_string(),
            curve,
            tpr_at_fpr: tpr,
        })
    };
    let mut slices = vec![slice("all", &|_| true)?];
    for cat in ErrorCategory::ALL {
        if set.examples.iter().any(|e| e.y && e.category == Some(cat)) {
            slices.push(slice(cat.as_str(), &|e| e.category == Some(cat))?);
        } else {
            tracing::debug!(category = cat.as_str(), "no positives; slice omitted");
        }
    }
    Ok(EvalReport {
        detector: detector.to_string(),
        slices,
    })
}

fn fpr_key(f: f64) -> String {
    format!("tpr_at_{f:.2}")
}

/// CSV rows for `reports`, header first.
pub fn report_csv(reports: &[EvalReport], fprs: &[f64]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["detector".to_string(), "slice".into(), "auroc".into()];
    header.extend(fprs.iter().map(|&f| fpr_key(f)));
    header.extend(["n_pos".to_string(), "n_neg".into()]);
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        for s in &r.slices {
            let mut row = vec![r.detector.clone(), s.slice.clone(), format!("{:.6}", s.curve.auroc)];
            row.extend(fprs.iter().map(|&f| {
                let t = s.tpr_at_fpr.iter().find(|(k, _)| *k == f).map_or(tpr_at_fpr(&s.curve, f), |(_, t)| *t);
                format!("{t:.6}")
            }));
            row.extend([s.curve.n_pos.to_string(), s.curve.n_neg.to_string()]);
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("UTF-8")
}

/// File-name-safe form of a detector or slice name.
pub fn slug(name: &str) -> String {
    let head = name.split('[').next().unwrap_or(name);
    let s: String = head
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect();
    if s.is_empty() {
        "detector".into()
    } else {
        s
    }
}

/// Standalone SVG plot of one curve. Output depends only on the inputs.
pub fn roc_svg(detector: &str, slice: &SliceReport) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x = |f: f64| PAD + f * SIZE;
    let y = |t: f64| PAD + (1.0 - t) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            x(v),
            PAD + SIZE + 15.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            PAD - 5.0,
            y(v) + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{:.1}" x2="{:.1}" y2="{PAD}" stroke="gray" stroke-dasharray="4 4"/>"#,
        PAD + SIZE,
        PAD + SIZE
    );
    let pts: Vec<String> = slice
        .curve
        .points
        .iter()
        .map(|&(f, t)| format!("{:.3},{:.3}", x(f), y(t)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        pts.join(" ")
    );
    let title = format!(
        "{} / {}: AUROC {:.3} (n_pos {}, n_neg {})",
        xml_escape(detector),
        xml_escape(&slice.slice),
        slice.curve.auroc,
        slice.curve.n_pos,
        slice.curve.n_neg
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="30" font-size="12" text-anchor="middle">{title}</text>"#,
        total / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">false positive rate</text>"#,
        total / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 12 {:.1})">true positive rate</text>"#,
        total / 2.0,
        total / 2.0
    );
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EvalExample, Provenance};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pairwise Mann-Whitney count with ties worth one half.
    fn mann_whitney(scores: &[(f64, bool)]) -> f64 {
        let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
        let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
        let mut total = 0.0;
        for p in &pos {
            for n in &neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn hand_examples() {
        let perfect = roc(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]).unwrap();
        assert_eq!(perfect.auroc, 1.0);
        assert_eq!(tpr_at_fpr(&perfect, 0.1), 1.0);
        let ties = roc(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)]).unwrap();
        assert_eq!(ties.auroc, 0.5);
        assert_eq!(ties.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(tpr_at_fpr(&ties, 0.1), 0.0);
        assert_eq!(tpr_at_fpr(&ties, 1.0), 1.0);
        let mixed = roc(&[(0.9, true), (0.6, false), (0.3, false), (0.2, true)]).unwrap();
        assert_eq!(mixed.auroc, 0.5);
    }

    #[test]
    fn degenerate_and_nonfinite() {
        assert_eq!(
            roc(&[(0.1, true), (0.2, true)]).unwrap_err(),
            EvalError::Degenerate { n_pos: 2, n_neg: 0 }
        );
        assert!(matches!(roc(&[(f64::NAN, true), (0.2, false)]), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn uniform_random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s: Vec<(f64, bool)> = (0..1000).map(|i| (rng.gen::<f64>(), i % 4 == 0)).collect();
            let a = roc(&s).unwrap().auroc;
            assert!((a - 0.5).abs() < 0.06, "auroc {a}");
        }
    }

    fn set(rows: &[(&str, usize, bool, Option<ErrorCategory>)]) -> EvaluationSet {
        EvaluationSet {
            examples: rows
                .iter()
                .map(|&(d, i, y, c)| EvalExample {
                    doc_id: d.into(),
                    word_index: i,
                    y,
                    category: c,
                    provenance: Provenance::ExpertLabeled,
                })
                .collect(),
        }
    }

    fn score(d: &str, i: usize, s: f64) -> ErrorScore {
        ErrorScore {
            doc_id: d.into(),
            word_index: i,
            surface: "w".into(),
            score: s,
            detector: "t".into(),
            best_alternative: None,
            abstained: false,
        }
    }

    #[test]
    fn evaluate_slices_and_coverage() {
        let s = set(&[
            ("a", 0, true, Some(ErrorCategory::Scribal)),
            ("a", 1, true, Some(ErrorCategory::Print)),
            ("a", 2, false, None),
            ("b", 0, false, None),
        ]);
        let scores = vec![score("a", 0, 3.0), score("a", 1, 4.0), score("a", 2, 1.0), score("b", 0, 0.0)];
        let r = evaluate("t", &scores, &s, &DEFAULT_FPRS).unwrap();
        assert_eq!(r.slices.iter().map(|s| s.slice.as_str()).collect::<Vec<_>>(), vec!["all", "print", "scribal"]);
        for sl in &r.slices {
            assert_eq!(sl.curve.auroc, 1.0);
            assert_eq!(sl.curve.n_neg, 2);
        }
        assert_eq!(r.slice("scribal").unwrap().curve.n_pos, 1);
        let csv = report_csv(std::slice::from_ref(&r), &DEFAULT_FPRS);
        assert!(csv.starts_with("detector,slice,auroc,tpr_at_0.10,n_pos,n_neg\nt,all,1.000000,1.000000,2,2\n"));
        let svg = roc_svg("t", r.overall());
        assert_eq!(svg, roc_svg("t", r.overall()));
        assert!(svg.contains("AUROC 1.000"));

        match evaluate("t", &scores[..2], &s, &DEFAULT_FPRS) {
            Err(EvalError::Coverage(m)) => assert_eq!(m, vec![("a".to_string(), 2), ("b".to_string(), 0)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("ccr[k=1;provider=ngram]"), "ccr");
        assert_eq!(slug("my model/v2"), "my-model-v2");
    }

    fn score_sets() -> impl Strategy<Value = Vec<(f64, bool)>> {
        // Coarse scores so ties are common.
        proptest::collection::vec((0u8..20, any::<bool>()), 2..500).prop_map(|v| {
            let mut v: Vec<(f64, bool)> = v.into_iter().map(|(s, y)| (s as f64 / 4.0, y)).collect();
            v[0].1 = true;
            v[1].1 = false;
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn auroc_equals_mann_whitney(s in score_sets()) {
            let c = roc(&s).unwrap();
            prop_assert!((c.auroc - mann_whitney(&s)).abs() < 1e-9);
            prop_assert!((c.auroc - trapezoid_area(&c.points)).abs() < 1e-12);
            prop_assert!(c.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
            prop_assert_eq!(c.points.first().copied(), Some((0.0, 0.0)));
            prop_assert_eq!(c.points.last().copied(), Some((1.0, 1.0)));
        }

        #[test]
        fn monotone_transform_invariance(s in score_sets(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let c = roc(&s).unwrap();
            let affine: Vec<_> = s.iter().map(|&(x, y)| (a * x + b, y)).collect();
            let logged: Vec<_> = s.iter().map(|&(x, y)| ((x + 1.0).ln(), y)).collect();
            prop_assert_eq!(roc(&affine).unwrap().auroc, c.auroc);
            prop_assert_eq!(roc(&logged).unwrap().auroc, c.auroc);
        }

        #[test]
        fn tpr_at_fpr_is_monotone(s in score_sets(), f in 0.0f64..1.0) {
            let c = roc(&s).unwrap();
            let t = tpr_at_fpr(&c, f);
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!(t <= tpr_at_fpr(&c, (f + 0.1).min(1.0)));
        }
    }
}
