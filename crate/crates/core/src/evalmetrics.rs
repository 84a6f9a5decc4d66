//! Span-level precision/recall/F1, corpus disagreement, and report tables.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::span_algebra::{disagreement_counts, disagreement_rate, extract_spans, ExtractMode, SpanSet, TagSet};

/// How per-instance disagreement is pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Disagreeing spans over counted spans, pooled across instances.
    #[default]
    Micro,
    /// Mean of per-instance rates.
    Macro,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            other => Err(Error::Argument(format!("unknown averaging `{other}` (micro|macro)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percentage in [0, 100]; `None` when no instance has a parse.
    pub avg_disagreement: Option<f64>,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
    pub disagreeing: usize,
    /// Predicted spans entering the disagreement rate.
    pub counted: usize,
    pub parsed_instances: usize,
}

impl EvalSummary {
    /// One TAB-separated `key=value` line.
    pub fn to_record(&self, legend: &str) -> String {
        let dis = self.avg_disagreement.map_or("-".to_string(), |d| format!("{d:.4}"));
        format!(
            "{legend}\tf1={:.6}\tprecision={:.6}\trecall={:.6}\tdisagreement={dis}\tpredicted={}\tgold={}\tmatched={}\tdisagreeing={}\tcounted={}\tparsed={}",
            self.f1,
            self.precision,
            self.recall,
            self.predicted,
            self.gold,
            self.matched,
            self.disagreeing,
            self.counted,
            self.parsed_instances
        )
    }
}

fn scored_spans(tags: &[usize], tagset: &TagSet, include_predicate: bool) -> Result<HashSet<(usize, usize, String)>> {
    Ok(extract_spans(tags, tagset, ExtractMode::Lenient)?
        .iter()
        .filter(|s| include_predicate || !s.predicate)
        .map(|s| (s.start, s.end, s.label.clone().unwrap_or_default()))
        .collect())
}

/// Micro-averaged exact-match span scores. Predicate spans are left out
/// unless `include_predicate` is set.
pub fn span_f1(
    predictions: &[Vec<usize>],
    golds: &[Vec<usize>],
    tagset: &TagSet,
    include_predicate: bool,
) -> Result<EvalSummary> {
    if predictions.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold sequences",
            predictions.len(),
            golds.len()
        )));
    }
    let counts = predictions
        .par_iter()
        .zip(golds)
        .enumerate()
        .map(|(i, (p, g))| {
            if p.len() != g.len() {
                return Err(Error::Argument(format!(
                    "instance {i}: prediction has {} tags, gold has {}",
                    p.len(),
                    g.len()
                )));
            }
            let ps = scored_spans(p, tagset, include_predicate)?;
            let gs = scored_spans(g, tagset, include_predicate)?;
            Ok((ps.len(), gs.len(), ps.intersection(&gs).count()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (predicted, gold, matched) = counts
        .iter()
        .fold((0, 0, 0), |(a, b, c), &(p, g, m)| (a + p, b + g, c + m));
    let precision = if predicted > 0 { matched as f64 / predicted as f64 } else { 0.0 };
    let recall = if gold > 0 { matched as f64 / gold as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalSummary {
        precision,
        recall,
        f1,
        predicted,
        gold,
        matched,
        ..EvalSummary::default()
    })
}

/// Disagreement of predictions with parses as a percentage, over instances
/// that have a parse. Also returns `(disagreeing, counted, parsed)`.
pub fn disagreement_summary(
    predictions: &[Vec<usize>],
    parses: &[Option<SpanSet>],
    tagset: &TagSet,
    averaging: Averaging,
) -> Result<(f64, usize, usize, usize)> {
    if predictions.len() != parses.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} parses",
            predictions.len(),
            parses.len()
        )));
    }
    let per_instance = predictions
        .par_iter()
        .zip(parses)
        .filter_map(|(p, parse)| parse.as_ref().map(|parse| (p, parse)))
        .map(|(p, parse)| {
            let spans = extract_spans(p, tagset, ExtractMode::Lenient)?;
            let (d, c) = disagreement_counts(&spans, parse);
            Ok((d, c, disagreement_rate(&spans, parse)))
        })
        .collect::<Result<Vec<_>>>()?;
    if per_instance.is_empty() {
        return Err(Error::Argument("no instance has a parse".into()));
    }
    let disagreeing: usize = per_instance.iter().map(|x| x.0).sum();
    let counted: usize = per_instance.iter().map(|x| x.1).sum();
    let rate = match averaging {
        Averaging::Micro if counted == 0 => 0.0,
        Averaging::Micro => disagreeing as f64 / counted as f64,
        Averaging::Macro => per_instance.iter().map(|x| x.2).sum::<f64>() / per_instance.len() as f64,
    };
    Ok((100.0 * rate, disagreeing, counted, per_instance.len()))
}

/// Average disagreement rate of predictions with parses, as a percentage.
pub fn avg_disagreement(
    predictions: &[Vec<usize>],
    parses: &[Option<SpanSet>],
    tagset: &TagSet,
    averaging: Averaging,
) -> Result<f64> {
    Ok(disagreement_summary(predictions, parses, tagset, averaging)?.0)
}

/// Span scores plus disagreement (when any parse is present).
pub fn evaluate(
    predictions: &[Vec<usize>],
    golds: &[Vec<usize>],
    parses: &[Option<SpanSet>],
    tagset: &TagSet,
    averaging: Averaging,
) -> Result<EvalSummary> {
    let mut summary = span_f1(predictions, golds, tagset, false)?;
    if parses.iter().any(Option::is_some) {
        let (rate, disagreeing, counted, parsed) = disagreement_summary(predictions, parses, tagset, averaging)?;
        summary.avg_disagreement = Some(rate);
        summary.disagreeing = disagreeing;
        summary.counted = counted;
        summary.parsed_instances = parsed;
    } else if predictions.len() != parses.len() {
        return Err(Error::Argument("parse list does not align with predictions".into()));
    }
    Ok(summary)
}

const MINUS: char = '\u{2212}';

/// Absolute F1 change in points, e.g. `(+0.35)`.
pub fn format_f1_delta(baseline: f64, value: f64) -> String {
    let delta = value - baseline;
    let sign = if delta >= 0.0 { '+' } else { MINUS };
    format!("({sign}{:.2})", delta.abs())
}

/// Relative disagreement change in percent, e.g. `(−4.47%)`.
pub fn format_disagreement_delta(baseline: f64, value: f64) -> String {
    if baseline == 0.0 {
        return if value == 0.0 { format!("({MINUS}0.00%)") } else { "(n/a)".to_string() };
    }
    let delta = (value - baseline) / baseline * 100.0;
    let sign = if delta <= 0.0 { MINUS } else { '+' };
    format!("({sign}{:.2}%)", delta.abs())
}

/// Fixed-width table of F1 and average disagreement, with deltas against
/// `baseline` when given.
pub fn report_table(rows: &[(String, EvalSummary)], baseline: Option<&str>) -> Result<String> {
    let base = match baseline {
        None => None,
        Some(name) => Some(
            rows.iter()
                .find(|(legend, _)| legend == name)
                .map(|(_, s)| s)
                .ok_or_else(|| Error::Argument(format!("baseline `{name}` is not among the rows")))?,
        ),
    };
    let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<16}  Avg. disagreement (%)", "Model", "F1");
    for (legend, s) in rows {
        let f1 = 100.0 * s.f1;
        let mut f1_cell = format!("{f1:.2}");
        let mut dis_cell = s.avg_disagreement.map_or("-".to_string(), |d| format!("{d:.2}"));
        if let Some(b) = base.filter(|_| Some(legend.as_str()) != baseline) {
            f1_cell = format!("{f1_cell} {}", format_f1_delta(100.0 * b.f1, f1));
            if let (Some(bd), Some(d)) = (b.avg_disagreement, s.avg_disagreement) {
                dis_cell = format!("{dis_cell} {}", format_disagreement_delta(bd, d));
            }
        }
        let pad = 16usize.saturating_sub(f1_cell.chars().count());
        let _ = writeln!(out, "{legend:<width$}  {f1_cell}{}  {dis_cell}", " ".repeat(pad));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tagset() -> TagSet {
        TagSet::new(["ARG0", "ARG1", "V"]).unwrap()
    }

    #[test]
    fn identical_predictions_score_one() {
        let ts = tagset();
        let g = vec![vec![1, 2, 0, 5, 3], vec![0, 5, 1]];
        let s = span_f1(&g, &g, &ts, false).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(s.gold, 3);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let ts = tagset();
        let s = span_f1(&[vec![0, 0, 0]], &[vec![1, 2, 0]], &ts, false).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(span_f1(&[vec![0, 0]], &[vec![1, 2, 0]], &ts, false).is_err());
        assert!(span_f1(&[], &[vec![1]], &ts, false).is_err());
    }

    #[test]
    fn predicate_spans_are_optional() {
        let ts = tagset();
        let s = span_f1(&[vec![5, 0]], &[vec![5, 1]], &ts, true).unwrap();
        assert_eq!((s.predicted, s.gold, s.matched), (1, 2, 1));
        let s = span_f1(&[vec![5, 0]], &[vec![5, 1]], &ts, false).unwrap();
        assert_eq!((s.predicted, s.gold, s.matched), (0, 1, 0));
    }

    #[test]
    fn matches_quadratic_matcher_and_is_symmetric() {
        let ts = tagset();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..300 {
            let n = rng.gen_range(1..10);
            preds.push((0..n).map(|_| rng.gen_range(0..ts.len())).collect::<Vec<_>>());
            golds.push((0..n).map(|_| rng.gen_range(0..ts.len())).collect::<Vec<_>>());
        }
        let s = span_f1(&preds, &golds, &ts, false).unwrap();
        let (mut p_total, mut g_total, mut m_total) = (0, 0, 0);
        for (p, g) in preds.iter().zip(&golds) {
            let ps: Vec<_> = extract_spans(p, &ts, ExtractMode::Lenient).unwrap().spans().iter().filter(|s| !s.predicate).cloned().collect();
            let gs: Vec<_> = extract_spans(g, &ts, ExtractMode::Lenient).unwrap().spans().iter().filter(|s| !s.predicate).cloned().collect();
            p_total += ps.len();
            g_total += gs.len();
            for a in &ps {
                if gs.iter().any(|b| a.start == b.start && a.end == b.end && a.label == b.label) {
                    m_total += 1;
                }
            }
        }
        assert_eq!((s.predicted, s.gold, s.matched), (p_total, g_total, m_total));
        let swapped = span_f1(&golds, &preds, &ts, false).unwrap();
        assert_eq!(swapped.precision, s.recall);
        assert_eq!(swapped.recall, s.precision);
        assert!((swapped.f1 - s.f1).abs() < 1e-15);
    }

    #[test]
    fn disagreement_averages() {
        let ts = TagSet::new(["A", "B", "C", "D", "E"]).unwrap();
        // Instance 1: five two-token spans, one disagreeing (d = 0.2).
        let p1: Vec<usize> = (0..5).flat_map(|r| [ts.begin(r), ts.inside(r)]).collect();
        let parse1 = SpanSet::parse([(0, 1), (2, 3), (4, 5), (6, 7)]);
        // Instance 2: five spans, two disagreeing (d = 0.4).
        let parse2 = SpanSet::parse([(0, 1), (2, 3), (4, 5)]);
        let preds = vec![p1.clone(), p1];
        let parses = vec![Some(parse1), Some(parse2)];
        let macro_avg = avg_disagreement(&preds, &parses, &ts, Averaging::Macro).unwrap();
        let micro_avg = avg_disagreement(&preds, &parses, &ts, Averaging::Micro).unwrap();
        assert!((macro_avg - 30.0).abs() < 1e-12);
        assert!((micro_avg - 30.0).abs() < 1e-12);
        assert!(avg_disagreement(&preds, &[None, None], &ts, Averaging::Micro).is_err());
        // Unparsed instances are excluded from the mean.
        let three = vec![preds[0].clone(), preds[1].clone(), vec![0; 10]];
        let with_none = vec![parses[0].clone(), parses[1].clone(), None];
        assert_eq!(avg_disagreement(&three, &with_none, &ts, Averaging::Macro).unwrap(), macro_avg);
    }

    #[test]
    fn consistent_predictions_have_zero_disagreement() {
        let ts = tagset();
        let preds = vec![vec![1, 2, 0, 5]];
        let parses = vec![Some(SpanSet::parse([(0, 1), (0, 3)]))];
        assert_eq!(avg_disagreement(&preds, &parses, &ts, Averaging::Micro).unwrap(), 0.0);
    }

    #[test]
    fn delta_conventions() {
        assert_eq!(format_f1_delta(84.40, 84.75), "(+0.35)");
        assert_eq!(format_disagreement_delta(17.01, 16.25), "(\u{2212}4.47%)");
        assert_eq!(format_f1_delta(70.0, 70.0), "(+0.00)");
        assert_eq!(format_disagreement_delta(20.0, 20.0), "(\u{2212}0.00%)");
        assert_eq!(format_f1_delta(78.56, 72.95), "(\u{2212}5.61)");
        assert_eq!(format_disagreement_delta(10.0, 12.0), "(+20.00%)");
    }

    #[test]
    fn table_renders_rows_and_deltas() {
        let b = EvalSummary {
            f1: 0.8440,
            avg_disagreement: Some(17.01),
            ..EvalSummary::default()
        };
        let j = EvalSummary {
            f1: 0.8475,
            avg_disagreement: Some(16.25),
            ..EvalSummary::default()
        };
        let rows = vec![("B100".to_string(), b), ("J100".to_string(), j)];
        let table = report_table(&rows, Some("B100")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("B100") && !lines[1].contains('('));
        assert!(lines[2].contains("84.75 (+0.35)"), "{table}");
        assert!(lines[2].contains("16.25 (\u{2212}4.47%)"), "{table}");
        assert!(report_table(&rows, Some("B1")).is_err());
        assert!(report_table(&rows, None).unwrap().lines().skip(1).all(|l| !l.contains('(')));
    }
}
