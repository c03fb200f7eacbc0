//! Scene-level matching of detected events against ground-truth intervals.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::Event;

pub const DEFAULT_TOLERANCE_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("interval {index} has start {start} after end {end}")]
    Unordered { index: usize, start: f64, end: f64 },
    #[error("interval {index} has a negative or non-finite bound")]
    BadBound { index: usize },
    #[error("tolerance must be finite and non-negative, got {0}")]
    Tolerance(f64),
    #[error("corpus has no videos")]
    EmptyCorpus,
    #[error("truth csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

impl GroundTruthInterval {
    pub fn new(start_s: f64, end_s: f64, label: impl Into<String>) -> Self {
        Self {
            start_s,
            end_s,
            label: label.into(),
        }
    }
}

/// Gap between `[a, b]` and `[c, d]`; zero when they overlap.
pub fn interval_distance(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (c - b).max(a - d).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub event: Event,
    /// Index into the truth list of the closest interval within tolerance,
    /// earliest on ties.
    pub interval: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<EventMatch>,
}

fn check_truth(truth: &[GroundTruthInterval]) -> Result<(), EvalError> {
    for (index, t) in truth.iter().enumerate() {
        if !(t.start_s.is_finite() && t.end_s.is_finite() && t.start_s >= 0.0) {
            return Err(EvalError::BadBound { index });
        }
        if t.start_s > t.end_s {
            return Err(EvalError::Unordered {
                index,
                start: t.start_s,
                end: t.end_s,
            });
        }
    }
    Ok(())
}

/// An interval is a true positive when any event lies within `tolerance_s`
/// of it, however many do. An event is a false positive when no interval
/// lies within tolerance. Remaining intervals are false negatives.
pub fn match_events(
    events: &[Event],
    truth: &[GroundTruthInterval],
    tolerance_s: f64,
) -> Result<MatchResult, EvalError> {
    if !(tolerance_s.is_finite() && tolerance_s >= 0.0) {
        return Err(EvalError::Tolerance(tolerance_s));
    }
    check_truth(truth)?;
    for (index, e) in events.iter().enumerate() {
        if e.start_s > e.end_s {
            return Err(EvalError::Unordered {
                index,
                start: e.start_s,
                end: e.end_s,
            });
        }
    }

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        events[a]
            .start_s
            .total_cmp(&events[b].start_s)
            .then(events[a].end_s.total_cmp(&events[b].end_s))
    });

    let mut hit = vec![false; truth.len()];
    let mut matches = Vec::with_capacity(events.len());
    let mut fp = 0;
    for &ei in &order {
        let e = events[ei];
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in truth.iter().enumerate() {
            let d = interval_distance(e.start_s, e.end_s, t.start_s, t.end_s);
            if d <= tolerance_s {
                hit[ti] = true;
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((ti, d));
                }
            }
        }
        if best.is_none() {
            fp += 1;
        }
        matches.push(EventMatch {
            event: e,
            interval: best.map(|b| b.0),
        });
    }
    let tp = hit.iter().filter(|&&h| h).count();
    Ok(MatchResult {
        tp,
        fp,
        fn_: truth.len() - tp,
        matches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio was 0/0 and took the value 1.
    pub degenerate: bool,
}

pub fn metrics(tp: usize, fp: usize, fn_: usize) -> Metrics {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (1.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f1,
        degenerate: dp || dr,
    }
}

#[derive(Debug, Clone)]
pub struct VideoInput {
    pub name: String,
    pub events: Vec<Event>,
    pub truth: Vec<GroundTruthInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub name: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub truth_intervals: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub matches: Vec<EventMatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median_precision: f64,
    pub median_recall: f64,
    pub median_f1: f64,
    pub videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_s: f64,
    pub videos: Vec<VideoReport>,
    pub aggregate: Aggregate,
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn evaluate_corpus(videos: &[VideoInput], tolerance_s: f64) -> Result<EvalReport, EvalError> {
    if videos.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let reports = videos
        .iter()
        .map(|v| {
            let m = match_events(&v.events, &v.truth, tolerance_s)?;
            Ok(VideoReport {
                name: v.name.clone(),
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                truth_intervals: v.truth.len(),
                metrics: metrics(m.tp, m.fp, m.fn_),
                matches: m.matches,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let col = |f: fn(&Metrics) -> f64| {
        median(&reports.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>()).expect("non-empty corpus")
    };
    let aggregate = Aggregate {
        median_precision: col(|m| m.precision),
        median_recall: col(|m| m.recall),
        median_f1: col(|m| m.f1),
        videos: reports.len(),
    };
    Ok(EvalReport {
        tolerance_s,
        videos: reports,
        aggregate,
    })
}

pub const TRUTH_CSV_HEADER: [&str; 3] = ["start_s", "end_s", "label"];

/// Reads `start_s,end_s,label` rows. Errors carry the 1-based file line.
pub fn read_truth_csv<R: Read>(reader: R) -> Result<Vec<GroundTruthInterval>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| EvalError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != TRUTH_CSV_HEADER {
        return Err(EvalError::Csv {
            line: 1,
            message: format!("expected header `{}`", TRUTH_CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| EvalError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, EvalError> {
            record[i].parse::<f64>().map_err(|_| EvalError::Csv {
                line,
                message: format!("`{}` is not a number", &record[i]),
            })
        };
        let interval = GroundTruthInterval::new(num(0)?, num(1)?, &record[2]);
        check_truth(std::slice::from_ref(&interval)).map_err(|e| EvalError::Csv {
            line,
            message: e.to_string(),
        })?;
        out.push(interval);
    }
    Ok(out)
}

pub fn write_truth_csv(truth: &[GroundTruthInterval]) -> String {
    let mut out = TRUTH_CSV_HEADER.join(",");
    out.push('\n');
    for t in truth {
        out.push_str(&format!("{},{},{}\n", t.start_s, t.end_s, t.label));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(a: f64, b: f64) -> Event {
        Event { start_s: a, end_s: b }
    }

    fn gt(a: f64, b: f64) -> GroundTruthInterval {
        GroundTruthInterval::new(a, b, "explosion")
    }

    #[test]
    fn near_miss_within_a_second() {
        let m = match_events(&[ev(12.4, 12.6)], &[gt(10.0, 11.5)], 1.0).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        assert!((interval_distance(12.4, 12.6, 10.0, 11.5) - 0.9).abs() < 1e-12);
        assert_eq!(interval_distance(1.0, 3.0, 2.0, 5.0), 0.0);
    }

    #[test]
    fn worked_scenario() {
        let truth = [gt(2.0, 3.0), gt(10.0, 12.0), gt(30.0, 31.0)];
        let events = [ev(2.1, 2.5), ev(2.6, 2.9), ev(12.5, 13.0)];
        let m = match_events(&events, &truth, 1.0).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 1));
        let x = metrics(m.tp, m.fp, m.fn_);
        assert_eq!(x.precision, 1.0);
        assert!((x.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((x.f1 - 0.8).abs() < 1e-12);
        assert_eq!(m.matches[1].interval, Some(0));
    }

    #[test]
    fn degenerate_case() {
        let x = metrics(0, 0, 0);
        assert_eq!((x.precision, x.recall, x.f1, x.degenerate), (1.0, 1.0, 1.0, true));
        let y = metrics(0, 3, 2);
        assert_eq!((y.precision, y.recall, y.f1, y.degenerate), (0.0, 0.0, 0.0, false));
    }

    #[test]
    fn unordered_interval_rejected() {
        assert!(matches!(
            match_events(&[], &[gt(3.0, 2.0)], 1.0),
            Err(EvalError::Unordered { index: 0, .. })
        ));
        assert!(matches!(match_events(&[], &[], -1.0), Err(EvalError::Tolerance(_))));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[1.0, 0.5, 0.0]), Some(0.5));
        assert_eq!(median(&[1.0, 0.0]), Some(0.5));
        assert_eq!(median(&[]), None);
        assert!(matches!(evaluate_corpus(&[], 1.0), Err(EvalError::EmptyCorpus)));
        let one = VideoInput {
            name: "a".into(),
            events: vec![ev(0.0, 1.0)],
            truth: vec![gt(5.0, 6.0)],
        };
        let r = evaluate_corpus(&[one], 1.0).unwrap();
        assert_eq!(r.aggregate.median_precision, r.videos[0].metrics.precision);
    }

    #[test]
    fn report_json_shape() {
        let v = VideoInput {
            name: "clip".into(),
            events: vec![],
            truth: vec![],
        };
        let json = serde_json::to_value(evaluate_corpus(&[v], 1.0).unwrap()).unwrap();
        assert_eq!(json["tolerance_s"], 1.0);
        assert_eq!(json["videos"][0]["fn"], 0);
        assert_eq!(json["videos"][0]["degenerate"], true);
        assert_eq!(json["aggregate"]["median_f1"], 1.0);
    }

    #[test]
    fn truth_csv_round_trip_and_line_numbers() {
        let truth = vec![gt(2.0, 3.0), gt(4.5, 7.25)];
        let text = write_truth_csv(&truth);
        assert_eq!(read_truth_csv(text.as_bytes()).unwrap(), truth);

        let bad = "start_s,end_s,label\n1,2,x\n3,oops,x\n";
        match read_truth_csv(bad.as_bytes()) {
            Err(EvalError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "start_s,end_s,label\n1,2\n";
        assert!(matches!(
            read_truth_csv(short.as_bytes()),
            Err(EvalError::Csv { line: 2, .. })
        ));
        assert!(read_truth_csv("a,b,c\n".as_bytes()).is_err());
        assert!(matches!(
            read_truth_csv("start_s,end_s,label\n5,1,x\n".as_bytes()),
            Err(EvalError::Csv { line: 2, .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Event>, Vec<GroundTruthInterval>)> {
        let span = (0.0f64..100.0, 0.0f64..5.0);
        (
            proptest::collection::vec(span.clone().prop_map(|(a, l)| ev(a, a + l)), 0..12),
            proptest::collection::vec(span.prop_map(|(a, l)| gt(a, a + l)), 0..8),
        )
    }

    proptest! {
        #[test]
        fn counts_conserve_intervals((events, truth) in arb_case(), tol in 0.0f64..5.0) {
            let m = match_events(&events, &truth, tol).unwrap();
            prop_assert_eq!(m.tp + m.fn_, truth.len());
            prop_assert!(m.fp <= events.len());
        }

        #[test]
        fn tolerance_monotone((events, truth) in arb_case(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let x = match_events(&events, &truth, lo).unwrap();
            let y = match_events(&events, &truth, hi).unwrap();
            prop_assert!(y.tp >= x.tp && y.fp <= x.fp && y.fn_ <= x.fn_);
        }

        #[test]
        fn translation_invariant((events, truth) in arb_case(), shift in 0i32..50) {
            // integer shifts keep the float arithmetic exact
            let s = f64::from(shift);
            let ev2: Vec<Event> = events.iter().map(|e| ev(e.start_s + s, e.end_s + s)).collect();
            let gt2: Vec<GroundTruthInterval> = truth.iter().map(|t| gt(t.start_s + s, t.end_s + s)).collect();
            let x = match_events(&events, &truth, 1.0).unwrap();
            let y = match_events(&ev2, &gt2, 1.0).unwrap();
            prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fp, y.fn_));
        }
    }
}
