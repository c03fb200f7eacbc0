//! Corpus evaluation against independent recomputation.

use colorcascade::evalkit::{evaluate_corpus, match_events, GroundTruthInterval, VideoInput};
use colorcascade::temporal::Event;
use rand::Rng;

mod common;

fn sort_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn random_video(rng: &mut impl Rng, name: String) -> VideoInput {
    let span = |rng: &mut dyn rand::RngCore| {
        let a: f64 = rng.gen_range(0.0..60.0);
        (a, a + rng.gen_range(0.0..4.0))
    };
    VideoInput {
        name,
        events: (0..rng.gen_range(0..8))
            .map(|_| {
                let (a, b) = span(rng);
                Event { start_s: a, end_s: b }
            })
            .collect(),
        truth: (0..rng.gen_range(0..6))
            .map(|_| {
                let (a, b) = span(rng);
                GroundTruthInterval::new(a, b, "explosion")
            })
            .collect(),
    }
}

#[test]
fn medians_match_sort_oracle() {
    let mut rng = common::rng(5);
    for round in 0..200 {
        let videos: Vec<VideoInput> = (0..rng.gen_range(1..9))
            .map(|i| random_video(&mut rng, format!("v{round}-{i}")))
            .collect();
        let report = evaluate_corpus(&videos, 1.0).unwrap();
        let col =
            |f: fn(&colorcascade::evalkit::VideoReport) -> f64| sort_median(report.videos.iter().map(f).collect());
        assert_eq!(report.aggregate.median_precision, col(|v| v.metrics.precision));
        assert_eq!(report.aggregate.median_recall, col(|v| v.metrics.recall));
        assert_eq!(report.aggregate.median_f1, col(|v| v.metrics.f1));
    }
}

#[test]
fn counts_match_pairwise_definition() {
    let mut rng = common::rng(9);
    for i in 0..300 {
        let v = random_video(&mut rng, i.to_string());
        let tol = rng.gen_range(0.0..3.0);
        let near = |e: &Event, t: &GroundTruthInterval| {
            let gap = if e.end_s < t.start_s {
                t.start_s - e.end_s
            } else if t.end_s < e.start_s {
                e.start_s - t.end_s
            } else {
                0.0
            };
            gap <= tol
        };
        let tp = v.truth.iter().filter(|t| v.events.iter().any(|e| near(e, t))).count();
        let fp = v.events.iter().filter(|e| !v.truth.iter().any(|t| near(e, t))).count();
        let m = match_events(&v.events, &v.truth, tol).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, v.truth.len() - tp));
    }
}
