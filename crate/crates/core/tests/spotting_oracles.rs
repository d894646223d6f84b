mod common;

use common::*;
use ocdtw_core::pipeline::{calibrate_model, train_model, TrainConfig, Variant};
use ocdtw_core::spotting::{
    calibrate_threshold, candidate_grid, choose_threshold, spot, spot_with, terminal_cost, TemplateScorer,
};
use ocdtw_core::synth::{generate, SynthConfig};
use ocdtw_core::{FrameScorer, Sequence, SpotConfig, StartMode};
use rand::Rng;

/// Scores "frame" `[j]` by looking up column `j` of a fixed table.
struct Table(Vec<Vec<f64>>);

impl FrameScorer for Table {
    fn class_name(&self) -> &str {
        "t"
    }

    fn rows(&self) -> usize {
        self.0.len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn row_costs(&self, frame: &[f64], out: &mut [f64]) {
        let j = frame[0] as usize;
        for (slot, row) in out.iter_mut().zip(&self.0) {
            *slot = row[j];
        }
    }
}

fn index_stream(n: usize) -> Sequence {
    let frames: Vec<[f64; 1]> = (0..n).map(|j| [j as f64]).collect();
    Sequence::new("idx", &frames).unwrap()
}

#[test]
fn streaming_spotter_matches_offline_recomputation() {
    let mut rng = rng(51);
    for trial in 0..300 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(1..=60);
        // small integers make ties between moves and between columns common
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(0..4) as f64 * 0.5).collect())
            .collect();
        let beta = rng.random_range(0.25..(1.2 * m as f64));
        let strict = trial % 3 == 0;
        let config = SpotConfig {
            strict_first_hit: strict,
            buffer_depth: Some(n + 1),
        };
        let dets = spot_with(&Table(cost.clone()), beta, &index_stream(n), &config).unwrap();
        let got: Vec<(usize, usize, f64)> = dets.iter().map(|d| (d.begin, d.end, d.terminal_cost)).collect();
        assert_eq!(
            got,
            offline_spot(&cost, beta, strict),
            "trial {trial} beta {beta} cost {cost:?}"
        );
        for d in &dets {
            assert!(d.terminal_cost < beta);
            assert!(d.path.is_valid(m, d.end + 1, StartMode::Open));
            assert_eq!(d.path.first().unwrap().1, d.begin + 1);
        }
        for w in dets.windows(2) {
            assert!(w[0].end < w[1].begin);
        }
    }
}

#[test]
fn embedded_template_is_found_exactly() {
    let mut rng = rng(52);
    for _ in 0..50 {
        let m = rng.random_range(3..12);
        let template = random_frames(&mut rng, m, 2);
        let lead = rng.random_range(0..20);
        let mut frames: Vec<Vec<f64>> = (0..lead).map(|_| vec![50.0, 50.0]).collect();
        frames.extend(template.iter().cloned());
        frames.extend((0..10).map(|_| vec![-50.0, 50.0]));
        let scorer = TemplateScorer::new("t", Sequence::new("tpl", &template).unwrap());
        let dets = spot_with(
            &scorer,
            1e-6,
            &Sequence::new("q", &frames).unwrap(),
            &SpotConfig::default(),
        )
        .unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!((dets[0].begin, dets[0].end), (lead, lead + m - 1));
        assert_eq!(dets[0].terminal_cost, 0.0);
    }
}

#[test]
fn threshold_choice_maximises_hits() {
    let mut rng = rng(53);
    for _ in 0..200 {
        let n = rng.random_range(1..10);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.7).collect();
        let report = choose_threshold(costs.clone()).unwrap();
        let hits = |b: f64| costs.iter().filter(|&&c| c < b).count();
        let grid = candidate_grid(&costs);
        let best = grid.iter().map(|&b| hits(b)).max().unwrap();
        assert_eq!(hits(report.threshold), best);
        assert!(grid
            .iter()
            .filter(|&&b| hits(b) == best)
            .all(|&b| b >= report.threshold));
        assert!(report.threshold > 0.0);
        // every held-out cost is strictly below the top candidate
        assert_eq!(best, n);
    }
}

#[test]
fn leave_one_out_holds_each_sample_out_once() {
    let data = generate(&SynthConfig::default()).unwrap();
    let by_class = data.train.samples_by_class().unwrap();
    let samples = &by_class["class0"];
    let report = calibrate_threshold(samples, |rest: &[Sequence]| {
        assert_eq!(rest.len(), samples.len() - 1);
        Ok(TemplateScorer::new("class0", rest[0].clone()))
    })
    .unwrap();
    for (k, c) in report.held_out_costs.iter().enumerate() {
        let trained_on = if k == 0 { &samples[1] } else { &samples[0] };
        let scorer = TemplateScorer::new("class0", trained_on.clone());
        assert_eq!(*c, terminal_cost(&scorer, &samples[k]).unwrap());
    }
}

#[test]
fn calibrated_models_spot_their_class() {
    let data = generate(&SynthConfig::default()).unwrap();
    let by_class = data.train.samples_by_class().unwrap();
    for variant in [Variant::Gmm, Variant::Ape] {
        let config = TrainConfig {
            variant,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train_model("class1", &by_class["class1"], &config).unwrap();
        let (model, report) = calibrate_model(model, &by_class["class1"]).unwrap();
        assert_eq!(report.held_out_costs.len(), by_class["class1"].len());
        assert_eq!(model.threshold(), Some(report.threshold));
        for stream in data.test.sequences() {
            for d in spot(&model, stream, &SpotConfig::default()).unwrap() {
                assert!(d.begin <= d.end && d.end < stream.len());
                assert!(d.terminal_cost < report.threshold);
            }
        }
    }
}
