//! End-to-end acceptance checks, one test per criterion. Each prints a
//! PASS line; run with `--nocapture` to see them.

use std::collections::BTreeMap;
use std::time::Instant;

use tubelink::eval::{
    accept, corpus_metrics, f1, match_tubes, report_from_matches, EvalThresholds, IntegratedScores,
    MatchedPair, OverlapProfile, TubeMatches, VideoSet,
};
use tubelink::geom::{region_overlap, BoundingBox, PixelMask};
use tubelink::ingest::{actionness, nms, powerset_proposals, BinarySegmentation, connected_components, FlowMagnitudeMap};
use tubelink::io;
use tubelink::linker::{
    best_path, filter_tubes, label_objective, link_video, temporal_label, tube_score,
};
use tubelink::synthetic::{
    generate_scenario, oracle_best_labels, oracle_best_path, PlantedTube, ScenarioSpec, SeededRng,
};
use tubelink::types::{
    ActionPath, ActionTube, Extent, GroundTruthTube, LinkerConfig, RegionProposal, ScoreVector,
    TubeRegion, VideoProposals,
};
use tubelink::eval::spatio_temporal_iou;

fn random_box(rng: &mut SeededRng, frame: u32) -> BoundingBox {
    let max_side = u64::from(frame).min(40);
    let w = rng.uniform_u64(2, max_side) as u32;
    let h = rng.uniform_u64(2, max_side) as u32;
    let x = rng.uniform_u64(0, u64::from(frame - w)) as u32;
    let y = rng.uniform_u64(0, u64::from(frame - h)) as u32;
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

fn random_video(rng: &mut SeededRng, t_max: usize, per_frame_max: usize, classes: usize) -> VideoProposals {
    let t_count = 1 + (rng.next_u64() as usize) % t_max;
    let frames: Vec<Vec<RegionProposal>> = (1..=t_count)
        .map(|t| {
            let n = 1 + (rng.next_u64() as usize) % per_frame_max;
            (0..n)
                .map(|_| {
                    RegionProposal::new(
                        t,
                        random_box(rng, 200),
                        None,
                        ScoreVector::new((0..classes).map(|_| rng.uniform(-2.0, 2.0)).collect())
                            .unwrap(),
                        None,
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    VideoProposals::new("rand".into(), 200, 200, names, frames).unwrap()
}

#[test]
fn acceptance_1_path_search_matches_oracle() {
    let start = Instant::now();
    let lambdas = [0.0, 0.5, 1.0, 3.0];
    for i in 0..200u64 {
        let mut rng = SeededRng::new(10_000 + i);
        let video = random_video(&mut rng, 6, 4, 1);
        let lambda = lambdas[(i % 4) as usize];
        let dp = best_path(&video, 0, lambda).unwrap();
        let (oracle, oracle_energy) = oracle_best_path(&video, 0, lambda).unwrap();
        assert!(
            (dp.energy - oracle_energy).abs() < 1e-9,
            "instance {i}: dp {} vs oracle {}",
            dp.energy,
            oracle_energy
        );
        assert_eq!(dp.members, oracle.members, "instance {i}: different paths");
        assert_eq!(dp.placeholder_flags, oracle.placeholder_flags);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("acceptance 1 (path search vs oracle, 200 instances): PASS in {elapsed:?}");
}

#[test]
fn acceptance_2_labelling_matches_oracle() {
    let start = Instant::now();
    let alphas = [0.0, 1.0, 3.0, 10.0];
    for i in 0..200u64 {
        let mut rng = SeededRng::new(20_000 + i);
        let t_count = 1 + (rng.next_u64() as usize) % 8;
        let class_count = 2 + (rng.next_u64() as usize) % 3;
        let members: Vec<RegionProposal> = (1..=t_count)
            .map(|t| {
                RegionProposal::new(
                    t,
                    random_box(&mut rng, 100),
                    None,
                    ScoreVector::new((0..class_count).map(|_| rng.uniform(-2.0, 2.0)).collect())
                        .unwrap(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let path = ActionPath {
            class_id: 0,
            placeholder_flags: vec![false; members.len()],
            members,
            energy: 0.0,
        };
        let names = (0..class_count).map(|c| format!("c{c}")).collect();
        let video = VideoProposals::new("v".into(), 100, 100, names, vec![vec![]; t_count]).unwrap();
        let alpha = alphas[(i % 4) as usize];
        let labels = temporal_label(&path, &video, alpha);
        let dp_objective = label_objective(&path, &labels, alpha);
        let (_, oracle_objective) = oracle_best_labels(&path, &video, alpha).unwrap();
        assert!(
            (dp_objective - oracle_objective).abs() < 1e-9,
            "instance {i}: dp {dp_objective} vs oracle {oracle_objective}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("acceptance 2 (labelling vs oracle, 200 instances): PASS in {elapsed:?}");
}

#[test]
fn acceptance_3_metric_arithmetic() {
    let a = f1(0.36, 0.66);
    assert!((a - 0.4659).abs() < 5e-4, "got {a}");
    assert!((a - 0.46).abs() < 6e-3, "got {a}");

    let b = f1(0.5, 0.63);
    assert!((b - 0.5575).abs() < 5e-4, "got {b}");
    assert!((b - 0.56).abs() < 5e-3, "got {b}");
    assert_eq!(format!("{b:.2}"), "0.56");

    let hi = IntegratedScores::new(0.52, 0.22, 0.41, 0.39);
    assert!((hi.overall - 0.385).abs() < 1e-12, "got {}", hi.overall);
    assert!((hi.overall - 0.38).abs() < 5e-3 + 1e-12);

    let lo = IntegratedScores::new(0.02, 0.03, 0.03, 0.03);
    assert!((lo.overall - 0.0275).abs() < 1e-12, "got {}", lo.overall);
    assert!((lo.overall - 0.03).abs() < 5e-3);

    println!("acceptance 3 (metric arithmetic reference values): PASS");
}

fn recovery_spec(seed: u64, score_noise: f64, box_jitter: u32) -> ScenarioSpec {
    ScenarioSpec {
        video_id: "recovery".into(),
        frame_width: 720,
        frame_height: 576,
        frame_count: 200,
        class_count: 10,
        tubes: vec![
            PlantedTube {
                class_id: 2,
                t_start: 30,
                t_end: 90,
                start_box: [50, 50, 150, 200],
                velocity: (0.5, 0.0),
                margin: 2.0,
            },
            PlantedTube {
                class_id: 5,
                t_start: 60,
                t_end: 120,
                start_box: [400, 100, 500, 260],
                velocity: (-0.4, 0.2),
                margin: 2.0,
            },
            PlantedTube {
                class_id: 8,
                t_start: 140,
                t_end: 190,
                start_box: [200, 300, 320, 420],
                velocity: (0.0, 0.0),
                margin: 2.0,
            },
        ],
        distractors_per_frame: 20,
        score_noise,
        box_jitter,
        seed,
    }
}

#[test]
fn acceptance_4_noise_free_recovery() {
    let start = Instant::now();
    let spec = recovery_spec(99, 0.0, 0);
    let (video, gts) = generate_scenario(&spec).unwrap();
    let tubes = link_video(&video, &LinkerConfig::default()).unwrap();
    assert_eq!(tubes.len(), 3, "expected exactly the three planted tubes");

    for gt in &gts {
        let best = tubes
            .iter()
            .filter(|t| t.class_id == gt.class_id)
            .map(|t| spatio_temporal_iou(t, gt))
            .fold(0.0f64, f64::max);
        assert!(best >= 0.9, "class {} recovered at {best:.3}", gt.class_id);
    }

    let videos = vec![VideoSet {
        video_id: video.video_id.clone(),
        detections: tubes,
        ground_truth: gts,
    }];
    let report = corpus_metrics(&videos, &EvalThresholds::default());
    assert_eq!(report.recall, 1.0);
    assert_eq!(report.precision, 1.0);
    assert_eq!(report.f1, 1.0);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("acceptance 4 (noise-free end-to-end recovery): PASS in {elapsed:?}");
}

#[test]
fn acceptance_5_degradation_robustness() {
    let start = Instant::now();
    let mut f1_sum = 0.0;
    for seed in 1..=10u64 {
        let spec = recovery_spec(seed, 0.2, 3);
        let (video, gts) = generate_scenario(&spec).unwrap();
        let tubes = link_video(&video, &LinkerConfig::default()).unwrap();
        let videos = vec![VideoSet {
            video_id: video.video_id.clone(),
            detections: tubes,
            ground_truth: gts,
        }];
        f1_sum += corpus_metrics(&videos, &EvalThresholds::default()).f1;
    }
    let mean_f1 = f1_sum / 10.0;
    assert!(mean_f1 >= 0.8, "mean F1 {mean_f1:.3}");
    println!(
        "acceptance 5 (noisy recovery, mean F1 {mean_f1:.3} over 10 seeds): PASS in {:?}",
        start.elapsed()
    );
}

#[test]
fn acceptance_6_constants_behave() {
    // A 19-frame instance flanked by longer neighbours is dropped by the
    // 20-frame duration filter, and reappears when the filter is loosened.
    let spec = ScenarioSpec {
        video_id: "short".into(),
        frame_width: 320,
        frame_height: 240,
        frame_count: 60,
        class_count: 4,
        tubes: vec![
            PlantedTube {
                class_id: 1,
                t_start: 21,
                t_end: 39,
                start_box: [40, 40, 120, 140],
                velocity: (0.0, 0.0),
                margin: 2.0,
            },
            PlantedTube {
                class_id: 2,
                t_start: 1,
                t_end: 20,
                start_box: [180, 40, 260, 140],
                velocity: (0.0, 0.0),
                margin: 2.0,
            },
            PlantedTube {
                class_id: 3,
                t_start: 40,
                t_end: 60,
                start_box: [180, 140, 260, 220],
                velocity: (0.0, 0.0),
                margin: 2.0,
            },
        ],
        distractors_per_frame: 6,
        score_noise: 0.0,
        box_jitter: 0,
        seed: 5,
    };
    let (video, _) = generate_scenario(&spec).unwrap();
    let default_cfg = LinkerConfig::default();
    assert_eq!(default_cfg.delta, 20);
    let tubes = link_video(&video, &default_cfg).unwrap();
    assert!(
        tubes.iter().all(|t| t.class_id != 1),
        "19-frame instance must be filtered at the default minimum duration"
    );
    assert!(tubes.iter().any(|t| t.class_id == 2));
    assert!(tubes.iter().any(|t| t.class_id == 3));

    let loose = LinkerConfig { delta: 19, ..LinkerConfig::default() };
    let tubes_loose = link_video(&video, &loose).unwrap();
    assert!(tubes_loose.iter().any(|t| t.class_id == 1));

    // Negative global score is discarded regardless of length.
    let negative = {
        let members: Vec<TubeRegion> = (0..30)
            .map(|_| TubeRegion {
                bbox: BoundingBox::new(0, 0, 50, 50).unwrap(),
                mask: None,
                class_score: -0.1,
            })
            .collect();
        ActionTube::new(0, 1, 30, members, -0.1).unwrap()
    };
    assert!(filter_tubes(vec![negative], &default_cfg).is_empty());

    // Zero switching cost reduces labelling to the per-frame arg-max.
    let table = [
        [0.2, 1.0, -0.5],
        [0.9, 0.1, 0.3],
        [-0.4, 0.2, 0.6],
        [1.1, -0.2, 0.4],
    ];
    let members: Vec<RegionProposal> = table
        .iter()
        .enumerate()
        .map(|(t, row)| {
            RegionProposal::new(
                t + 1,
                BoundingBox::new(0, 0, 10, 10).unwrap(),
                None,
                ScoreVector::new(row.to_vec()).unwrap(),
                None,
            )
            .unwrap()
        })
        .collect();
    let path = ActionPath {
        class_id: 0,
        placeholder_flags: vec![false; members.len()],
        members,
        energy: 0.0,
    };
    let names = vec!["a".into(), "b".into(), "c".into()];
    let fixture = VideoProposals::new("f".into(), 16, 16, names, vec![vec![]; 4]).unwrap();
    let labels = temporal_label(&path, &fixture, 0.0);
    assert_eq!(labels.0, vec![1, 0, 2, 0]);

    // Three components expand to exactly seven subset proposals.
    let comps = vec![
        PixelMask::from_pixels(16, 16, [(1, 1)]).unwrap(),
        PixelMask::from_pixels(16, 16, [(8, 1), (9, 1)]).unwrap(),
        PixelMask::from_pixels(16, 16, [(1, 8), (2, 8), (1, 9)]).unwrap(),
    ];
    assert_eq!(powerset_proposals(&comps, 1, 12, 4).unwrap().len(), 7);

    println!("acceptance 6 (documented constants): PASS");
}

#[test]
fn acceptance_7_invariant_suites() {
    let start = Instant::now();

    // Non-maximum suppression output is an antichain under the threshold.
    for case in 0..1000u64 {
        let mut rng = SeededRng::new(30_000 + case);
        let n = 2 + (rng.next_u64() as usize) % 14;
        let props: Vec<RegionProposal> = (0..n)
            .map(|_| {
                RegionProposal::new(
                    1,
                    random_box(&mut rng, 100),
                    None,
                    ScoreVector::new(vec![rng.uniform(-1.0, 3.0)]).unwrap(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let threshold = rng.uniform(0.1, 0.9);
        let kept = nms(&props, 0, threshold);
        for (i, a) in kept.iter().enumerate() {
            for b in kept.iter().skip(i + 1) {
                assert!(region_overlap(a, b) < threshold);
            }
        }
    }

    // Actionness sums to one over any partition of the frame.
    for case in 0..1000u64 {
        let mut rng = SeededRng::new(40_000 + case);
        let mags: Vec<f64> = (0..12 * 12).map(|_| rng.uniform(0.0, 4.0)).collect();
        let flow = FlowMagnitudeMap::new(12, 12, mags).unwrap();
        let sx = 1 + (rng.next_u64() as u32) % 11;
        let sy = 1 + (rng.next_u64() as u32) % 11;
        let mut total = 0.0;
        for (x0, x1) in [(0, sx), (sx, 12)] {
            for (y0, y1) in [(0, sy), (sy, 12)] {
                let region = RegionProposal::new(
                    1,
                    BoundingBox::new(x0, y0, x1, y1).unwrap(),
                    None,
                    ScoreVector::zeros(1),
                    None,
                )
                .unwrap();
                total += actionness(&region, &flow).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "case {case}: sum {total}");
    }

    // Raising any single acceptance threshold never increases true positives.
    for case in 0..1000u64 {
        let mut rng = SeededRng::new(50_000 + case);
        let pair_count = 1 + (rng.next_u64() as usize) % 10;
        let pairs: Vec<MatchedPair> = (0..pair_count)
            .map(|i| MatchedPair {
                det_index: i,
                gt_index: i,
                det_class: (rng.next_u64() % 2) as usize,
                gt_class: (rng.next_u64() % 2) as usize,
                det_score: rng.uniform(0.0, 3.0),
                st_iou: rng.uniform(0.0, 1.0),
                profile: OverlapProfile {
                    spatial_recall: rng.uniform(0.0, 1.0),
                    spatial_precision: rng.uniform(0.0, 1.0),
                    temporal_recall: rng.uniform(0.0, 1.0),
                    temporal_precision: rng.uniform(0.0, 1.0),
                },
            })
            .collect();
        let matches = TubeMatches {
            det_count: pair_count + (rng.next_u64() as usize) % 3,
            gt_count: pair_count + (rng.next_u64() as usize) % 3,
            pairs,
        };
        let base = EvalThresholds::uniform(rng.uniform(0.0, 0.9));
        let mut raised = base;
        match rng.next_u64() % 4 {
            0 => raised.t_sr = (base.t_sr + rng.uniform(0.0, 1.0)).min(1.0),
            1 => raised.t_tr = (base.t_tr + rng.uniform(0.0, 1.0)).min(1.0),
            2 => raised.t_sp = (base.t_sp + rng.uniform(0.0, 1.0)).min(1.0),
            _ => raised.t_tp = (base.t_tp + rng.uniform(0.0, 1.0)).min(1.0),
        }
        let tp_base = report_from_matches(&matches, &base).true_positives;
        let tp_raised = report_from_matches(&matches, &raised).true_positives;
        assert!(tp_raised <= tp_base);
        for p in &matches.pairs {
            if accept(p, &raised) {
                assert!(accept(p, &base));
            }
        }
    }

    // Matching is one-to-one and the counts add up.
    for case in 0..1000u64 {
        let mut rng = SeededRng::new(60_000 + case);
        let tube = |rng: &mut SeededRng, class: usize, score: f64| {
            let t_start = 1 + (rng.next_u64() as usize) % 20;
            let len = 1 + (rng.next_u64() as usize) % 10;
            let members: Vec<TubeRegion> = (0..len)
                .map(|_| TubeRegion {
                    bbox: random_box(rng, 80),
                    mask: None,
                    class_score: score,
                })
                .collect();
            ActionTube::new(class, t_start, t_start + len - 1, members, score).unwrap()
        };
        let dets: Vec<ActionTube> = (0..(rng.next_u64() as usize) % 6)
            .map(|_| {
                let class = (rng.next_u64() % 3) as usize;
                let score = rng.uniform(-1.0, 3.0);
                tube(&mut rng, class, score)
            })
            .collect();
        let gts: Vec<GroundTruthTube> = (0..(rng.next_u64() as usize) % 6)
            .map(|_| {
                let class = (rng.next_u64() % 3) as usize;
                let t = tube(&mut rng, class, 0.0);
                let extents = t.members.iter().map(|m| Extent::Box(m.bbox)).collect();
                GroundTruthTube::new(class, t.t_start, t.t_end, extents).unwrap()
            })
            .collect();
        let matches = match_tubes(&dets, &gts);
        let mut gt_seen = std::collections::HashSet::new();
        let mut det_seen = std::collections::HashSet::new();
        for p in &matches.pairs {
            assert!(gt_seen.insert(p.gt_index), "ground truth matched twice");
            assert!(det_seen.insert(p.det_index), "detection matched twice");
            assert!(p.st_iou > 0.0);
        }
        let report = report_from_matches(&matches, &EvalThresholds::default());
        assert_eq!(report.true_positives + report.false_positives, dets.len());
        assert_eq!(report.true_positives + report.false_negatives, gts.len());
    }

    // Serialization round-trips: 1000 random frame records and 1000 random
    // annotated tubes survive a save/load cycle unchanged.
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(70_000);
    let mut record_count = 0usize;
    let mut video_idx = 0usize;
    while record_count < 1000 {
        let frames: Vec<Vec<RegionProposal>> = (1..=25)
            .map(|t| {
                (0..1 + (rng.next_u64() as usize) % 3)
                    .map(|_| {
                        let bbox = random_box(&mut rng, 64);
                        let mask = if rng.next_u64() % 4 == 0 {
                            let px = (bbox.y_min..bbox.y_max)
                                .flat_map(|y| (bbox.x_min..bbox.x_max).map(move |x| (x, y)));
                            Some(PixelMask::from_pixels(64, 64, px).unwrap())
                        } else {
                            None
                        };
                        RegionProposal::new(
                            t,
                            bbox,
                            mask,
                            ScoreVector::new(vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)])
                                .unwrap(),
                            Some(rng.uniform(0.0, 1.0)),
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect();
        record_count += 25;
        let video = VideoProposals::new(
            format!("v{video_idx}"),
            64,
            64,
            vec!["a".into(), "b".into()],
            frames,
        )
        .unwrap();
        video_idx += 1;
        let path = dir.path().join(format!("{}.jsonl", video.video_id));
        io::save_proposals(&video, &path).unwrap();
        assert_eq!(io::load_proposals(&path).unwrap(), video);
    }

    let vocab = io::ClassVocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let mut tubes: BTreeMap<String, Vec<GroundTruthTube>> = BTreeMap::new();
    for i in 0..1000usize {
        let t_start = 1 + (rng.next_u64() as usize) % 30;
        let len = 1 + (rng.next_u64() as usize) % 8;
        let extents: Vec<Extent> = (0..len)
            .map(|_| {
                if rng.next_u64() % 3 == 0 {
                    let b = random_box(&mut rng, 32);
                    let px = (b.y_min..b.y_max).flat_map(|y| (b.x_min..b.x_max).map(move |x| (x, y)));
                    Extent::Mask(PixelMask::from_pixels(32, 32, px).unwrap())
                } else {
                    Extent::Box(random_box(&mut rng, 32))
                }
            })
            .collect();
        let tube = GroundTruthTube::new(
            (rng.next_u64() % 3) as usize,
            t_start,
            t_start + len - 1,
            extents,
        )
        .unwrap();
        tubes.entry(format!("v{}", i % 40)).or_default().push(tube);
    }
    let gt_path = dir.path().join("gt.jsonl");
    io::save_ground_truth(&tubes, &vocab, &gt_path).unwrap();
    assert_eq!(io::load_ground_truth(&gt_path, &vocab).unwrap(), tubes);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("acceptance 7 (invariant suites, 1000 cases each): PASS in {elapsed:?}");
}

/// Sanity anchor for the suite's shared fixtures: connected components over a
/// two-blob segmentation and the ingest pipeline pieces the criteria rely on.
#[test]
fn acceptance_fixtures_are_well_formed() {
    let fg = PixelMask::from_pixels(16, 16, [(1, 1), (2, 2), (10, 10), (11, 10)]).unwrap();
    let seg = BinarySegmentation::new(16, 16, Some(fg)).unwrap();
    let comps = connected_components(&seg);
    assert_eq!(comps.len(), 2);

    let spec = recovery_spec(99, 0.0, 0);
    let (video, gts) = generate_scenario(&spec).unwrap();
    assert_eq!(video.frame_count(), 200);
    assert_eq!(video.class_count(), 10);
    assert_eq!(gts.len(), 3);
    // The two concurrent instances overlap in time and carry different classes.
    assert!(gts[0].t_end >= gts[1].t_start && gts[0].class_id != gts[1].class_id);
    // Every frame carries at least 20 proposals.
    assert!(video.frames().iter().all(|f| f.len() >= 20));

    let tube = {
        let members = (0..15)
            .map(|i| TubeRegion {
                bbox: BoundingBox::new(0, 0, 10, 10).unwrap(),
                mask: None,
                class_score: f64::from(i + 1),
            })
            .collect();
        ActionTube::new(0, 1, 15, members, 0.0).unwrap()
    };
    assert!((tube_score(&tube, 10) - 10.5).abs() < 1e-12);
}
