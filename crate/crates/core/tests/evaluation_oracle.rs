use detgeom::evaluation::{evaluate, ApMode, EvalSummary, ImageDetection, ImageGroundTruth, MatchConfig};
use detgeom::io::ClassTable;
use detgeom::{BBox, Detection, GroundTruth};
use detgeom_oracles::eval::{self as oracle, Det, Gt};
use detgeom_oracles::random;

fn to_lib(dets: &[Det], gts: &[Gt]) -> (Vec<ImageDetection>, Vec<ImageGroundTruth>) {
    let d = dets
        .iter()
        .map(|d| ImageDetection {
            image_id: format!("img{}", d.image),
            det: Detection::new(BBox::from_array(d.bbox).unwrap(), d.class, d.score).unwrap(),
        })
        .collect();
    let g = gts
        .iter()
        .map(|g| ImageGroundTruth {
            image_id: format!("img{}", g.image),
            gt: GroundTruth {
                bbox: BBox::from_array(g.bbox).unwrap(),
                class_id: g.class,
            },
        })
        .collect();
    (d, g)
}

fn classes(n: usize) -> ClassTable {
    ClassTable::new((0..n).map(|i| format!("c{i}")).collect()).unwrap()
}

fn run(dets: &[Det], gts: &[Gt], n_classes: usize, cfg: &MatchConfig) -> EvalSummary {
    let (d, g) = to_lib(dets, gts);
    evaluate(&d, &g, &classes(n_classes), cfg).unwrap().summary
}

#[test]
fn matches_threshold_enumeration_oracle() {
    let mut rng = random::rng(2024);
    let mut nontrivial = 0;
    for i in 0..200 {
        let (dets, gts) = random::eval_instance(&mut rng, 1 + i % 3, 2);
        let score_threshold = [0.0, 0.35, 0.6][i % 3];
        let iou_threshold = [0.5, 0.3, 0.75][(i / 3) % 3];
        let cfg = MatchConfig::new(iou_threshold, score_threshold, ApMode::AllPoints).unwrap();
        let got = run(&dets, &gts, 2, &cfg);
        let want = oracle::evaluate(&dets, &gts, 2, iou_threshold, score_threshold);
        assert_eq!((got.tp, got.fp, got.fn_), (want.tp, want.fp, want.fn_), "instance {i}");
        for (c, ap) in want.per_class_ap.iter().enumerate() {
            match ap {
                Some(ap) => assert!((got.per_class_ap[&c] - ap).abs() <= 1e-12, "instance {i} class {c}"),
                None => assert!(!got.per_class_ap.contains_key(&c)),
            }
        }
        assert!((got.map50 - want.map).abs() <= 1e-12, "instance {i}");
        if got.map50 > 0.0 && got.map50 < 1.0 {
            nontrivial += 1;
        }
    }
    assert!(nontrivial > 50, "generator too easy: {nontrivial}");
}

#[test]
fn eleven_point_matches_oracle() {
    let mut rng = random::rng(7);
    for i in 0..100 {
        let (dets, gts) = random::eval_instance(&mut rng, 2, 1);
        if gts.is_empty() {
            continue;
        }
        let cfg = MatchConfig::new(0.5, 0.0, ApMode::ElevenPoint).unwrap();
        let got = run(&dets, &gts, 1, &cfg);
        let want = oracle::ap_eleven_point(&oracle::operating_points(&dets, &gts, 0, 0.5));
        assert!((got.per_class_ap[&0] - want).abs() <= 1e-12, "instance {i}");
    }
}

#[test]
fn hand_worked_fixture() {
    // ranked TP, FP, TP against two ground truths: AP = 0.5·1 + 0.5·(2/3)
    let gts = [
        Gt { image: 0, class: 0, bbox: [0.0, 0.0, 2.0, 2.0] },
        Gt { image: 0, class: 0, bbox: [10.0, 0.0, 2.0, 2.0] },
    ];
    let d = |cx, score| Det { image: 0, class: 0, score, bbox: [cx, 0.0, 2.0, 2.0] };
    let dets = [d(0.0, 0.9), d(50.0, 0.8), d(10.0, 0.7)];
    let s = run(&dets, &gts, 1, &MatchConfig::default());
    assert!((s.map50 - 5.0 / 6.0).abs() <= 1e-12);
    assert_eq!((s.tp, s.fp, s.fn_), (2, 1, 0));
}

#[test]
fn detection_order_does_not_matter_without_ties() {
    let mut rng = random::rng(99);
    for _ in 0..50 {
        let (mut dets, gts) = random::eval_instance(&mut rng, 2, 2);
        // distinct scores so the ranking is total
        for (k, d) in dets.iter_mut().enumerate() {
            d.score = 1.0 - k as f64 / 64.0;
        }
        let a = run(&dets, &gts, 2, &MatchConfig::default());
        dets.reverse();
        let b = run(&dets, &gts, 2, &MatchConfig::default());
        assert_eq!(a, b);
    }
}
