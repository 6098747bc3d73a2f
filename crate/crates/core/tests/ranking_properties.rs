use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use segedit_core::backends::reference::{reference_score, reference_segment};
use segedit_core::backends::{ReferenceScorer, SegmenterParams};
use segedit_core::fixtures::{self, Disk};
use segedit_core::ranking::{normalize_scores, rank_segments, select_target, BackgroundMode, CropSpec, Outcome};
use segedit_core::ImageBuffer;

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

proptest! {
    #[test]
    fn softmax_preserves_argmax(
        raw in proptest::collection::vec(-20.0f64..20.0, 1..12),
        shift in -50.0f64..50.0,
        temperature in 0.05f64..20.0,
    ) {
        let want = argmax(&raw);
        let shifted: Vec<f64> = raw.iter().map(|v| v + shift).collect();
        for (scores, t) in [(&raw, 1.0), (&raw, temperature), (&shifted, temperature)] {
            let n = normalize_scores(scores, t).unwrap();
            prop_assert!((n.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(argmax(&n), want);
        }
    }

    #[test]
    fn reference_scorer_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let crops: Vec<ImageBuffer> = (0..5)
            .map(|_| {
                let (w, h) = (rng.gen_range(1..6), rng.gen_range(1..6));
                let data = (0..w * h * 3).map(|_| rng.gen()).collect();
                ImageBuffer::new(w, h, data).unwrap()
            })
            .collect();
        let prompt = "red or blue, maybe white";
        let base = reference_score(&crops, prompt).unwrap();
        let mut order: Vec<usize> = (0..crops.len()).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<ImageBuffer> = order.iter().map(|&i| crops[i].clone()).collect();
        let scores = reference_score(&permuted, prompt).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(scores[k], base[i]);
        }
    }
}

fn random_scene(rng: &mut impl Rng) -> ImageBuffer {
    let palette = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0], [0, 255, 255]];
    let disks: Vec<Disk> = (0..rng.gen_range(2..5))
        .map(|_| Disk {
            cx: rng.gen_range(0..48),
            cy: rng.gen_range(0..48),
            radius: rng.gen_range(3..12),
            color: palette[rng.gen_range(0..palette.len())],
        })
        .collect();
    fixtures::disk_scene(48, 48, [255, 255, 255], &disks)
}

#[test]
fn shuffling_segments_keeps_their_ranks() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let params = SegmenterParams {
        quant_levels: 4,
        min_area_fraction: 0.0,
    };
    for _ in 0..25 {
        let img = random_scene(&mut rng);
        let mut segs = reference_segment(&img, params).unwrap();
        let by_id = |segs: &[_]| -> HashMap<String, usize> {
            rank_segments(&img, segs, "blue red", &ReferenceScorer::new(), &CropSpec::default(), 0.7)
                .unwrap()
                .into_iter()
                .map(|r| (r.segment.id().to_string(), r.rank))
                .collect()
        };
        let want = by_id(&segs);
        for _ in 0..4 {
            segs.shuffle(&mut rng);
            assert_eq!(by_id(&segs), want);
        }
    }
}

#[test]
fn red_prompt_picks_the_disk_in_every_crop_mode() {
    let (img, disk) = fixtures::red_disk();
    let segs = reference_segment(&img, SegmenterParams::default()).unwrap();
    let disk_idx: Vec<usize> = (0..img.pixel_count())
        .filter(|&i| disk.contains((i % 64) as u32, (i / 64) as u32))
        .collect();
    for mode in [BackgroundMode::Keep, BackgroundMode::Blank] {
        for pad in [0.0, 0.15, 0.5, 1.0, 2.0] {
            if mode == BackgroundMode::Keep && pad == 2.0 {
                continue;
            }
            let spec = CropSpec::new(pad, mode).unwrap();
            let ranked = rank_segments(&img, &segs, "red", &ReferenceScorer::new(), &spec, 1.0).unwrap();
            let sel = select_target(ranked, 0.0).unwrap();
            let chosen = sel.chosen().expect("threshold 0 always selects");
            assert_eq!(chosen.rank, 1);
            assert!(matches!(sel.outcome, Outcome::Selected { .. }));
            assert_eq!(chosen.segment.mask().indices().collect::<Vec<_>>(), disk_idx, "{mode:?} {pad}");
        }
    }
}

#[test]
fn selection_never_undercuts_threshold() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let img = random_scene(&mut rng);
    let segs = reference_segment(&img, SegmenterParams::default()).unwrap();
    for _ in 0..200 {
        let t: f64 = rng.gen_range(0.0..1.0);
        let ranked = rank_segments(&img, &segs, "yellow", &ReferenceScorer::new(), &CropSpec::default(), rng.gen_range(0.01..3.0)).unwrap();
        let sel = select_target(ranked, t).unwrap();
        if let Some(c) = sel.chosen() {
            assert!(c.norm_score >= t);
            assert_eq!(c.rank, 1);
        } else {
            assert!(sel.all_ranked[0].norm_score < t);
        }
    }
}

/// Unmasked crops padded out to the whole frame all show the same pixels,
/// so the scorer cannot tell the segments apart.
#[test]
fn full_frame_keep_crops_tie() {
    let (img, _) = fixtures::red_disk();
    let segs = reference_segment(&img, SegmenterParams::default()).unwrap();
    let spec = CropSpec::new(2.0, BackgroundMode::Keep).unwrap();
    let ranked = rank_segments(&img, &segs, "red", &ReferenceScorer::new(), &spec, 1.0).unwrap();
    assert!(ranked.windows(2).all(|w| w[0].raw_score == w[1].raw_score));
    assert_eq!(ranked[0].segment.area(), 64 * 64 - 317);
}
