use proptest::prelude::*;
use segedit_core::{composite, rle_decode, rle_encode, BinaryGrid, ImageBuffer, Mask};

fn grid_strategy(max_side: u32) -> impl Strategy<Value = BinaryGrid> {
    (1..=max_side, 1..=max_side, 0.0f64..1.0).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density.clamp(0.01, 0.99)), (w * h) as usize)
            .prop_map(move |bits| BinaryGrid::from_bits(w, h, bits).unwrap())
    })
}

fn mask_pair(max_side: u32) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b)| {
                (
                    rle_encode(&BinaryGrid::from_bits(w, h, a).unwrap()),
                    rle_encode(&BinaryGrid::from_bits(w, h, b).unwrap()),
                )
            })
    })
}

fn image_strategy(w: u32, h: u32) -> impl Strategy<Value = ImageBuffer> {
    proptest::collection::vec(any::<u8>(), (w * h * 3) as usize)
        .prop_map(move |data| ImageBuffer::new(w, h, data).unwrap())
}

/// Brute-force square dilation straight from the definition.
fn dilate_oracle(grid: &BinaryGrid, r: u32) -> BinaryGrid {
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let r = r as i64;
    let mut out = BinaryGrid::new(grid.width(), grid.height());
    for y in 0..h {
        for x in 0..w {
            let hit = (y - r..=y + r)
                .flat_map(|yy| (x - r..=x + r).map(move |xx| (xx, yy)))
                .any(|(xx, yy)| xx >= 0 && yy >= 0 && xx < w && yy < h && grid.get(xx as u32, yy as u32));
            out.set(x as u32, y as u32, hit);
        }
    }
    out
}

proptest! {
    #[test]
    fn codec_roundtrip(grid in grid_strategy(48)) {
        let mask = rle_encode(&grid);
        prop_assert_eq!(rle_decode(mask.width(), mask.height(), mask.runs()).unwrap(), grid.clone());
        prop_assert_eq!(mask.to_grid(), grid);
        prop_assert_eq!(rle_encode(&mask.to_grid()), mask.clone());
        // canonical: sorted, nonempty, separated by a gap
        for pair in mask.runs().windows(2) {
            prop_assert!(pair[0].0 + pair[0].1 < pair[1].0);
        }
        prop_assert!(mask.runs().iter().all(|&(_, l)| l > 0));
        // json form round-trips through validation too
        let back: Mask = serde_json::from_str(&serde_json::to_string(&mask).unwrap()).unwrap();
        prop_assert_eq!(back, mask);
    }

    #[test]
    fn iou_symmetric_and_bounded((a, b) in mask_pair(24)) {
        let ab = a.iou(&b).unwrap();
        prop_assert_eq!(ab, b.iou(&a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(a.iou(&a).unwrap(), 1.0);
        // brute-force oracle on decoded grids
        let (ga, gb) = (a.to_grid(), b.to_grid());
        let inter = ga.bits().iter().zip(gb.bits()).filter(|(x, y)| **x && **y).count();
        let union = ga.bits().iter().zip(gb.bits()).filter(|(x, y)| **x || **y).count();
        let want = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        prop_assert_eq!(ab, want);
    }

    #[test]
    fn dilation_matches_definition_and_is_monotone(grid in grid_strategy(20), r1 in 0u32..4, extra in 0u32..3) {
        let m = rle_encode(&grid);
        let r2 = r1 + extra;
        let d1 = m.dilate(r1);
        let d2 = m.dilate(r2);
        prop_assert_eq!(d1.to_grid(), dilate_oracle(&grid, r1));
        prop_assert!(m.is_subset_of(&d1).unwrap());
        prop_assert!(d1.is_subset_of(&d2).unwrap());
    }

    #[test]
    fn composite_locality_and_idempotence(
        (orig, gen, mask) in (1u32..16, 1u32..16).prop_flat_map(|(w, h)| (
            image_strategy(w, h),
            image_strategy(w, h),
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |b| rle_encode(&BinaryGrid::from_bits(w, h, b).unwrap())),
        )),
        feather in 0u32..4,
    ) {
        let out = composite(&orig, &gen, &mask, feather).unwrap();
        for i in 0..orig.pixel_count() {
            if !mask.contains(i) {
                prop_assert_eq!(out.pixel_at(i), orig.pixel_at(i));
            } else if feather == 0 {
                prop_assert_eq!(out.pixel_at(i), gen.pixel_at(i));
            }
        }
        prop_assert_eq!(composite(&orig, &orig, &mask, feather).unwrap(), orig);
    }
}
