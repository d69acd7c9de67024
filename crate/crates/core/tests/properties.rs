use prepocr_core::amp::{masked_psnr_map, AmpRegion, PsnrAccumulator};
use prepocr_core::ocrnoise::{chunk_text, inject_errors, ErrorModel, RateScale};
use prepocr_core::patch::{fuse, fuse_pixel, restore_image, BuiltinRestorer, FusionMethod, RestoreMode, ScanDirection};
use prepocr_core::synth::{degrade, NoiseLevel};
use prepocr_core::text::{align_document, align_exact, DocumentAlignConfig};
use prepocr_core::GrayImage;
use proptest::prelude::*;

fn image(w: u32, h: u32, seed: u64) -> GrayImage {
    let mut s = seed | 1;
    GrayImage::from_fn(w, h, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 24) as u8
    })
    .unwrap()
}

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("the"), Just("a"), Just("river"), Just("ran"), Just("past"), Just("old"),
            Just("mill"), Just("and"), Just("into"), Just("town"), Just("quietly"), Just("stones"),
        ],
        1..60,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn three_agreeing_passes_win_the_median(agreed in any::<u8>(), odd in any::<u8>(), pos in 0usize..4) {
        let mut v = [agreed; 4];
        v[pos] = odd;
        prop_assert_eq!(fuse_pixel(v, FusionMethod::Median), agreed);
    }

    #[test]
    fn equal_passes_fuse_to_themselves(w in 1u32..40, h in 1u32..40, seed in any::<u64>()) {
        let img = image(w, h, seed);
        let passes = vec![img.clone(); 4];
        prop_assert_eq!(fuse(&passes, FusionMethod::Median).unwrap(), img.clone());
        prop_assert_eq!(fuse(&passes, FusionMethod::Mean).unwrap(), img);
    }

    #[test]
    fn identity_restore_is_exact(w in 1u32..700, h in 1u32..700, trim in prop::sample::select(vec![0u32, 32, 64]), seed in any::<u64>()) {
        let img = image(w, h, seed);
        for mode in [
            RestoreMode::Multi { fusion: FusionMethod::Median },
            RestoreMode::Single { direction: ScanDirection::BottomRightToTopLeft },
        ] {
            prop_assert_eq!(&restore_image(&img, &BuiltinRestorer::Identity, mode, trim).unwrap(), &img);
        }
    }

    #[test]
    fn amp_is_bounded_and_crop_consistent(seeds in proptest::collection::vec(any::<u64>(), 1..4)) {
        let mut acc = PsnrAccumulator::for_patches();
        for s in &seeds {
            let gt = image(256, 256, *s);
            let pred = image(256, 256, s.wrapping_mul(31).wrapping_add(7));
            acc.accumulate(&masked_psnr_map(&gt, &pred).unwrap()).unwrap();
        }
        for region in AmpRegion::ALL {
            let amp = acc.finalize(region).unwrap().amp;
            prop_assert!((0.0..=100.0).contains(&amp));
        }
        let central = acc.finalize(AmpRegion::Central128).unwrap().amp;
        let cropped = acc.cropped(64).finalize(AmpRegion::Full).unwrap().amp;
        prop_assert_eq!(central, cropped);
    }

    #[test]
    fn self_alignment_is_clean(text in text_strategy(), n in 1usize..6) {
        let config = DocumentAlignConfig { anchor_n: n, ..DocumentAlignConfig::default() };
        let al = align_document(&text, &text, &config);
        prop_assert!(al.unmatched.is_empty());
        prop_assert_eq!(al.cost(), 0);
        prop_assert_eq!(al.matched_gt_chars(), al.gt.len());
    }

    #[test]
    fn scripts_replay_to_the_hypothesis(a in "[abc ]{0,30}", b in "[abc ]{0,30}") {
        let (ga, hb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let script = align_exact(&ga, &hb);
        prop_assert_eq!(script.apply(&ga), Some(hb));
    }

    #[test]
    fn degrade_keeps_shape_and_is_seeded(w in 8u32..120, h in 8u32..120, level in 1u8..=4, seed in any::<u64>()) {
        let img = image(w, h, seed ^ 0x55);
        let preset = NoiseLevel::preset(level).unwrap();
        let a = degrade(&img, &preset, seed).unwrap();
        let b = degrade(&img, &preset, seed).unwrap();
        prop_assert_eq!(a.image.dims(), img.dims());
        prop_assert_eq!(&a.image, &b.image);
        prop_assert_eq!(a.op_order, b.op_order);
    }

    #[test]
    fn chunks_are_nonempty_and_bounded(text in "(\\PC|[ .!?\\n]){0,400}", max in 1usize..80) {
        for c in chunk_text(&text, max) {
            prop_assert!(!c.is_empty());
            prop_assert!(c.chars().count() <= max);
        }
    }

    #[test]
    fn injection_never_leaves_placeholders(text in text_strategy(), lambda in 0.0f64..20.0, seed in any::<u64>()) {
        let model = ErrorModel::from_entries([('t', "@", 0.3), ('e', "@e", 0.2), ('r', "rn", 0.1)]).unwrap();
        let out = inject_errors(&text, &model, &RateScale::fixed(lambda), seed);
        prop_assert!(!out.contains('@'));
    }
}
