//! Property tests of the grid transforms, file formats, fits and configuration.

use brlab::cli::{parse_config_text, KEYS};
use brlab::engine::{apply_multiplier, FieldMeta};
use brlab::grid::{forward_transform, inverse_transform, GridSpec, SampledFunction};
use brlab::harness::fit_decay;
use brlab::io::{self, FieldLayout};
use brlab_core::C64;
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = GridSpec> {
    (1usize..=3, 2u32..=4, 0.5f64..8.0).prop_map(|(n, log_side, extent)| {
        let side = 1usize << if n == 3 { log_side.min(3) } else { log_side };
        GridSpec::new(n, side, extent).expect("valid grid")
    })
}

fn function() -> impl Strategy<Value = SampledFunction> {
    grid().prop_flat_map(|spec| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), spec.len()).prop_map(move |v| SampledFunction {
            spec,
            values: v.into_iter().map(|(re, im)| C64::new(re, im)).collect(),
        })
    })
}

fn relative_distance(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip(f in function()) {
        let back = inverse_transform(f.spec, forward_transform(&f));
        prop_assert!(relative_distance(&back.values, &f.values) <= 1e-12);
    }

    #[test]
    fn parseval(f in function()) {
        let hat = forward_transform(&f);
        let dxi = f.spec.frequency_spacing().powi(f.spec.n as i32);
        let hat_norm = (dxi * hat.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
        let norm = f.l2_norm();
        prop_assert!((hat_norm - norm).abs() <= 1e-12 * norm.max(1e-300));
    }

    #[test]
    fn constant_multiplier_scales(f in function(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let c = C64::new(re, im);
        let g = apply_multiplier(&f, |_| c);
        let want: Vec<C64> = f.values.iter().map(|v| v * c).collect();
        prop_assert!(relative_distance(&g.values, &want) <= 1e-12);
    }

    #[test]
    fn json_floats_round_trip_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..16)) {
        let text = io::to_json(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn field_files_round_trip_exactly(f in function()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let meta = FieldMeta { variant: "test".into(), ..FieldMeta::default() };
        io::write_field(&path, &f.spec, &f.values, &meta, FieldLayout::SpatialRowMajor).unwrap();
        let (spec, values, meta2, layout) = io::read_field(&path).unwrap();
        prop_assert_eq!(spec, f.spec);
        prop_assert_eq!(values, f.values);
        prop_assert_eq!(meta2, meta);
        prop_assert_eq!(layout, FieldLayout::SpatialRowMajor);
    }

    #[test]
    fn fit_recovers_power_law(slope in -3.0f64..1.0, log_c in -20.0f64..20.0, len in 3usize..12) {
        let series: Vec<(f64, f64)> = (0..len).map(|i| {
            let x = 2.0 + i as f64;
            (x, (log_c + slope * x).exp2())
        }).collect();
        let r = fit_decay(&series, 0.0).unwrap();
        prop_assert!((r.fit.slope - slope).abs() <= 1e-9);
        prop_assert!((r.fit.intercept - log_c).abs() <= 1e-8);
        prop_assert!(r.fit.r2 >= 1.0 - 1e-9);
        prop_assert_eq!(r.pass, r.fit.slope <= 0.0);
    }

    #[test]
    fn config_text_round_trips(entries in prop::collection::btree_map(prop::sample::select(KEYS.to_vec()), "[a-z0-9.,+-]{1,12}", 0..10)) {
        let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n# note\n\n")).collect();
        let parsed = parse_config_text(&text).unwrap();
        prop_assert_eq!(parsed.len(), entries.len());
        for (k, v) in &entries {
            prop_assert_eq!(&parsed[*k], v);
        }
    }
}
