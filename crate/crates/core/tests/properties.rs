//! Property tests for the numerical core.

use proptest::prelude::*;

use salience::dct::{dct2, idct2};
use salience::mapops::{
    fit_to_dims, gaussian_kernel, postprocess, rescale_values, smooth, FitPolicy, ScaleMode, Smoothing,
};
use salience::models::{cg_compute, imsig_compute, uniform_compute, Registry};
use salience::params::{resolve, select, GlobalConfig, ParamMap, Provenance, ResolvedParams, Scalar};
use salience::raster::{
    convert_color, hsv_to_rgb, lab_to_rgb, rgb_to_hsv, rgb_to_lab, rgb_to_ycbcr, ycbcr_to_rgb, ColorSpace, Image,
    SaliencyMap,
};

fn rgb_pixel() -> impl Strategy<Value = [f64; 3]> {
    [0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64]
}

fn plane(max_side: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_side, 1..=max_side)
        .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(-10.0..10.0f64, h * w)))
}

fn rgb_image(max_side: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0.0..=1.0f64, h * w * 3)
            .prop_map(move |data| Image::new(h, w, ColorSpace::Rgb, data).unwrap())
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lab_round_trip(p in rgb_pixel()) {
        let back = lab_to_rgb(rgb_to_lab(p));
        prop_assert!(max_abs_diff(&back, &p) < 1e-3);
    }

    #[test]
    fn ycbcr_round_trip(p in rgb_pixel()) {
        prop_assert!(max_abs_diff(&ycbcr_to_rgb(rgb_to_ycbcr(p)), &p) < 1e-6);
    }

    #[test]
    fn hsv_round_trip(p in rgb_pixel()) {
        let hsv = rgb_to_hsv(p);
        prop_assert!((0.0..360.0).contains(&hsv[0]));
        prop_assert!((0.0..=1.0).contains(&hsv[1]) && (0.0..=1.0).contains(&hsv[2]));
        prop_assert!(max_abs_diff(&hsv_to_rgb(hsv), &p) < 1e-6);
    }

    #[test]
    fn conversion_keeps_dimensions(img in rgb_image(6)) {
        for space in [ColorSpace::Rgb, ColorSpace::Gray, ColorSpace::YCbCr, ColorSpace::Lab, ColorSpace::Hsv] {
            let out = convert_color(&img, space).unwrap();
            prop_assert_eq!(out.dims(), img.dims());
            prop_assert_eq!(out.space(), space);
            prop_assert_eq!(out.channels(), space.channels());
        }
    }

    #[test]
    fn gray_matches_ycbcr_luma(img in rgb_image(5)) {
        let gray = convert_color(&img, ColorSpace::Gray).unwrap();
        let ycc = convert_color(&img, ColorSpace::YCbCr).unwrap();
        prop_assert!(max_abs_diff(gray.data(), &ycc.channel(0)) < 1e-12);
    }

    #[test]
    fn selector_follows_the_ladder(run in any::<Option<u8>>(), exp in any::<Option<u8>>(),
                                   model in any::<Option<u8>>(), global in any::<Option<u8>>()) {
        let layers = [run, exp, model, global];
        let predicted = layers.iter().zip(Provenance::LADDER).find_map(|(v, p)| v.map(|v| (v, p)));
        prop_assert_eq!(select(run, exp, model, global), predicted);
    }

    #[test]
    fn resolve_follows_the_ladder(run in proptest::option::of(0.5..9.0f64), exp in proptest::option::of(0.5..9.0f64)) {
        let reg = Registry::builtin("/nonexistent");
        let manifest = reg.get("IMSIG").unwrap().manifest();
        let layer = |v: Option<f64>| -> ParamMap { v.map(|v| ("smooth_std".to_string(), Scalar::Float(v))).into_iter().collect() };
        let rp = resolve(manifest, &GlobalConfig::builtin(), &layer(exp), &layer(run)).unwrap();
        let (value, layer) = match (run, exp) {
            (Some(r), _) => (r, Provenance::Run),
            (None, Some(e)) => (e, Provenance::Experiment),
            (None, None) => (3.0, Provenance::GlobalDefault),
        };
        prop_assert_eq!(rp.get("smooth_std"), Some(&Scalar::Float(value)));
        prop_assert_eq!(rp.provenance_of("smooth_std"), Some(layer));
        prop_assert_eq!(rp.provenance_of("working_size"), Some(Provenance::ModelDefault));
    }

    #[test]
    fn min_max_hits_the_bounds((h, w, data) in plane(12), a in -5.0..5.0f64, span in 0.001..20.0f64) {
        let map = SaliencyMap::new(h, w, data.clone());
        let out = rescale_values(&map, ScaleMode::MinMax, a, a + span).unwrap();
        let lo = out.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = out.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((lo - a).abs() < 1e-6);
        let constant = data.iter().all(|v| *v == data[0]);
        if constant {
            prop_assert!(out.data.iter().all(|v| *v == a));
        } else {
            prop_assert!((hi - (a + span)).abs() < 1e-6);
        }
        // order is preserved
        for i in 0..data.len() {
            for j in 0..data.len() {
                if data[i] < data[j] {
                    prop_assert!(out.data[i] <= out.data[j]);
                }
            }
        }
    }

    #[test]
    fn normalized_is_a_distribution((h, w, data) in plane(12)) {
        let out = rescale_values(&SaliencyMap::new(h, w, data), ScaleMode::Normalized, 0.0, 1.0).unwrap();
        prop_assert!(out.data.iter().all(|v| *v >= 0.0));
        prop_assert!((out.data.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn none_is_identity((h, w, data) in plane(8)) {
        let map = SaliencyMap::new(h, w, data);
        prop_assert_eq!(rescale_values(&map, ScaleMode::None, 0.0, 1.0).unwrap().data, map.data.clone());
        prop_assert_eq!(smooth(&map, &Smoothing::None).unwrap().data, map.data);
    }

    #[test]
    fn bilinear_fit_reaches_any_target((h, w, data) in plane(10), th in 1usize..40, tw in 1usize..40) {
        let map = SaliencyMap::new(h, w, data.clone());
        let out = fit_to_dims(&map, (th, tw), FitPolicy::RescaleBilinear).unwrap();
        prop_assert_eq!(out.dims(), (th, tw));
        // bilinear never overshoots the source range
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.data.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
    }

    #[test]
    fn padding_fit_reaches_its_target((h, w, data) in plane(8), pads in [0usize..4, 0usize..4, 0usize..4, 0usize..4]) {
        let [top, bottom, left, right] = pads;
        let map = SaliencyMap::new(h, w, data.clone());
        let target = (h + top + bottom, w + left + right);
        let out = fit_to_dims(&map, target, FitPolicy::PadReplicate { top, bottom, left, right }).unwrap();
        prop_assert_eq!(out.dims(), target);
        prop_assert_eq!(out.get(top, left), data[0]);
        prop_assert_eq!(out.get(0, 0), data[0]);
        let off_by_one = (target.0 + 1, target.1);
        let policy = FitPolicy::PadReplicate { top, bottom, left, right };
        prop_assert!(fit_to_dims(&map, off_by_one, policy).is_err());
    }

    #[test]
    fn smoothing_preserves_constants(h in 1usize..12, w in 1usize..12, c in -3.0..3.0f64,
                                     size in (0usize..5).prop_map(|k| 2 * k + 1), std in 0.2..5.0f64) {
        let out = smooth(&SaliencyMap::filled(h, w, c), &Smoothing::Gaussian { size, std }).unwrap();
        prop_assert_eq!(out.dims(), (h, w));
        prop_assert!(out.data.iter().all(|v| (v - c).abs() < 1e-9));
    }

    #[test]
    fn smoothing_preserves_interior_mass(k in 0usize..4, std in 0.3..4.0f64, mass in 0.1..10.0f64) {
        let size = 2 * k + 1;
        let n = 2 * size + 3;
        let mut map = SaliencyMap::filled(n, n, 0.0);
        map.data[(n / 2) * n + n / 2] = mass;
        let out = smooth(&map, &Smoothing::Gaussian { size, std }).unwrap();
        prop_assert!((out.data.iter().sum::<f64>() - mass).abs() < 1e-6 * mass.max(1.0));
    }

    #[test]
    fn kernels_are_normalised_and_symmetric(k in 0usize..6, std in 0.1..10.0f64) {
        let size = 2 * k + 1;
        let kernel = gaussian_kernel(size, std).unwrap();
        prop_assert!((kernel.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for r in 0..size {
            for c in 0..size {
                prop_assert!((kernel.at(r, c) - kernel.at(size - 1 - r, size - 1 - c)).abs() < 1e-15);
                prop_assert!((kernel.at(r, c) - kernel.at(c, r)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pipeline_with_nothing_to_do_is_idempotent((h, w, data) in plane(8), th in 1usize..16, tw in 1usize..16) {
        let raw = SaliencyMap::new(h, w, data);
        let run = |m: &SaliencyMap| postprocess(m, (th, tw), FitPolicy::RescaleBilinear, &Smoothing::None, ScaleMode::None, 0.0, 1.0).unwrap();
        let once = run(&raw);
        prop_assert_eq!(run(&once).data, once.data);
    }

    #[test]
    fn dct_round_trip((h, w, data) in plane(32)) {
        let back = idct2(&dct2(&data, h, w), h, w);
        prop_assert!(max_abs_diff(&back, &data) < 1e-9);
    }

    #[test]
    fn dct_preserves_energy((h, w, data) in plane(16)) {
        let e0: f64 = data.iter().map(|v| v * v).sum();
        let e1: f64 = dct2(&data, h, w).iter().map(|v| v * v).sum();
        prop_assert!((e0 - e1).abs() < 1e-9 * e0.max(1.0));
    }

    #[test]
    fn cg_is_flip_symmetric(img in rgb_image(15), rho in 0.05..1.0f64) {
        let mut params = ParamMap::new();
        params.insert("prior_prop".into(), Scalar::Float(rho));
        let reg = Registry::builtin("/nonexistent");
        let rp = resolve(reg.get("cG").unwrap().manifest(), &GlobalConfig::builtin(), &ParamMap::new(), &params).unwrap();
        let map = cg_compute(&img, &rp);
        let (h, w) = map.dims();
        for y in 0..h {
            for x in 0..w {
                prop_assert!((map.get(y, x) - map.get(h - 1 - y, x)).abs() < 1e-15);
                prop_assert!((map.get(y, x) - map.get(y, w - 1 - x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cg_ignores_content(a in rgb_image(6)) {
        let b = Image::filled(a.height(), a.width(), ColorSpace::Rgb, 0.3).unwrap();
        let rp = ResolvedParams::default();
        prop_assert_eq!(cg_compute(&a, &rp).data, cg_compute(&b, &rp).data);
    }

    #[test]
    fn imsig_is_scale_invariant((h, w) in (1usize..20, 1usize..20), seed in proptest::collection::vec(0.0..1.0f64, 400),
                                scale in 0.01..100.0f64) {
        let data: Vec<f64> = seed[..h * w].to_vec();
        let img = Image::new(h, w, ColorSpace::Gray, data.clone()).unwrap();
        let scaled = Image::new(h, w, ColorSpace::Gray, data.iter().map(|v| v * scale).collect()).unwrap();
        let rp = ResolvedParams::default();
        prop_assert!(max_abs_diff(&imsig_compute(&img, &rp).data, &imsig_compute(&scaled, &rp).data) < 1e-9);
    }

    #[test]
    fn native_outputs_are_finite(img in rgb_image(12)) {
        let rp = ResolvedParams::default();
        let lab = convert_color(&img, ColorSpace::Lab).unwrap();
        for map in [cg_compute(&img, &rp), imsig_compute(&lab, &rp), uniform_compute(&img, &rp)] {
            prop_assert!(map.is_finite());
        }
    }
}
