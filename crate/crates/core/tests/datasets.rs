use pbgc::datasets::{generate_dataset_with, PathDistribution, MAGIC};
use pbgc::{
    generate_dataset, load_dataset, nmse, save_dataset, split, synthesize_channel, ArrayConfig,
    ChannelDataset, Error, Exec, FormatError, ScenarioSpec,
};

/// Sup distance between the empirical CDF of `xs` and U(lo, hi).
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[test]
fn generation_is_reproducible_and_strategy_independent() {
    let spec = ScenarioSpec::preset("paths-6-to-8", 8).unwrap();
    let a = generate_dataset(&spec, 300, 42).unwrap();
    let b = generate_dataset(&spec, 300, 42).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let seq = generate_dataset_with(&spec, 300, 42, Exec::Sequential).unwrap();
    let par = generate_dataset_with(&spec, 300, 42, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq, a);
    let c = generate_dataset(&spec, 300, 43).unwrap();
    assert_ne!(a.channels, c.channels);
    // a prefix is stable under a larger count
    let longer = generate_dataset(&spec, 400, 42).unwrap();
    assert_eq!(&longer.channels[..300], &a.channels[..]);
}

#[test]
fn truth_resynthesizes_every_channel() {
    let spec = ScenarioSpec::preset("three-boxes", 12).unwrap();
    let ds = generate_dataset(&spec, 500, 9).unwrap();
    let truth = ds.truth.as_ref().unwrap();
    for (h, paths) in ds.channels.iter().zip(truth) {
        assert_eq!(paths.len(), 3);
        for (p, d) in paths.iter().zip(&spec.paths) {
            assert!(d.contains_angles(p.aoa, p.aod));
            assert!((d.gain_range.0..=d.gain_range.1).contains(&p.gain));
        }
        let again = synthesize_channel(paths, &spec.array);
        assert!(nmse(h, &again).unwrap() < 1e-24);
    }
}

#[test]
fn marginals_match_uniform_ranges() {
    let spec = ScenarioSpec::preset("paths-6-to-8", 4).unwrap();
    let ds = generate_dataset(&spec, 10_000, 2024).unwrap();
    let truth = ds.truth.unwrap();
    let d = spec.paths[0];
    let col = |f: fn(&pbgc::PathParams) -> f64| truth.iter().map(|t| f(&t[0])).collect::<Vec<_>>();
    let checks = [
        (col(|p| p.gain), d.gain_range),
        (col(|p| p.aoa), d.aoa_range),
        (col(|p| p.aod), d.aod_range),
    ];
    for (xs, (lo, hi)) in checks {
        let ks = ks_uniform(xs, lo, hi);
        assert!(ks < 0.02, "KS {ks}");
    }
}

#[test]
fn ks_statistic_detects_wrong_range() {
    // oracle sanity: a shifted range must be rejected
    let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    assert!(ks_uniform(xs.clone(), 0.0, 1.0) < 1e-3);
    assert!(ks_uniform(xs, 0.1, 1.1) > 0.09);
}

#[test]
fn split_partitions_without_loss() {
    let spec = ScenarioSpec::preset("single-path", 4).unwrap();
    let ds = generate_dataset(&spec, 10, 1).unwrap();
    let parts = split(&ds, &[0.5, 0.5], 3).unwrap();
    assert_eq!((parts[0].len(), parts[1].len()), (5, 5));
    let mut all: Vec<_> = parts
        .iter()
        .flat_map(|p| p.truth.clone().unwrap())
        .collect();
    let mut orig = ds.truth.clone().unwrap();
    let key = |v: &Vec<pbgc::PathParams>| v[0].aoa;
    all.sort_by(|a, b| key(a).total_cmp(&key(b)));
    orig.sort_by(|a, b| key(a).total_cmp(&key(b)));
    assert_eq!(all, orig);
    assert_eq!(parts, split(&ds, &[0.5, 0.5], 3).unwrap());
    let one = split(&ds, &[1.0], 3).unwrap();
    assert_eq!(one[0].len(), 10);
    assert!(split(&ds, &[0.5, 0.4], 3).is_err());
    assert!(split(&ds, &[1.5, -0.5], 3).is_err());
    assert!(split(&ds, &[], 3).is_err());
}

#[test]
fn save_load_is_bit_exact() {
    let spec = ScenarioSpec::preset("bs10-like", 6).unwrap();
    let ds = generate_dataset(&spec, 50, 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.chnl");
    save_dataset(&ds, &path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, ds.to_storage_precision());
    // labels are stored at full precision
    assert_eq!(back.truth, ds.truth);
    assert_eq!(back.scenario, ds.scenario);
    assert_eq!(back.normalization_scale, ds.normalization_scale);
    let path2 = dir.path().join("again.chnl");
    save_dataset(&back, &path2).unwrap();
    assert_eq!(std::fs::read(&path2).unwrap(), first);
}

#[test]
fn header_layout_is_little_endian() {
    let spec = ScenarioSpec::preset("single-path", 3).unwrap();
    let mut ds = generate_dataset(&spec, 2, 5).unwrap();
    ds.scenario = None;
    let bytes = ds.to_bytes().unwrap();
    assert_eq!(&bytes[0..4], MAGIC);
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(bytes[6], 1);
    assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 2);
    assert_eq!(u16::from_le_bytes([bytes[11], bytes[12]]), 3);
    assert_eq!(u16::from_le_bytes([bytes[13], bytes[14]]), 3);
    assert_eq!(u16::from_le_bytes([bytes[15], bytes[16]]), 1);
    assert_eq!(
        f64::from_le_bytes(bytes[17..25].try_into().unwrap()),
        ds.normalization_scale
    );
    let h0 = ds.channels[0].entries();
    assert_eq!(
        f32::from_le_bytes(bytes[25..29].try_into().unwrap()),
        h0[[0, 0]].re as f32
    );
    let im_at = 25 + 4 * 9;
    assert_eq!(
        f32::from_le_bytes(bytes[im_at..im_at + 4].try_into().unwrap()),
        h0[[0, 0]].im as f32
    );
    let truth_at = 25 + 2 * 8 * 9;
    assert_eq!(bytes.len(), truth_at + 2 * 24);
    let g = f64::from_le_bytes(bytes[truth_at..truth_at + 8].try_into().unwrap());
    assert_eq!(g, ds.truth.as_ref().unwrap()[0][0].gain);
}

#[test]
fn corrupted_files_give_typed_errors() {
    let spec = ScenarioSpec::preset("single-path", 4).unwrap();
    let good = generate_dataset(&spec, 5, 1).unwrap().to_bytes().unwrap();

    let mut bad = good.clone();
    bad[1] = b'X';
    assert!(matches!(
        ChannelDataset::read_from(bad.as_slice()),
        Err(Error::Format(FormatError::BadMagic { .. }))
    ));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(
        ChannelDataset::read_from(bad.as_slice()),
        Err(Error::Format(FormatError::UnsupportedVersion {
            found: 9,
            ..
        }))
    ));
    for cut in [0, 3, 10, 24, 40, good.len() - 1] {
        assert!(
            matches!(
                ChannelDataset::read_from(&good[..cut]),
                Err(Error::Format(FormatError::Truncated { .. }))
            ),
            "cut at {cut}"
        );
    }
    let mut bad = good.clone();
    bad.push(0);
    assert!(matches!(
        ChannelDataset::read_from(bad.as_slice()),
        Err(Error::Format(FormatError::Inconsistent(_)))
    ));
    let mut bad = good.clone();
    bad[6] |= 0x80;
    assert!(ChannelDataset::read_from(bad.as_slice()).is_err());
    assert!(load_dataset("/nonexistent/dir/x.chnl").is_err());
}

#[test]
fn external_channels_without_labels() {
    let cfg = ArrayConfig::square(4);
    let hs: Vec<_> = (0..3)
        .map(|k| synthesize_channel(&[pbgc::PathParams::new(1.0, 0.1 * k as f64, 0.0)], &cfg))
        .collect();
    let ds = ChannelDataset::from_channels(hs).unwrap();
    assert!(ds.truth.is_none());
    let back = ChannelDataset::read_from(ds.to_bytes().unwrap().as_slice()).unwrap();
    assert_eq!(back, ds.to_storage_precision());
    let mixed = vec![
        synthesize_channel(&[], &ArrayConfig::square(4)),
        synthesize_channel(&[], &ArrayConfig::square(5)),
    ];
    assert!(ChannelDataset::from_channels(mixed).is_err());
}

#[test]
fn scenario_files_round_trip_and_report_positions() {
    for name in ScenarioSpec::preset_names() {
        let spec = ScenarioSpec::preset(name, 8).unwrap();
        let text = spec.to_toml_string();
        assert_eq!(ScenarioSpec::from_toml_str(&text).unwrap(), spec);
    }
    let src = "name = \"x\"\n\n[array]\nn_t = 4\nn_r = 4\nu = 3.14\n\n[[path]]\ngain = [0.1, 0.2]\naoa = [0.5, 0.1]\naod = [0.0, 0.1]\n";
    match ScenarioSpec::from_toml_str(src) {
        Err(Error::Spec { line, .. }) => assert_eq!(line, 10),
        other => panic!("expected a positioned error, got {other:?}"),
    }
    let bad = PathDistribution::new((0.1, 0.2), (-4.0, 0.0), (0.0, 0.1));
    assert!(bad.validate().is_err());
    assert!(ScenarioSpec::preset("nope", 4).is_err());
}
