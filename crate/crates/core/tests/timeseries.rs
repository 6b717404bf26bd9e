use chrono::Duration;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnf_core::evalsearch::nrmse;
use rnnf_core::timeseries::*;

mod common;
use common::{load_series, nrmse_reference, preset_datasets};

#[test]
fn presets_invert_exactly_on_their_datasets() {
    for (preset, d) in preset_datasets() {
        let spec = preset.spec(None);
        let (pipe, z) = Pipeline::fit(&spec.pipeline, &d.raw, d.split.train.end).unwrap();
        let back = pipe.invert(&z).unwrap();
        assert_eq!(back.len(), d.raw.len());
        for (a, b) in back.iter().zip(&d.raw) {
            assert!(close(*a, *b, 1e-12), "{preset:?}: {a} vs {b}");
        }
        // every label maps back to its raw value one point at a time
        let all = 0..d.len();
        let raw_labels = d.to_raw(&d.targets, 0);
        for (a, b) in raw_labels.iter().zip(d.raw_truth(all)) {
            assert!(close(*a, b, 1e-12), "{preset:?}");
        }
        // metric on the raw scale agrees with the reference
        let test = d.split.test.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy: Vec<f64> = d.targets[test.clone()]
            .iter()
            .map(|v| v + rng.random_range(-0.3..0.3))
            .collect();
        let raw = d.to_raw(&noisy, test.start);
        let truth = d.raw_truth(test);
        assert!((nrmse(&raw, &truth).unwrap() - nrmse_reference(&raw, &truth)).abs() < 1e-12);
    }
}

#[test]
fn preset_layouts() {
    let sets = preset_datasets();
    let (_, orange) = &sets[0];
    assert_eq!(orange.horizon, 24);
    assert_eq!(orange.pipeline.lag(), 24);
    let m = 24 * 60 - 48;
    assert_eq!(orange.len(), m);
    assert_eq!(orange.split.train.end, (m as f64 * 0.7).floor() as usize);

    let (_, acea) = &sets[1];
    assert_eq!(acea.horizon, 144);
    // January through March train, April validates, May tests
    let first_valid = acea.label_timestamp(acea.split.valid.start) - Duration::minutes(10 * 144);
    assert_eq!(first_valid.format("%m-%d %H:%M").to_string(), "04-01 00:00");

    let (_, gefcom) = &sets[2];
    assert_eq!(gefcom.n_inputs(), 2);
    assert_eq!(gefcom.exog_stats.len(), 1);
    let train_temps: Vec<f64> = gefcom.inputs[gefcom.split.train.clone()]
        .iter()
        .map(|r| r[1])
        .collect();
    let mean = train_temps.iter().sum::<f64>() / train_temps.len() as f64;
    assert!(mean.abs() < 1e-12);
}

fn positive_series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1e4, 200..400)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pipelines_round_trip(x in positive_series(), preset in 0usize..4, frac in 0.3f64..0.9) {
        let p = [DataPreset::Synthetic, DataPreset::Orange, DataPreset::Acea, DataPreset::Gefcom][preset];
        let steps = p.spec(None).pipeline;
        let lag = total_lag(&steps);
        prop_assume!(x.len() > lag + 2);
        let fit = (((x.len() - lag) as f64) * frac) as usize;
        prop_assume!(fit >= 2);
        let (pipe, z) = Pipeline::fit(&steps, &x, fit).unwrap();
        prop_assert_eq!(z.len(), x.len() - lag);
        let back = pipe.invert(&z).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!(close(*a, *b, 1e-12), "{} vs {}", a, b);
        }
        for i in (0..z.len()).step_by(17) {
            prop_assert!(close(pipe.invert_point(z[i], i), x[i + lag], 1e-12));
        }
    }

    #[test]
    fn seasonal_difference_inverts(x in prop::collection::vec(-1e3f64..1e3, 1..100), s in 1usize..30) {
        prop_assume!(x.len() > s);
        let d = seasonal_difference(&x, s).unwrap();
        prop_assert_eq!(d.len(), x.len() - s);
        let back = invert_seasonal(&d, &x[..s]).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0) * x.len() as f64);
        }
    }

    #[test]
    fn fraction_splits_partition(n in 10usize..5000, tr in 0.2f64..0.7, va in 0.05f64..0.2) {
        let spec = SplitSpec::Fractions { train: tr, valid: va, test: 1.0 - tr - va };
        let b = spec.bounds(n, &[]).unwrap();
        prop_assert_eq!(b.train.start, 0);
        prop_assert_eq!(b.train.end, b.valid.start);
        prop_assert_eq!(b.valid.end, b.test.start);
        prop_assert_eq!(b.test.end, n);
        prop_assert!(b.train.end <= (n as f64 * tr).ceil() as usize);
    }

    #[test]
    fn zscore_standardizes_fit_window(x in prop::collection::vec(-1e3f64..1e3, 3..200)) {
        let st = match ZStats::fit(&x) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let z = zscore(&x, &st);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9 || (var - (n - 1.0) / n).abs() < 1e-9);
    }
}

#[test]
fn generator_oracles() {
    let d = mackey_glass_derivative(1.2, 1.2, 0.2, 0.1, 10.0);
    assert!((d - -0.086_628_8).abs() < 1e-6);
    let y = narma_response(&[0.0; 3], 10).unwrap();
    assert!((y[1] - 0.1).abs() < 1e-6 && (y[2] - 0.1305).abs() < 1e-6);
    // sin(0.2) + sin(0.311) + sin(0.42) + sin(0.51)
    let expect = 0.2f64.sin() + 0.311f64.sin() + 0.42f64.sin() + 0.51f64.sin();
    assert_eq!(gen_mso(2).unwrap(), vec![0.0, expect]);
    assert!((expect - 1.400_617_85).abs() < 1e-8);
}

#[test]
fn synthetic_tasks() {
    for (task, h) in [
        (SyntheticTask::Mg, 12),
        (SyntheticTask::Narma, 1),
        (SyntheticTask::Mso, 10),
    ] {
        let d = task.dataset(3000, 5).unwrap();
        assert_eq!(d.horizon, h);
        assert_eq!(d.len(), 3000 - h);
        assert_eq!(d.split.train.end, (d.len() as f64 * 0.6).floor() as usize);
        let n_in = if task == SyntheticTask::Narma { 2 } else { 1 };
        assert_eq!(d.n_inputs(), n_in);
        for (a, b) in d.to_raw(&d.targets, 0).iter().zip(d.raw_truth(0..d.len())) {
            assert!(close(*a, b, 1e-12));
        }
    }
    assert_eq!(SyntheticTask::Mg.generate(15_000, 0).unwrap().len(), 15_000);
}

#[test]
fn persistence_is_the_input_value() {
    let d = SyntheticTask::Mg.dataset(500, 0).unwrap();
    let p = d.persistence(10..20);
    for (k, t) in (10..20).enumerate() {
        assert_eq!(p[k], d.raw[t]);
        assert!(close(
            d.pipeline.invert_point(d.inputs[t][0], t),
            p[k],
            1e-12
        ));
    }
}

#[test]
fn csv_schema_round_trip_and_imputation() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load_series(24 * 7 * 3, 60, true, 4);
    s.write_csv(&dir.path().join("a.csv")).unwrap();
    let mut schema = CsvSchema::new("load");
    schema.exogenous = vec!["temperature".into()];
    schema.step_seconds = Some(3600);
    schema.corrupted_marker = Some(-1.0);
    let back = load_csv(&dir.path().join("a.csv"), &schema).unwrap();
    assert_eq!(back.values, s.values);
    assert_eq!(back.exogenous, s.exogenous);

    // corrupt one mid-week value and drop one row
    let week = 24 * 7;
    s.values[week + 5] = -1.0;
    s.write_csv(&dir.path().join("b.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let dropped: String = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != week + 11)
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    std::fs::write(dir.path().join("b.csv"), dropped).unwrap();
    let loaded = load_csv(&dir.path().join("b.csv"), &schema).unwrap();
    assert_eq!(loaded.len(), s.len());
    assert_eq!(loaded.count(Quality::Corrupted), 1);
    assert_eq!(loaded.count(Quality::Missing), 1);
    assert_eq!(loaded.values[week + 10], 0.0);
    assert!(TaskDataset::from_series(&loaded, &DataPreset::Orange.spec(None)).is_err());
    let (fixed, report) = impute_adjacent_weeks(&loaded, week).unwrap();
    assert_eq!(report.replaced, 1);
    assert_eq!(
        fixed.values[week + 5],
        (s.values[5] + s.values[2 * week + 5]) / 2.0
    );
    assert!(TaskDataset::from_series(&fixed, &DataPreset::Orange.spec(None)).is_ok());
}

#[test]
fn autocorrelation_of_daily_cycle() {
    let s = load_series(24 * 40, 60, false, 6);
    let acf = autocorrelation(&s.values, 48).unwrap();
    assert_eq!(acf[0], 1.0);
    assert!(acf[24] > 0.8);
    assert!(acf[12] < 0.0);
    assert_eq!(
        first_zero_crossing(&acf).map(|l| (4..=7).contains(&l)),
        Some(true)
    );
}
