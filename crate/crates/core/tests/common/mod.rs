//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnf_core::timeseries::{Channel, DataPreset, RawSeries, TaskDataset};

/// Positive load-like series: daily and weekly cycles plus noise, with an
/// optional temperature channel.
pub fn load_series(n: usize, step_minutes: i64, with_temp: bool, seed: u64) -> RawSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_day = (24 * 60 / step_minutes) as f64;
    let values: Vec<f64> = (0..n)
        .map(|t| {
            let d = t as f64 / per_day;
            100.0
                + 30.0 * (2.0 * std::f64::consts::PI * d).sin()
                + 10.0 * (2.0 * std::f64::consts::PI * d / 7.0).cos()
                + rng.random_range(0.0..5.0)
        })
        .collect();
    let exog = if with_temp {
        vec![Channel {
            name: "temperature".into(),
            values: (0..n)
                .map(|t| {
                    15.0 + 8.0 * (t as f64 / per_day / 58.0).sin() + rng.random_range(-1.0..1.0)
                })
                .collect(),
        }]
    } else {
        vec![]
    };
    RawSeries::regular("load", values, Duration::minutes(step_minutes), exog).unwrap()
}

/// One dataset per real-data preset, sized to satisfy its split.
pub fn preset_datasets() -> Vec<(DataPreset, TaskDataset)> {
    [
        (DataPreset::Orange, load_series(24 * 60, 60, false, 1)),
        (
            DataPreset::Acea,
            load_series(144 * 31 * 5 + 144 * 2, 10, false, 2),
        ),
        (
            DataPreset::Gefcom,
            load_series(24 * 31 * 12 + 48, 60, true, 3),
        ),
    ]
    .into_iter()
    .map(|(p, s)| (p, TaskDataset::from_series(&s, &p.spec(None)).unwrap()))
    .collect()
}

/// Written out longhand as an independent check of the library metric.
pub fn nrmse_reference(y: &[f64], t: &[f64]) -> f64 {
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let num: f64 = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = t.iter().map(|b| (b - mean) * (b - mean)).sum();
    (num / den).sqrt()
}
