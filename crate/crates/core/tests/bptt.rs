use proptest::prelude::*;
use rnnf_core::bptt::*;
use rnnf_core::cells::*;
use rnnf_core::numerics::{Matrix, RngStream};
use rnnf_core::timeseries::SyntheticTask;

fn random_cell(kind: CellKind, dims: CellDims, rng: &mut RngStream) -> AnyCell {
    let mut c = AnyCell::init(kind, dims, rng).unwrap();
    rnnf_core::with_cell!(&mut c, p => {
        let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.uniform(-0.8, 0.8)).collect();
        p.unflatten(&flat);
    });
    c
}

fn loss_of<C: RecurrentCell>(
    c: &C,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    discard: usize,
    cfg: &LossConfig,
) -> f64 {
    let (out, _) = c.predict(xs, &c.zero_state()).unwrap();
    let mut s = 0.0;
    let mut k = 0;
    for t in discard..xs.len() {
        for (a, b) in out[t].iter().zip(&ys[t]) {
            s += (a - b) * (a - b);
            k += 1;
        }
    }
    s / k as f64 + reg_penalty(c, cfg)
}

/// Max relative error between analytic and central-difference gradients.
/// Entries whose gradient is below 1e-6 in both estimates are compared
/// against that floor instead of their own magnitude.
fn fd_error<C: RecurrentCell>(
    c: &C,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    sched: &TrainSchedule,
    cfg: &LossConfig,
) -> f64 {
    let masks = DropoutMasks::ones(c.n_inputs(), c.n_hidden());
    let cache = c.forward(xs, &c.zero_state(), &masks).unwrap();
    let g = bptt_gradients(c, &cache, ys, sched, cfg).unwrap().flatten();
    let base = c.flatten();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = c.clone();
    for i in 0..base.len() {
        let mut w = base.clone();
        w[i] = base[i] + h;
        probe.unflatten(&w);
        let up = loss_of(&probe, xs, ys, sched.transient_discard, cfg);
        w[i] = base[i] - h;
        probe.unflatten(&w);
        let down = loss_of(&probe, xs, ys, sched.transient_discard, cfg);
        let num = (up - down) / (2.0 * h);
        let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn loss_configs() -> [LossConfig; 4] {
    let none = LossConfig::default();
    [
        none,
        LossConfig { l1: 0.01, ..none },
        LossConfig { l2: 0.02, ..none },
        LossConfig {
            l1: 0.005,
            l2: 0.01,
            ..none
        },
    ]
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = RngStream::new(2024, 0);
    let mut instances = 0;
    for kind in [CellKind::Ernn, CellKind::Lstm, CellKind::Gru] {
        for (ci, cfg) in loss_configs().iter().enumerate() {
            for rep in 0..2 {
                let nh = 2 + rng.index(7);
                let t_len = 5 + rng.index(16);
                let dims = CellDims::new(1 + rng.index(3), nh, 1 + rep);
                let cell = random_cell(kind, dims, &mut rng);
                let xs: Vec<Vec<f64>> = (0..t_len)
                    .map(|_| (0..dims.n_inputs).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .collect();
                let ys: Vec<Vec<f64>> = (0..t_len)
                    .map(|_| {
                        (0..dims.n_outputs)
                            .map(|_| rng.uniform(-1.0, 1.0))
                            .collect()
                    })
                    .collect();
                let sched = TrainSchedule {
                    tau_b: t_len,
                    tau_f: if ci % 2 == 0 { 1 } else { t_len },
                    epochs: 1,
                    clip_threshold: None,
                    transient_discard: rep * 2,
                };
                let err = rnnf_core::with_cell!(&cell, c => fd_error(c, &xs, &ys, &sched, cfg));
                assert!(
                    err < 1e-5,
                    "{kind:?} cfg {cfg:?} nh {nh} T {t_len}: rel err {err}"
                );
                instances += 1;
            }
        }
    }
    assert!(instances >= 20);
}

#[test]
fn full_window_truncation_variants_agree() {
    let mut rng = RngStream::new(7, 0);
    for kind in [CellKind::Ernn, CellKind::Lstm, CellKind::Gru] {
        let cell = random_cell(kind, CellDims::new(2, 5, 1), &mut rng);
        let xs: Vec<Vec<f64>> = (0..17).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let ys: Vec<Vec<f64>> = (0..17).map(|_| vec![rng.normal()]).collect();
        let cfg = LossConfig {
            l1: 0.01,
            l2: 0.01,
            p_drop: 0.0,
        };
        let s1 = TrainSchedule {
            tau_b: 17,
            tau_f: 1,
            epochs: 1,
            clip_threshold: None,
            transient_discard: 3,
        };
        let s2 = TrainSchedule { tau_f: 17, ..s1 };
        rnnf_core::with_cell!(&cell, c => {
            let cache = c.forward(&xs, &c.zero_state(), &DropoutMasks::ones(2, 5)).unwrap();
            let a = bptt_gradients(c, &cache, &ys, &s1, &cfg).unwrap().flatten();
            let b = bptt_gradients(c, &cache, &ys, &s2, &cfg).unwrap().flatten();
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * scale, "{kind:?}: {x} vs {y}");
            }
        });
    }
}

#[derive(Clone, Copy)]
struct Dual(f64, f64);

impl Dual {
    fn c(v: f64) -> Dual {
        Dual(v, 0.0)
    }
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
    fn tanh(self) -> Dual {
        let t = self.0.tanh();
        Dual(t, (1.0 - t * t) * self.1)
    }
}

#[test]
fn scalar_ernn_matches_forward_mode_oracle() {
    // parameter order: wih, whh, who, bi, bh, bo
    let theta = [0.7, -0.4, 1.3, 0.1, -0.2, 0.05];
    let xs = [0.5, -1.0, 0.25, 0.8, -0.3];
    let ys = [0.2, 0.1, -0.4, 0.3, 0.0];
    let oracle = |seed: usize| -> f64 {
        let p: Vec<Dual> = theta
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual(v, (i == seed) as u8 as f64))
            .collect();
        let mut h = Dual::c(0.0);
        let mut loss = Dual::c(0.0);
        for (x, y) in xs.iter().zip(&ys) {
            h = p[0]
                .mul(Dual::c(*x).add(p[3]))
                .add(p[1].mul(h.add(p[4])))
                .tanh();
            let out = p[2].mul(h.add(p[5]));
            let e = out.sub(Dual::c(*y));
            loss = loss.add(e.mul(e));
        }
        loss.1 / xs.len() as f64
    };
    let mut p = ErnnParams::zeros(CellDims::new(1, 1, 1));
    p.unflatten(&theta);
    let xr: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let yr: Vec<Vec<f64>> = ys.iter().map(|&v| vec![v]).collect();
    let cache = p.forward(&xr, &[0.0], &DropoutMasks::ones(1, 1)).unwrap();
    let sched = TrainSchedule {
        tau_b: 5,
        tau_f: 1,
        epochs: 1,
        clip_threshold: None,
        transient_discard: 0,
    };
    let g = bptt_gradients(&p, &cache, &yr, &sched, &LossConfig::default())
        .unwrap()
        .flatten();
    for i in 0..6 {
        assert!(
            (g[i] - oracle(i)).abs() < 1e-10,
            "param {i}: {} vs {}",
            g[i],
            oracle(i)
        );
    }
}

#[test]
fn ernn_profile_vanishes_with_small_recurrent_norm() {
    let nh = 6;
    let mut rng = RngStream::new(3, 0);
    let mut p = ErnnParams::init(CellDims::new(1, nh, 1), &mut rng).unwrap();
    p.whh = Matrix::from_diag(&[0.1; 6]);
    let xs: Vec<Vec<f64>> = (0..30).map(|t| vec![(t as f64).sin()]).collect();
    let ys = vec![vec![1.0]; 30];
    let cache = p
        .forward(&xs, &p.zero_state(), &DropoutMasks::ones(1, nh))
        .unwrap();
    let prof = gradient_norm_profile(&p, &cache, &ys).unwrap();
    assert_eq!(prof.len(), 30);
    assert!(prof[0] > 1e-3);
    assert!(prof.windows(2).take(20).all(|w| w[1] < w[0]));
    assert!(prof[20] < 1e-8 * prof[0] && prof[20] < 1e-8);
}

#[test]
fn lstm_profile_is_flat_with_open_forget_gate() {
    let nh = 4;
    let mut rng = RngStream::new(4, 0);
    let mut p = LstmParams::init(CellDims::new(2, nh, 1), &mut rng).unwrap();
    p.b_f = vec![50.0; nh];
    p.b_u = vec![-50.0; nh];
    for r in [&mut p.r_f, &mut p.r_h, &mut p.r_u, &mut p.r_o] {
        *r = Matrix::zeros(nh, nh);
    }
    let xs: Vec<Vec<f64>> = (0..60).map(|t| vec![(t as f64 * 0.3).cos(), 0.5]).collect();
    let ys = vec![vec![0.3]; 60];
    let cache = p
        .forward(&xs, &p.zero_state(), &DropoutMasks::ones(2, nh))
        .unwrap();
    let prof = gradient_norm_profile(&p, &cache, &ys).unwrap();
    assert!(prof[0] > 1e-6);
    for k in 1..=50 {
        assert!(
            (prof[k] - prof[0]).abs() < 1e-10,
            "lag {k}: {} vs {}",
            prof[k],
            prof[0]
        );
    }
}

#[test]
fn optimizer_hand_values() {
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    let mut w = [1.0];
    sgd_step(&mut w, &[0.5], 0.1);
    close(w[0], 0.95);

    let (mut w, mut v) = ([0.0], [0.0]);
    momentum_step(&mut w, &mut v, &[1.0], 0.1, 0.9);
    close(v[0], -0.1);
    close(w[0], -0.1);
    momentum_step(&mut w, &mut v, &[1.0], 0.1, 0.9);
    close(v[0], -0.19);
    close(w[0], -0.29);

    // Nesterov through the state machine: the gradient of ½w² is taken at w + μv
    let mut st = Optimizer::new(OptimizerKind::Nesterov, 0.1).state(1);
    let mut w = vec![1.0];
    for _ in 0..2 {
        let g = st.lookahead(&w);
        st.step(&mut w, &g).unwrap();
    }
    // step 1: v = -0.1, w = 0.9; step 2: look at 0.81, v = -0.09 - 0.081 = -0.171, w = 0.729
    close(st.acc1[0], -0.171);
    close(w[0], 0.729);

    let (mut w, mut s) = ([1.0], [0.0]);
    adagrad_step(&mut w, &mut s, &[0.5], 0.1, 1e-8);
    close(w[0], 1.0 - 0.05 / 0.500_000_01);
    adagrad_step(&mut w, &mut s, &[0.5], 0.1, 1e-8);
    close(s[0], 0.5);
    close(
        w[0],
        1.0 - 0.05 / 0.500_000_01 - 0.05 / (0.5f64.sqrt() + 1e-8),
    );

    let (mut w, mut m) = ([1.0], [0.0]);
    rmsprop_step(&mut w, &mut m, &[0.5], 0.1, 0.01, 1e-8);
    close(m[0], 0.0025);
    close(w[0], 1.0 - 0.05 / 0.050_000_01);

    let (mut w, mut m, mut v) = ([0.0], [0.0], [0.0]);
    adam_step(&mut w, &mut m, &mut v, &[1.0], 0.001, 0.9, 0.999, 1e-8, 1);
    close(w[0], -0.001 / (1.0f64 + 1e-8).sqrt());
    assert!(w[0] > -0.001 && w[0] < -0.000_999_99);
    adam_step(&mut w, &mut m, &mut v, &[1.0], 0.001, 0.9, 0.999, 1e-8, 2);
    // m = 0.19, v = 0.001999, both corrections give 1
    close(w[0], -0.002 / (1.0f64 + 1e-8).sqrt());

    let (mut w, mut m, mut v) = ([0.3], [0.0], [0.0]);
    adam_step(&mut w, &mut m, &mut v, &[0.0], 0.001, 0.9, 0.999, 1e-8, 1);
    assert_eq!(w[0], 0.3);
}

#[test]
fn training_is_deterministic_and_epochs_zero_is_a_no_op() {
    let d = SyntheticTask::Narma.dataset(400, 1).unwrap();
    let hyper = GradHyper {
        cell: CellKind::Gru,
        n_hidden: 5,
        optimizer: Optimizer::preset(OptimizerKind::Adam, 0.01),
        loss: LossConfig {
            l1: 0.0,
            l2: 1e-4,
            p_drop: 0.2,
        },
        schedule: TrainSchedule::with_forward(10, 3),
    };
    let (m1, h1) = train(&d, &hyper, 11, false).unwrap();
    let (m2, h2) = train(&d, &hyper, 11, false).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    assert_eq!(h1.epochs.len(), 3);
    assert!(h1.epochs.iter().all(|e| e.valid_mse.is_some()));

    let zero = GradHyper {
        schedule: TrainSchedule::with_forward(10, 0),
        ..hyper.clone()
    };
    let (m0, h0) = train(&d, &zero, 11, false).unwrap();
    assert!(h0.is_empty());
    let init = AnyCell::init(
        CellKind::Gru,
        CellDims::new(2, 5, 1),
        &mut RngStream::new(11, 0).derive(1),
    )
    .unwrap();
    assert_eq!(m0.params, init);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    h1.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("epoch,train_mse,valid_mse,learning_rate,grad_norm\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn ernn_learns_identity() {
    let mut rng = RngStream::new(12, 0);
    let xs: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
    let ys = xs.clone();
    let mut cell = ErnnParams::init(CellDims::new(1, 10, 1), &mut rng.derive(1)).unwrap();
    let sched = TrainSchedule {
        tau_b: 20,
        tau_f: 10,
        epochs: 200,
        clip_threshold: None,
        transient_discard: 50,
    };
    let h = fit(
        &mut cell,
        &xs,
        &ys,
        None,
        &Optimizer::new(OptimizerKind::Adam, 0.01),
        &LossConfig::default(),
        &sched,
        &mut rng,
    )
    .unwrap();
    assert_eq!(h.epochs.len(), 200);
    let (out, _) = cell.predict(&xs, &cell.zero_state()).unwrap();
    let y: Vec<f64> = out[50..].iter().map(|o| o[0]).collect();
    let t: Vec<f64> = ys[50..].iter().map(|o| o[0]).collect();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let num: f64 = y.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = t.iter().map(|b| (b - mean) * (b - mean)).sum();
    let nrmse = (num / den).sqrt();
    assert!(nrmse < 0.05, "identity NRMSE {nrmse}");
}

#[test]
fn dropout_mask_is_shared_by_every_step() {
    let mut rng = RngStream::new(21, 0);
    for kind in [CellKind::Ernn, CellKind::Lstm, CellKind::Gru] {
        let cell = random_cell(kind, CellDims::new(2, 3, 1), &mut rng);
        let masks = DropoutMasks {
            input: vec![2.0, 0.0],
            recurrent: vec![1.0; 3],
        };
        let xs: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let mut ys = xs.clone();
        for x in &mut ys {
            x[1] = rng.normal() * 100.0;
        }
        rnnf_core::with_cell!(&cell, c => {
            let a = c.forward(&xs, &c.zero_state(), &masks).unwrap();
            let b = c.forward(&ys, &c.zero_state(), &masks).unwrap();
            assert_eq!(a.outputs, b.outputs, "{kind:?}");
        });
    }
}

proptest! {
    #[test]
    fn schedules_strictly_decrease(alpha in 1e-4f64..0.5, k in 0u64..1_000) {
        for s in [LrSchedule::Fractional { alpha }, LrSchedule::Exponential { alpha }] {
            prop_assert!(s.rate(0.1, k + 1) < s.rate(0.1, k));
        }
    }

    #[test]
    fn clipping_preserves_direction(g in prop::collection::vec(-100.0f64..100.0, 1..20), c in 0.01f64..50.0) {
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 0.0);
        let out = clip_gradient(&g, c);
        let m = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(m <= c.max(n) * (1.0 + 1e-12));
        let cos = g.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (n * m);
        prop_assert!((cos - 1.0).abs() < 1e-12);
    }
}
