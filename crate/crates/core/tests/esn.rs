use nalgebra::{DMatrix, DVector};
use rnnf_core::esn::{
    ridge_fit, ridge_fit_dual, ridge_fit_primal, train, EsnHyper, EsnModel, Reservoir,
};
use rnnf_core::numerics::{spectral_radius, Matrix, RngStream};
use rnnf_core::timeseries::SyntheticTask;
use rnnf_core::Error;

fn hyper(nh: usize, rho: f64, rc: f64) -> EsnHyper {
    EsnHyper {
        n_hidden: nh,
        rho,
        connectivity: rc,
        noise: 0.0,
        omega_in: 0.5,
        omega_out: 1.0,
        omega_fb: 0.2,
        l2: 0.01,
        washout: 50,
    }
}

fn random_matrix(r: usize, c: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.normal())
}

/// `pinv([S; √λ I]) [y; 0]`, computed by SVD.
fn pinv_oracle(s: &Matrix, y: &[f64], l2: f64) -> Vec<f64> {
    let (n, p) = s.shape();
    let mut a = DMatrix::<f64>::zeros(n + p, p);
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = s.get(i, j);
        }
    }
    for j in 0..p {
        a[(n + j, j)] = l2.sqrt();
    }
    let mut b = DVector::<f64>::zeros(n + p);
    for i in 0..n {
        b[i] = y[i];
    }
    let w = a.pseudo_inverse(1e-14).unwrap() * b;
    w.iter().copied().collect()
}

#[test]
fn reservoir_construction() {
    let mut rng = RngStream::new(1, 0);
    let dense = Reservoir::build(&hyper(20, 0.9, 1.0), 2, 1, &mut rng).unwrap();
    assert_eq!(dense.w.count_nonzero(), 400);

    let h = EsnHyper {
        omega_in: 0.3,
        omega_fb: 0.1,
        ..hyper(500, 1.25, 0.3)
    };
    let r = Reservoir::build(&h, 3, 1, &mut rng).unwrap();
    assert!((r.w.count_nonzero() as i64 - 75_000).abs() <= 500);
    let rho = spectral_radius(&r.w).unwrap();
    assert!((rho - 1.25).abs() <= 1e-6 * 1.25, "{rho}");
    assert!(r.w_in.as_slice().iter().all(|v| v.abs() <= 0.3));
    assert!(r.w_fb.as_slice().iter().all(|v| v.abs() <= 0.1));
    assert_eq!(r.w_in.shape(), (500, 3));
    assert_eq!(r.w_fb.shape(), (500, 1));
}

#[test]
fn invalid_hyperparameters_rejected() {
    let mut rng = RngStream::new(1, 0);
    for h in [
        hyper(0, 0.9, 0.5),
        hyper(10, 0.0, 0.5),
        hyper(10, 0.9, 0.0),
        hyper(10, 0.9, 1.5),
    ] {
        assert!(Reservoir::build(&h, 1, 1, &mut rng).is_err());
    }
}

#[test]
fn harvest_shapes_and_zero_reservoir() {
    let nh = 6;
    let r = Reservoir::from_parts(
        Matrix::zeros(nh, nh),
        Matrix::zeros(nh, 2),
        Matrix::zeros(nh, 1),
        1.0,
        0.0,
    );
    let xs: Vec<Vec<f64>> = (0..1000).map(|t| vec![t as f64, -(t as f64)]).collect();
    let ys: Vec<Vec<f64>> = (0..1000).map(|t| vec![(t as f64).sin()]).collect();
    let s = r.harvest(&xs, &ys, 50, None).unwrap();
    assert_eq!(s.shape(), (950, 8));
    for i in 0..950 {
        assert_eq!(&s.row(i)[..2], xs[i + 50].as_slice());
        assert!(s.row(i)[2..].iter().all(|&v| v == 0.0));
    }
    assert!(r.harvest(&xs, &ys, 1000, None).is_err());
}

#[test]
fn echo_state_contraction() {
    for seed in 0..10 {
        let mut rng = RngStream::new(100 + seed, 0);
        let h = EsnHyper {
            omega_fb: 0.0,
            ..hyper(100, 0.9, 0.2)
        };
        let r = Reservoir::build(&h, 1, 1, &mut rng).unwrap();
        let mut a: Vec<f64> = (0..100).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut b: Vec<f64> = (0..100).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut converged = false;
        for t in 0..500 {
            let x = [(t as f64 * 0.3).sin()];
            a = r.step(&a, &x, &[0.0], None);
            b = r.step(&b, &x, &[0.0], None);
            let d = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            if d < 1e-6 {
                converged = true;
                break;
            }
        }
        assert!(converged, "seed {seed}");
    }
}

#[test]
fn ridge_examples() {
    let s = Matrix::identity(2);
    assert_eq!(ridge_fit(&s, &[1.0, 2.0], 0.0).unwrap(), vec![1.0, 2.0]);
    let w = ridge_fit(&s, &[1.0, 2.0], 1.0).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    let rank_one = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
    assert!(matches!(
        ridge_fit_primal(&rank_one, &[1.0, 2.0, 3.0], 0.0),
        Err(Error::Singular)
    ));
    assert!(ridge_fit_primal(&rank_one, &[1.0, 2.0, 3.0], 0.1).is_ok());
    assert!(ridge_fit(&s, &[1.0], 0.1).is_err());
    assert!(ridge_fit(&s, &[1.0, 2.0], -1.0).is_err());
}

#[test]
fn primal_and_dual_agree() {
    let mut rng = RngStream::new(7, 0);
    let mut shapes = vec![(40, 60)];
    while shapes.len() < 20 {
        shapes.push((5 + rng.index(60), 5 + rng.index(60)));
    }
    assert!(shapes.iter().filter(|(r, c)| c > r).count() >= 5);
    for (rows, cols) in shapes {
        let s = random_matrix(rows, cols, &mut rng);
        let y: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let l2 = 0.1;
        let p = ridge_fit_primal(&s, &y, l2).unwrap();
        let d = ridge_fit_dual(&s, &y, l2).unwrap();
        let o = pinv_oracle(&s, &y, l2);
        for j in 0..cols {
            assert!(
                (p[j] - d[j]).abs() < 1e-8,
                "{rows}x{cols} entry {j}: {} vs {}",
                p[j],
                d[j]
            );
            assert!((p[j] - o[j]).abs() < 1e-8);
        }
    }
}

#[test]
fn ridge_solution_is_optimal() {
    let mut rng = RngStream::new(8, 0);
    let s = random_matrix(30, 12, &mut rng);
    let y: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
    let l2 = 0.3;
    let w = ridge_fit(&s, &y, l2).unwrap();
    let objective = |w: &[f64]| {
        let r = s.mul_vec(w);
        0.5 * r
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
    };
    let best = objective(&w);
    for _ in 0..100 {
        let dir: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        for sign in [1.0, -1.0] {
            let moved: Vec<f64> = w
                .iter()
                .zip(&dir)
                .map(|(a, d)| a + sign * 1e-3 * d / n)
                .collect();
            assert!(objective(&moved) >= best);
        }
    }
}

fn small_model(omega_fb: f64) -> (EsnModel, rnnf_core::timeseries::TaskDataset) {
    let d = SyntheticTask::Mso.dataset(1500, 1).unwrap();
    let h = EsnHyper {
        omega_fb,
        ..hyper(60, 0.9, 0.3)
    };
    (train(&d, &h, 3, false).unwrap(), d)
}

#[test]
fn no_feedback_means_no_dependence_on_outputs() {
    let (m, d) = small_model(0.0);
    let teacher = d.target_rows();
    let a = m.run(&d.inputs, &teacher, 400).unwrap();
    let b = m.run(&d.inputs, &[], 400).unwrap();
    assert_eq!(a, b);
}

#[test]
fn teacher_forced_rerun_reproduces_ridge_fit() {
    let (m, d) = small_model(0.2);
    let end = d.split.train.end;
    let teacher = d.target_rows();
    let s = m
        .reservoir
        .harvest(&d.inputs[..end], &teacher[..end], 50, None)
        .unwrap();
    let fitted = s.mul_vec(m.readout.row(0));
    let out = m.run(&d.inputs, &teacher, end).unwrap();
    for (i, f) in fitted.iter().enumerate() {
        assert!((out[i + 50][0] - f).abs() < 1e-10);
    }
}

#[test]
fn zero_drive_gives_constant_output() {
    let (m, _) = small_model(0.2);
    let m = EsnModel {
        reservoir: Reservoir::from_parts(
            m.reservoir.w.clone(),
            m.reservoir.w_in.clone(),
            Matrix::zeros(60, 1),
            m.reservoir.omega_out,
            0.0,
        ),
        ..m
    };
    let xs = vec![vec![0.0]; 100];
    let out = m.run(&xs, &[], 100).unwrap();
    assert!(out.iter().all(|y| y[0] == 0.0));
}

#[test]
fn training_is_deterministic_and_serializable() {
    let (a, _) = small_model(0.2);
    let (b, _) = small_model(0.2);
    assert_eq!(a, b);
    let s = serde_json::to_string(&a).unwrap();
    let back: EsnModel = serde_json::from_str(&s).unwrap();
    assert_eq!(a, back);
    let d = SyntheticTask::Mso.dataset(1500, 1).unwrap();
    assert_eq!(
        a.forecast(&d, d.split.test.clone()).unwrap(),
        back.forecast(&d, d.split.test.clone()).unwrap()
    );
}
