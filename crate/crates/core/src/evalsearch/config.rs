use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bptt::{
    self, GradHyper, LossConfig, Optimizer, OptimizerKind, TrainSchedule, TrainedModel,
};
use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::esn::{self, EsnHyper, EsnModel};
use crate::narx::{self, NarxHyper, NarxModel};
use crate::timeseries::TaskDataset;

/// Settings of a gradient-trained cell; the cell type comes from the
/// enclosing [`ModelConfig`] variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradConfig {
    pub n_hidden: usize,
    pub optimizer: Optimizer,
    pub loss: LossConfig,
    pub schedule: TrainSchedule,
}

/// Complete configuration of one model, tagged by architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ModelConfig {
    Ernn(GradConfig),
    Lstm(GradConfig),
    Gru(GradConfig),
    Narx(NarxHyper),
    Esn(EsnHyper),
}

impl ModelConfig {
    pub fn recurrent(kind: CellKind, c: GradConfig) -> Self {
        match kind {
            CellKind::Ernn => ModelConfig::Ernn(c),
            CellKind::Lstm => ModelConfig::Lstm(c),
            CellKind::Gru => ModelConfig::Gru(c),
        }
    }

    pub fn arch(&self) -> &'static str {
        match self {
            ModelConfig::Ernn(_) => "ernn",
            ModelConfig::Lstm(_) => "lstm",
            ModelConfig::Gru(_) => "gru",
            ModelConfig::Narx(_) => "narx",
            ModelConfig::Esn(_) => "esn",
        }
    }

    fn grad_hyper(&self) -> Option<GradHyper> {
        let (cell, c) = match self {
            ModelConfig::Ernn(c) => (CellKind::Ernn, c),
            ModelConfig::Lstm(c) => (CellKind::Lstm, c),
            ModelConfig::Gru(c) => (CellKind::Gru, c),
            _ => return None,
        };
        Some(GradHyper {
            cell,
            n_hidden: c.n_hidden,
            optimizer: c.optimizer,
            loss: c.loss,
            schedule: c.schedule,
        })
    }

    /// Training epochs; `None` for ESN, which has no iterative training.
    pub fn epochs(&self) -> Option<usize> {
        match self {
            ModelConfig::Ernn(c) | ModelConfig::Lstm(c) | ModelConfig::Gru(c) => {
                Some(c.schedule.epochs)
            }
            ModelConfig::Narx(n) => Some(n.epochs),
            ModelConfig::Esn(_) => None,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        match &mut self {
            ModelConfig::Ernn(c) | ModelConfig::Lstm(c) | ModelConfig::Gru(c) => {
                c.schedule.epochs = epochs
            }
            ModelConfig::Narx(n) => n.epochs = epochs,
            ModelConfig::Esn(_) => {}
        }
        self
    }

    /// Trains a model on the training split, or on training plus validation
    /// when `include_valid` is set.
    pub fn fit(
        &self,
        dataset: &TaskDataset,
        seed: u64,
        include_valid: bool,
    ) -> Result<FittedModel> {
        if let Some(h) = self.grad_hyper() {
            let (m, _) = bptt::train(dataset, &h, seed, include_valid)?;
            return Ok(match self {
                ModelConfig::Ernn(_) => FittedModel::Ernn(m),
                ModelConfig::Lstm(_) => FittedModel::Lstm(m),
                _ => FittedModel::Gru(m),
            });
        }
        match self {
            ModelConfig::Narx(h) => Ok(FittedModel::Narx(
                narx::train(dataset, h, seed, include_valid)?.0,
            )),
            ModelConfig::Esn(h) => Ok(FittedModel::Esn(esn::train(
                dataset,
                h,
                seed,
                include_valid,
            )?)),
            _ => unreachable!("gradient configs handled above"),
        }
    }

    /// Optimal configuration reported for `arch` on `task` (`mg`, `narma`,
    /// `mso`, `orange`, `acea` or `gefcom`), with the test-phase budget of
    /// 2000 epochs.
    pub fn tuned(arch: &str, task: &str) -> Result<ModelConfig> {
        let row = TUNED
            .iter()
            .find(|r| r.0 == arch && r.1 == task)
            .ok_or_else(|| {
                Error::invalid(format!("no tuned configuration for {arch} on {task}"))
            })?;
        Ok(row.2.build())
    }

    /// Names of every tuned configuration, as `task-arch`.
    pub fn tuned_names() -> Vec<String> {
        TUNED.iter().map(|r| format!("{}-{}", r.1, r.0)).collect()
    }
}

enum Row {
    /// tau_b, tau_f, Nh, optimizer, eta, p_drop, l1, l2
    Grad(
        CellKind,
        usize,
        usize,
        usize,
        OptimizerKind,
        f64,
        f64,
        f64,
        f64,
    ),
    /// Nh, Nl, delay, eta, l2
    Narx(usize, usize, usize, f64, f64),
    /// Nh, rho, Rc, noise, omega_in, omega_out, omega_fb, l2
    Esn(usize, f64, f64, f64, f64, f64, f64, f64),
}

const TEST_EPOCHS: usize = 2000;

impl Row {
    fn build(&self) -> ModelConfig {
        match *self {
            Row::Grad(kind, tau_b, tau_f, n_hidden, opt, eta, p_drop, l1, l2) => {
                ModelConfig::recurrent(
                    kind,
                    GradConfig {
                        n_hidden,
                        optimizer: Optimizer::preset(opt, eta),
                        loss: LossConfig { l1, l2, p_drop },
                        schedule: TrainSchedule {
                            tau_b,
                            tau_f,
                            ..TrainSchedule::with_forward(tau_f, TEST_EPOCHS)
                        },
                    },
                )
            }
            Row::Narx(n_hidden, n_layers, delay, eta0, l2) => ModelConfig::Narx(NarxHyper {
                n_hidden,
                n_layers,
                delay,
                eta0,
                l2,
                epochs: TEST_EPOCHS,
                transient: 50,
            }),
            Row::Esn(n_hidden, rho, connectivity, noise, omega_in, omega_out, omega_fb, l2) => {
                ModelConfig::Esn(EsnHyper {
                    n_hidden,
                    rho,
                    connectivity,
                    noise,
                    omega_in,
                    omega_out,
                    omega_fb,
                    l2,
                    washout: 50,
                })
            }
        }
    }
}

use CellKind::{Ernn, Gru, Lstm};
use OptimizerKind::{Adam, Nesterov, Sgd};

#[rustfmt::skip]
const TUNED: &[(&str, &str, Row)] = &[
    ("narx", "mg", Row::Narx(15, 2, 6, 3.8e-6, 0.0209)),
    ("narx", "narma", Row::Narx(17, 2, 10, 2.4e-4, 0.4367)),
    ("narx", "mso", Row::Narx(12, 5, 2, 0.002, 0.446)),
    ("narx", "orange", Row::Narx(11, 4, 2, 1.9e-6, 0.082)),
    ("narx", "acea", Row::Narx(11, 3, 2, 1.9e-6, 0.0327)),
    ("narx", "gefcom", Row::Narx(18, 4, 9, 6.1e-5, 0.3136)),
    ("ernn", "mg", Row::Grad(Ernn, 20, 10, 80, Adam, 0.00026, 0.0, 0.0, 0.00037)),
    ("ernn", "narma", Row::Grad(Ernn, 50, 25, 80, Nesterov, 0.00056, 0.0, 0.0, 1e-5)),
    ("ernn", "mso", Row::Grad(Ernn, 50, 25, 60, Adam, 0.00041, 0.0, 0.0, 0.00258)),
    ("ernn", "orange", Row::Grad(Ernn, 30, 15, 100, Sgd, 0.011, 0.0, 0.0, 0.0081)),
    ("ernn", "acea", Row::Grad(Ernn, 60, 30, 80, Nesterov, 0.00036, 0.0, 0.0, 0.0015)),
    ("ernn", "gefcom", Row::Grad(Ernn, 50, 25, 60, Adam, 0.0002, 0.0, 0.0, 0.0023)),
    ("lstm", "mg", Row::Grad(Lstm, 50, 25, 40, Adam, 0.00051, 0.0, 0.0, 0.00065)),
    ("lstm", "narma", Row::Grad(Lstm, 40, 20, 40, Adam, 0.00719, 0.0, 0.0, 0.00087)),
    ("lstm", "mso", Row::Grad(Lstm, 50, 25, 20, Adam, 0.00091, 0.0, 0.0, 0.0012)),
    ("lstm", "orange", Row::Grad(Lstm, 40, 20, 50, Adam, 0.0013, 0.0, 0.0, 0.0036)),
    ("lstm", "acea", Row::Grad(Lstm, 50, 25, 40, Adam, 0.0010, 0.1, 0.0, 0.0012)),
    ("lstm", "gefcom", Row::Grad(Lstm, 50, 25, 20, Sgd, 0.0881, 0.0, 0.0, 0.0017)),
    ("gru", "mg", Row::Grad(Gru, 40, 20, 46, Sgd, 0.02253, 0.0, 0.0, 6.88e-6)),
    ("gru", "narma", Row::Grad(Gru, 40, 20, 46, Adam, 0.00025, 0.0, 0.0, 0.00378)),
    ("gru", "mso", Row::Grad(Gru, 50, 25, 35, Adam, 0.00333, 0.0, 0.0, 0.00126)),
    ("gru", "orange", Row::Grad(Gru, 40, 20, 46, Sgd, 0.0783, 0.0, 0.0133, 0.0004)),
    ("gru", "acea", Row::Grad(Gru, 40, 20, 35, Adam, 0.0033, 0.0, 0.0, 0.0013)),
    ("gru", "gefcom", Row::Grad(Gru, 60, 30, 23, Adam, 0.0005, 0.0, 0.0, 0.0043)),
    ("esn", "mg", Row::Esn(800, 1.334, 0.234, 0.001, 0.597, 0.969, 0.260, 0.066)),
    ("esn", "narma", Row::Esn(700, 0.932, 0.322, 0.013, 0.464, 0.115, 0.045, 0.343)),
    ("esn", "mso", Row::Esn(600, 1.061, 0.231, 0.002, 0.112, 0.720, 0.002, 0.177)),
    ("esn", "orange", Row::Esn(400, 0.5006, 0.3596, 0.0261, 0.2022, 0.4787, 0.1328, 0.3240)),
    ("esn", "acea", Row::Esn(800, 0.7901, 0.4099, 0.0025, 0.1447, 0.5306, 0.0604, 0.1297)),
    ("esn", "gefcom", Row::Esn(500, 1.7787, 0.4283, 0.0489, 0.7974, 0.9932, 0.0033, 0.2721)),
];

/// A trained model of any architecture, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum FittedModel {
    Ernn(TrainedModel),
    Lstm(TrainedModel),
    Gru(TrainedModel),
    Narx(NarxModel),
    Esn(EsnModel),
}

impl FittedModel {
    /// Transformed-scale predictions for the labeled positions in `range`.
    /// Recurrent cells run from a zero state at position 0; NARX and ESN
    /// feed back labels only while they are observable (see their
    /// `forecast` methods).
    pub fn predict(&self, dataset: &TaskDataset, range: Range<usize>) -> Result<Vec<f64>> {
        if range.end > dataset.len() || range.is_empty() {
            return Err(Error::invalid(format!(
                "prediction range {range:?} on {} positions",
                dataset.len()
            )));
        }
        let out = match self {
            FittedModel::Ernn(m) | FittedModel::Lstm(m) | FittedModel::Gru(m) => {
                let all = m.predict_all(dataset)?;
                all[range].to_vec()
            }
            FittedModel::Narx(m) => m.forecast(dataset, range)?,
            FittedModel::Esn(m) => m.forecast(dataset, range)?,
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite prediction at offset {i}"
            )));
        }
        Ok(out)
    }

    /// Raw-scale predictions and ground truth for `range`.
    pub fn predict_raw(
        &self,
        dataset: &TaskDataset,
        range: Range<usize>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.predict(dataset, range.clone())?;
        let raw = dataset.to_raw(&p, range.start);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(
                "non-finite prediction after inverse transform".into(),
            ));
        }
        Ok((raw, dataset.raw_truth(range)))
    }

    /// NRMSE on `range` in raw units, after the transient.
    pub fn score(&self, dataset: &TaskDataset, range: Range<usize>) -> Result<f64> {
        let (p, t) = self.predict_raw(dataset, range)?;
        super::scored_nrmse(&p, &t)
    }
}
