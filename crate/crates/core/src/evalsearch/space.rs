use serde::{Deserialize, Serialize};

use super::config::{GradConfig, ModelConfig};
use crate::bptt::{LossConfig, Optimizer, OptimizerKind, TrainSchedule};
use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::esn::EsnHyper;
use crate::narx::NarxHyper;
use crate::numerics::RngStream;

/// Sampling distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist {
    Fixed {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `10^c` with `c` uniform on `[log10 lo, log10 hi]`.
    LogUniform {
        lo: f64,
        hi: f64,
    },
    /// Uniform over the integers `lo..=hi`.
    Int {
        lo: i64,
        hi: i64,
    },
    Choice {
        values: Vec<f64>,
    },
}

impl Dist {
    pub fn uniform(lo: f64, hi: f64) -> Dist {
        Dist::Uniform { lo, hi }
    }

    pub fn choice(values: impl IntoIterator<Item = f64>) -> Dist {
        Dist::Choice {
            values: values.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Dist::Fixed { value } => value.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::LogUniform { lo, hi } => *lo > 0.0 && hi.is_finite() && lo <= hi,
            Dist::Int { lo, hi } => lo <= hi,
            Dist::Choice { values } => !values.is_empty() && values.iter().all(|v| v.is_finite()),
        };
        if !ok {
            return Err(Error::invalid(format!("bad distribution {self:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            Dist::Fixed { value } => *value,
            Dist::Uniform { lo, hi } => rng.uniform(*lo, *hi),
            Dist::LogUniform { lo, hi } => 10f64.powf(rng.uniform(lo.log10(), hi.log10())),
            Dist::Int { lo, hi } => (*lo + rng.index((hi - lo + 1) as usize) as i64) as f64,
            Dist::Choice { values } => values[rng.index(values.len())],
        }
    }

    /// Like [`sample`](Self::sample) but never returns zero when the support
    /// has other values.
    pub fn sample_nonzero(&self, rng: &mut RngStream) -> f64 {
        match self {
            Dist::Choice { values } if values.iter().any(|&v| v != 0.0) => {
                let nz: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
                nz[rng.index(nz.len())]
            }
            _ => {
                for _ in 0..64 {
                    let v = self.sample(rng);
                    if v != 0.0 {
                        return v;
                    }
                }
                self.sample(rng)
            }
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let tol = 1e-12 * v.abs().max(1.0);
        match self {
            Dist::Fixed { value } => v == *value,
            Dist::Uniform { lo, hi } => v >= *lo && v <= *hi,
            Dist::LogUniform { lo, hi } => v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12),
            Dist::Int { lo, hi } => v.fract() == 0.0 && v >= *lo as f64 && v <= *hi as f64,
            Dist::Choice { values } => values.iter().any(|x| (x - v).abs() <= tol),
        }
    }
}

/// An optimizer the search may pick, with its learning-rate distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerChoice {
    pub kind: OptimizerKind,
    pub eta: Dist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSpace {
    pub n_hidden: Dist,
    pub optimizers: Vec<OptimizerChoice>,
    pub l1: Dist,
    pub l2: Dist,
    pub p_drop: Dist,
    /// `tau_b` is always `2·tau_f`.
    pub tau_f: Dist,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxSpace {
    pub n_hidden: Dist,
    pub n_layers: Dist,
    pub delay: Dist,
    pub eta: Dist,
    pub l2: Dist,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnSpace {
    pub n_hidden: Dist,
    pub rho: Dist,
    pub connectivity: Dist,
    pub noise: Dist,
    pub omega_in: Dist,
    pub omega_out: Dist,
    pub omega_fb: Dist,
    pub l2: Dist,
}

/// Search space of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum HyperSpace {
    Ernn(GradSpace),
    Lstm(GradSpace),
    Gru(GradSpace),
    Narx(NarxSpace),
    Esn(EsnSpace),
}

pub const ARCHITECTURES: [&str; 5] = ["ernn", "lstm", "gru", "narx", "esn"];

fn grad_preset(n_hidden: [f64; 4]) -> GradSpace {
    GradSpace {
        n_hidden: Dist::choice(n_hidden),
        optimizers: vec![
            OptimizerChoice {
                kind: OptimizerKind::Sgd,
                eta: Dist::LogUniform { lo: 1e-3, hi: 1e-1 },
            },
            OptimizerChoice {
                kind: OptimizerKind::Nesterov,
                eta: Dist::LogUniform { lo: 1e-4, hi: 1e-2 },
            },
            OptimizerChoice {
                kind: OptimizerKind::Adam,
                eta: Dist::LogUniform { lo: 1e-4, hi: 1e-2 },
            },
        ],
        l1: Dist::uniform(0.0, 0.1),
        l2: Dist::uniform(0.0, 0.1),
        p_drop: Dist::choice([0.0, 0.1, 0.2, 0.3, 0.5]),
        tau_f: Dist::choice([10.0, 15.0, 20.0, 25.0, 30.0]),
        epochs: 400,
    }
}

impl HyperSpace {
    /// Default random-search space of an architecture (`ernn`, `lstm`,
    /// `gru`, `narx` or `esn`).
    pub fn preset(arch: &str) -> Result<HyperSpace> {
        Ok(match arch {
            "ernn" => HyperSpace::Ernn(grad_preset([40.0, 60.0, 80.0, 100.0])),
            "lstm" => HyperSpace::Lstm(grad_preset([20.0, 30.0, 40.0, 50.0])),
            "gru" => HyperSpace::Gru(grad_preset([23.0, 35.0, 46.0, 58.0])),
            "narx" => HyperSpace::Narx(NarxSpace {
                n_hidden: Dist::Int { lo: 5, hi: 20 },
                n_layers: Dist::Int { lo: 1, hi: 5 },
                delay: Dist::Int { lo: 2, hi: 10 },
                eta: Dist::choice((5..=25).map(|k| 2f64.powi(-k))),
                l2: Dist::choice((1..=10).map(|k| 2f64.powi(-k))),
                epochs: 1000,
            }),
            "esn" => HyperSpace::Esn(EsnSpace {
                n_hidden: Dist::choice((0..=10).map(|k| 400.0 + 50.0 * k as f64)),
                rho: Dist::uniform(0.5, 1.8),
                connectivity: Dist::uniform(0.15, 0.45),
                noise: Dist::uniform(0.0, 0.1),
                omega_in: Dist::uniform(0.1, 1.0),
                omega_out: Dist::uniform(0.1, 1.0),
                omega_fb: Dist::uniform(0.0, 0.5),
                l2: Dist::uniform(0.001, 0.4),
            }),
            other => return Err(Error::invalid(format!("unknown architecture {other:?}"))),
        })
    }

    pub fn arch(&self) -> &'static str {
        match self {
            HyperSpace::Ernn(_) => "ernn",
            HyperSpace::Lstm(_) => "lstm",
            HyperSpace::Gru(_) => "gru",
            HyperSpace::Narx(_) => "narx",
            HyperSpace::Esn(_) => "esn",
        }
    }

    /// Overrides the per-trial training epochs (ignored for ESN).
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        match &mut self {
            HyperSpace::Ernn(g) | HyperSpace::Lstm(g) | HyperSpace::Gru(g) => g.epochs = epochs,
            HyperSpace::Narx(n) => n.epochs = epochs,
            HyperSpace::Esn(_) => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dists: Vec<&Dist> = match self {
            HyperSpace::Ernn(g) | HyperSpace::Lstm(g) | HyperSpace::Gru(g) => {
                if g.optimizers.is_empty() {
                    return Err(Error::invalid("search space lists no optimizer"));
                }
                let mut d = vec![&g.n_hidden, &g.l1, &g.l2, &g.p_drop, &g.tau_f];
                d.extend(g.optimizers.iter().map(|o| &o.eta));
                d
            }
            HyperSpace::Narx(n) => vec![&n.n_hidden, &n.n_layers, &n.delay, &n.eta, &n.l2],
            HyperSpace::Esn(e) => vec![
                &e.n_hidden,
                &e.rho,
                &e.connectivity,
                &e.noise,
                &e.omega_in,
                &e.omega_out,
                &e.omega_fb,
                &e.l2,
            ],
        };
        dists.iter().try_for_each(|d| d.validate())
    }

    /// Draws one configuration. When dropout is active, `l2` is redrawn away
    /// from zero so dropout is always paired with weight decay.
    pub fn sample(&self, rng: &mut RngStream) -> ModelConfig {
        let count = |d: &Dist, rng: &mut RngStream| d.sample(rng).round().max(1.0) as usize;
        match self {
            HyperSpace::Ernn(g) | HyperSpace::Lstm(g) | HyperSpace::Gru(g) => {
                let kind = match self {
                    HyperSpace::Ernn(_) => CellKind::Ernn,
                    HyperSpace::Lstm(_) => CellKind::Lstm,
                    _ => CellKind::Gru,
                };
                let n_hidden = count(&g.n_hidden, rng);
                let opt = &g.optimizers[rng.index(g.optimizers.len())];
                let eta = opt.eta.sample(rng);
                let l1 = g.l1.sample(rng);
                let p_drop = g.p_drop.sample(rng);
                let l2 = if p_drop != 0.0 {
                    g.l2.sample_nonzero(rng)
                } else {
                    g.l2.sample(rng)
                };
                let tau_f = count(&g.tau_f, rng);
                ModelConfig::recurrent(
                    kind,
                    GradConfig {
                        n_hidden,
                        optimizer: Optimizer::preset(opt.kind, eta),
                        loss: LossConfig { l1, l2, p_drop },
                        schedule: TrainSchedule::with_forward(tau_f, g.epochs),
                    },
                )
            }
            HyperSpace::Narx(n) => ModelConfig::Narx(NarxHyper {
                n_hidden: count(&n.n_hidden, rng),
                n_layers: count(&n.n_layers, rng),
                delay: count(&n.delay, rng),
                eta0: n.eta.sample(rng),
                l2: n.l2.sample(rng),
                epochs: n.epochs,
                transient: 50,
            }),
            HyperSpace::Esn(e) => ModelConfig::Esn(EsnHyper {
                n_hidden: count(&e.n_hidden, rng),
                rho: e.rho.sample(rng),
                connectivity: e.connectivity.sample(rng),
                noise: e.noise.sample(rng),
                omega_in: e.omega_in.sample(rng),
                omega_out: e.omega_out.sample(rng),
                omega_fb: e.omega_fb.sample(rng),
                l2: e.l2.sample(rng),
                washout: 50,
            }),
        }
    }

    /// Whether `config` could have been drawn from this space.
    pub fn contains(&self, config: &ModelConfig) -> bool {
        let n = |d: &Dist, v: usize| d.contains(v as f64);
        match (self, config) {
            (HyperSpace::Ernn(g), ModelConfig::Ernn(c))
            | (HyperSpace::Lstm(g), ModelConfig::Lstm(c))
            | (HyperSpace::Gru(g), ModelConfig::Gru(c)) => {
                let opt_ok = g
                    .optimizers
                    .iter()
                    .any(|o| o.kind == c.optimizer.kind && o.eta.contains(c.optimizer.eta0));
                n(&g.n_hidden, c.n_hidden)
                    && opt_ok
                    && g.l1.contains(c.loss.l1)
                    && g.l2.contains(c.loss.l2)
                    && g.p_drop.contains(c.loss.p_drop)
                    && n(&g.tau_f, c.schedule.tau_f)
                    && c.schedule.tau_b == 2 * c.schedule.tau_f
            }
            (HyperSpace::Narx(s), ModelConfig::Narx(c)) => {
                n(&s.n_hidden, c.n_hidden)
                    && n(&s.n_layers, c.n_layers)
                    && n(&s.delay, c.delay)
                    && s.eta.contains(c.eta0)
                    && s.l2.contains(c.l2)
            }
            (HyperSpace::Esn(s), ModelConfig::Esn(c)) => {
                n(&s.n_hidden, c.n_hidden)
                    && s.rho.contains(c.rho)
                    && s.connectivity.contains(c.connectivity)
                    && s.noise.contains(c.noise)
                    && s.omega_in.contains(c.omega_in)
                    && s.omega_out.contains(c.omega_out)
                    && s.omega_fb.contains(c.omega_fb)
                    && s.l2.contains(c.l2)
            }
            _ => false,
        }
    }
}
