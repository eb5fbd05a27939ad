//! The fixed catalog of problems, addressed by string id and a flat map of
//! numeric parameters.

use std::collections::BTreeMap;

use super::{
    Activation, ControlSet, KernelField, LabelDynamics, ProblemSpec, ReplicatorProblem,
    RunningCost, Sampler, TerminalCost,
};
use crate::{Error, Result};

pub type Params = BTreeMap<String, f64>;

#[derive(Clone, Copy, Debug)]
pub struct ParamDoc {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub id: &'static str,
    /// The modelling setting the entry instantiates.
    pub setting: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamDoc],
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Particle(ProblemSpec),
    Replicator(ReplicatorProblem),
}

impl Problem {
    pub fn spec(&self) -> &ProblemSpec {
        match self {
            Problem::Particle(p) => p,
            Problem::Replicator(r) => &r.spec,
        }
    }
}

const fn p(name: &'static str, default: f64, doc: &'static str) -> ParamDoc {
    ParamDoc { name, default, doc }
}

const CONTROL_PARAMS: [ParamDoc; 3] = [
    p("lambda", 1.0, "control cost weight in (lambda/2)|u|^2"),
    p("horizon", 1.0, "final time T"),
    p("bound", 1.0, "half width (box) or radius (ball) of the control set"),
];

static ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        id: "model_case",
        setting: "one-dimensional variance maximisation with quadratic control cost",
        summary: "v = 0, h = 1, L = 0, terminal cost -(w/2) Var; quantile grid on [-1, 1]. \
                  For lambda <= horizon the optimal controls saturate at sign(x0) * bound.",
        params: &[
            p("lambda", 0.5, "control cost weight in (lambda/2)|u|^2"),
            p("horizon", 1.0, "final time T"),
            p("bound", 1.0, "control set [-bound, bound]"),
            p("weight", 1.0, "terminal variance weight w"),
        ],
    },
    CatalogEntry {
        id: "alignment",
        setting: "selective alignment: interacting particles, control gated by a bump activation",
        summary: "v = -a x + mean of kappa (y - x) / (1 + |y - x|^2)^gamma, \
                  h = 1 / (1 + |x - beta * mean|^2), L = target tracking + Gaussian repulsion; \
                  box controls; seeded uniform initial cloud.",
        params: &[
            p("dim", 2.0, "state dimension d"),
            p("strength", 1.0, "kernel strength kappa"),
            p("decay", 0.5, "kernel decay exponent gamma (0 gives the linear kernel)"),
            p("confinement", 0.0, "linear confinement rate a"),
            p("shift", 1.0, "activation centre shift beta"),
            CONTROL_PARAMS[0],
            CONTROL_PARAMS[1],
            p("bound", 1.0, "control set [-bound, bound]^d"),
            p("target_weight", 0.5, "weight of (alpha/2)|x - c|^2"),
            p("target", 1.0, "first coordinate of the target c (others 0)"),
            p("repulsion_weight", 0.2, "weight of the Gaussian pair cost"),
            p("repulsion_width", 0.5, "width sigma of the Gaussian pair cost"),
            p("spread", 1.0, "half width of the initial uniform box"),
        ],
    },
    CatalogEntry {
        id: "zero_drift",
        setting: "pure control: no drift, constant activation, variance penalty",
        summary: "v = 0, h = activation, L = (alpha/2) Var; ball controls; \
                  seeded uniform initial cloud.",
        params: &[
            p("dim", 1.0, "state dimension d"),
            p("activation", 1.0, "constant activation h"),
            CONTROL_PARAMS[0],
            CONTROL_PARAMS[1],
            p("bound", 1.0, "radius of the control ball"),
            p("variance_weight", 1.0, "weight alpha of the variance penalty"),
            p("spread", 1.0, "half width of the initial uniform box"),
        ],
    },
    CatalogEntry {
        id: "replicator_markov",
        setting: "multi-population labels on the probability simplex driven by a Markov chain",
        summary: "positions follow zero_drift dynamics; labels follow lambda' = Q lambda with \
                  rate q between every pair of states.",
        params: &[
            p("labels", 2.0, "number of label states n"),
            p("rate", 1.0, "transition rate q"),
            CONTROL_PARAMS[0],
            CONTROL_PARAMS[1],
            p("bound", 1.0, "control set [-bound, bound]"),
            p("spread", 1.0, "half width of the initial uniform box"),
        ],
    },
    CatalogEntry {
        id: "replicator_entropic",
        setting: "entropy-regularised replicator dynamics over a finite strategy set",
        summary: "positions follow zero_drift dynamics; labels follow S + eps R with uniform \
                  reference weights and payoff J(x, u, x') = slope * u * exp(-|x - x'|^2 / width^2) \
                  (width 0: no spatial factor; slope 0: constant payoff).",
        params: &[
            p("labels", 3.0, "number of strategies n"),
            p("eps", 0.1, "entropic regularisation"),
            p("slope", 0.0, "payoff of strategy u is slope * u"),
            p("width", 0.0, "interaction width of the payoff (0 disables)"),
            p("lower", 0.05, "lower bound r on label densities"),
            p("upper", 3.0, "upper bound R on label densities"),
            CONTROL_PARAMS[0],
            CONTROL_PARAMS[1],
            p("bound", 1.0, "control set [-bound, bound]"),
            p("spread", 1.0, "half width of the initial uniform box"),
        ],
    },
];

/// Catalog listing in a fixed order.
pub fn catalog() -> &'static [CatalogEntry] {
    ENTRIES
}

fn resolve(entry: &CatalogEntry, params: &Params) -> Result<BTreeMap<&'static str, f64>> {
    for key in params.keys() {
        if !entry.params.iter().any(|d| d.name == key) {
            return Err(Error::InvalidParameter {
                name: key.clone(),
                reason: format!("not a parameter of `{}`", entry.id),
            });
        }
    }
    let mut out = BTreeMap::new();
    for d in entry.params {
        let v = params.get(d.name).copied().unwrap_or(d.default);
        if !v.is_finite() {
            return Err(Error::InvalidParameter {
                name: d.name.into(),
                reason: "must be finite".into(),
            });
        }
        out.insert(d.name, v);
    }
    Ok(out)
}

fn count(v: &BTreeMap<&'static str, f64>, name: &str, min: usize) -> Result<usize> {
    let x = v[name];
    if x.fract() != 0.0 || x < min as f64 || x > 64.0 {
        return Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("must be an integer in [{min}, 64]"),
        });
    }
    Ok(x as usize)
}

fn plain(id: &str, dim: usize, v: &BTreeMap<&'static str, f64>, control_set: ControlSet) -> ProblemSpec {
    ProblemSpec {
        id: id.into(),
        dim,
        horizon: v["horizon"],
        control_set,
        control_weight: v["lambda"],
        drift: KernelField::zero(),
        activation: Activation::Constant(1.0),
        running: Vec::new(),
        terminal: None,
        sampler: Sampler::UniformBox {
            half_width: v.get("spread").copied().unwrap_or(1.0),
        },
    }
}

/// Builds a catalog problem; unknown ids and unknown parameter names are
/// rejected, omitted parameters take their documented defaults.
pub fn build(id: &str, params: &Params) -> Result<Problem> {
    let entry = ENTRIES
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::UnknownProblem(id.into()))?;
    let v = resolve(entry, params)?;
    let boxed = ControlSet::Box {
        half_width: v["bound"],
    };
    let problem = match id {
        "model_case" => {
            let mut spec = plain(id, 1, &v, boxed);
            spec.terminal = Some(TerminalCost::NegativeVariance { weight: v["weight"] });
            spec.sampler = Sampler::SymmetricQuantile;
            Problem::Particle(spec)
        }
        "alignment" => {
            let dim = count(&v, "dim", 1)?;
            let mut spec = plain(id, dim, &v, boxed);
            spec.drift = KernelField {
                confinement: v["confinement"],
                strength: v["strength"],
                decay: v["decay"],
            };
            spec.activation = Activation::Bump { shift: v["shift"] };
            let mut center = vec![0.0; dim];
            center[0] = v["target"];
            spec.running = vec![
                RunningCost::Target {
                    weight: v["target_weight"],
                    center,
                },
                RunningCost::GaussianPair {
                    weight: v["repulsion_weight"],
                    width: v["repulsion_width"],
                },
            ];
            Problem::Particle(spec)
        }
        "zero_drift" => {
            let dim = count(&v, "dim", 1)?;
            let mut spec = plain(id, dim, &v, ControlSet::Ball { radius: v["bound"] });
            spec.activation = Activation::Constant(v["activation"]);
            spec.running = vec![RunningCost::Variance {
                weight: v["variance_weight"],
            }];
            Problem::Particle(spec)
        }
        "replicator_markov" => {
            let n = count(&v, "labels", 2)?;
            if v["rate"] < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "rate".into(),
                    reason: "must be nonnegative".into(),
                });
            }
            Problem::Replicator(ReplicatorProblem {
                spec: plain(id, 1, &v, boxed),
                labels: LabelDynamics::uniform_chain(n, v["rate"]),
            })
        }
        "replicator_entropic" => {
            let n = count(&v, "labels", 2)?;
            let width = (v["width"] != 0.0).then_some(v["width"]);
            Problem::Replicator(ReplicatorProblem {
                spec: plain(id, 1, &v, boxed),
                labels: LabelDynamics::Entropic {
                    reference: vec![1.0 / n as f64; n],
                    payoff: (0..n).map(|u| v["slope"] * u as f64).collect(),
                    width,
                    eps: v["eps"],
                    lower: v["lower"],
                    upper: v["upper"],
                },
            })
        }
        _ => unreachable!("catalog ids are matched above"),
    };
    problem.spec().validate()?;
    if let Problem::Replicator(r) = &problem {
        r.labels.validate()?;
    }
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds_with_defaults() {
        for e in catalog() {
            let p = build(e.id, &Params::new()).unwrap();
            assert_eq!(p.spec().id, e.id);
            assert!(!e.setting.is_empty());
        }
        assert!(catalog().iter().any(|e| e.id == "model_case"));
    }

    #[test]
    fn rejects_unknown_ids_and_params() {
        assert!(matches!(build("nope", &Params::new()), Err(Error::UnknownProblem(_))));
        let params = Params::from([("lambda_phi".to_string(), 1.0)]);
        let err = build("model_case", &params).unwrap_err();
        assert!(err.to_string().contains("lambda_phi"));
        let params = Params::from([("lambda".to_string(), -1.0)]);
        assert!(build("model_case", &params).is_err());
        let params = Params::from([("dim".to_string(), 1.5)]);
        assert!(build("alignment", &params).is_err());
    }
}
