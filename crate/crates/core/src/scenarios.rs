//! Synthetic structural causal models with exact interventional oracles.
//!
//! Discrete kinds are small binary DAGs. Their oracles apply each setting's
//! identification formula to the exactly enumerated observational joint,
//! while [`monte_carlo_interventional`] samples from the graph with the
//! treatment forcibly set. Agreement of the two ties the formulas to the
//! intervention semantics. The unobserved confounder of the frontdoor,
//! instrument and proxy kinds never appears in generated data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CausalDataset, Role};
use crate::embeddings::{MeanEmbedding, WeightedEmbedding};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::rng;

/// Largest condition number accepted for the proxy bridge system.
pub const MAX_BRIDGE_CONDITION: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackdoorDiscrete {
    pub p_x: f64,
    /// `p(T=1 | X=x)` indexed by `x`.
    pub p_t_given_x: [f64; 2],
    /// `p(Y=1 | T=t, X=x)` indexed by `[t][x]`.
    pub p_y_given_tx: [[f64; 2]; 2],
}

impl Default for BackdoorDiscrete {
    fn default() -> Self {
        Self {
            p_x: 0.5,
            p_t_given_x: [0.3, 0.7],
            p_y_given_tx: [[0.2, 0.4], [0.7, 0.9]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontdoorDiscrete {
    /// `p(C=1)` for the hidden confounder `C` of `T` and `Y`.
    pub p_confounder: f64,
    /// `p(T=1 | C=c)`.
    pub p_t_given_c: [f64; 2],
    /// `p(S=1 | T=t)`.
    pub p_s_given_t: [f64; 2],
    /// `p(Y=1 | S=s, C=c)` indexed by `[s][c]`.
    pub p_y_given_sc: [[f64; 2]; 2],
}

impl Default for FrontdoorDiscrete {
    fn default() -> Self {
        Self {
            p_confounder: 0.5,
            p_t_given_c: [0.2, 0.8],
            p_s_given_t: [0.2, 0.8],
            p_y_given_sc: [[0.1, 0.4], [0.6, 0.9]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionDiscrete {
    pub p_x: f64,
    /// `p(T=1 | X=x)`.
    pub p_t_given_x: [f64; 2],
    /// `p(S=1 | T=t, X=x)` indexed by `[t][x]`.
    pub p_s_given_tx: [[f64; 2]; 2],
    /// `p(Y=1 | S=s)`.
    pub p_y_given_s: [f64; 2],
}

impl Default for FusionDiscrete {
    fn default() -> Self {
        Self {
            p_x: 0.5,
            p_t_given_x: [0.1, 0.9],
            p_s_given_tx: [[0.1, 0.5], [0.5, 0.9]],
            p_y_given_s: [0.1, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyDiscrete {
    /// `p(C=1)` for the hidden confounder.
    pub p_confounder: f64,
    /// `p(Z=1 | C=c)`, treatment-side proxy.
    pub p_z_given_c: [f64; 2],
    /// `p(T=1 | C=c)`.
    pub p_t_given_c: [f64; 2],
    /// `p(U=1 | C=c)`, outcome-side proxy.
    pub p_u_given_c: [f64; 2],
    /// `p(Y=1 | T=t, C=c)` indexed by `[t][c]`.
    pub p_y_given_tc: [[f64; 2]; 2],
}

impl Default for ProxyDiscrete {
    fn default() -> Self {
        Self {
            p_confounder: 0.5,
            p_z_given_c: [0.1, 0.9],
            p_t_given_c: [0.3, 0.7],
            p_u_given_c: [0.1, 0.9],
            p_y_given_tc: [[0.1, 0.5], [0.5, 0.9]],
        }
    }
}

/// `X ~ N(0, σ_x²)`, `T = aX + σ_t ε`, `Y = βT + bX + σ_y ε′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackdoorLinear {
    pub t_on_x: f64,
    pub slope: f64,
    pub y_on_x: f64,
    pub noise_x: f64,
    pub noise_t: f64,
    pub noise_y: f64,
}

impl Default for BackdoorLinear {
    fn default() -> Self {
        Self {
            t_on_x: 0.5,
            slope: 2.0,
            y_on_x: 1.0,
            noise_x: 1.0,
            noise_t: 1.0,
            noise_y: 1.0,
        }
    }
}

/// `Z ~ N(0, σ_z²)`, hidden `C ~ N(0, σ_c²)`, `T = πZ + c_t C + σ_t ε`,
/// `Y = βT + c_y C + σ_y ε′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentLinear {
    pub first_stage: f64,
    pub slope: f64,
    pub confounder_t: f64,
    pub confounder_y: f64,
    pub noise_z: f64,
    pub noise_confounder: f64,
    pub noise_t: f64,
    pub noise_y: f64,
}

impl Default for InstrumentLinear {
    fn default() -> Self {
        Self {
            first_stage: 1.0,
            slope: 2.0,
            confounder_t: 1.0,
            confounder_y: 1.0,
            noise_z: 1.0,
            noise_confounder: 1.0,
            noise_t: 1.0,
            noise_y: 1.0,
        }
    }
}

/// `X ~ N(0,1)`, `T ~ Bernoulli(σ(aX))`, `Y = effect·T + bX + σ_y ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullNoEffect {
    pub effect: f64,
    pub propensity: f64,
    pub y_on_x: f64,
    pub noise_y: f64,
}

impl Default for NullNoEffect {
    fn default() -> Self {
        Self {
            effect: 0.0,
            propensity: 1.5,
            y_on_x: 1.0,
            noise_y: 1.0,
        }
    }
}

/// A scenario with its parameters. Serialized as an object tagged by
/// `kind`; omitted parameters take the defaults above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    BackdoorDiscrete(BackdoorDiscrete),
    BackdoorLinear(BackdoorLinear),
    FrontdoorDiscrete(FrontdoorDiscrete),
    FusionDiscrete(FusionDiscrete),
    InstrumentLinear(InstrumentLinear),
    ProxyDiscrete(ProxyDiscrete),
    NullNoEffect(NullNoEffect),
}

impl ScenarioSpec {
    pub fn backdoor_discrete() -> Self {
        Self::BackdoorDiscrete(Default::default())
    }
    pub fn backdoor_linear() -> Self {
        Self::BackdoorLinear(Default::default())
    }
    pub fn frontdoor_discrete() -> Self {
        Self::FrontdoorDiscrete(Default::default())
    }
    pub fn fusion_discrete() -> Self {
        Self::FusionDiscrete(Default::default())
    }
    pub fn instrument_linear() -> Self {
        Self::InstrumentLinear(Default::default())
    }
    pub fn proxy_discrete() -> Self {
        Self::ProxyDiscrete(Default::default())
    }
    pub fn null_no_effect() -> Self {
        Self::NullNoEffect(Default::default())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::BackdoorDiscrete(_) => "backdoor_discrete",
            Self::BackdoorLinear(_) => "backdoor_linear",
            Self::FrontdoorDiscrete(_) => "frontdoor_discrete",
            Self::FusionDiscrete(_) => "fusion_discrete",
            Self::InstrumentLinear(_) => "instrument_linear",
            Self::ProxyDiscrete(_) => "proxy_discrete",
            Self::NullNoEffect(_) => "null_no_effect",
        }
    }

    /// True for kinds with binary treatment and outcome.
    pub fn is_discrete(&self) -> bool {
        self.scm().is_some()
    }

    pub fn is_fusion(&self) -> bool {
        matches!(self, Self::FusionDiscrete(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::BackdoorLinear(p) => positive(&[
                ("noise_x", p.noise_x),
                ("noise_t", p.noise_t),
                ("noise_y", p.noise_y),
            ])
            .and(finite(&[("t_on_x", p.t_on_x), ("slope", p.slope), ("y_on_x", p.y_on_x)])),
            Self::InstrumentLinear(p) => positive(&[
                ("noise_z", p.noise_z),
                ("noise_confounder", p.noise_confounder),
                ("noise_t", p.noise_t),
                ("noise_y", p.noise_y),
            ])
            .and(finite(&[
                ("first_stage", p.first_stage),
                ("slope", p.slope),
                ("confounder_t", p.confounder_t),
                ("confounder_y", p.confounder_y),
            ]))
            .and_then(|_| {
                if p.first_stage == 0.0 {
                    Err(Error::InvalidScenario("instrument has no first stage".into()))
                } else {
                    Ok(())
                }
            }),
            Self::NullNoEffect(p) => positive(&[("noise_y", p.noise_y)]).and(finite(&[
                ("effect", p.effect),
                ("propensity", p.propensity),
                ("y_on_x", p.y_on_x),
            ])),
            _ => {
                let scm = self.scm().expect("discrete kind");
                scm.validate()?;
                if scm.joint().marginal(scm.treatment, 1) <= 0.0
                    || scm.joint().marginal(scm.treatment, 1) >= 1.0
                {
                    return Err(Error::InvalidScenario(
                        "treatment must take both values with positive probability".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn scm(&self) -> Option<BinaryScm> {
        Some(match self {
            Self::BackdoorDiscrete(p) => BinaryScm {
                nodes: vec![
                    node("x", Some(Role::X), &[], &[p.p_x]),
                    node("t", Some(Role::T), &[0], &p.p_t_given_x),
                    node("y", Some(Role::Y), &[1, 0], &flatten(p.p_y_given_tx)),
                ],
                treatment: 1,
                outcome: 2,
            },
            Self::FrontdoorDiscrete(p) => BinaryScm {
                nodes: vec![
                    node("c", None, &[], &[p.p_confounder]),
                    node("t", Some(Role::T), &[0], &p.p_t_given_c),
                    node("s", Some(Role::S), &[1], &p.p_s_given_t),
                    node("y", Some(Role::Y), &[2, 0], &flatten(p.p_y_given_sc)),
                ],
                treatment: 1,
                outcome: 3,
            },
            Self::FusionDiscrete(p) => BinaryScm {
                nodes: vec![
                    node("x", Some(Role::X), &[], &[p.p_x]),
                    node("t", Some(Role::T), &[0], &p.p_t_given_x),
                    node("s", Some(Role::S), &[1, 0], &flatten(p.p_s_given_tx)),
                    node("y", Some(Role::Y), &[2], &p.p_y_given_s),
                ],
                treatment: 1,
                outcome: 3,
            },
            Self::ProxyDiscrete(p) => BinaryScm {
                nodes: vec![
                    node("c", None, &[], &[p.p_confounder]),
                    node("t", Some(Role::T), &[0], &p.p_t_given_c),
                    node("z", Some(Role::Z), &[0], &p.p_z_given_c),
                    node("u", Some(Role::U), &[0], &p.p_u_given_c),
                    node("y", Some(Role::Y), &[1, 0], &flatten(p.p_y_given_tc)),
                ],
                treatment: 1,
                outcome: 4,
            },
            _ => return None,
        })
    }

    /// Condition numbers of the per-treatment proxy bridge systems.
    pub fn bridge_conditions(&self) -> Option<[f64; 2]> {
        match self {
            Self::ProxyDiscrete(_) => {
                let joint = self.scm()?.joint();
                Some([0, 1].map(|t| condition_2x2(&proxy_system(&joint, t).0)))
            }
            _ => None,
        }
    }
}

fn flatten(m: [[f64; 2]; 2]) -> [f64; 4] {
    // first parent is the high bit
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

fn positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidScenario(format!("`{name}` must be positive, got {v}")));
        }
    }
    Ok(())
}

fn finite(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::InvalidScenario(format!("`{name}` must be finite")));
        }
    }
    Ok(())
}

/// A binary node. `p_one[k]` is `p(node = 1)` given parent configuration
/// `k`, where the first listed parent is the most significant bit.
#[derive(Clone, Debug)]
struct Node {
    name: &'static str,
    role: Option<Role>,
    parents: Vec<usize>,
    p_one: Vec<f64>,
}

fn node(name: &'static str, role: Option<Role>, parents: &[usize], p_one: &[f64]) -> Node {
    Node {
        name,
        role,
        parents: parents.to_vec(),
        p_one: p_one.to_vec(),
    }
}

/// Binary DAG with nodes in topological order.
#[derive(Clone, Debug)]
struct BinaryScm {
    nodes: Vec<Node>,
    treatment: usize,
    outcome: usize,
}

/// Probability table over all joint assignments (bit `i` = node `i`).
struct Joint {
    probs: Vec<f64>,
}

impl Joint {
    fn prob(&self, event: impl Fn(u32) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(a, _)| event(*a as u32))
            .map(|(_, p)| p)
            .sum()
    }

    fn marginal(&self, node: usize, value: u32) -> f64 {
        self.prob(|a| bit(a, node) == value)
    }

    /// `p(A | B)` for events given as closures.
    fn conditional(&self, a: impl Fn(u32) -> bool, b: impl Fn(u32) -> bool) -> f64 {
        let pb = self.prob(&b);
        if pb == 0.0 {
            0.0
        } else {
            self.prob(|s| a(s) && b(s)) / pb
        }
    }
}

fn bit(a: u32, i: usize) -> u32 {
    (a >> i) & 1
}

impl BinaryScm {
    fn validate(&self) -> Result<()> {
        for n in &self.nodes {
            for p in &n.p_one {
                if !(0.0..=1.0).contains(p) || !p.is_finite() {
                    return Err(Error::InvalidScenario(format!(
                        "probability for `{}` must lie in [0, 1], got {p}",
                        n.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn p_node(&self, i: usize, a: u32) -> f64 {
        let n = &self.nodes[i];
        let k = n
            .parents
            .iter()
            .fold(0usize, |k, &p| (k << 1) | bit(a, p) as usize);
        let p1 = n.p_one[k];
        if bit(a, i) == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// Observational joint by enumeration.
    fn joint(&self) -> Joint {
        let k = self.nodes.len();
        let probs = (0..1u32 << k)
            .map(|a| (0..k).map(|i| self.p_node(i, a)).product())
            .collect();
        Joint { probs }
    }

    /// `p(Y=1 | do(T=t))` by enumerating the mutilated graph.
    #[cfg(test)]
    fn mutilated_mean(&self, t: u32) -> f64 {
        let k = self.nodes.len();
        (0..1u32 << k)
            .filter(|&a| bit(a, self.treatment) == t && bit(a, self.outcome) == 1)
            .map(|a| {
                (0..k)
                    .filter(|&i| i != self.treatment)
                    .map(|i| self.p_node(i, a))
                    .product::<f64>()
            })
            .sum()
    }

    /// Samples observed columns; `intervene` forces the treatment.
    fn sample_row(&self, rng: &mut ChaCha8Rng, intervene: Option<u32>) -> u32 {
        let mut a = 0u32;
        for i in 0..self.nodes.len() {
            let v = match intervene {
                Some(t) if i == self.treatment => t,
                _ => {
                    let k = self.nodes[i]
                        .parents
                        .iter()
                        .fold(0usize, |k, &p| (k << 1) | bit(a, p) as usize);
                    u32::from(rng.random::<f64>() < self.nodes[i].p_one[k])
                }
            };
            a |= v << i;
        }
        a
    }

    fn dataset(&self, rows: &[u32], names: &[&str]) -> Result<CausalDataset> {
        let cols = names
            .iter()
            .map(|name| {
                let i = self
                    .nodes
                    .iter()
                    .position(|n| n.name == *name)
                    .expect("known node");
                let role = self.nodes[i].role.expect("observed node");
                (role, rows.iter().map(|&a| bit(a, i) as f64).collect())
            })
            .collect();
        CausalDataset::from_roles(cols)
    }
}

/// Per-`z` rows of `P(U | t, z)` and the right-hand side `P(Y=1 | t, z)`.
fn proxy_system(joint: &Joint, t: u32) -> ([[f64; 2]; 2], [f64; 2]) {
    // node indices: c=0, t=1, z=2, u=3, y=4
    let mut m = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    for z in 0..2u32 {
        let given = |a: u32| bit(a, 1) == t && bit(a, 2) == z;
        for u in 0..2u32 {
            m[z as usize][u as usize] = joint.conditional(|a| bit(a, 3) == u, given);
        }
        rhs[z as usize] = joint.conditional(|a| bit(a, 4) == 1, given);
    }
    (m, rhs)
}

fn condition_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let fro2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // singular values from σ₁² + σ₂² = ‖M‖_F², σ₁σ₂ = |det|
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = det / s1;
    s1 / s2
}

/// Expected outcome at one treatment value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosePoint {
    pub t: f64,
    pub value: f64,
}

/// Interventional outcome pmf at one treatment value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionalPmf {
    pub t: f64,
    pub support: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Exact interventional quantities of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `E[Y | do(T=t)]` at the reference treatment values `t ∈ {0, 1}`.
    pub ate: Vec<DosePoint>,
    /// Dose-response line for continuous-treatment kinds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Observational `E[Y | T=t]`, for measuring confounding bias.
    pub observational: Vec<DosePoint>,
    /// Population least-squares slope of `Y` on `T` for linear kinds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive_slope: Option<f64>,
    /// Empty for kinds with continuous outcomes.
    pub interventional_pmf: Vec<InterventionalPmf>,
}

impl OracleResult {
    /// `E[Y | do(T=t)]`, if defined at `t`.
    pub fn mean_at(&self, t: f64) -> Option<f64> {
        if let (Some(a), Some(b)) = (self.intercept, self.slope) {
            return Some(a + b * t);
        }
        self.ate.iter().find(|p| p.t == t).map(|p| p.value)
    }

    pub fn effect(&self, t1: f64, t0: f64) -> Option<f64> {
        Some(self.mean_at(t1)? - self.mean_at(t0)?)
    }

    pub fn pmf_at(&self, t: f64) -> Option<&InterventionalPmf> {
        self.interventional_pmf.iter().find(|p| p.t == t)
    }
}

/// Computes the exact oracle.
pub fn oracle(spec: &ScenarioSpec) -> Result<OracleResult> {
    spec.validate()?;
    let line = |intercept: f64, slope: f64, naive: Option<f64>, observational: Vec<DosePoint>| {
        OracleResult {
            ate: [0.0, 1.0]
                .map(|t| DosePoint {
                    t,
                    value: intercept + slope * t,
                })
                .to_vec(),
            intercept: Some(intercept),
            slope: Some(slope),
            observational,
            naive_slope: naive,
            interventional_pmf: Vec::new(),
        }
    };
    match spec {
        ScenarioSpec::BackdoorLinear(p) => {
            let var_t = p.t_on_x.powi(2) * p.noise_x.powi(2) + p.noise_t.powi(2);
            let cov = p.slope * var_t + p.y_on_x * p.t_on_x * p.noise_x.powi(2);
            Ok(line(0.0, p.slope, Some(cov / var_t), Vec::new()))
        }
        ScenarioSpec::InstrumentLinear(p) => {
            let var_c = p.noise_confounder.powi(2);
            let var_t =
                p.first_stage.powi(2) * p.noise_z.powi(2) + p.confounder_t.powi(2) * var_c + p.noise_t.powi(2);
            let cov = p.slope * var_t + p.confounder_t * p.confounder_y * var_c;
            Ok(line(0.0, p.slope, Some(cov / var_t), Vec::new()))
        }
        ScenarioSpec::NullNoEffect(p) => {
            // E[Y | T=t] needs E[X | T=t], which has no closed form here.
            let mut r = line(0.0, p.effect, None, Vec::new());
            r.intercept = None;
            r.slope = None;
            Ok(r)
        }
        _ => {
            let scm = spec.scm().expect("discrete kind");
            let joint = scm.joint();
            let means = [0u32, 1].map(|t| discrete_formula(spec, &joint, t));
            let (ti, yi) = (scm.treatment, scm.outcome);
            let observational = [0u32, 1]
                .map(|t| DosePoint {
                    t: t as f64,
                    value: joint.conditional(|a| bit(a, yi) == 1, |a| bit(a, ti) == t),
                })
                .to_vec();
            Ok(OracleResult {
                ate: [0usize, 1]
                    .map(|t| DosePoint {
                        t: t as f64,
                        value: means[t],
                    })
                    .to_vec(),
                intercept: None,
                slope: None,
                observational,
                naive_slope: None,
                interventional_pmf: [0usize, 1]
                    .map(|t| InterventionalPmf {
                        t: t as f64,
                        support: vec![0.0, 1.0],
                        probabilities: vec![1.0 - means[t], means[t]],
                    })
                    .to_vec(),
            })
        }
    }
}

/// `p(Y=1 | do(T=t))` by the setting's identification formula, evaluated on
/// the observational joint.
fn discrete_formula(spec: &ScenarioSpec, joint: &Joint, t: u32) -> f64 {
    let b = |a: u32, i: usize| bit(a, i);
    match spec {
        // x=0, t=1, y=2: Σ_x p(x) p(y|t,x)
        ScenarioSpec::BackdoorDiscrete(_) => (0..2u32)
            .map(|x| {
                joint.marginal(0, x)
                    * joint.conditional(|a| b(a, 2) == 1, |a| b(a, 1) == t && b(a, 0) == x)
            })
            .sum(),
        // c=0, t=1, s=2, y=3: Σ_s p(s|t) Σ_t' p(y|s,t') p(t')
        ScenarioSpec::FrontdoorDiscrete(_) => (0..2u32)
            .map(|s| {
                let ps = joint.conditional(|a| b(a, 2) == s, |a| b(a, 1) == t);
                let inner: f64 = (0..2u32)
                    .map(|tp| {
                        joint.marginal(1, tp)
                            * joint.conditional(|a| b(a, 3) == 1, |a| b(a, 2) == s && b(a, 1) == tp)
                    })
                    .sum();
                ps * inner
            })
            .sum(),
        // x=0, t=1, s=2, y=3: Σ_x p(x) Σ_s p(s|t,x) p(y|s)
        ScenarioSpec::FusionDiscrete(_) => (0..2u32)
            .map(|x| {
                let inner: f64 = (0..2u32)
                    .map(|s| {
                        joint.conditional(|a| b(a, 2) == s, |a| b(a, 1) == t && b(a, 0) == x)
                            * joint.conditional(|a| b(a, 3) == 1, |a| b(a, 2) == s)
                    })
                    .sum();
                joint.marginal(0, x) * inner
            })
            .sum(),
        // Solve P(y|t,z) = Σ_u h(t,u) P(u|t,z), then Σ_u h(t,u) p(u).
        ScenarioSpec::ProxyDiscrete(_) => {
            let (m, rhs) = proxy_system(joint, t);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if condition_2x2(&m) > 1e8 {
                // proxies carry no information (e.g. a constant confounder):
                // nothing to adjust for
                return joint.conditional(|a| b(a, 4) == 1, |a| b(a, 1) == t);
            }
            let h0 = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
            let h1 = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
            h0 * joint.marginal(3, 0) + h1 * joint.marginal(3, 1)
        }
        _ => unreachable!("continuous kinds have closed forms"),
    }
}

/// Exact IME evaluation `Σ_y′ k(y, y′) p(y′ | do(T=t))` for discrete kinds.
pub fn oracle_ime_eval(spec: &ScenarioSpec, t: f64, y: &PointSet, output: &KernelSpec) -> Result<f64> {
    Ok(oracle_ime(spec, t, output)?.evaluate(y)?[0])
}

/// The exact interventional embedding as a weighted embedding over the
/// outcome support.
pub fn oracle_ime(spec: &ScenarioSpec, t: f64, output: &KernelSpec) -> Result<WeightedEmbedding> {
    if !spec.is_discrete() {
        return Err(Error::Unsupported(format!(
            "{} has a continuous outcome; use monte_carlo_interventional",
            spec.kind_name()
        )));
    }
    let o = oracle(spec)?;
    let pmf = o
        .pmf_at(t)
        .ok_or_else(|| Error::InvalidParameter {
            name: "t",
            reason: format!("treatment value {t} is outside the support {{0, 1}}"),
        })?;
    WeightedEmbedding::new(
        PointSet::from_scalars(&pmf.support),
        pmf.probabilities.clone(),
        output.clone(),
    )
}

/// Generated data: one dataset, or the two unmatched datasets of the
/// fusion setting.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Single(CausalDataset),
    /// `d1` holds `(S, Y)`, `d2` holds `(X, T, S)`; rows are unrelated.
    Fusion { d1: CausalDataset, d2: CausalDataset },
}

impl Sample {
    pub fn single(&self) -> Result<&CausalDataset> {
        match self {
            Sample::Single(d) => Ok(d),
            Sample::Fusion { .. } => Err(Error::Unsupported(
                "fusion scenarios produce two datasets".into(),
            )),
        }
    }
}

/// Draws `n` observational rows (per dataset, for fusion).
///
/// Column orders: `x,t,y` (backdoor kinds and null), `t,s,y` (frontdoor),
/// `z,t,y` (instrument), `t,z,u,y` (proxy); fusion gives `s,y` and `x,t,s`.
pub fn generate(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::SampleTooSmall { needed: 1, found: 0 });
    }
    if let ScenarioSpec::FusionDiscrete(_) = spec {
        let scm = spec.scm().expect("discrete kind");
        let mut r1 = rng::stream(seed, "scenario-fusion-d1");
        let mut r2 = rng::stream(seed, "scenario-fusion-d2");
        let rows1: Vec<u32> = (0..n).map(|_| scm.sample_row(&mut r1, None)).collect();
        let rows2: Vec<u32> = (0..n).map(|_| scm.sample_row(&mut r2, None)).collect();
        return Ok(Sample::Fusion {
            d1: scm.dataset(&rows1, &["s", "y"])?,
            d2: scm.dataset(&rows2, &["x", "t", "s"])?,
        });
    }
    sample_observed(spec, n, seed).map(Sample::Single)
}

/// One dataset with every observed variable, including fusion kinds
/// (where it is the matched joint that [`generate`] withholds).
pub fn sample_observed(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<CausalDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::SampleTooSmall { needed: 1, found: 0 });
    }
    let mut rng = rng::stream(seed, &format!("scenario-{}", spec.kind_name()));
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match spec {
        ScenarioSpec::BackdoorLinear(p) => {
            let (mut x, mut t, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                x[i] = p.noise_x * normal(&mut rng);
                t[i] = p.t_on_x * x[i] + p.noise_t * normal(&mut rng);
                y[i] = p.slope * t[i] + p.y_on_x * x[i] + p.noise_y * normal(&mut rng);
            }
            CausalDataset::from_roles(vec![(Role::X, x), (Role::T, t), (Role::Y, y)])
        }
        ScenarioSpec::InstrumentLinear(p) => {
            let (mut z, mut t, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                z[i] = p.noise_z * normal(&mut rng);
                let c = p.noise_confounder * normal(&mut rng);
                t[i] = p.first_stage * z[i] + p.confounder_t * c + p.noise_t * normal(&mut rng);
                y[i] = p.slope * t[i] + p.confounder_y * c + p.noise_y * normal(&mut rng);
            }
            CausalDataset::from_roles(vec![(Role::Z, z), (Role::T, t), (Role::Y, y)])
        }
        ScenarioSpec::NullNoEffect(p) => {
            let (mut x, mut t, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                x[i] = normal(&mut rng);
                let prob = 1.0 / (1.0 + (-p.propensity * x[i]).exp());
                t[i] = f64::from(u8::from(rng.random::<f64>() < prob));
                y[i] = p.effect * t[i] + p.y_on_x * x[i] + p.noise_y * normal(&mut rng);
            }
            CausalDataset::from_roles(vec![(Role::X, x), (Role::T, t), (Role::Y, y)])
        }
        _ => {
            let scm = spec.scm().expect("discrete kind");
            let rows: Vec<u32> = (0..n).map(|_| scm.sample_row(&mut rng, None)).collect();
            let names: &[&str] = match spec {
                ScenarioSpec::BackdoorDiscrete(_) => &["x", "t", "y"],
                ScenarioSpec::FrontdoorDiscrete(_) => &["t", "s", "y"],
                ScenarioSpec::FusionDiscrete(_) => &["x", "t", "s", "y"],
                ScenarioSpec::ProxyDiscrete(_) => &["t", "z", "u", "y"],
                _ => unreachable!(),
            };
            scm.dataset(&rows, names)
        }
    }
}

/// Outcomes drawn from the graph with the treatment set to `t` and every
/// downstream variable resampled.
pub fn monte_carlo_interventional(spec: &ScenarioSpec, t: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, &format!("interventional-{}", spec.kind_name()));
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    match spec {
        ScenarioSpec::BackdoorLinear(p) => Ok((0..m)
            .map(|_| {
                let x = p.noise_x * normal(&mut rng);
                p.slope * t + p.y_on_x * x + p.noise_y * normal(&mut rng)
            })
            .collect()),
        ScenarioSpec::InstrumentLinear(p) => Ok((0..m)
            .map(|_| {
                let c = p.noise_confounder * normal(&mut rng);
                p.slope * t + p.confounder_y * c + p.noise_y * normal(&mut rng)
            })
            .collect()),
        ScenarioSpec::NullNoEffect(p) => Ok((0..m)
            .map(|_| {
                let x = normal(&mut rng);
                p.effect * t + p.y_on_x * x + p.noise_y * normal(&mut rng)
            })
            .collect()),
        _ => {
            let tv = match t {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                _ => {
                    return Err(Error::InvalidParameter {
                        name: "t",
                        reason: format!("binary treatment cannot be set to {t}"),
                    })
                }
            };
            let scm = spec.scm().expect("discrete kind");
            Ok((0..m)
                .map(|_| bit(scm.sample_row(&mut rng, Some(tv)), scm.outcome) as f64)
                .collect())
        }
    }
}
