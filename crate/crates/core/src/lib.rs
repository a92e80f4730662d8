//! Kernel mean embeddings for causal inference.
//!
//! Interventional distributions are estimated as weighted expansions
//! `Σᵢ wᵢ k(·, yᵢ)` over observed outcomes. Average effects are the
//! linear-kernel reduction `Σᵢ wᵢ yᵢ` of the same weights.

pub mod data;
pub mod embeddings;
pub mod error;
pub mod estimators;
pub mod hypothesis;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod points;
pub mod rng;
pub mod scenarios;
pub mod weighting;

pub use data::{CausalDataset, Role};
pub use embeddings::{
    embedding_distance2, embedding_inner, hsic, mean_embed, mmd2, MeanEmbedding, MmdEstimator,
    TensorEmbedding, WeightedEmbedding,
};
pub use error::{Error, Result};
pub use estimators::{
    backdoor_ate, backdoor_cate, backdoor_ime, frontdoor_ime, fusion_ime, instrument_ime, proxy_ime,
    Backdoor, CateEstimate, EstimatorConfig, PStar, Frontdoor, Fusion, Instrument, Proxy,
};
pub use hypothesis::{hsic_test, mmd_test, permutation_p_value, TestResult};
pub use kernels::{eval_kernel, gram, median_heuristic, rff_features, Family, KernelSpec};
pub use operators::{
    apply_cmo, cme_embedding, cme_weights, dmo_structural, fit_cmo, fit_dmo, CmoEstimate, DmoData,
    DmoEstimate,
};
pub use points::PointSet;
pub use scenarios::{
    generate, monte_carlo_interventional, oracle, oracle_ime_eval, OracleResult, Sample, ScenarioSpec,
};
pub use weighting::{
    backdoor_hsic, backdoor_hsic_test, backdoor_weights, fit_propensity, weighted_ime, PropensityModel,
};

pub use faer;
