//! `RSPB1` bundles: a JSON header followed by every model in `RSPM1` layout,
//! stack models first (`f_1..f_N`) and the policy last.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{DynamicsStack, GoalPolicy, TrainConfig};
use crate::binio::{self, ByteReader};
use crate::dataset::{horizons, kappa_width, NormStats, RelabelSpec, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{decode_model, encode_model, encoded_model_size};

pub const BUNDLE_MAGIC: &[u8; 5] = b"RSPB1";
const NORM_REF: &str = "bundle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rsp,
    Gcsl,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rsp" => Ok(Self::Rsp),
            "gcsl" => Ok(Self::Gcsl),
            other => Err(Error::config(format!("unknown method `{other}` (expected rsp or gcsl)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rsp => "rsp",
            Self::Gcsl => "gcsl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub method: Method,
    pub spec: Option<RelabelSpec>,
    pub horizons: Vec<usize>,
    /// Layer dims of every stored model in file order.
    pub model_dims: Vec<Vec<usize>>,
    pub norm: NormStats,
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
}

/// Everything needed to plan and act: optional dynamics stack, policy and stats.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub stack: Option<DynamicsStack>,
    pub policy: GoalPolicy,
    pub norm: NormStats,
    pub train: Option<TrainConfig>,
    pub env: Option<String>,
}

impl Bundle {
    pub fn rsp(stack: DynamicsStack, policy: GoalPolicy) -> Self {
        let norm = stack.norm.clone();
        Self {
            stack: Some(stack),
            policy,
            norm,
            train: None,
            env: None,
        }
    }

    pub fn gcsl(policy: GoalPolicy) -> Self {
        let norm = policy.norm.clone();
        Self {
            stack: None,
            policy,
            norm,
            train: None,
            env: None,
        }
    }

    pub fn method(&self) -> Method {
        if self.stack.is_some() {
            Method::Rsp
        } else {
            Method::Gcsl
        }
    }

    pub fn spec(&self) -> Option<RelabelSpec> {
        self.stack.as_ref().map(|s| s.spec)
    }

    pub fn header(&self) -> BundleHeader {
        let spec = self.spec();
        let mut model_dims: Vec<Vec<usize>> = self
            .stack
            .iter()
            .flat_map(|s| s.models.iter().map(|m| m.layer_dims().to_vec()))
            .collect();
        model_dims.push(self.policy.net.layer_dims().to_vec());
        BundleHeader {
            method: self.method(),
            spec,
            horizons: spec.and_then(|s| horizons(&s).ok()).unwrap_or_default(),
            model_dims,
            norm: self.norm.clone(),
            train: self.train.clone(),
            env: self.env.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        binio::put_header(&mut out, BUNDLE_MAGIC, &binio::header_bytes(&self.header()));
        for m in self.stack.iter().flat_map(|s| &s.models) {
            encode_model(m, Some(NORM_REF), &mut out);
        }
        encode_model(&self.policy.net, Some(NORM_REF), &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(BUNDLE_MAGIC)?;
        let h: BundleHeader = r.header()?;
        let expected = expected_dims(&h)?;
        if h.model_dims.len() != expected.len() {
            return Err(load_err(
                "model_dims",
                format!("{} models listed, the spec implies {}", h.model_dims.len(), expected.len()),
            ));
        }
        for (i, (dims, (input, output))) in h.model_dims.iter().zip(&expected).enumerate() {
            if dims.len() < 2 || dims[0] != *input || dims[dims.len() - 1] != *output {
                return Err(load_err(
                    "spec.N",
                    format!("model {i} has dims {dims:?}, the spec implies {input}->...->{output}"),
                ));
            }
        }
        if h.norm.state_dim() != STATE_DIM || h.norm.action_dim() != ACTION_DIM || !h.norm.is_valid() {
            return Err(load_err("norm", "statistics have the wrong shape or invalid values"));
        }
        let mut models = Vec::with_capacity(h.model_dims.len());
        for (i, dims) in h.model_dims.iter().enumerate() {
            let (m, mh) = decode_model(&mut r)?;
            if &mh.layer_dims != dims {
                return Err(load_err(
                    "model_dims",
                    format!("model {i} stores dims {:?}, header says {dims:?}", mh.layer_dims),
                ));
            }
            models.push(m);
        }
        r.finish()?;
        let policy_net = models.pop().expect("at least the policy");
        let stack = h.spec.map(|spec| DynamicsStack {
            spec,
            models,
            norm: h.norm.clone(),
        });
        let depth = h.spec.map_or(0, |s| s.depth);
        Ok(Self {
            stack,
            policy: GoalPolicy {
                net: policy_net,
                depth,
                norm: h.norm.clone(),
            },
            norm: h.norm,
            train: h.train,
            env: h.env,
        })
    }
}

fn load_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Load {
        field: field.to_owned(),
        msg: msg.into(),
    }
}

/// `(input, output)` width of every model the header's method and spec imply.
fn expected_dims(h: &BundleHeader) -> Result<Vec<(usize, usize)>> {
    match (h.method, h.spec) {
        (Method::Rsp, Some(spec)) => {
            let hs = horizons(&spec).map_err(|e| load_err("spec", e.to_string()))?;
            if hs != h.horizons {
                return Err(load_err(
                    "horizons",
                    format!("header lists {:?}, the spec implies {hs:?}", h.horizons),
                ));
            }
            let mut v: Vec<_> = (0..spec.depth).map(|n| (kappa_width(n), STATE_DIM)).collect();
            v.push((kappa_width(spec.depth), ACTION_DIM));
            Ok(v)
        }
        (Method::Gcsl, None) => Ok(vec![(kappa_width(0), ACTION_DIM)]),
        (Method::Rsp, None) => Err(load_err("spec", "an rsp bundle needs a relabel spec")),
        (Method::Gcsl, Some(_)) => Err(load_err("spec", "a gcsl bundle carries no relabel spec")),
    }
}

/// Closed-form bundle size from its header and per-model header lengths.
pub fn bundle_file_size(header_len: usize, models: &[(Vec<usize>, usize)]) -> usize {
    BUNDLE_MAGIC.len()
        + 4
        + header_len
        + models
            .iter()
            .map(|(dims, hl)| encoded_model_size(dims, *hl))
            .sum::<usize>()
}

pub fn save_bundle(path: &Path, bundle: &Bundle) -> Result<()> {
    binio::write_file(path, &bundle.to_bytes())
}

pub fn load_bundle(path: &Path) -> Result<Bundle> {
    Bundle::from_bytes(&binio::read_file(path)?)
}
