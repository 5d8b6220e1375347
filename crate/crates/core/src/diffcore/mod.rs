//! Dense numerics, reverse-mode differentiation, small MLPs and Adam.

mod adam;
mod mlp;
mod tape;
mod tensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use mlp::{Activation, Mlp, OutputActivation};
pub use tape::{bce_logit, sigmoid, value_and_grad, GradTape, Gradients, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Anything that owns trainable tensors in a fixed, stable order.
pub trait Parameters {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Walks a flat list of tape variables in declaration order.
#[derive(Debug)]
pub struct VarCursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> VarCursor<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        Self { vars, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [Var]> {
        let end = self.pos + n;
        if end > self.vars.len() {
            return Err(Error::InvalidShape("ran out of parameter variables".into()));
        }
        let out = &self.vars[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.vars.len() - self.pos
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Standalone JSON container for named networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheckpoint {
    pub format_version: u32,
    pub networks: BTreeMap<String, Mlp>,
}

impl ParamCheckpoint {
    pub fn new(networks: BTreeMap<String, Mlp>) -> Self {
        Self { format_version: CHECKPOINT_FORMAT_VERSION, networks }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint format version {}", ck.format_version)));
        }
        Ok(ck)
    }
}

/// Short reborrow of an optional training RNG so it can be handed to
/// several networks in turn.
pub fn reborrow<'a>(rng: &'a mut Option<&mut dyn rand::RngCore>) -> Option<&'a mut dyn rand::RngCore> {
    rng.as_mut().map(|r| &mut **r as &mut dyn rand::RngCore)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_keeps_parameters() {
        let net = Mlp::new(vec![2, 3, 1], Activation::Tanh, OutputActivation::Identity, 0.1).unwrap().seeded(3);
        let mut nets = BTreeMap::new();
        nets.insert("rho".to_string(), net);
        let ck = ParamCheckpoint::new(nets);
        let json = ck.to_json().unwrap();
        assert!(json.contains("\"format_version\": 1"));
        assert!(json.contains("\"tanh\""));
        assert_eq!(ParamCheckpoint::from_json(&json).unwrap(), ck);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let json = r#"{"format_version": 99, "networks": {}}"#;
        assert!(ParamCheckpoint::from_json(json).is_err());
    }
}
