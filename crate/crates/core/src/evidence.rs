//! Hard evidence: observed values keyed by node.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gaussian::VarId;
use crate::network::{BayesNet, NodeKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Discrete(usize),
    Continuous(DVector<f64>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evidence {
    values: BTreeMap<VarId, Value>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    /// Checks the value against the node type before storing it.
    pub fn observe(&mut self, net: &BayesNet, id: VarId, value: Value) -> Result<()> {
        let name = net.name(id);
        match (net.kind(id), &value) {
            (NodeKind::Discrete { card }, Value::Discrete(x)) if *x < card => {}
            (NodeKind::Discrete { card }, Value::Discrete(x)) => {
                return Err(Error::Evidence(format!(
                    "value {x} out of range for '{name}' (cardinality {card})"
                )))
            }
            (NodeKind::Continuous { dim }, Value::Continuous(v)) if v.len() == dim => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Evidence(format!("non-finite value for '{name}'")));
                }
            }
            (NodeKind::Continuous { dim }, Value::Continuous(v)) => {
                return Err(Error::Evidence(format!(
                    "'{name}' has dim {dim}, got {} components",
                    v.len()
                )))
            }
            (NodeKind::Discrete { .. }, Value::Continuous(_)) => {
                return Err(Error::Evidence(format!("'{name}' is discrete, expected an integer state")))
            }
            (NodeKind::Continuous { .. }, Value::Discrete(_)) => {
                return Err(Error::Evidence(format!("'{name}' is continuous, expected a real value")))
            }
        }
        self.values.insert(id, value);
        Ok(())
    }

    pub fn observe_discrete(&mut self, net: &BayesNet, id: VarId, state: usize) -> Result<()> {
        self.observe(net, id, Value::Discrete(state))
    }

    pub fn observe_scalar(&mut self, net: &BayesNet, id: VarId, x: f64) -> Result<()> {
        self.observe(net, id, Value::Continuous(DVector::from_element(1, x)))
    }

    /// Parses `Name=value,Name=value`. Vector values separate components
    /// with `;`, e.g. `X=1.0;2.5`. Discrete values are state indices.
    pub fn parse(net: &BayesNet, text: &str) -> Result<Self> {
        let mut ev = Evidence::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Evidence(format!("expected Name=value, got '{item}'")))?;
            let (name, raw) = (name.trim(), raw.trim());
            let id = net
                .id_of(name)
                .ok_or_else(|| Error::Evidence(format!("unknown node '{name}'")))?;
            if ev.is_observed(id) {
                return Err(Error::Evidence(format!("'{name}' observed twice")));
            }
            let value = match net.kind(id) {
                NodeKind::Discrete { .. } => Value::Discrete(raw.parse().map_err(|_| {
                    Error::Evidence(format!("'{name}' is discrete, cannot read '{raw}' as a state index"))
                })?),
                NodeKind::Continuous { .. } => Value::Continuous(DVector::from_vec(
                    raw.split(';')
                        .map(|c| {
                            c.trim().parse::<f64>().map_err(|_| {
                                Error::Evidence(format!("'{name}' is continuous, cannot read '{raw}' as a number"))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?,
                )),
            };
            ev.observe(net, id, value)?;
        }
        Ok(ev)
    }

    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.values.get(&id)
    }

    pub fn is_observed(&self, id: VarId) -> bool {
        self.values.contains_key(&id)
    }

    pub fn discrete(&self, id: VarId) -> Option<usize> {
        match self.values.get(&id) {
            Some(Value::Discrete(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn continuous(&self, id: VarId) -> Option<&DVector<f64>> {
        match self.values.get(&id) {
            Some(Value::Continuous(v)) => Some(v),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &Value)> {
        self.values.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Human-readable `Name=value` list in the same syntax [`Evidence::parse`] reads.
    pub fn display(&self, net: &BayesNet) -> String {
        self.values
            .iter()
            .map(|(id, v)| {
                let val = match v {
                    Value::Discrete(x) => x.to_string(),
                    Value::Continuous(c) => c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
                };
                format!("{}={}", net.name(*id), val)
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}
