//! Named parameter groups and gradient reports.

use crate::error::{Error, Result};

pub const SHAPE: &str = "shape";
pub const OFFSETS: &str = "offsets";

pub fn pose_group(frame: usize) -> String {
    format!("pose_{frame}")
}

pub fn trans_group(frame: usize) -> String {
    format!("trans_{frame}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f64>,
}

/// Flat real-valued parameter groups addressed by name. Group order is the
/// insertion order and is part of the layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    groups: Vec<ParamGroup>,
}

pub type Layout = Vec<(String, usize)>;

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.groups.iter().any(|g| g.name == name) {
            return Err(Error::ContractViolation(format!("duplicate parameter group {name}")));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("group {name}: entry {bad} is not finite")));
        }
        self.groups.push(ParamGroup { name, values });
        Ok(())
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.groups.iter().find(|g| g.name == name).map(|g| g.values.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.groups.iter_mut().find(|g| g.name == name).map(|g| &mut g.values)
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.get(name).ok_or_else(|| Error::ContractViolation(format!("missing parameter group {name}")))
    }

    pub fn layout(&self) -> Layout {
        self.groups.iter().map(|g| (g.name.clone(), g.values.len())).collect()
    }

    /// Total number of scalar entries.
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|g| ParamGroup { name: g.name.clone(), values: vec![0.0; g.values.len()] })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.groups.iter().all(|g| g.values.iter().all(|v| v.is_finite()))
    }

    /// Iterates `(group index, entry index)` over every scalar entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.groups.iter().enumerate().flat_map(|(gi, g)| (0..g.values.len()).map(move |i| (gi, i)))
    }

    pub fn at(&self, group: usize, index: usize) -> f64 {
        self.groups[group].values[index]
    }

    pub fn set(&mut self, group: usize, index: usize, value: f64) {
        self.groups[group].values[index] = value;
    }
}

/// Objective value together with a gradient aligned to the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub value: f64,
    pub gradient: ParamVector,
}
