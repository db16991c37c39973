//! The shared, append-only variable catalog.

use std::fmt;
use std::sync::Mutex;

use super::linexpr::VarId;

/// Role of a variable, which fixes its default objective weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    /// Multiplicative error on an observed value; weight 1.
    Error,
    /// Stand-in for a missing value; weight 0.
    Null,
    /// Consensus value introduced by coalescing; weight 0.
    Llun,
}

impl VarKind {
    pub fn default_weight(self) -> f64 {
        match self {
            VarKind::Error => 1.0,
            VarKind::Null | VarKind::Llun => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VarKind::Error => "error",
            VarKind::Null => "null",
            VarKind::Llun => "llun",
        }
    }

    pub fn parse(s: &str) -> Option<VarKind> {
        match s {
            "error" => Some(VarKind::Error),
            "null" => Some(VarKind::Null),
            "llun" => Some(VarKind::Llun),
            _ => None,
        }
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Provenance of a variable. Never takes part in equality of expressions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarLabel {
    pub source: String,
    pub key: Vec<String>,
    pub attr: String,
}

impl VarLabel {
    pub fn new(source: impl Into<String>, key: Vec<String>, attr: impl Into<String>) -> Self {
        VarLabel {
            source: source.into(),
            key,
            attr: attr.into(),
        }
    }
}

impl fmt::Display for VarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}].{}", self.source, self.key.join(","), self.attr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub id: VarId,
    pub kind: VarKind,
    pub label: VarLabel,
    /// Explicit objective weight; `None` means the kind's default.
    pub weight: Option<f64>,
}

impl VarInfo {
    pub fn weight(&self) -> f64 {
        self.weight.unwrap_or_else(|| self.kind.default_weight())
    }
}

/// Append-only allocator for variables. Ids are dense and handed out in
/// call order, so a single allocation stream is deterministic.
#[derive(Debug, Default)]
pub struct Catalog {
    vars: Mutex<Vec<VarInfo>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&self, kind: VarKind, label: VarLabel) -> VarId {
        let mut vars = self.vars.lock().expect("catalog lock poisoned");
        let id = VarId(u32::try_from(vars.len()).expect("variable space exhausted"));
        vars.push(VarInfo {
            id,
            kind,
            label,
            weight: None,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.vars.lock().expect("catalog lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn info(&self, id: VarId) -> Option<VarInfo> {
        self.vars
            .lock()
            .expect("catalog lock poisoned")
            .get(id.index())
            .cloned()
    }

    pub fn kind(&self, id: VarId) -> Option<VarKind> {
        self.vars
            .lock()
            .expect("catalog lock poisoned")
            .get(id.index())
            .map(|v| v.kind)
    }

    /// Overrides the objective weight of one variable.
    pub fn set_weight(&self, id: VarId, weight: f64) {
        if let Some(v) = self
            .vars
            .lock()
            .expect("catalog lock poisoned")
            .get_mut(id.index())
        {
            v.weight = Some(weight);
        }
    }

    /// Copy of every entry, in id order.
    pub fn entries(&self) -> Vec<VarInfo> {
        self.vars.lock().expect("catalog lock poisoned").clone()
    }

    /// Independent deep copy; later allocations on either side do not
    /// affect the other.
    pub fn snapshot(&self) -> Catalog {
        Catalog {
            vars: Mutex::new(self.entries()),
        }
    }
}

impl Clone for Catalog {
    fn clone(&self) -> Self {
        self.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_is_dense_and_ordered() {
        let c = Catalog::new();
        let a = c.alloc(VarKind::Error, VarLabel::default());
        let b = c.alloc(VarKind::Null, VarLabel::default());
        assert_eq!((a, b), (VarId(0), VarId(1)));
        assert_eq!(c.kind(b), Some(VarKind::Null));
        assert_eq!(c.info(a).unwrap().weight(), 1.0);
        assert_eq!(c.info(b).unwrap().weight(), 0.0);
        c.set_weight(b, 2.5);
        assert_eq!(c.info(b).unwrap().weight(), 2.5);
    }

    #[test]
    fn snapshot_is_independent() {
        let c = Catalog::new();
        c.alloc(VarKind::Error, VarLabel::default());
        let s = c.snapshot();
        s.alloc(VarKind::Llun, VarLabel::default());
        assert_eq!(c.len(), 1);
        assert_eq!(s.len(), 2);
    }
}
