use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidValue(format!("interval [{lo}:{hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn union(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn include(&mut self, x: f64) {
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
    }
}

/// Tolerance on the total mass of a modal value.
pub const MODAL_SUM_TOL: f64 = 1e-9;

/// Frequency distribution over categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Modal(BTreeMap<String, f64>);

impl Modal {
    pub fn new(frequencies: BTreeMap<String, f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidValue("empty modal value".into()));
        }
        let mut total = 0.0;
        for (cat, &p) in &frequencies {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidValue(format!("frequency {p} for `{cat}`")));
            }
            if cat.is_empty() || cat.contains(['=', ';', '{', '}', ',']) {
                return Err(Error::InvalidValue(format!("category name `{cat}`")));
            }
            total += p;
        }
        if (total - 1.0).abs() > MODAL_SUM_TOL {
            return Err(Error::InvalidValue(format!("frequencies sum to {total}")));
        }
        Ok(Self(frequencies))
    }

    /// Relative frequencies of the given category counts.
    pub fn from_counts<'a>(counts: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        for (cat, w) in counts {
            *acc.entry(cat.to_owned()).or_default() += w;
        }
        let total: f64 = acc.values().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidValue("modal value without mass".into()));
        }
        acc.values_mut().for_each(|w| *w /= total);
        Self::new(acc)
    }

    pub fn frequency(&self, category: &str) -> f64 {
        self.0.get(category).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Half the L1 distance between two distributions; lies in `[0, 1]`.
    pub fn half_l1(&self, other: &Modal) -> f64 {
        let mut total = 0.0;
        for (cat, p) in self.iter() {
            total += (p - other.frequency(cat)).abs();
        }
        for (cat, q) in other.iter() {
            if !self.0.contains_key(cat) {
                total += q;
            }
        }
        0.5 * total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    Single,
    Interval,
    Modal,
}

impl VariableKind {
    pub fn name(self) -> &'static str {
        match self {
            VariableKind::Single => "single",
            VariableKind::Interval => "interval",
            VariableKind::Modal => "modal",
        }
    }

    pub fn is_numeric(self) -> bool {
        self != VariableKind::Modal
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(VariableKind::Single),
            "interval" => Ok(VariableKind::Interval),
            "modal" => Ok(VariableKind::Modal),
            other => Err(Error::InvalidTable(format!("unknown variable kind `{other}`"))),
        }
    }
}

/// A cell of a symbolic table.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolicValue {
    Single(f64),
    Interval(Interval),
    Modal(Modal),
}

impl SymbolicValue {
    pub fn kind(&self) -> VariableKind {
        match self {
            SymbolicValue::Single(_) => VariableKind::Single,
            SymbolicValue::Interval(_) => VariableKind::Interval,
            SymbolicValue::Modal(_) => VariableKind::Modal,
        }
    }

    /// Numeric cells as intervals; singles become degenerate intervals.
    pub fn as_interval(&self) -> Option<Interval> {
        match self {
            SymbolicValue::Single(x) => Some(Interval::point(*x)),
            SymbolicValue::Interval(i) => Some(*i),
            SymbolicValue::Modal(_) => None,
        }
    }

    pub fn as_modal(&self) -> Option<&Modal> {
        match self {
            SymbolicValue::Modal(m) => Some(m),
            _ => None,
        }
    }
}

impl fmt::Display for SymbolicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicValue::Single(x) => write!(f, "{x}"),
            SymbolicValue::Interval(i) => write!(f, "[{}:{}]", i.lo, i.hi),
            SymbolicValue::Modal(m) => {
                f.write_str("{")?;
                for (k, (cat, p)) in m.iter().enumerate() {
                    if k > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{cat}={p}")?;
                }
                f.write_str("}")
            }
        }
    }
}

fn number(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::InvalidValue(format!("`{text}` is not a number")))
}

impl FromStr for SymbolicValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(body) = s.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let (lo, hi) = body
                .split_once(':')
                .ok_or_else(|| Error::InvalidValue(format!("interval `{s}`")))?;
            return Ok(SymbolicValue::Interval(Interval::new(number(lo)?, number(hi)?)?));
        }
        if let Some(body) = s.strip_prefix('{').and_then(|b| b.strip_suffix('}')) {
            let mut map = BTreeMap::new();
            for part in body.split(';') {
                let (cat, p) = part
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidValue(format!("modal entry `{part}`")))?;
                if map.insert(cat.trim().to_owned(), number(p)?).is_some() {
                    return Err(Error::InvalidValue(format!("repeated category `{cat}`")));
                }
            }
            return Ok(SymbolicValue::Modal(Modal::new(map)?));
        }
        Ok(SymbolicValue::Single(number(s)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_order_enforced() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert_eq!(Interval::new(0.0, 1.0).unwrap().union(&Interval::new(5.0, 9.0).unwrap()), Interval::new(0.0, 9.0).unwrap());
    }

    #[test]
    fn modal_validation() {
        let ok: BTreeMap<_, _> = [("RM".to_string(), 0.5), ("NM".to_string(), 0.5)].into();
        assert!(Modal::new(ok).is_ok());
        let bad: BTreeMap<_, _> = [("RM".to_string(), 0.5)].into();
        assert!(Modal::new(bad).is_err());
        let neg: BTreeMap<_, _> = [("RM".to_string(), 1.5), ("NM".to_string(), -0.5)].into();
        assert!(Modal::new(neg).is_err());
    }

    #[test]
    fn counting() {
        let m = Modal::from_counts([("RM", 1.0), ("RM", 1.0), ("NM", 1.0)]).unwrap();
        assert_eq!(m.frequency("RM"), 2.0 / 3.0);
        assert_eq!(m.frequency("NM"), 1.0 / 3.0);
        assert_eq!(m.frequency("SM"), 0.0);
    }

    #[test]
    fn cell_syntax() {
        for text in ["3.25", "[-1:2.5]", "{NM=0.25;RM=0.75}"] {
            let v: SymbolicValue = text.parse().unwrap();
            assert_eq!(v.to_string(), text);
        }
        assert!("[2:1]".parse::<SymbolicValue>().is_err());
        assert!("{A=0.5}".parse::<SymbolicValue>().is_err());
        assert!("abc".parse::<SymbolicValue>().is_err());
    }

    #[test]
    fn disjoint_modal_distance_is_one() {
        let a = Modal::from_counts([("A", 1.0)]).unwrap();
        let b = Modal::from_counts([("B", 1.0)]).unwrap();
        assert_eq!(a.half_l1(&b), 1.0);
        assert_eq!(a.half_l1(&a), 0.0);
    }
}
