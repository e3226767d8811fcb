use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    BM,
    DM,
    EM,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::BM => "BM",
            Family::DM => "DM",
            Family::EM => "EM",
        })
    }
}

/// A model identified by family and input subsets, e.g. `DM[T1,T1C,FL+T2,T1C]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelName {
    Baseline(Vec<Sequence>),
    Double(Vec<Sequence>, Vec<Sequence>),
    Ensemble(Vec<Sequence>, Vec<Sequence>),
}

fn join(s: &[Sequence]) -> String {
    s.iter().map(|q| q.as_str()).collect::<Vec<_>>().join(",")
}

fn parse_subset(text: &str, full: &str) -> Result<Vec<Sequence>> {
    let seqs = text
        .split(',')
        .map(|t| t.trim().parse::<Sequence>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::UnknownModelName(full.to_string()))?;
    validate_subset(&seqs).map_err(|_| Error::UnknownModelName(full.to_string()))?;
    Ok(seqs)
}

/// A usable input subset is non-empty, repeats no sequence and includes T1C.
pub fn validate_subset(seqs: &[Sequence]) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::InvalidConfig("empty sequence subset".into()));
    }
    if !seqs.contains(&Sequence::T1C) {
        return Err(Error::InvalidConfig(format!("subset [{}] lacks T1C", join(seqs))));
    }
    for (i, s) in seqs.iter().enumerate() {
        if seqs[..i].contains(s) {
            return Err(Error::InvalidConfig(format!("subset [{}] repeats {s}", join(seqs))));
        }
    }
    Ok(())
}

impl ModelName {
    pub fn baseline(s: &[Sequence]) -> Self {
        ModelName::Baseline(s.to_vec())
    }

    pub fn family(&self) -> Family {
        match self {
            ModelName::Baseline(_) => Family::BM,
            ModelName::Double(..) => Family::DM,
            ModelName::Ensemble(..) => Family::EM,
        }
    }

    /// Input channel order seen by a single network (branch A then branch B).
    pub fn input_channels(&self) -> Vec<Sequence> {
        match self {
            ModelName::Baseline(s) => s.clone(),
            ModelName::Double(a, b) | ModelName::Ensemble(a, b) => a.iter().chain(b).copied().collect(),
        }
    }

    /// Baseline members of an ensemble.
    pub fn members(&self) -> Option<(ModelName, ModelName)> {
        match self {
            ModelName::Ensemble(a, b) => Some((ModelName::Baseline(a.clone()), ModelName::Baseline(b.clone()))),
            _ => None,
        }
    }

    /// Directory-safe identifier, e.g. `DM_T1-T1C-FL_T2-T1C`.
    pub fn slug(&self) -> String {
        let dash = |s: &[Sequence]| s.iter().map(|q| q.as_str()).collect::<Vec<_>>().join("-");
        match self {
            ModelName::Baseline(s) => format!("BM_{}", dash(s)),
            ModelName::Double(a, b) => format!("DM_{}_{}", dash(a), dash(b)),
            ModelName::Ensemble(a, b) => format!("EM_{}_{}", dash(a), dash(b)),
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelName::Baseline(s) => write!(f, "BM[{}]", join(s)),
            ModelName::Double(a, b) => write!(f, "DM[{}+{}]", join(a), join(b)),
            ModelName::Ensemble(a, b) => write!(f, "EM[{}+{}]", join(a), join(b)),
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownModelName(s.to_string());
        let t = s.trim();
        let open = t.find('[').ok_or_else(bad)?;
        if !t.ends_with(']') {
            return Err(bad());
        }
        let family = t[..open].trim();
        let body = &t[open + 1..t.len() - 1];
        let parts: Vec<&str> = body.split('+').collect();
        match (family, parts.as_slice()) {
            ("BM", [one]) => Ok(ModelName::Baseline(parse_subset(one, s)?)),
            ("DM", [a, b]) => Ok(ModelName::Double(parse_subset(a, s)?, parse_subset(b, s)?)),
            ("EM", [a, b]) => Ok(ModelName::Ensemble(parse_subset(a, s)?, parse_subset(b, s)?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ModelName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelName> for String {
    fn from(m: ModelName) -> String {
        m.to_string()
    }
}

/// The published ablation grid: eight baselines, nine double networks and
/// nine ensembles, in table order.
pub fn published_grid() -> Vec<ModelName> {
    const NAMES: [&str; 26] = [
        "BM[T1,T2,T1C,FL]",
        "BM[T1,T2,T1C]",
        "BM[T1,T1C,FL]",
        "BM[T2,T1C,FL]",
        "BM[T1,T1C]",
        "BM[T2,T1C]",
        "BM[T1C,FL]",
        "BM[T1C]",
        "DM[T1,T2,T1C+T1C,FL]",
        "DM[T2,T1C,FL+T1,T1C]",
        "DM[T1,T1C,FL+T2,T1C]",
        "DM[T1,T1C+T2,T1C]",
        "DM[T2,T1C+T1C,FL]",
        "DM[T1C,FL+T1,T1C]",
        "DM[T1,T1C+T1C]",
        "DM[T2,T1C+T1C]",
        "DM[T1C,FL+T1C]",
        "EM[T1,T2,T1C+T1C,FL]",
        "EM[T2,T1C,FL+T1,T1C]",
        "EM[T1,T1C,FL+T2,T1C]",
        "EM[T1,T1C+T2,T1C]",
        "EM[T2,T1C+T1C,FL]",
        "EM[T1C,FL+T1,T1C]",
        "EM[T1,T1C+T1C]",
        "EM[T2,T1C+T1C]",
        "EM[T1C,FL+T1C]",
    ];
    NAMES.iter().map(|n| n.parse().expect("grid names are valid")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Sequence::*;

    #[test]
    fn parses_and_prints() {
        let m: ModelName = "DM [T1, T1C, FL + T2, T1C]".parse().unwrap();
        assert_eq!(m, ModelName::Double(vec![T1, T1C, FL], vec![T2, T1C]));
        assert_eq!(m.to_string(), "DM[T1,T1C,FL+T2,T1C]");
        assert_eq!(m.input_channels().len(), 5);
        assert_eq!(m.slug(), "DM_T1-T1C-FL_T2-T1C");
    }

    #[test]
    fn ensemble_members() {
        let m: ModelName = "EM[T1C,FL+T1C]".parse().unwrap();
        let (a, b) = m.members().unwrap();
        assert_eq!(a.to_string(), "BM[T1C,FL]");
        assert_eq!(b.to_string(), "BM[T1C]");
    }

    #[test]
    fn rejects_bad_names() {
        for bad in ["BM[T1]", "XM[T1C]", "BM[T1C+T1C]", "DM[T1C]", "BM[T1C,T1C]", "BM T1C", "BM[T3,T1C]"] {
            assert!(bad.parse::<ModelName>().is_err(), "{bad}");
        }
    }

    #[test]
    fn grid_has_26_rows_in_three_groups() {
        let g = published_grid();
        assert_eq!(g.len(), 26);
        let count = |f| g.iter().filter(|m| m.family() == f).count();
        assert_eq!((count(Family::BM), count(Family::DM), count(Family::EM)), (8, 9, 9));
        for m in g.iter().filter(|m| m.family() == Family::EM) {
            let (a, b) = m.members().unwrap();
            assert!(g.contains(&a) && g.contains(&b), "{m}");
        }
    }

    #[test]
    fn serde_as_string() {
        let m: ModelName = "BM[T1C]".parse().unwrap();
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, "\"BM[T1C]\"");
        assert_eq!(serde_json::from_str::<ModelName>(&j).unwrap(), m);
    }
}
