//! Flag value types that parse from the command line ("a,b") and from the
//! JSON config file (the same string, or a JSON array).

use std::fmt;
use std::str::FromStr;

use drc_core::harness::Budget;
use drc_core::BetaParams;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TextOrList<T> {
    Text(String),
    List(Vec<T>),
}

/// Shape parameters written as `alpha,beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaArg(pub BetaParams);

impl FromStr for BetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match parse_floats(s)?.as_slice() {
            [a, b] => BetaParams::new(*a, *b).map(BetaArg).map_err(|e| e.to_string()),
            _ => Err(format!("expected two shape parameters \"alpha,beta\", got {s:?}")),
        }
    }
}

impl<'de> Deserialize<'de> for BetaArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match TextOrList::<f64>::deserialize(d)? {
            TextOrList::Text(s) => s.parse().map_err(serde::de::Error::custom),
            TextOrList::List(v) if v.len() == 2 => {
                BetaParams::new(v[0], v[1]).map(BetaArg).map_err(serde::de::Error::custom)
            }
            TextOrList::List(_) => Err(serde::de::Error::custom("expected [alpha, beta]")),
        }
    }
}

impl Serialize for BetaArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.0.alpha(), self.0.beta()].serialize(s)
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_floats(s)?;
        if v.is_empty() {
            return Err("empty list".into());
        }
        Ok(FloatList(v))
    }
}

impl<'de> Deserialize<'de> for FloatList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match TextOrList::<f64>::deserialize(d)? {
            TextOrList::Text(s) => s.parse().map_err(serde::de::Error::custom),
            TextOrList::List(v) if !v.is_empty() => Ok(FloatList(v)),
            TextOrList::List(_) => Err(serde::de::Error::custom("empty list")),
        }
    }
}

impl Serialize for FloatList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Comma-separated per-image budgets; `all` means every patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetList(pub Vec<Budget>);

fn parse_budget(t: &str) -> Result<Budget, String> {
    if t.eq_ignore_ascii_case("all") {
        return Ok(Budget::All);
    }
    match t.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Budget::PerImage(n)),
        _ => Err(format!("budget {t:?} is neither a positive integer nor \"all\"")),
    }
}

impl FromStr for BudgetList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<Budget> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(parse_budget)
            .collect::<Result<_, _>>()?;
        if v.is_empty() {
            return Err("empty budget list".into());
        }
        Ok(BudgetList(v))
    }
}

impl<'de> Deserialize<'de> for BudgetList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Item {
            N(usize),
            S(String),
        }
        match TextOrList::<Item>::deserialize(d)? {
            TextOrList::Text(s) => s.parse().map_err(serde::de::Error::custom),
            TextOrList::List(items) => {
                let text: Vec<String> = items
                    .into_iter()
                    .map(|i| match i {
                        Item::N(n) => n.to_string(),
                        Item::S(s) => s,
                    })
                    .collect();
                text.join(",").parse().map_err(serde::de::Error::custom)
            }
        }
    }
}

impl Serialize for BudgetList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        v.serialize(s)
    }
}

impl fmt::Display for BetaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0.alpha(), self.0.beta())
    }
}
