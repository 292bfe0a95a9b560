//! Rules that draw raw degree propensities for the degree-corrected sampler.
//!
//! Raw draws are renormalized per block after the assignment is known, so a
//! rule only controls the shape of the within-block degree distribution.

use std::fmt;
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::registry::Registry;

pub trait ThetaRule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Draws `n` positive raw propensities.
    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Settings echoed into generated parameter documents.
    fn settings(&self) -> toml::Table {
        toml::Table::new()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Constant;

impl ThetaRule for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn draw(&self, n: usize, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0; n]
    }
}

/// Each node is `high` with probability `high_fraction`, otherwise `low`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoPoint {
    pub high: f64,
    pub low: f64,
    pub high_fraction: f64,
}

impl Default for TwoPoint {
    fn default() -> Self {
        Self {
            high: 1.5,
            low: 0.5,
            high_fraction: 0.5,
        }
    }
}

impl ThetaRule for TwoPoint {
    fn name(&self) -> &'static str {
        "two-point"
    }

    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.high_fraction {
                    self.high
                } else {
                    self.low
                }
            })
            .collect()
    }

    fn settings(&self) -> toml::Table {
        let mut t = toml::Table::new();
        t.insert("high".into(), self.high.into());
        t.insert("low".into(), self.low.into());
        t.insert("high_fraction".into(), self.high_fraction.into());
        t
    }
}

/// Pareto draws with density proportional to `x^-exponent` for `x >= floor`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub floor: f64,
}

impl Default for PowerLaw {
    fn default() -> Self {
        Self {
            exponent: 2.5,
            floor: 1.0,
        }
    }
}

impl ThetaRule for PowerLaw {
    fn name(&self) -> &'static str {
        "power-law"
    }

    fn draw(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let inv = -1.0 / (self.exponent - 1.0);
        (0..n)
            .map(|_| {
                // 1 - U lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                self.floor * u.powf(inv)
            })
            .collect()
    }

    fn settings(&self) -> toml::Table {
        let mut t = toml::Table::new();
        t.insert("exponent".into(), self.exponent.into());
        t.insert("floor".into(), self.floor.into());
        t
    }
}

fn number(table: &toml::Table, key: &str, default: f64) -> Result<f64> {
    match table.get(key) {
        None => Ok(default),
        Some(toml::Value::Float(x)) => Ok(*x),
        Some(toml::Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(Error::InvalidParams(format!("theta `{key}` must be a number, got {other}"))),
    }
}

fn reject_unknown(table: &toml::Table, allowed: &[&str]) -> Result<()> {
    for key in table.keys() {
        if key != "rule" && !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParams(format!("unknown theta setting `{key}`")));
        }
    }
    Ok(())
}

/// Theta rules by name; each constructor reads its settings from a table.
pub fn theta_rules() -> &'static Registry<dyn ThetaRule, toml::Table> {
    static REGISTRY: OnceLock<Registry<dyn ThetaRule, toml::Table>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn ThetaRule, toml::Table> = Registry::new("theta rule");
        reg.register("constant", |t| {
            reject_unknown(t, &[])?;
            Ok(Box::new(Constant))
        });
        reg.register("two-point", |t| {
            reject_unknown(t, &["high", "low", "high_fraction"])?;
            let d = TwoPoint::default();
            let rule = TwoPoint {
                high: number(t, "high", d.high)?,
                low: number(t, "low", d.low)?,
                high_fraction: number(t, "high_fraction", d.high_fraction)?,
            };
            if !(rule.high > 0.0 && rule.low > 0.0 && (0.0..=1.0).contains(&rule.high_fraction)) {
                return Err(Error::InvalidParams(
                    "two-point theta needs positive values and a fraction in [0, 1]".into(),
                ));
            }
            Ok(Box::new(rule))
        });
        reg.register("power-law", |t| {
            reject_unknown(t, &["exponent", "floor"])?;
            let d = PowerLaw::default();
            let rule = PowerLaw {
                exponent: number(t, "exponent", d.exponent)?,
                floor: number(t, "floor", d.floor)?,
            };
            if !(rule.exponent > 1.0 && rule.floor > 0.0) {
                return Err(Error::InvalidParams(
                    "power-law theta needs exponent > 1 and a positive floor".into(),
                ));
            }
            Ok(Box::new(rule))
        });
        reg
    })
}

/// Looks up the rule named by `table["rule"]`.
pub fn theta_rule_from_table(table: &toml::Table) -> Result<Box<dyn ThetaRule>> {
    let name = match table.get("rule") {
        Some(toml::Value::String(s)) => s.as_str(),
        Some(_) => return Err(Error::InvalidParams("theta `rule` must be a string".into())),
        None => return Err(Error::InvalidParams("theta table needs a `rule` entry".into())),
    };
    theta_rules().build(name, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn registry_builds_each_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in theta_rules().names() {
            let rule = theta_rule_from_table(&table(&format!("rule = \"{name}\""))).unwrap();
            assert_eq!(rule.name(), name);
            let draws = rule.draw(500, &mut rng);
            assert_eq!(draws.len(), 500);
            assert!(draws.iter().all(|&x| x > 0.0 && x.is_finite()));
        }
    }

    #[test]
    fn settings_are_validated() {
        assert!(theta_rule_from_table(&table("rule = \"power-law\"\nexponent = 0.5")).is_err());
        assert!(theta_rule_from_table(&table("rule = \"two-point\"\nlow = -1")).is_err());
        assert!(theta_rule_from_table(&table("rule = \"constant\"\nfoo = 1")).is_err());
        assert!(theta_rule_from_table(&table("rule = \"lognormal\"")).is_err());
        assert!(theta_rule_from_table(&table("exponent = 2")).is_err());
    }

    #[test]
    fn power_law_respects_floor_and_tail() {
        let rule = PowerLaw {
            exponent: 3.0,
            floor: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = rule.draw(200_000, &mut rng);
        assert!(draws.iter().all(|&x| x >= 2.0));
        // P(X > 4) = (4/2)^-(3-1) = 1/4
        let frac = draws.iter().filter(|&&x| x > 4.0).count() as f64 / draws.len() as f64;
        assert!((frac - 0.25).abs() < 0.005, "{frac}");
    }
}
