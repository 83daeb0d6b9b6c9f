use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A device operating point. Power and clock are always supplied by the
/// caller; nothing here carries vendor figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    pub label: String,
    pub clock_hz: f64,
    pub power_watts: f64,
}

impl EnergySpec {
    pub fn new(label: impl Into<String>, clock_hz: f64, power_watts: f64) -> Result<Self> {
        let spec = Self {
            label: label.into(),
            clock_hz,
            power_watts,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.clock_hz) || !ok(self.power_watts) {
            return Err(Error::invalid(format!(
                "energy spec '{}' needs positive clock and power",
                self.label
            )));
        }
        Ok(())
    }
}

/// `cycles / clock_hz * power_watts`, in joules.
pub fn energy_per_attention(cycles: u64, spec: &EnergySpec) -> Result<f64> {
    spec.validate()?;
    if cycles == 0 {
        return Err(Error::invalid("cycle count must be positive"));
    }
    Ok(cycles as f64 / spec.clock_hz * spec.power_watts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub label: String,
    pub cycles: u64,
    pub seconds: f64,
    pub joules: f64,
    /// This row's joules divided by the first row's.
    pub ratio_to_first: f64,
}

/// Energy of each `(spec, cycles)` entry, relative to the first.
pub fn energy_report(entries: &[(EnergySpec, u64)]) -> Result<Vec<EnergyRow>> {
    let mut rows = Vec::with_capacity(entries.len());
    let mut base = None;
    for (spec, cycles) in entries {
        let joules = energy_per_attention(*cycles, spec)?;
        let first = *base.get_or_insert(joules);
        rows.push(EnergyRow {
            label: spec.label.clone(),
            cycles: *cycles,
            seconds: *cycles as f64 / spec.clock_hz,
            joules,
            ratio_to_first: joules / first,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_arithmetic() {
        let spec = EnergySpec::new("fpga", 200e6, 30.0).unwrap();
        let j = energy_per_attention(823_999, &spec).unwrap();
        assert!((j - 0.123_599_85).abs() < 1e-9);
        let doubled = EnergySpec::new("fpga2", 200e6, 60.0).unwrap();
        assert_eq!(energy_per_attention(823_999, &doubled).unwrap(), 2.0 * j);
    }

    #[test]
    fn ratio_matches_joules() {
        let a = EnergySpec::new("a", 200e6, 30.0).unwrap();
        let b = EnergySpec::new("b", 1.4e9, 300.0).unwrap();
        let rows = energy_report(&[(a.clone(), 823_999), (b.clone(), 50_000)]).unwrap();
        let ja = energy_per_attention(823_999, &a).unwrap();
        let jb = energy_per_attention(50_000, &b).unwrap();
        assert_eq!(rows[0].ratio_to_first, 1.0);
        assert_eq!(rows[1].ratio_to_first, jb / ja);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(EnergySpec::new("x", 0.0, 1.0).is_err());
        assert!(EnergySpec::new("x", 1.0, -1.0).is_err());
        let ok = EnergySpec::new("x", 1.0, 1.0).unwrap();
        assert!(energy_per_attention(0, &ok).is_err());
    }
}
