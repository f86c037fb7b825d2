//! Default tolerances of every asserted property, overridable by name.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(name, default, meaning)`.
pub const TABLE: &[(&str, f64, &str)] = &[
    ("metric.euclid_abs", 1e-6, "Euclidean distance against |x - y|"),
    ("metric.axis_abs", 1e-6, "Grushin distance along the x1 axis against |a|"),
    ("metric.vertical_rel", 1e-2, "Grushin vertical distance against the sqrt(b) dilation law"),
    ("metric.homogeneity_rel", 1e-2, "d(δx, δy) = λ d(x, y)"),
    ("metric.symmetry_rel", 1e-2, "d(x, y) = d(y, x)"),
    ("volume.slope_abs", 0.1, "fitted log-log slope of |B(0, ρ)| against q"),
    ("volume.nsw_slope_abs", 0.2, "small- and large-radius slopes at x = (1, 0)"),
    ("volume.doubling_low", 0.8, "doubling ratio lower factor on 2^n"),
    ("volume.doubling_high", 1.25, "doubling ratio upper factor on 2^q"),
    ("group.mass_abs", 1e-3, "∫ γ_G(1, u) du = 1"),
    ("group.scaling_rel", 5e-3, "γ_G(λ²t, D_λ u) = λ^-Q γ_G(t, u)"),
    ("group.symmetry_rel", 1e-3, "γ_G(t, u) = γ_G(t, u^-1)"),
    ("kernel.symmetry_rel", 1e-4, "Γ(t, x, y) = Γ(t, y, x)"),
    ("kernel.mass_abs", 1e-3, "∫ Γ(1, x, y) dy = 1"),
    ("kernel.homogeneity_rel", 5e-3, "Γ(λ²t, δx, δy) = λ^-q Γ(t, x, y)"),
    ("kernel.reproduction_rel", 1e-2, "∫ Γ(t, x, z) Γ(s, z, y) dz = Γ(t + s, x, y)"),
    ("kernel.route_rel", 1e-2, "derivative routes A and B agree"),
    ("envelope.max_ratio", 6.0, "largest d/sqrt(t) in the envelope samples"),
    ("envelope.stability_rel", 0.1, "fitted ϱ change under dilation of the samples"),
    ("envelope.power_abs", 0.2, "regressed t-exponent of derivative envelopes at x = y"),
    ("cauchy.constant_abs", 1e-3, "solution of the f ≡ 1 problem"),
    ("cauchy.closed_form_rel", 1e-2, "Euclidean exp-quadratic closed form"),
    ("cauchy.residual_order_abs", 0.5, "observed caloric-residual order against 2"),
    ("cauchy.horizon_fraction", 0.5, "solve up to this fraction of T/μ"),
    ("harnack.euclid_rel", 5e-2, "Euclidean ratio against the explicit-kernel oracle"),
    ("harnack.scale_band", 0.15, "ratios across radii around their median"),
    ("harnack.derivative_band", 0.25, "normalized derivative ratios across radii"),
    ("harnack.caloric", 1e-2, "r²|Hu|/u at spot-check points"),
];

/// Named tolerances; unknown names are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances(TABLE.iter().map(|(k, v, _)| (k.to_string(), *v)).collect())
    }
}

impl Tolerances {
    pub fn get(&self, name: &str) -> f64 {
        *self.0.get(name).unwrap_or_else(|| panic!("unknown tolerance `{name}`"))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !self.0.contains_key(name) {
            return Err(Error::Config(format!("unknown tolerance `{name}`")));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("tolerance `{name}` must be positive, got {value}")));
        }
        self.0.insert(name.to_string(), value);
        Ok(())
    }

    /// Applies `NAME=VAL` overrides.
    pub fn with_overrides<S: AsRef<str>>(overrides: &[S]) -> Result<Self> {
        let mut t = Tolerances::default();
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("tolerance override `{o}` is not NAME=VAL")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("tolerance `{k}` has non-numeric value `{v}`")))?;
            t.set(k.trim(), v)?;
        }
        Ok(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_unknown_names_fail() {
        let t = Tolerances::with_overrides(&["kernel.mass_abs=2e-3"]).unwrap();
        assert_eq!(t.get("kernel.mass_abs"), 2e-3);
        assert_eq!(t.get("kernel.symmetry_rel"), 1e-4);
        assert!(Tolerances::with_overrides(&["nope=1"]).is_err());
        assert!(Tolerances::with_overrides(&["kernel.mass_abs"]).is_err());
        assert!(Tolerances::with_overrides(&["kernel.mass_abs=-1"]).is_err());
    }

    #[test]
    fn table_names_are_unique() {
        assert_eq!(Tolerances::default().iter().count(), TABLE.len());
    }
}
