use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::distribution::TailDistribution;
use super::kernel::{KernelSpec, Perturbation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinKernel {
    #[serde(rename = "ar1")]
    Ar1,
    #[serde(rename = "det-contract")]
    DetContract,
    #[serde(rename = "geo-kill")]
    GeoKill,
    #[serde(rename = "logn-drift")]
    LognDrift,
    #[serde(rename = "const-fail")]
    ConstFail,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamDoc {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: Vec<ParamDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

/// A kernel together with the tail index of its return law.
#[derive(Debug, Clone)]
pub struct BuiltKernel {
    pub spec: KernelSpec,
    pub alpha: f64,
}

const fn p(name: &'static str, default: f64, doc: &'static str) -> ParamDoc {
    ParamDoc { name, default, doc }
}

impl BuiltinKernel {
    pub const ALL: [BuiltinKernel; 5] = [
        BuiltinKernel::Ar1,
        BuiltinKernel::DetContract,
        BuiltinKernel::GeoKill,
        BuiltinKernel::LognDrift,
        BuiltinKernel::ConstFail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKernel::Ar1 => "ar1",
            BuiltinKernel::DetContract => "det-contract",
            BuiltinKernel::GeoKill => "geo-kill",
            BuiltinKernel::LognDrift => "logn-drift",
            BuiltinKernel::ConstFail => "const-fail",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown builtin kernel '{name}'")))
    }

    pub fn info(self) -> BuiltinInfo {
        let alpha = p("alpha", self.default_alpha(), "tail index of H = Pareto(alpha)");
        let a_max = p("a_max", 1.0, "upper end of the atom [0, a_max]");
        match self {
            BuiltinKernel::Ar1 => BuiltinInfo {
                name: self.name(),
                summary: "Z = rho, additive Pareto noise W",
                params: vec![
                    p("rho", 0.5, "multiplicative factor"),
                    alpha,
                    a_max,
                    p("noise_alpha", 0.0, "tail index of W; 0 means alpha + 1"),
                    p("noise_scale", 0.1, "Pareto scale of W"),
                ],
                note: None,
            },
            BuiltinKernel::DetContract => BuiltinInfo {
                name: self.name(),
                summary: "Z = rho, phi = 0",
                params: vec![p("rho", 0.5, "multiplicative factor"), alpha, a_max],
                note: None,
            },
            BuiltinKernel::GeoKill => BuiltinInfo {
                name: self.name(),
                summary: "Z = 0 with probability p_zero, else rho; phi = 0",
                params: vec![
                    p("p_zero", 0.3, "G({0})"),
                    p("rho", 0.8, "multiplier when not killed"),
                    alpha,
                    a_max,
                ],
                note: None,
            },
            BuiltinKernel::LognDrift => BuiltinInfo {
                name: self.name(),
                summary: "Z lognormal with E log Z < 0, phi = 0",
                params: vec![
                    p("mu", -0.5, "mean of log Z"),
                    p("sigma", 0.5, "standard deviation of log Z"),
                    alpha,
                    a_max,
                ],
                note: None,
            },
            BuiltinKernel::ConstFail => BuiltinInfo {
                name: self.name(),
                summary: "Z = 1, phi = 0",
                params: vec![alpha, a_max],
                note: Some("violates Condition drift_back"),
            },
        }
    }

    fn default_alpha(self) -> f64 {
        match self {
            BuiltinKernel::LognDrift => 2.0,
            _ => 1.0,
        }
    }

    pub fn build(self, params: &BTreeMap<String, f64>) -> Result<BuiltKernel> {
        let info = self.info();
        for key in params.keys() {
            if !info.params.iter().any(|d| d.name == key) {
                return Err(Error::invalid(format!(
                    "kernel '{}' has no parameter '{key}'",
                    self.name()
                )));
            }
        }
        let get = |name: &str| -> f64 {
            params.get(name).copied().unwrap_or_else(|| {
                info.params
                    .iter()
                    .find(|d| d.name == name)
                    .map(|d| d.default)
                    .unwrap_or(f64::NAN)
            })
        };
        let alpha = get("alpha");
        let a_max = get("a_max");
        let h = TailDistribution::pareto(alpha);
        let spec = match self {
            BuiltinKernel::Ar1 => {
                let na = get("noise_alpha");
                let w_law = TailDistribution::Pareto {
                    alpha: if na == 0.0 { alpha + 1.0 } else { na },
                    scale: get("noise_scale"),
                };
                KernelSpec::new(
                    TailDistribution::point(get("rho")),
                    Perturbation::AdditiveNoise { w_law },
                    a_max,
                    h,
                )
            }
            BuiltinKernel::DetContract => {
                KernelSpec::new(TailDistribution::point(get("rho")), Perturbation::Zero, a_max, h)
            }
            BuiltinKernel::GeoKill => KernelSpec::new(
                TailDistribution::with_zero_mass(get("p_zero"), TailDistribution::point(get("rho"))),
                Perturbation::Zero,
                a_max,
                h,
            ),
            BuiltinKernel::LognDrift => KernelSpec::new(
                TailDistribution::lognormal(get("mu"), get("sigma")),
                Perturbation::Zero,
                a_max,
                h,
            ),
            BuiltinKernel::ConstFail => {
                KernelSpec::new(TailDistribution::point(1.0), Perturbation::Zero, a_max, h)
            }
        };
        spec.validate()?;
        Ok(BuiltKernel { spec, alpha })
    }

    pub fn default_kernel(self) -> BuiltKernel {
        self.build(&BTreeMap::new()).expect("defaults are valid")
    }
}

/// The full catalog in display order.
pub fn list_builtin_kernels() -> Vec<BuiltinInfo> {
    BuiltinKernel::ALL.iter().map(|k| k.info()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_five_documented_entries() {
        let cat = list_builtin_kernels();
        assert_eq!(cat.len(), 5);
        assert!(cat.iter().all(|e| !e.params.is_empty()));
    }

    #[test]
    fn det_contract_defaults() {
        let k = BuiltinKernel::DetContract.default_kernel();
        assert_eq!(k.spec.z_law, TailDistribution::point(0.5));
        assert_eq!(k.spec.atom_upper, 1.0);
        assert_eq!(k.spec.h_return, TailDistribution::pareto(1.0));
    }

    #[test]
    fn const_fail_is_marked() {
        assert_eq!(
            BuiltinKernel::ConstFail.info().note,
            Some("violates Condition drift_back")
        );
    }

    #[test]
    fn params_override_and_unknown_rejected() {
        let mut m = BTreeMap::new();
        m.insert("rho".to_string(), 0.7);
        m.insert("alpha".to_string(), 2.0);
        let k = BuiltinKernel::DetContract.build(&m).unwrap();
        assert_eq!(k.spec.z_law, TailDistribution::point(0.7));
        assert_eq!(k.alpha, 2.0);
        m.insert("bogus".to_string(), 1.0);
        assert!(BuiltinKernel::DetContract.build(&m).is_err());
        assert!(BuiltinKernel::from_name("nope").is_err());
    }
}
