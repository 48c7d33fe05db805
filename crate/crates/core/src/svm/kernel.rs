use serde::{Deserialize, Serialize};

use super::SvmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Quadratic,
    Rbf,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Linear, KernelKind::Quadratic, KernelKind::Rbf];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Quadratic => "quadratic",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = SvmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "quadratic" | "quad" => Ok(KernelKind::Quadratic),
            "rbf" => Ok(KernelKind::Rbf),
            _ => Err(SvmError::Config(format!("unknown kernel `{s}`"))),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kernel choice. `gamma` is read only by the RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, gamma: 1.0 }
    }

    pub fn quadratic() -> Self {
        Self { kind: KernelKind::Quadratic, gamma: 1.0 }
    }

    pub fn rbf(gamma: f64) -> Result<Self, SvmError> {
        let spec = Self { kind: KernelKind::Rbf, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if self.kind == KernelKind::Rbf && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SvmError::Config(format!("rbf gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Assumes equal lengths; see [`kernel_eval`] for the checked form.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(x, y),
            KernelKind::Quadratic => {
                let d = dot(x, y) + 1.0;
                d * d
            }
            KernelKind::Rbf => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * sq).exp()
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Dimension { expected: x.len(), got: y.len() });
    }
    Ok(spec.eval_unchecked(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(kernel_eval(&KernelSpec::linear(), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(kernel_eval(&KernelSpec::quadratic(), &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let rbf = KernelSpec::rbf(0.5).unwrap();
        assert_eq!(kernel_eval(&rbf, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        assert!((kernel_eval(&rbf, &[0.0], &[2.0]).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!(kernel_eval(&rbf, &[0.0], &[2.0, 1.0]).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
    }

    #[test]
    fn names_parse() {
        for k in KernelKind::ALL {
            assert_eq!(k.as_str().parse::<KernelKind>().unwrap(), k);
        }
    }
}
