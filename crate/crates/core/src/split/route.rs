use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{ClassDistribution, ClassLabel};

/// Outcome of the switch for one ROI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    /// Dispatch to the head of this foreground class.
    Class(ClassLabel),
    /// Background won; no head runs.
    Reject,
}

impl Route {
    pub fn class(self) -> Option<ClassLabel> {
        match self {
            Route::Class(c) => Some(c),
            Route::Reject => None,
        }
    }
}

/// Argmax over all `N + 1` entries, lowest id on ties; background rejects.
pub fn route<T: Scalar>(dist: &ClassDistribution<T>) -> Result<Route> {
    let probs = dist.probs();
    let mut sum = 0.0;
    for &p in probs {
        let v = p.as_f64();
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ClassDistribution::<T>::SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    let c = dist.argmax();
    Ok(if c.is_background() { Route::Reject } else { Route::Class(c) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> ClassDistribution<f64> {
        ClassDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(route(&d(&[0.1, 0.7, 0.2])).unwrap(), Route::Class(ClassLabel(1)));
        assert_eq!(route(&d(&[0.9, 0.05, 0.05])).unwrap(), Route::Reject);
        assert_eq!(route(&d(&[0.2, 0.4, 0.4])).unwrap(), Route::Class(ClassLabel(1)));
    }

    #[test]
    fn malformed_rejected() {
        let bad: ClassDistribution<f64> = serde_json::from_str(r#"{"probs":[0.5,0.9]}"#).unwrap();
        assert!(route(&bad).is_err());
        let neg: ClassDistribution<f64> = serde_json::from_str(r#"{"probs":[-0.5,1.5]}"#).unwrap();
        assert!(route(&neg).is_err());
    }
}
