use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariance parameterization Σ_g = λ_g D_g A_g D_gᵀ. The three letters give
/// volume, shape and orientation: E equal across components, V varying, I
/// identity. `E` and `V` are the univariate equal/varying variance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CovarianceModel {
    E,
    V,
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
    EEE,
    EEV,
    VEV,
    VVV,
}

use CovarianceModel::*;

impl CovarianceModel {
    pub const UNIVARIATE: [CovarianceModel; 2] = [E, V];
    pub const MULTIVARIATE: [CovarianceModel; 10] =
        [EII, VII, EEI, VEI, EVI, VVI, EEE, EEV, VEV, VVV];

    pub fn code(self) -> &'static str {
        match self {
            E => "E",
            V => "V",
            EII => "EII",
            VII => "VII",
            EEI => "EEI",
            VEI => "VEI",
            EVI => "EVI",
            VVI => "VVI",
            EEE => "EEE",
            EEV => "EEV",
            VEV => "VEV",
            VVV => "VVV",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            E => "univariate, equal variance",
            V => "univariate, unequal variance",
            EII => "spherical, equal volume",
            VII => "spherical, varying volume",
            EEI => "diagonal, equal volume and shape",
            VEI => "diagonal, equal shape",
            EVI => "diagonal, equal volume, varying shape",
            VVI => "diagonal, varying volume and shape",
            EEE => "ellipsoidal, equal volume, shape, and orientation",
            EEV => "ellipsoidal, equal volume and shape",
            VEV => "ellipsoidal, equal shape",
            VVV => "ellipsoidal, varying volume, shape, and orientation",
        }
    }

    pub fn is_univariate(self) -> bool {
        matches!(self, E | V)
    }

    pub fn valid_for(self, d: usize) -> bool {
        if self.is_univariate() {
            d == 1
        } else {
            d >= 2
        }
    }

    pub fn check(self, d: usize) -> Result<()> {
        if self.valid_for(d) {
            Ok(())
        } else {
            Err(Error::ModelDimension {
                model: self.code().to_string(),
                d,
            })
        }
    }

    /// Number of free covariance parameters for `g` components in `d`
    /// dimensions.
    fn covariance_params(self, d: usize, g: usize) -> usize {
        let rot = d * d.saturating_sub(1) / 2;
        match self {
            E => 1,
            V => g,
            EII => 1,
            VII => g,
            EEI => d,
            VEI => g + (d - 1),
            EVI => 1 + g * (d - 1),
            VVI => g * d,
            EEE => d * (d + 1) / 2,
            EEV => 1 + (d - 1) + g * rot,
            VEV => g + (d - 1) + g * rot,
            VVV => g * d * (d + 1) / 2,
        }
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CovarianceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = Self::UNIVARIATE.iter().chain(Self::MULTIVARIATE.iter());
        all.copied()
            .find(|m| m.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Free parameters of a `g`-component mixture: g−1 weights, g·d means and the
/// covariance parameters of `model`.
pub fn n_params(model: CovarianceModel, d: usize, g: usize) -> Result<usize> {
    model.check(d)?;
    if g == 0 {
        return Err(Error::InvalidArgument("mixture needs at least one component".into()));
    }
    Ok((g - 1) + g * d + model.covariance_params(d, g))
}

/// BIC in the larger-is-better convention: 2·loglik − df·log n.
pub fn bic(loglik: f64, df: usize, n: usize) -> f64 {
    2.0 * loglik - df as f64 * (n as f64).ln()
}
