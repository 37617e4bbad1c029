use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters shared by the agent and density models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ageing rate (age per unit time).
    pub tau: f64,
    /// Opinion noise intensity.
    pub sigma: f64,
    /// Age at which opinions are reset.
    pub max_age: f64,
    pub opinion_lo: f64,
    pub opinion_hi: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            tau: 0.0,
            sigma: 0.0,
            max_age: 1.0,
            opinion_lo: -1.0,
            opinion_hi: 1.0,
        }
    }
}

impl ModelParams {
    pub fn new(tau: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            tau,
            sigma,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau, self.sigma, self.max_age, self.opinion_lo, self.opinion_hi]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidParams(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParams(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.max_age <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "max_age must be > 0, got {}",
                self.max_age
            )));
        }
        if self.opinion_lo >= self.opinion_hi {
            return Err(Error::InvalidParams(format!(
                "opinion domain [{}, {}] is empty",
                self.opinion_lo, self.opinion_hi
            )));
        }
        Ok(())
    }

    pub fn opinion_width(&self) -> f64 {
        self.opinion_hi - self.opinion_lo
    }

    /// True when the opinion domain is centred at zero.
    pub fn is_symmetric_domain(&self) -> bool {
        self.opinion_lo == -self.opinion_hi
    }
}
