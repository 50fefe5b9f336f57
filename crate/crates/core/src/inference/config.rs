use crate::error::{Error, Result};

/// Sampler settings. `iterations` counts burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct MCMCConfig {
    pub num_chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iterations between Robbins–Monro scale updates (burn-in only).
    pub adaptation_window: usize,
    pub base_seed: u64,
    /// Drop the likelihood from every acceptance ratio, so the chain targets
    /// the prior. Used to check the sampler's stationary distribution.
    pub prior_only: bool,
}

impl Default for MCMCConfig {
    fn default() -> Self {
        MCMCConfig {
            num_chains: 4,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            adaptation_window: 50,
            base_seed: 20_240_101,
            prior_only: false,
        }
    }
}

impl MCMCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_chains < 2 {
            return Err(Error::config(
                "num_chains",
                "at least two chains are needed for PSRF",
            ));
        }
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(
                "burn_in",
                format!(
                    "must be below iterations ({} >= {})",
                    self.burn_in, self.iterations
                ),
            ));
        }
        if self.adaptation_window == 0 {
            return Err(Error::config("adaptation_window", "must be at least 1"));
        }
        Ok(())
    }

    /// Stored draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = MCMCConfig::default();
        c.validate().unwrap();
        assert_eq!(c.draws_per_chain(), 3000);
    }

    #[test]
    fn invalid_settings() {
        let base = MCMCConfig::default();
        for bad in [
            MCMCConfig {
                num_chains: 1,
                ..base.clone()
            },
            MCMCConfig {
                thin: 0,
                ..base.clone()
            },
            MCMCConfig {
                burn_in: 20_000,
                ..base.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        }
    }
}
