use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelRef;
use crate::model::Usage;

/// Prices bundled with the crate; override with a `pricing.json` file.
pub const DEFAULT_PRICING_JSON: &str = include_str!("../../assets/pricing.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    /// USD per million input tokens.
    pub input: f64,
    /// USD per million output tokens.
    pub output: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PricingError {
    #[error("no pricing for {0}")]
    UnknownModelPricing(String),
    #[error("invalid pricing data: {0}")]
    Invalid(String),
}

/// `(provider, model)` → price. A `provider/*` entry covers every model of
/// that provider without an exact entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PricingTable {
    entries: BTreeMap<(String, String), ModelPrice>,
}

impl PricingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_PRICING_JSON).expect("bundled pricing parses")
    }

    pub fn from_json(text: &str) -> Result<Self, PricingError> {
        let raw: BTreeMap<String, ModelPrice> =
            serde_json::from_str(text).map_err(|e| PricingError::Invalid(e.to_string()))?;
        let mut table = Self::new();
        for (key, price) in raw {
            let (provider, model) = key
                .split_once('/')
                .ok_or_else(|| PricingError::Invalid(format!("key {key:?} is not provider/model")))?;
            table.insert(provider, model, price)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PricingError> {
        let text = std::fs::read_to_string(path).map_err(|e| PricingError::Invalid(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<String, ModelPrice> = self
            .entries
            .iter()
            .map(|((p, m), price)| (format!("{p}/{m}"), *price))
            .collect();
        serde_json::to_string_pretty(&raw).expect("pricing serializes")
    }

    pub fn insert(&mut self, provider: &str, model: &str, price: ModelPrice) -> Result<(), PricingError> {
        if !(price.input >= 0.0 && price.output >= 0.0) {
            return Err(PricingError::Invalid(format!(
                "{provider}/{model}: prices must be non-negative"
            )));
        }
        self.entries.insert((provider.to_string(), model.to_string()), price);
        Ok(())
    }

    pub fn with(mut self, provider: &str, model: &str, input: f64, output: f64) -> Self {
        self.insert(provider, model, ModelPrice { input, output })
            .expect("valid price");
        self
    }

    pub fn get(&self, provider: &str, model: &str) -> Option<ModelPrice> {
        self.entries
            .get(&(provider.to_string(), model.to_string()))
            .or_else(|| self.entries.get(&(provider.to_string(), "*".to_string())))
            .copied()
    }

    pub fn price_for(&self, model: &ModelRef) -> Option<ModelPrice> {
        self.get(&model.provider_id, &model.model_name)
    }

    /// Exact `(provider, model)` keys, skipping wildcard entries.
    pub fn models(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .keys()
            .filter(|(_, m)| m != "*")
            .map(|(p, m)| (p.as_str(), m.as_str()))
    }
}

/// `input × in_price / 1e6 + output × out_price / 1e6`, in USD.
pub fn compute_cost(usage: &Usage, model: &ModelRef, pricing: &PricingTable) -> Result<f64, PricingError> {
    let price = pricing
        .price_for(model)
        .ok_or_else(|| PricingError::UnknownModelPricing(model.key()))?;
    Ok(usage.input_tokens as f64 * price.input / 1e6 + usage.output_tokens as f64 * price.output / 1e6)
}
