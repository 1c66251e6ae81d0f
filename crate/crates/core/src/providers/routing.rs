use super::{ModelRef, PricingTable, ProviderError};

/// Cheapest candidate by summed input+output price per million tokens.
/// Candidates whose credential is missing (per `has_credential`) or that
/// have no pricing are skipped; ties go to the lexicographically smaller
/// provider id, then model name.
pub fn route_cheapest<F>(
    candidates: &[ModelRef],
    pricing: &PricingTable,
    has_credential: F,
) -> Result<ModelRef, ProviderError>
where
    F: Fn(&str) -> bool,
{
    candidates
        .iter()
        .filter(|m| m.api_key_env.is_empty() || has_credential(&m.api_key_env))
        .filter_map(|m| pricing.price_for(m).map(|p| (p.input + p.output, m)))
        .min_by(|(pa, a), (pb, b)| {
            pa.total_cmp(pb)
                .then_with(|| a.provider_id.cmp(&b.provider_id))
                .then_with(|| a.model_name.cmp(&b.model_name))
        })
        .map(|(_, m)| m.clone())
        .ok_or(ProviderError::NoProviderConfigured)
}
