use super::WireDialect;

/// Connection defaults for a provider family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownProvider {
    pub id: &'static str,
    pub base_url: &'static str,
    pub api_key_env: &'static str,
    pub dialect: WireDialect,
}

pub const KNOWN_PROVIDERS: &[KnownProvider] = &[
    KnownProvider {
        id: "anthropic",
        base_url: "https://api.anthropic.com/v1",
        api_key_env: "ANTHROPIC_API_KEY",
        dialect: WireDialect::AnthropicMessages,
    },
    KnownProvider {
        id: "openai",
        base_url: "https://api.openai.com/v1",
        api_key_env: "OPENAI_API_KEY",
        dialect: WireDialect::OpenAiChat,
    },
    KnownProvider {
        id: "google",
        base_url: "https://generativelanguage.googleapis.com/v1beta/openai",
        api_key_env: "GOOGLE_API_KEY",
        dialect: WireDialect::OpenAiChat,
    },
    KnownProvider {
        id: "groq",
        base_url: "https://api.groq.com/openai/v1",
        api_key_env: "GROQ_API_KEY",
        dialect: WireDialect::OpenAiChat,
    },
    KnownProvider {
        id: "mistral",
        base_url: "https://api.mistral.ai/v1",
        api_key_env: "MISTRAL_API_KEY",
        dialect: WireDialect::OpenAiChat,
    },
    KnownProvider {
        id: "ollama",
        base_url: "http://localhost:11434/v1",
        api_key_env: "",
        dialect: WireDialect::OpenAiChat,
    },
];

pub fn known_provider(id: &str) -> Option<&'static KnownProvider> {
    KNOWN_PROVIDERS.iter().find(|p| p.id == id)
}
