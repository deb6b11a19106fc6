pub mod source;
pub mod verifier;
pub mod reward;
pub mod grpo;
pub mod metrics;
pub mod pipeline;
