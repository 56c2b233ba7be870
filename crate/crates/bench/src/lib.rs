//! Fixtures shared by the benchmarks.

use feedsim_core::model::sentiment_confusion;
use feedsim_core::SystemConfig;

/// The first `n` users of the 10-user reference instance.
pub fn reference_prefix(n: usize) -> SystemConfig {
    let stakes = &feedsim_core::model::REFERENCE_STAKES[..n];
    SystemConfig::with_stakes(sentiment_confusion(), stakes).expect("prefix is a valid config")
}
