//! Adversarial-robustness laboratory: region-of-interest extraction, a small
//! differentiable classifier, white-box attacks, defences, metrics and an
//! experiment harness.

pub mod attacks;
pub mod bench;
pub mod defences;
pub mod gradnet;
pub mod imagekit;
pub mod metrics;
