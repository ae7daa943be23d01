//! Synthetic option market: Fourier pricing, parity and noisy quote sets.

pub mod pricing;
pub mod quotes;

pub use pricing::{parity_split, price_ot, FourierPricer, PricingError};
pub use quotes::{
    exp_unweight, exp_weight, noise_level, spacings, synthesize_quotes, synthesize_quotes_for, MarketConfig, NoiseForm,
    OptionQuoteSet, QuoteError,
};
