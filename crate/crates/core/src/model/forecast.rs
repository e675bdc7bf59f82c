use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A participant's view of future prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceForecast {
    pub owner: String,
    /// €/MWh per hour.
    pub rho: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PriceForecast {
    /// Builds a forecast by perturbing a reference price series once.
    pub fn noisy(owner: impl Into<String>, reference: &[f64], noise_sigma: f64, seed: u64) -> Self {
        Self {
            owner: owner.into(),
            rho: apply_forecast_noise(reference, noise_sigma, seed),
            noise_sigma,
            seed,
        }
    }
}

/// Multiplies each element by `1 + e_t` with `e_t ~ N(0, sigma)`, reproducibly per seed.
pub fn apply_forecast_noise(series: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return series.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("noise sigma must be finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    series.iter().map(|x| x * (1.0 + normal.sample(&mut rng))).collect()
}

/// Derives an independent stream seed from the root seed, a stage label and an index.
///
/// The label is hashed with FNV-1a and mixed with the root and index by
/// SplitMix64, so seeds are stable across platforms and releases.
pub fn derive_seed(root: u64, stage: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(root ^ h) ^ index)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
