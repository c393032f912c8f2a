//! Hidden Markov tensor model: regime-specific latent spaces for a sequence
//! of network layers, fitted by Gibbs sampling.
//!
//! ```text
//! B_t = β + U_{S_t} diag(v_t) U_{S_t}ᵀ + E_t,   E_t iid N(0, σ²_{S_t})
//! ```
//!
//! `S` is a non-ergodic Markov chain that starts in the first regime, can
//! only stay or move to the next one, and must end in the last.
//! Random numbers come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with `seed_from_u64`.

mod chain;
mod conditionals;
mod config;
pub mod dist;
mod ffbs;
mod gram;
mod state;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use chain::{
    gibbs_sweep, init_chain, least_squares_partition, path_loglik, prior_mean_transition, run_chain,
    run_from, FitResult,
};
pub use conditionals::{
    beta_posterior, mu_posterior, psi_u_posterior, psi_v_posterior, regime_ssr,
    sample_beta, sample_latent_positions, sample_latent_weights, sample_sigma2,
    sample_transition_matrix, sigma2_posterior, transition_posterior, Target, BETA_SHAPE_FLOOR,
};
pub use config::{HyperParams, ModelConfig};
pub use ffbs::{
    ffbs_sample_states, forward_filter, log_layer_likelihood, log_likelihood_table,
    perturb_singleton_states, sample_path, ForwardPass,
};
pub use gram::{canonical_signs, gram_schmidt};
pub use state::{check_path, max_off_diagonal, ChainState, DrawRecord};


pub type ChainRng = ChaCha20Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha20Rng::seed_from_u64(seed)
}
