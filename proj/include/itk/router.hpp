#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace itk {

/// ELBO-proxy routing state. `ema_nll` tracks the running mean of the
/// per-sample negative-ELBO proxy (total squared reconstruction error);
/// the router converts a sample's proxy into a token budget.
struct RouterState {
    double beta = 0.0;                 // tokens carried by the mean-complexity sample
    std::optional<double> ema_nll;     // unset until the first update
    double ema_decay = 0.99;
    int n_max = 0;
    int n_min = 0;                     // defaults to ceil(n_max / 16)
    std::vector<double> flex_betas;    // flex-mode compression factors

    static RouterState make(double beta, int n_max);

    void validate() const;
};

// ema <- nll on the first call, else decay * ema + (1 - decay) * nll.
void update_ema(RouterState& state, double nll);

// N_x = clamp(round(beta * nll_x / ema_nll), n_min, n_max), with
// round-half-away-from-zero. `denominator` overrides the EMA when the
// caller normalizes by an evaluation-set mean instead.
int route(const RouterState& state, double nll_x,
          std::optional<double> denominator = std::nullopt);

// beta = n_max * (bpp16 - 1/16) * (16 / bits_per_token); the 1/16 term is
// the keep-mask storage cost.
double beta_from_bpp16(double bpp16, int n_max, double bits_per_token);

// Draw beta uniformly from flex_betas (seeded, deterministic), then route.
int route_flex(const RouterState& state, double nll_x, std::uint64_t rng_seed,
               std::optional<double> denominator = std::nullopt);

struct SearchRouteResult {
    int n_x = 0;
    int extra_nfes = 0;        // probe invocations
    bool reached = true;       // false when even n_max misses the target
    int monotonicity_violations = 0;
};

// Threshold-search baseline. For block < n_max, binary search over the
// block-aligned lengths {block, 2*block, ..., n_max} for the minimal length
// whose (monotonicity-clamped) probe loss meets target_loss. For
// block == n_max there are no block choices and the baseline bisects within
// the block at a granularity of 2 tokens, reusing the already-known
// full-length loss; that is the accounting that yields log2(4096) - 1 = 11
// probes for a 4096-token block.
SearchRouteResult route_by_search(double target_loss,
                                  const std::function<double(int)>& probe,
                                  int n_max, int block);

}  // namespace itk
