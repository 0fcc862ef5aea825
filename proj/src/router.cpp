#include "itk/router.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "itk/errors.hpp"
#include "itk/rng.hpp"

namespace itk {

RouterState RouterState::make(double beta, int n_max) {
    RouterState state;
    state.beta = beta;
    state.n_max = n_max;
    state.n_min = (n_max + 15) / 16;
    state.validate();
    return state;
}

void RouterState::validate() const {
    if (n_max < 1 || n_min < 1 || n_min > n_max)
        throw ValidationError("RouterState: need 1 <= n_min <= n_max");
    if (!(beta > 0.0)) throw ValidationError("RouterState: beta must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
        throw ValidationError("RouterState: ema_decay must be in (0, 1)");
    for (double b : flex_betas)
        if (!(b > 0.0)) throw ValidationError("RouterState: flex betas must be positive");
    if (ema_nll && !(*ema_nll > 0.0))
        throw ValidationError("RouterState: ema_nll must be positive once set");
}

void update_ema(RouterState& state, double nll) {
    if (!(nll > 0.0)) throw ValidationError("update_ema: nll must be positive");
    if (!state.ema_nll)
        state.ema_nll = nll;
    else
        state.ema_nll = state.ema_decay * *state.ema_nll + (1.0 - state.ema_decay) * nll;
}

int route(const RouterState& state, double nll_x, std::optional<double> denominator) {
    state.validate();
    double denom = denominator.value_or(state.ema_nll.value_or(0.0));
    if (!(denom > 0.0))
        throw StateError("route: EMA not initialized and no denominator given");
    if (!(nll_x > 0.0)) throw ValidationError("route: nll must be positive");
    double raw = std::round(state.beta * nll_x / denom);  // half away from zero
    long n = std::lround(raw);
    return static_cast<int>(std::clamp<long>(n, state.n_min, state.n_max));
}

double beta_from_bpp16(double bpp16, int n_max, double bits_per_token) {
    if (n_max < 1) throw ValidationError("beta_from_bpp16: n_max must be >= 1");
    if (!(bits_per_token > 0.0))
        throw ValidationError("beta_from_bpp16: bits_per_token must be positive");
    if (!(bpp16 > 1.0 / 16.0))
        throw ValidationError("beta_from_bpp16: budget " + std::to_string(bpp16) +
                              " does not cover the 1/16 mask overhead");
    return n_max * (bpp16 - 1.0 / 16.0) * (16.0 / bits_per_token);
}

int route_flex(const RouterState& state, double nll_x, std::uint64_t rng_seed,
               std::optional<double> denominator) {
    if (state.flex_betas.empty())
        throw ValidationError("route_flex: flex beta set is empty");
    SplitMix64 rng(rng_seed ^ 0xF1E2C3B4A5968778ull);
    RouterState drawn = state;
    drawn.beta = state.flex_betas[rng.next_below(state.flex_betas.size())];
    return route(drawn, nll_x, denominator);
}

SearchRouteResult route_by_search(double target_loss,
                                  const std::function<double(int)>& probe,
                                  int n_max, int block) {
    if (n_max < 1 || block < 1 || block > n_max || n_max % block != 0)
        throw ValidationError("route_by_search: block must divide n_max");
    const int n_min = (n_max + 15) / 16;

    SearchRouteResult res;
    std::map<int, double> seen;  // clamped probe values by length
    auto clamped_probe = [&](int n) {
        double raw = probe(n);
        ++res.extra_nfes;
        double v = raw;
        for (const auto& [m, val] : seen) {
            if (m >= n) break;
            v = std::min(v, val);  // loss may not rise as tokens are added
        }
        if (v < raw) ++res.monotonicity_violations;
        seen[n] = v;
        return v;
    };

    if (block == n_max) {
        // Within-block bisection at granularity 2; the full-length loss is
        // already known from the standard pass and is not re-probed.
        int lo = 0, hi = n_max;
        while (hi - lo > 2) {
            int mid = (lo + hi) / 2;
            if (clamped_probe(mid) <= target_loss)
                hi = mid;
            else
                lo = mid;
        }
        if (hi == n_max) res.reached = clamped_probe(n_max) <= target_loss;
        res.n_x = std::max(hi, n_min);
        return res;
    }

    // Binary search over block multiples for the minimal passing length.
    const int k_total = n_max / block;
    int lo = std::max(1, (n_min + block - 1) / block), hi = k_total;
    while (lo < hi) {
        int mid = lo + (hi - lo) / 2;
        if (clamped_probe(mid * block) <= target_loss)
            hi = mid;
        else
            lo = mid + 1;
    }
    int answer = lo * block;
    if (!seen.count(answer)) clamped_probe(answer);
    res.reached = seen[answer] <= target_loss;
    res.n_x = std::max(answer, n_min);
    return res;
}

}  // namespace itk
