#include "itk/source.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "itk/errors.hpp"
#include "itk/rng.hpp"

namespace itk {

double SplitMix64::next_gaussian() {
    // Box-Muller; u1 kept away from 0.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void DiscreteSource::validate() const {
    if (probs.size() < 2)
        throw ValidationError("DiscreteSource: need at least 2 items");
    double sum = 0.0, comp = 0.0;
    for (double p : probs) {
        if (!(p > 0.0))
            throw ValidationError("DiscreteSource: probabilities must be strictly positive");
        // Kahan accumulation so the 1e-9 sum check is about the data, not
        // about summation order.
        double y = p - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("DiscreteSource: probabilities sum to " + std::to_string(sum) +
                              ", expected 1 within 1e-9");
    if (dyadic_exponents && dyadic_exponents->size() != probs.size())
        throw ValidationError("DiscreteSource: dyadic exponent count mismatch");
}

double entropy(const DiscreteSource& src, int base) {
    src.validate();
    if (base < 2) throw ValidationError("entropy: base must be >= 2");
    const double log_base = std::log(static_cast<double>(base));
    double h = 0.0;
    for (double p : src.probs) h -= p * std::log(p);
    return h / log_base;
}

DiscreteSource geometric_source(int m) {
    if (m < 1 || m > 10)
        throw ValidationError("geometric_source: M must be in [1, 10]");
    const int n = 1 << m;
    DiscreteSource src;
    src.probs.resize(n);
    std::vector<int> exps(n);
    for (int j = 1; j <= n - 1; ++j) {
        src.probs[j - 1] = std::ldexp(1.0, -j);
        exps[j - 1] = j;
    }
    src.probs[n - 1] = src.probs[n - 2];  // duplicate the last mass
    exps[n - 1] = n - 1;
    src.dyadic_exponents = std::move(exps);
    src.validate();
    return src;
}

DiscreteSource parse_source(const std::string& text) {
    if (text.rfind("geometric:", 0) == 0) {
        int m = 0;
        try {
            m = std::stoi(text.substr(10));
        } catch (const std::exception&) {
            throw ValidationError("parse_source: bad geometric spec '" + text + "'");
        }
        return geometric_source(m);
    }
    DiscreteSource src;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            src.probs.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ValidationError("parse_source: bad probability '" + tok + "'");
        }
    }
    src.validate();
    return src;
}

ToySignal sample_signal_with_segments(std::uint64_t seed, int segment_count,
                                      double noise_sigma) {
    if (segment_count < 1 || segment_count > kMaxSegments)
        throw ValidationError("sample_signal: segment_count out of [1, 8]");
    if (noise_sigma < 0.0)
        throw ValidationError("sample_signal: noise_sigma must be >= 0");

    SplitMix64 rng(seed ^ 0xD1F4ED7A9C0B5E63ull);

    // Distinct change points from {1..63} via partial Fisher-Yates.
    std::vector<int> positions(kSignalLength - 1);
    std::iota(positions.begin(), positions.end(), 1);
    std::vector<int> cuts;
    for (int i = 0; i < segment_count - 1; ++i) {
        std::size_t j = i + rng.next_below(positions.size() - i);
        std::swap(positions[i], positions[j]);
        cuts.push_back(positions[i]);
    }
    cuts.push_back(kSignalLength);
    std::sort(cuts.begin(), cuts.end());

    ToySignal sig;
    sig.seed = seed;
    sig.segment_count = segment_count;
    sig.values.resize(kSignalLength);
    int pos = 0;
    for (int cut : cuts) {
        double level = rng.next_double(-1.0, 1.0);
        for (; pos < cut; ++pos) sig.values[pos] = level;
    }
    if (noise_sigma > 0.0) {
        for (double& v : sig.values)
            v = std::clamp(v + noise_sigma * rng.next_gaussian(), -1.0, 1.0);
    }
    return sig;
}

ToySignal sample_signal(std::uint64_t seed, double noise_sigma) {
    SplitMix64 rng(seed ^ 0x5AF3B1C6E8D29407ull);
    int k = 1 + static_cast<int>(rng.next_below(kMaxSegments));
    return sample_signal_with_segments(seed, k, noise_sigma);
}

}  // namespace itk
