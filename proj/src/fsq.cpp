#include "itk/fsq.hpp"

#include <algorithm>
#include <cmath>

#include "itk/errors.hpp"

namespace itk {

std::uint64_t FsqConfig::codebook_size() const {
    std::uint64_t size = 1;
    for (int l : levels) size *= static_cast<std::uint64_t>(l);
    return size;
}

int FsqConfig::serialized_bits() const {
    std::uint64_t size = codebook_size();
    int bits = 0;
    while ((1ull << bits) < size) ++bits;
    return bits;
}

double FsqConfig::exact_bits() const {
    return std::log2(static_cast<double>(codebook_size()));
}

void FsqConfig::validate() const {
    if (levels.empty()) throw ValidationError("FsqConfig: need at least 1 dimension");
    for (int l : levels)
        if (l < 2) throw ValidationError("FsqConfig: every level must be >= 2");
    if (codebook_size() < 2) throw ValidationError("FsqConfig: codebook too small");
}

FsqConfig default_fsq_config() { return FsqConfig{{8, 8, 8, 5, 5, 5}}; }

TokenCode quantize(std::span<const double> latent, const FsqConfig& config) {
    config.validate();
    if (latent.size() != config.dims())
        throw ValidationError("quantize: latent dimension mismatch");
    TokenCode code;
    code.digits.resize(config.dims());
    for (std::size_t i = 0; i < config.dims(); ++i) {
        const int levels = config.levels[i];
        double v = std::clamp(latent[i], -1.0, 1.0);
        // grid value of digit c is 2c/(L-1) - 1; invert and round half up
        double raw = (v + 1.0) * (levels - 1) / 2.0;
        int digit = static_cast<int>(std::floor(raw + 0.5));
        code.digits[i] = std::clamp(digit, 0, levels - 1);
    }
    return code;
}

std::vector<double> dequantize(const TokenCode& code, const FsqConfig& config) {
    config.validate();
    if (code.digits.size() != config.dims())
        throw ValidationError("dequantize: code dimension mismatch");
    std::vector<double> out(config.dims());
    for (std::size_t i = 0; i < config.dims(); ++i) {
        const int levels = config.levels[i];
        const int digit = code.digits[i];
        if (digit < 0 || digit >= levels)
            throw ValidationError("dequantize: digit out of range");
        out[i] = 2.0 * digit / (levels - 1) - 1.0;
    }
    return out;
}

double fsq_surrogate(double v) { return std::clamp(v, -1.0, 1.0); }

double fsq_surrogate_grad(double v) { return (v > -1.0 && v < 1.0) ? 1.0 : 0.0; }

std::uint64_t index_encode(const TokenCode& code, const FsqConfig& config) {
    config.validate();
    if (code.digits.size() != config.dims())
        throw ValidationError("index_encode: code dimension mismatch");
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < config.dims(); ++i) {
        const int digit = code.digits[i];
        if (digit < 0 || digit >= config.levels[i])
            throw ValidationError("index_encode: digit out of range");
        idx = idx * static_cast<std::uint64_t>(config.levels[i]) + digit;
    }
    return idx;
}

TokenCode index_decode(std::uint64_t index, const FsqConfig& config) {
    config.validate();
    if (index >= config.codebook_size())
        throw ValidationError("index_decode: index out of range");
    TokenCode code;
    code.digits.resize(config.dims());
    for (std::size_t i = config.dims(); i-- > 0;) {
        auto levels = static_cast<std::uint64_t>(config.levels[i]);
        code.digits[i] = static_cast<int>(index % levels);
        index /= levels;
    }
    return code;
}

}  // namespace itk
