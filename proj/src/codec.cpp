#include "itk/codec.hpp"

#include <cmath>
#include <string>

#include "itk/errors.hpp"

namespace itk {

namespace {

constexpr char kMagic[4] = {'I', 'T', 'K', '1'};
constexpr std::uint8_t kVersion = 1;

// MSB-first bit packer for the index payload.
class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void write(std::uint64_t value, int n_bits) {
        for (int i = n_bits - 1; i >= 0; --i) {
            if (bit_ == 0) out_.push_back(0);
            if ((value >> i) & 1ull)
                out_.back() |= static_cast<std::uint8_t>(0x80u >> bit_);
            bit_ = (bit_ + 1) % 8;
        }
    }

private:
    std::vector<std::uint8_t>& out_;
    int bit_ = 0;
};

class BitReader {
public:
    BitReader(const std::vector<std::uint8_t>& bytes, std::size_t offset)
        : bytes_(bytes), byte_(offset) {}

    std::uint64_t read(int n_bits) {
        std::uint64_t value = 0;
        for (int i = 0; i < n_bits; ++i) {
            if (byte_ >= bytes_.size())
                throw CodecError(CodecError::Kind::kTruncated,
                                 "stream truncated inside payload");
            std::uint64_t bit = (bytes_[byte_] >> (7 - bit_)) & 1u;
            value = (value << 1) | bit;
            if (++bit_ == 8) {
                bit_ = 0;
                ++byte_;
            }
        }
        return value;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t byte_;
    int bit_ = 0;
};

}  // namespace

std::size_t stream_size_bytes(int n_max, int n_x, const FsqConfig& config) {
    std::size_t header = 4 + 1 + 2 + 2 + 1 + config.dims();
    std::size_t mask_bytes = (n_max + 7) / 8;
    std::size_t payload =
        (static_cast<std::size_t>(n_x) * config.serialized_bits() + 7) / 8;
    return header + mask_bytes + payload;
}

std::vector<std::uint8_t> serialize(const std::vector<TokenCode>& codes,
                                    const TokenMask& mask, const FsqConfig& config) {
    config.validate();
    const int n_max = static_cast<int>(mask.size());
    const int n_x = mask.popcount();
    if (n_max < 1 || n_max > 0xFFFF)
        throw ValidationError("serialize: n_max must fit a 16-bit field");
    if (n_x < 1) throw ValidationError("serialize: empty keep-mask is not allowed");
    if (static_cast<int>(codes.size()) != n_x)
        throw ValidationError("serialize: code count does not match mask popcount");
    if (config.dims() > 255)
        throw ValidationError("serialize: too many FSQ dimensions");
    for (int l : config.levels)
        if (l > 255) throw ValidationError("serialize: level does not fit one byte");

    std::vector<std::uint8_t> out;
    out.reserve(stream_size_bytes(n_max, n_x, config));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(n_max & 0xFF));
    out.push_back(static_cast<std::uint8_t>(n_max >> 8));
    out.push_back(static_cast<std::uint8_t>(n_x & 0xFF));
    out.push_back(static_cast<std::uint8_t>(n_x >> 8));
    out.push_back(static_cast<std::uint8_t>(config.dims()));
    for (int l : config.levels) out.push_back(static_cast<std::uint8_t>(l));

    auto mask_bytes = mask.to_bytes();
    out.insert(out.end(), mask_bytes.begin(), mask_bytes.end());

    BitWriter writer(out);
    const int width = config.serialized_bits();
    for (const auto& code : codes) writer.write(index_encode(code, config), width);
    return out;
}

TokenStream deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
        throw CodecError(CodecError::Kind::kMagic, "bad magic, expected ITK1");
    if (bytes.size() < 5 || bytes[4] != kVersion)
        throw CodecError(CodecError::Kind::kVersion, "unsupported stream version");
    if (bytes.size() < 10)
        throw CodecError(CodecError::Kind::kTruncated, "stream shorter than fixed header");

    const int n_max = bytes[5] | (bytes[6] << 8);
    const int n_x = bytes[7] | (bytes[8] << 8);
    const int dims = bytes[9];
    if (n_max < 1)
        throw CodecError(CodecError::Kind::kBadValue, "n_max must be >= 1");
    if (dims < 1)
        throw CodecError(CodecError::Kind::kBadValue, "dimension count must be >= 1");

    std::size_t pos = 10;
    if (bytes.size() < pos + dims)
        throw CodecError(CodecError::Kind::kTruncated, "stream truncated inside levels");
    TokenStream stream;
    for (int i = 0; i < dims; ++i) {
        int level = bytes[pos++];
        if (level < 2)
            throw CodecError(CodecError::Kind::kBadValue, "level byte must be >= 2");
        stream.config.levels.push_back(level);
    }

    const std::size_t expected = stream_size_bytes(n_max, n_x, stream.config);
    if (bytes.size() != expected)
        throw CodecError(CodecError::Kind::kTruncated,
                         "stream has " + std::to_string(bytes.size()) +
                             " bytes, expected " + std::to_string(expected));

    const std::size_t mask_len = (n_max + 7) / 8;
    stream.mask = TokenMask::from_bytes(
        {bytes.begin() + pos, bytes.begin() + pos + mask_len}, n_max);
    pos += mask_len;
    if (stream.mask.popcount() != n_x)
        throw CodecError(CodecError::Kind::kPopcount,
                         "mask popcount does not match the n_x field");

    BitReader reader(bytes, pos);
    const int width = stream.config.serialized_bits();
    const std::uint64_t codebook = stream.config.codebook_size();
    for (int i = 0; i < n_x; ++i) {
        std::uint64_t idx = reader.read(width);
        if (idx >= codebook)
            throw CodecError(CodecError::Kind::kBadValue, "index exceeds codebook size");
        stream.codes.push_back(index_decode(idx, stream.config));
    }
    return stream;
}

double bpp16(int n_x, int n_max, double bits_per_token, bool include_mask) {
    if (n_max < 1 || n_x < 0 || n_x > n_max)
        throw ValidationError("bpp16: need 0 <= n_x <= n_max");
    if (!(bits_per_token > 0.0))
        throw ValidationError("bpp16: bits_per_token must be positive");
    double rate = (static_cast<double>(n_x) / n_max) * (bits_per_token / 16.0);
    return include_mask ? rate + 1.0 / 16.0 : rate;
}

double mse(const std::vector<double>& x, const std::vector<double>& x_hat) {
    if (x.size() != x_hat.size() || x.empty())
        throw ValidationError("mse: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - x_hat[i];
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

double psnr(const std::vector<double>& x, const std::vector<double>& x_hat,
            double max_val) {
    if (!(max_val > 0.0)) throw ValidationError("psnr: max_val must be positive");
    double err = mse(x, x_hat);
    if (err == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(max_val * max_val / err);
}

}  // namespace itk
