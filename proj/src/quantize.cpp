#include "cogc/quantize.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cogc::quant {

namespace {
constexpr std::uint32_t kPayloadMagic = 0x43515631;  // "CQV1"
}

void QuantizerConfig::validate() const {
    if (bits < 1 || bits > 16) throw InvalidParams("quantizer bits must be in [1, 16]");
    if (lower < 0.0) throw InvalidParams("quantizer lower bound must be >= 0");
    if (!(upper > lower)) throw InvalidParams("quantizer upper bound must exceed lower");
}

QuantizedVector quantize_vector(const Eigen::VectorXd& input, const QuantizerConfig& cfg,
                                std::uint64_t stream_key) {
    cfg.validate();
    const auto dim = input.size();
    const int top = cfg.knob_count() - 1;
    const double gap = cfg.knob_gap();

    QuantizedVector out;
    out.indices.resize(dim);
    out.signs.resize(dim);
    out.values.resize(dim);

    rng::Stream stream(stream_key);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double v = input(i);
        const bool negative = v < 0.0;
        double mag = std::abs(v);
        if (mag < cfg.lower || mag > cfg.upper) {
            mag = std::clamp(mag, cfg.lower, cfg.upper);
            ++out.clamped;
        }
        int idx = static_cast<int>((mag - cfg.lower) / gap);
        idx = std::clamp(idx, 0, top - 1);
        const double low_knob = cfg.knob(idx);
        const double frac = (mag - low_knob) / gap;  // P(round up)
        const double u = stream.next_u01();
        if (u < frac) ++idx;
        const double knob = cfg.knob(idx);
        out.indices[i] = static_cast<std::uint16_t>(idx);
        out.signs[i] = negative ? 1 : 0;
        out.values(i) = negative ? -knob : knob;
    }
    return out;
}

Eigen::VectorXd dequantize(const std::vector<std::uint16_t>& indices,
                           const std::vector<std::uint8_t>& signs,
                           const QuantizerConfig& cfg) {
    cfg.validate();
    if (indices.size() != signs.size())
        throw InvalidParams("index and sign lengths differ");
    Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= cfg.knob_count())
            throw IndexOutOfRange("knob index " + std::to_string(indices[i]) +
                                  " out of range for B=" + std::to_string(cfg.bits));
        const double knob = cfg.knob(indices[i]);
        out(static_cast<Eigen::Index>(i)) = signs[i] ? -knob : knob;
    }
    return out;
}

QuantStats lemma_bounds(const Eigen::VectorXd& lower_envelope,
                        const Eigen::VectorXd& upper_envelope,
                        const QuantizerConfig& cfg) {
    cfg.validate();
    if (lower_envelope.size() != upper_envelope.size())
        throw InvalidParams("envelope dimensions differ");
    QuantStats stats;
    stats.delta =
        std::sqrt(0.25 * (upper_envelope - lower_envelope).squaredNorm());
    stats.j_bound = stats.delta / (cfg.knob_count() - 1);
    return stats;
}

std::int64_t payload_bits(std::int64_t dimension, const QuantizerConfig& cfg) {
    return dimension * (cfg.bits + 1);
}

std::size_t payload_header_bytes() {
    return sizeof(std::uint32_t) + sizeof(std::uint16_t) + sizeof(std::uint64_t) +
           2 * sizeof(double);
}

std::vector<std::uint8_t> pack_payload(const QuantizedVector& qv,
                                       const QuantizerConfig& cfg) {
    cfg.validate();
    const std::uint64_t dim = qv.indices.size();
    const int code_bits = cfg.bits + 1;
    const std::size_t body = (dim * code_bits + 7) / 8;
    std::vector<std::uint8_t> bytes(payload_header_bytes() + body, 0);

    std::size_t off = 0;
    auto put = [&](const void* src, std::size_t n) {
        std::memcpy(bytes.data() + off, src, n);
        off += n;
    };
    const std::uint16_t bits16 = static_cast<std::uint16_t>(cfg.bits);
    put(&kPayloadMagic, sizeof(kPayloadMagic));
    put(&bits16, sizeof(bits16));
    put(&dim, sizeof(dim));
    put(&cfg.lower, sizeof(cfg.lower));
    put(&cfg.upper, sizeof(cfg.upper));

    std::uint8_t* body_ptr = bytes.data() + payload_header_bytes();
    std::size_t bit_pos = 0;
    for (std::uint64_t i = 0; i < dim; ++i) {
        const std::uint32_t code =
            qv.indices[i] | (static_cast<std::uint32_t>(qv.signs[i]) << cfg.bits);
        for (int b = 0; b < code_bits; ++b, ++bit_pos) {
            if ((code >> b) & 1u) body_ptr[bit_pos >> 3] |= std::uint8_t(1u << (bit_pos & 7));
        }
    }
    return bytes;
}

QuantizedVector unpack_payload(const std::vector<std::uint8_t>& bytes,
                               QuantizerConfig* cfg_out) {
    if (bytes.size() < payload_header_bytes())
        throw InvalidParams("payload too short for header");
    std::size_t off = 0;
    auto get = [&](void* dst, std::size_t n) {
        std::memcpy(dst, bytes.data() + off, n);
        off += n;
    };
    std::uint32_t magic = 0;
    std::uint16_t bits16 = 0;
    std::uint64_t dim = 0;
    QuantizerConfig cfg;
    get(&magic, sizeof(magic));
    if (magic != kPayloadMagic) throw InvalidParams("payload magic mismatch");
    get(&bits16, sizeof(bits16));
    cfg.bits = bits16;
    get(&dim, sizeof(dim));
    get(&cfg.lower, sizeof(cfg.lower));
    get(&cfg.upper, sizeof(cfg.upper));
    cfg.validate();

    const int code_bits = cfg.bits + 1;
    const std::size_t body = (dim * code_bits + 7) / 8;
    if (bytes.size() != payload_header_bytes() + body)
        throw InvalidParams("payload body length mismatch");

    QuantizedVector qv;
    qv.indices.resize(dim);
    qv.signs.resize(dim);
    const std::uint8_t* body_ptr = bytes.data() + payload_header_bytes();
    std::size_t bit_pos = 0;
    for (std::uint64_t i = 0; i < dim; ++i) {
        std::uint32_t code = 0;
        for (int b = 0; b < code_bits; ++b, ++bit_pos) {
            if ((body_ptr[bit_pos >> 3] >> (bit_pos & 7)) & 1u) code |= 1u << b;
        }
        qv.indices[i] = static_cast<std::uint16_t>(code & ((1u << cfg.bits) - 1));
        qv.signs[i] = static_cast<std::uint8_t>(code >> cfg.bits);
    }
    qv.values = dequantize(qv.indices, qv.signs, cfg);
    if (cfg_out) *cfg_out = cfg;
    return qv;
}

}  // namespace cogc::quant
