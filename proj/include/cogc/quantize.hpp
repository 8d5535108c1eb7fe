#pragma once

// Stochastic quantization of model-update vectors.
//
// Magnitudes are randomly rounded to one of 2^B uniformly spaced knobs in
// [lower, upper]; the sign travels as one extra bit, so each coordinate costs
// exactly B+1 bits on the wire. Rounding probabilities are proportional to
// the distance to the bracketing knobs, which makes the quantizer unbiased.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace cogc::quant {

struct QuantizerConfig {
    int bits = 8;          // B, knob index bits; one sign bit is added on top
    double lower = 0.0;    // lowest knob magnitude, >= 0
    double upper = 1.0;    // highest knob magnitude

    int knob_count() const { return 1 << bits; }
    double knob_gap() const { return (upper - lower) / (knob_count() - 1); }
    double knob(int index) const { return lower + index * knob_gap(); }
    void validate() const;
};

// Lemma-style distortion summary for one client-round: delta is half the
// root-sum-square of the per-coordinate accumulated-gradient ranges and
// j_bound = delta / (2^B - 1).
struct QuantStats {
    double delta = 0.0;
    double j_bound = 0.0;
};

struct QuantizedVector {
    std::vector<std::uint16_t> indices;  // knob index per coordinate
    std::vector<std::uint8_t> signs;     // 1 = negative
    Eigen::VectorXd values;              // sign * knob, the dequantized payload
    std::int64_t clamped = 0;            // coordinates clamped into [lower, upper]
};

// Stochastically rounds each coordinate; magnitudes outside [lower, upper]
// are clamped first. Consumes exactly one uniform draw per coordinate.
QuantizedVector quantize_vector(const Eigen::VectorXd& input, const QuantizerConfig& cfg,
                                std::uint64_t stream_key);

// Knob lookup; bit-exact inverse of the values produced by quantize_vector.
Eigen::VectorXd dequantize(const std::vector<std::uint16_t>& indices,
                           const std::vector<std::uint8_t>& signs,
                           const QuantizerConfig& cfg);

// delta/J from coordinate-wise envelopes of the accumulated gradient sum.
QuantStats lemma_bounds(const Eigen::VectorXd& lower_envelope,
                        const Eigen::VectorXd& upper_envelope,
                        const QuantizerConfig& cfg);

// Mean-squared-error budget the quantizer admits for a round-delta whose
// gradient-sum envelopes yielded `stats`, at learning rate eta.
inline double lemma_mse_bound(const QuantStats& stats, double eta) {
    return eta * eta * stats.j_bound * stats.j_bound;
}

// Little-endian bit-packed payload: a fixed header (magic, bits, dimension,
// bounds) followed by ceil(d*(B+1)/8) code bytes. Coordinate codes are laid
// out low-bit first as (index | sign << B).
std::vector<std::uint8_t> pack_payload(const QuantizedVector& qv,
                                       const QuantizerConfig& cfg);
QuantizedVector unpack_payload(const std::vector<std::uint8_t>& bytes,
                               QuantizerConfig* cfg_out = nullptr);

// Exact wire cost in bits, excluding the header.
std::int64_t payload_bits(std::int64_t dimension, const QuantizerConfig& cfg);
std::size_t payload_header_bytes();

}  // namespace cogc::quant
