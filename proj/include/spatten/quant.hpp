#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "spatten/core.hpp"

namespace spatten {

// quantize() rounds half away from zero (std::lround semantics), which keeps
// the coder symmetric around zero.
inline constexpr const char* kQuantRoundingMode = "half-away-from-zero";

struct QuantParams {
    double scale = 1.0;  // real value per integer step
    int msb_bits = 8;
    int lsb_bits = 4;
    bool is_signed = true;

    int total_bits() const { return msb_bits + lsb_bits; }
    std::int32_t qmax() const { return (std::int32_t{1} << (total_bits() - 1)) - 1; }

    void validate() const {
        check_arg(msb_bits == 4 || msb_bits == 6 || msb_bits == 8 || msb_bits == 10 || msb_bits == 12,
                  "msb_bits must be one of 4, 6, 8, 10, 12");
        check_arg(lsb_bits == 0 || lsb_bits == 4, "lsb_bits must be 0 or 4");
        check_arg(scale > 0.0, "scale must be positive");
        check_arg(is_signed, "only signed codes are supported");
    }
};

// Integer-coded tensor with a per-tensor scale. Codes are two's complement in
// total_bits() and always fit int16_t (max split is 12+4).
struct QuantTensor {
    std::vector<std::int16_t> codes;  // row-major
    QuantParams params;
    std::size_t rows = 0, cols = 0;

    std::int16_t code(std::size_t r, std::size_t c) const { return codes[r * cols + c]; }
    std::size_t size() const { return codes.size(); }
};

inline QuantTensor quantize(const Matrix& x, int msb_bits, int lsb_bits) {
    QuantParams p;
    p.msb_bits = msb_bits;
    p.lsb_bits = lsb_bits;
    p.scale = 1.0;
    p.validate();

    double max_abs = 0.0;
    for (double v : x.flat()) {
        check_arg(std::isfinite(v), "quantize: input must be finite");
        max_abs = std::max(max_abs, std::abs(v));
    }
    const std::int32_t qmax = p.qmax();
    // All-zero tensors keep scale 1 so codes stay well defined and round-trip.
    p.scale = max_abs > 0.0 ? max_abs / static_cast<double>(qmax) : 1.0;

    QuantTensor t;
    t.params = p;
    t.rows = x.rows();
    t.cols = x.cols();
    t.codes.resize(x.size());
    std::size_t i = 0;
    for (double v : x.flat()) {
        long c = std::lround(v / p.scale);
        if (c > qmax) c = qmax;
        if (c < -qmax) c = -qmax;
        t.codes[i++] = static_cast<std::int16_t>(c);
    }
    return t;
}

// total_bits names one of the msb+lsb settings 4+4, 6+4, 8+4, 10+4, 12+4.
inline QuantTensor quantize(const Matrix& x, int total_bits) {
    check_arg(total_bits == 8 || total_bits == 10 || total_bits == 12 || total_bits == 14 || total_bits == 16,
              "total_bits must be one of 8, 10, 12, 14, 16");
    return quantize(x, total_bits - 4, 4);
}

inline Matrix dequantize(const QuantTensor& t) {
    Matrix m(t.rows, t.cols);
    for (std::size_t i = 0; i < t.codes.size(); ++i) m.flat()[i] = t.codes[i] * t.params.scale;
    return m;
}

// msb = arithmetic shift right, lsb = low unsigned bits, so that
// (msb << lsb_bits) | lsb reassembles the code exactly.
inline std::pair<std::vector<std::int16_t>, std::vector<std::int16_t>> split_msb_lsb(const QuantTensor& t) {
    check_arg(t.params.lsb_bits > 0, "split_msb_lsb: lsb_bits must be > 0");
    const int lsb = t.params.lsb_bits;
    const std::uint16_t mask = static_cast<std::uint16_t>((1u << lsb) - 1u);
    std::vector<std::int16_t> msb(t.codes.size()), low(t.codes.size());
    for (std::size_t i = 0; i < t.codes.size(); ++i) {
        msb[i] = static_cast<std::int16_t>(t.codes[i] >> lsb);
        low[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(t.codes[i]) & mask);
    }
    return {std::move(msb), std::move(low)};
}

inline std::int16_t combine_msb_lsb(std::int16_t msb, std::int16_t lsb, int lsb_bits) {
    const std::uint16_t mask = static_cast<std::uint16_t>((1u << lsb_bits) - 1u);
    return static_cast<std::int16_t>((msb << lsb_bits) | (static_cast<std::uint16_t>(lsb) & mask));
}

// Codes with the LSB field zeroed, same scale: the value an MSB-only fetch
// computes with. Truncates toward -inf (arithmetic shift), e.g. -1 -> -16 at
// lsb_bits = 4.
inline QuantTensor msb_only_value(const QuantTensor& t) {
    check_arg(t.params.lsb_bits > 0, "msb_only_value: lsb_bits must be > 0");
    QuantTensor out = t;
    const int lsb = t.params.lsb_bits;
    for (auto& c : out.codes) c = static_cast<std::int16_t>((c >> lsb) << lsb);
    return out;
}

// Bit packing is little-endian within each byte: field i occupies stream bits
// [i*bits, (i+1)*bits), bit k of the stream lives in byte k/8 at position k%8.
inline std::vector<std::uint8_t> pack_fields(std::span<const std::int16_t> fields, int bits) {
    check_arg(bits > 0 && bits <= 16, "pack_fields: bits out of range");
    std::vector<std::uint8_t> bytes(ceil_div(static_cast<std::uint64_t>(fields.size()) * bits, 8), 0);
    std::size_t bitpos = 0;
    for (std::int16_t f : fields) {
        std::uint32_t v = static_cast<std::uint16_t>(f) & ((1u << bits) - 1u);
        for (int b = 0; b < bits; ++b, ++bitpos) {
            if (v & (1u << b)) bytes[bitpos >> 3] |= static_cast<std::uint8_t>(1u << (bitpos & 7));
        }
    }
    return bytes;
}

// On-chip bitwidth converter: unpacks 4/8/12-bit DRAM fields (fields may start
// at any bit within a byte) and sign-extends each into a 12-bit on-chip code.
inline std::vector<std::int16_t> bitwidth_convert(std::span<const std::uint8_t> stream, int from_bits) {
    check_arg(from_bits == 4 || from_bits == 8 || from_bits == 12, "bitwidth_convert: from_bits must be 4, 8 or 12");
    const std::uint64_t total_bits = static_cast<std::uint64_t>(stream.size()) * 8;
    check_arg(total_bits % from_bits == 0, "bitwidth_convert: stream length not a multiple of the field width");

    std::vector<std::int16_t> codes(total_bits / from_bits);
    const std::uint32_t sign_bit = 1u << (from_bits - 1);
    const std::uint32_t ext = ~((1u << from_bits) - 1u);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        std::uint32_t v = 0;
        std::uint64_t bitpos = static_cast<std::uint64_t>(i) * from_bits;
        for (int b = 0; b < from_bits; ++b, ++bitpos) {
            if (stream[bitpos >> 3] & (1u << (bitpos & 7))) v |= 1u << b;
        }
        if (v & sign_bit) v |= ext;
        codes[i] = static_cast<std::int16_t>(static_cast<std::int32_t>(v));
    }
    return codes;
}

// DRAM layout consumed by the simulator: the MSB plane first, row-major and
// contiguous, then the LSB plane, each plane bit-packed on its own.
struct DramImage {
    std::vector<std::uint8_t> msb_plane;
    std::vector<std::uint8_t> lsb_plane;
};

inline DramImage make_dram_image(const QuantTensor& t) {
    DramImage img;
    if (t.params.lsb_bits == 0) {
        img.msb_plane = pack_fields(t.codes, t.params.msb_bits);
        return img;
    }
    auto [msb, lsb] = split_msb_lsb(t);
    img.msb_plane = pack_fields(msb, t.params.msb_bits);
    img.lsb_plane = pack_fields(lsb, t.params.lsb_bits);
    return img;
}

}  // namespace spatten
