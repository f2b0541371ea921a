#pragma once

#include <cmath>
#include <cstdint>

#include "spatten/attention.hpp"
#include "spatten/quant.hpp"

namespace spatten {

struct PQPolicy {
    double threshold = 0.1;  // refetch when max attention probability < threshold
    int msb_bits = 8;
    int lsb_bits = 4;
    bool enabled = true;
    // When >= 0, rows refetch at this flat rate (evenly spread) instead of by
    // the data-driven probability test; used by the speedup-breakdown ladder.
    double fixed_refetch_rate = -1.0;

    void validate() const {
        check_arg(threshold > 0.0 && threshold < 1.0, "pq: threshold out of (0, 1)");
        QuantParams p;
        p.msb_bits = msb_bits;
        p.lsb_bits = lsb_bits;
        p.validate();
    }
};

struct PQStats {
    std::size_t rows_total = 0;
    std::size_t rows_refetched = 0;
    std::uint64_t lsb_bytes_fetched = 0;

    void merge(const PQStats& o) {
        rows_total += o.rows_total;
        rows_refetched += o.rows_refetched;
        lsb_bytes_fetched += o.lsb_bytes_fetched;
    }
};

// LSBs are needed iff the probability row is flat: strictly max < threshold.
inline bool decide_lsb(std::span<const double> prob_row, const PQPolicy& policy) {
    check_arg(!prob_row.empty(), "decide_lsb: empty probability row");
    double m = prob_row[0];
    for (double p : prob_row) m = std::max(m, p);
    return m < policy.threshold;
}

namespace detail {

// Integer Q.K^T for one head row over the given K token subset. Accumulation
// is exact in int64; the caller folds scale_q * scale_k / sqrt(D) into the
// softmax.
inline void qk_scores_int(const QuantTensor& q, const QuantTensor& k,
                          std::size_t row, std::size_t head, std::size_t d,
                          std::span<const std::size_t> tokens,
                          std::span<std::int64_t> out) {
    const std::size_t base = head * d;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        const std::int16_t* qr = q.codes.data() + row * q.cols + base;
        const std::int16_t* kr = k.codes.data() + tokens[j] * k.cols + base;
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < d; ++c) acc += static_cast<std::int64_t>(qr[c]) * kr[c];
        out[j] = acc;
    }
}

}  // namespace detail

struct ProgressiveResult {
    AttentionResult result;
    PQStats stats;
    std::vector<std::vector<std::uint8_t>> refetched;  // [head][row]
};

// MSB-first attention with a one-shot LSB refetch per (head, query row):
// probabilities are computed from truncated codes; rows whose distribution is
// flat recombine the full-precision Q row and K matrix of the head and are
// recomputed exactly once. Traffic charged per refetch is the Q row's LSB
// field plus, once per head, the K and V LSB planes. Rows that never refetch
// also multiply against MSB-only V values.
inline ProgressiveResult progressive_attention(const QuantTensor& q, const QuantTensor& k,
                                               const QuantTensor& v, int heads,
                                               const PQPolicy& policy) {
    policy.validate();
    check_arg(q.cols == k.cols && k.cols == v.cols, "progressive_attention: widths differ");
    check_arg(k.rows == v.rows, "progressive_attention: K/V row counts differ");
    check_arg(heads >= 1 && q.cols % static_cast<std::size_t>(heads) == 0,
              "progressive_attention: D_in not divisible by heads");

    const std::size_t d = q.cols / static_cast<std::size_t>(heads);
    const std::size_t l0 = q.rows, l1 = k.rows;
    const double score_scale = q.params.scale * k.params.scale / std::sqrt(static_cast<double>(d));
    const std::vector<std::size_t> all_tokens = iota_indices(l1);

    const bool split = policy.enabled && q.params.lsb_bits > 0;
    const QuantTensor q_msb = split ? msb_only_value(q) : q;
    const QuantTensor k_msb = split ? msb_only_value(k) : k;
    const QuantTensor v_msb = split ? msb_only_value(v) : v;
    const int lsb_bits = q.params.lsb_bits;

    ProgressiveResult pr;
    pr.result.out = Matrix(l0, q.cols);
    pr.result.prob.assign(heads, Matrix(l0, l1));
    pr.result.score.assign(heads, Matrix(l0, l1));
    pr.refetched.assign(heads, std::vector<std::uint8_t>(l0, 0));

    std::vector<std::int64_t> acc(l1);
    for (int h = 0; h < heads; ++h) {
        bool head_lsb_charged = false;
        for (std::size_t r = 0; r < l0; ++r) {
            ++pr.stats.rows_total;
            detail::qk_scores_int(q_msb, k_msb, r, h, d, all_tokens, acc);
            Matrix& score = pr.result.score[h];
            for (std::size_t j = 0; j < l1; ++j) score(r, j) = static_cast<double>(acc[j]) * score_scale;
            std::vector<double> prob = softmax_row(score.row(r), all_tokens);

            bool refetch = split && decide_lsb(prob, policy);
            if (refetch) {
                // One recompute with recombined full-precision codes.
                ++pr.stats.rows_refetched;
                pr.refetched[h][r] = 1;
                pr.stats.lsb_bytes_fetched += d * lsb_bits / 8;  // Q row LSBs
                if (!head_lsb_charged) {
                    pr.stats.lsb_bytes_fetched += 2 * l1 * d * lsb_bits / 8;  // K and V planes
                    head_lsb_charged = true;
                }
                detail::qk_scores_int(q, k, r, h, d, all_tokens, acc);
                for (std::size_t j = 0; j < l1; ++j) score(r, j) = static_cast<double>(acc[j]) * score_scale;
                prob = softmax_row(score.row(r), all_tokens);
            }
            std::copy(prob.begin(), prob.end(), pr.result.prob[h].row(r).begin());

            const QuantTensor& v_use = refetch || !split ? v : v_msb;
            for (std::size_t t = 0; t < l1; ++t) {
                const double pw = prob[t];
                const std::int16_t* vr = v_use.codes.data() + t * v.cols + h * d;
                for (std::size_t c = 0; c < d; ++c)
                    pr.result.out(r, h * d + c) += pw * vr[c] * v.params.scale;
            }
        }
    }
    return pr;
}

struct SoftmaxErrorBound {
    double measured_error = 0.0;  // sum of |delta p_i| from perturbing s[i0]
    double bound = 0.0;           // |ds| * 2 p (1 - p), always < |ds|
};

// First-order sensitivity of a softmax row to a single-score perturbation.
inline SoftmaxErrorBound softmax_error_bound_check(std::span<const double> s, std::size_t i0, double ds) {
    check_arg(i0 < s.size(), "softmax_error_bound_check: index out of range");
    const std::vector<std::size_t> all = iota_indices(s.size());
    const std::vector<double> p0 = softmax_row(s, all);
    std::vector<double> shifted(s.begin(), s.end());
    shifted[i0] += ds;
    const std::vector<double> p1 = softmax_row(shifted, all);

    SoftmaxErrorBound out;
    for (std::size_t i = 0; i < s.size(); ++i) out.measured_error += std::abs(p1[i] - p0[i]);
    out.bound = std::abs(ds) * 2.0 * p0[i0] * (1.0 - p0[i0]);
    return out;
}

}  // namespace spatten
