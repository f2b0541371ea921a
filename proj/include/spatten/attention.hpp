#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "spatten/core.hpp"

namespace spatten {

struct AttentionInput {
    Matrix q;  // L0 x D_in
    Matrix k;  // L1 x D_in
    Matrix v;  // L1 x D_in
    int heads = 1;

    std::size_t d_in() const { return q.cols(); }
    std::size_t d_head() const { return q.cols() / static_cast<std::size_t>(heads); }
    std::size_t l0() const { return q.rows(); }
    std::size_t l1() const { return k.rows(); }

    void validate() const {
        check_arg(heads >= 1, "attention: heads must be >= 1");
        check_arg(q.rows() >= 1 && k.rows() >= 1, "attention: L0 and L1 must be >= 1");
        check_arg(q.cols() == k.cols() && k.cols() == v.cols(), "attention: Q/K/V widths differ");
        check_arg(k.rows() == v.rows(), "attention: K/V row counts differ");
        check_arg(q.cols() % static_cast<std::size_t>(heads) == 0, "attention: D_in not divisible by heads");
    }
};

struct AttentionResult {
    Matrix out;                      // L0 x D_in
    std::vector<Matrix> prob;        // per head, L0 x L1 (zeros at masked positions)
    std::vector<Matrix> score;       // per head, L0 x L1
};

enum class SoftmaxMode {
    Exact,    // std::exp in binary64
    Taylor5,  // power-of-two range reduction + 5th-order polynomial, FMA-style
};

namespace detail {

inline double exp_taylor5(double x) {
    // e^x = 2^n * T5(r) with r in [-ln2/2, ln2/2].
    constexpr double kLog2E = 1.4426950408889634;
    constexpr double kLn2 = 0.6931471805599453;
    const double nf = std::nearbyint(x * kLog2E);
    const double r = x - nf * kLn2;
    double t = 1.0 / 120.0;
    t = std::fma(t, r, 1.0 / 24.0);
    t = std::fma(t, r, 1.0 / 6.0);
    t = std::fma(t, r, 0.5);
    t = std::fma(t, r, 1.0);
    t = std::fma(t, r, 1.0);
    return std::ldexp(t, static_cast<int>(nf));
}

inline double exp_by_mode(double x, SoftmaxMode mode) {
    return mode == SoftmaxMode::Exact ? std::exp(x) : exp_taylor5(x);
}

}  // namespace detail

// Row softmax restricted to `kept` indices; masked-out entries are exactly 0.
// `scale` folds score dequantization and the 1/sqrt(D) normalization into the
// exponent, and max-subtraction keeps the exponentials in range.
inline std::vector<double> softmax_row(std::span<const double> scores,
                                       std::span<const std::size_t> kept,
                                       double scale = 1.0,
                                       SoftmaxMode mode = SoftmaxMode::Exact) {
    check_arg(!kept.empty(), "softmax_row: mask must be non-empty");
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i : kept) {
        check_arg(i < scores.size(), "softmax_row: mask index out of range");
        m = std::max(m, scores[i] * scale);
    }
    std::vector<double> out(scores.size(), 0.0);
    double denom = 0.0;
    for (std::size_t i : kept) {
        const double e = detail::exp_by_mode(scores[i] * scale - m, mode);
        out[i] = e;
        denom += e;
    }
    for (std::size_t i : kept) out[i] /= denom;
    return out;
}

// Per-(head,row) kept V indices; empty inner vectors mean "keep all".
using ValueMask = std::vector<std::vector<std::vector<std::size_t>>>;

// Multi-head attention restricted to the given token/head subsets. Pruned
// heads contribute zero-filled output chunks so the output shape is stable.
// The optional value mask only restricts the prob x V accumulation; the
// probabilities themselves are left as computed.
inline AttentionResult attention_masked(const AttentionInput& inp,
                                        std::span<const std::size_t> token_mask,
                                        std::span<const std::size_t> head_mask,
                                        const ValueMask* value_mask = nullptr,
                                        SoftmaxMode mode = SoftmaxMode::Exact) {
    inp.validate();
    check_arg(!token_mask.empty(), "attention_masked: token mask must be non-empty");
    for (std::size_t t : token_mask) check_arg(t < inp.l1(), "attention_masked: token index out of range");
    for (std::size_t h : head_mask) check_arg(h < static_cast<std::size_t>(inp.heads), "attention_masked: head index out of range");

    const std::size_t d = inp.d_head();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    AttentionResult res;
    res.out = Matrix(inp.l0(), inp.d_in());
    res.prob.assign(inp.heads, Matrix(inp.l0(), inp.l1()));
    res.score.assign(inp.heads, Matrix(inp.l0(), inp.l1()));

    for (std::size_t h : head_mask) {
        const std::size_t base = h * d;
        Matrix& prob = res.prob[h];
        Matrix& score = res.score[h];
        for (std::size_t r = 0; r < inp.l0(); ++r) {
            for (std::size_t t : token_mask) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += inp.q(r, base + c) * inp.k(t, base + c);
                score(r, t) = s * inv_sqrt_d;
            }
            std::vector<double> p = softmax_row(score.row(r), token_mask, 1.0, mode);
            std::copy(p.begin(), p.end(), prob.row(r).begin());

            std::span<const std::size_t> v_kept = token_mask;
            if (value_mask != nullptr && !(*value_mask)[h][r].empty()) v_kept = (*value_mask)[h][r];
            for (std::size_t t : v_kept) {
                const double pw = prob(r, t);
                for (std::size_t c = 0; c < d; ++c) res.out(r, base + c) += pw * inp.v(t, base + c);
            }
        }
    }
    return res;
}

inline AttentionResult attention_dense(const AttentionInput& inp, SoftmaxMode mode = SoftmaxMode::Exact) {
    const std::vector<std::size_t> tokens = iota_indices(inp.l1());
    const std::vector<std::size_t> heads = iota_indices(static_cast<std::size_t>(inp.heads));
    return attention_masked(inp, tokens, heads, nullptr, mode);
}

// K/V cache for the generation stage; rows accumulate one token per step.
struct KVCache {
    Matrix k;  // len x D_in
    Matrix v;
    std::size_t max_context = 1024;

    std::size_t length() const { return k.rows(); }
};

inline KVCache make_cache(std::size_t d_in, std::size_t max_context = 1024) {
    KVCache c;
    c.k = Matrix(0, d_in);
    c.v = Matrix(0, d_in);
    c.max_context = max_context;
    return c;
}

namespace detail {
inline Matrix append_row(const Matrix& m, std::span<const double> row) {
    Matrix out(m.rows() + 1, row.size());
    for (std::size_t r = 0; r < m.rows(); ++r)
        std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
    std::copy(row.begin(), row.end(), out.row(m.rows()).begin());
    return out;
}
}  // namespace detail

// One generation-stage iteration: the new K/V row joins the cache and the
// single query attends over the concatenated keys and values.
inline AttentionResult generation_step(KVCache& cache,
                                       std::span<const double> q_row,
                                       std::span<const double> new_k,
                                       std::span<const double> new_v,
                                       int heads,
                                       SoftmaxMode mode = SoftmaxMode::Exact) {
    check_arg(q_row.size() == new_k.size() && new_k.size() == new_v.size(),
              "generation_step: row widths differ");
    check_arg(cache.k.rows() == 0 || cache.k.cols() == q_row.size(),
              "generation_step: cache width mismatch");
    if (cache.length() + 1 > cache.max_context)
        throw std::runtime_error("generation_step: context length would exceed max_context");

    cache.k = detail::append_row(cache.k, new_k);
    cache.v = detail::append_row(cache.v, new_v);

    AttentionInput inp;
    inp.q = Matrix(1, q_row.size());
    std::copy(q_row.begin(), q_row.end(), inp.q.row(0).begin());
    inp.k = cache.k;
    inp.v = cache.v;
    inp.heads = heads;
    return attention_dense(inp, mode);
}

}  // namespace spatten
