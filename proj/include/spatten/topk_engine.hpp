#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "spatten/core.hpp"

namespace spatten {

struct TopKConfig {
    int parallelism = 16;    // comparators per array
    int fifo_depth = 64;     // FIFO depth in blocks of `parallelism` elements
    std::uint64_t rng_seed = 0x5eed;

    void validate() const {
        check_arg(parallelism >= 1, "topk: parallelism must be >= 1");
        check_arg(fifo_depth >= 1, "topk: fifo_depth must be >= 1");
    }
};

struct QuickSelectResult {
    double kth_value = 0.0;
    std::size_t num_eq_kth = 0;          // k - (count strictly greater than kth_value)
    std::vector<std::size_t> pass_sizes; // elements drained per partition pass
    bool fifo_overflow = false;          // a partition exceeded fifo_depth * parallelism
};

// Quick-select over two FIFOs: a random pivot partitions the active FIFO into
// smaller-than (FIFO_L) and larger-than (FIFO_R) halves until the k-th largest
// is pinned down. Duplicates are counted, so kth_value is exact.
inline QuickSelectResult quick_select(std::span<const double> scores, std::size_t k, const TopKConfig& cfg) {
    cfg.validate();
    const std::size_t n = scores.size();
    check_arg(k >= 1 && k <= n, "quick_select: k out of range");

    std::mt19937_64 rng(cfg.rng_seed);
    const std::size_t fifo_capacity =
        static_cast<std::size_t>(cfg.fifo_depth) * static_cast<std::size_t>(cfg.parallelism);

    QuickSelectResult res;
    std::vector<double> fifo_l(scores.begin(), scores.end());
    std::vector<double> fifo_r;
    fifo_r.reserve(n);
    std::size_t target = k;
    std::size_t num_eq_pivot = 0;
    double pivot = 0.0;
    res.fifo_overflow = fifo_l.size() > fifo_capacity;

    while (true) {
        if (fifo_r.size() + num_eq_pivot < target) {
            // Pivot too large: the answer sits among the smaller elements.
            target -= fifo_r.size() + num_eq_pivot;
            fifo_r.clear();
            std::uniform_int_distribution<std::size_t> pick(0, fifo_l.size() - 1);
            pivot = fifo_l[pick(rng)];
            res.pass_sizes.push_back(fifo_l.size());
            std::vector<double> drained = std::exchange(fifo_l, {});
            num_eq_pivot = 0;
            for (double item : drained) {
                if (item < pivot) fifo_l.push_back(item);
                else if (item > pivot) fifo_r.push_back(item);
                else ++num_eq_pivot;
            }
        } else if (fifo_r.size() >= target) {
            // Pivot too small: the answer sits among the larger elements.
            fifo_l.clear();
            std::uniform_int_distribution<std::size_t> pick(0, fifo_r.size() - 1);
            pivot = fifo_r[pick(rng)];
            res.pass_sizes.push_back(fifo_r.size());
            std::vector<double> drained = std::exchange(fifo_r, {});
            num_eq_pivot = 0;
            for (double item : drained) {
                if (item < pivot) fifo_l.push_back(item);
                else if (item > pivot) fifo_r.push_back(item);
                else ++num_eq_pivot;
            }
        } else {
            res.kth_value = pivot;
            res.num_eq_kth = target - fifo_r.size();
            break;
        }
        if (fifo_l.size() > fifo_capacity || fifo_r.size() > fifo_capacity) res.fifo_overflow = true;
    }
    return res;
}

// Stable compaction of the nonzero entries: a prefix sum counts the zeros in
// front of each element, then log2(n) shift stages move each element left by
// 2^s whenever bit s of its zero count is set. n is padded to a power of two.
inline std::pair<std::vector<double>, std::vector<std::size_t>> zero_eliminate(std::span<const double> arr) {
    const std::size_t n = arr.size();
    const std::size_t padded = n == 0 ? 1 : (std::size_t{1} << ceil_log2(n));

    struct Slot {
        double value = 0.0;
        std::size_t source = 0;
        std::size_t zero_cnt = 0;
        bool occupied = false;
    };
    std::vector<Slot> slots(padded);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (arr[i] == 0.0) {
            ++zeros;
        } else {
            slots[i] = {arr[i], i, zeros, true};
        }
    }

    const int stages = ceil_log2(padded);
    for (int s = 0; s < stages; ++s) {
        const std::size_t shift = std::size_t{1} << s;
        std::vector<Slot> next(padded);
        for (std::size_t i = 0; i < padded; ++i) {
            if (!slots[i].occupied) continue;
            std::size_t dst = (slots[i].zero_cnt >> s) & 1 ? i - shift : i;
            next[dst] = slots[i];
        }
        slots = std::move(next);
    }

    std::pair<std::vector<double>, std::vector<std::size_t>> out;
    for (const Slot& s : slots) {
        if (!s.occupied) break;  // compacted prefix
        out.first.push_back(s.value);
        out.second.push_back(s.source);
    }
    return out;
}

// Modeled engine time: each partition pass streams ceil(m/P) blocks through
// the comparator arrays, the filter pass re-reads the buffered input, and the
// zero eliminator adds its log-depth latency.
inline std::uint64_t topk_cycles(std::size_t n, std::span<const std::size_t> pass_sizes, const TopKConfig& cfg) {
    cfg.validate();
    const std::uint64_t p = static_cast<std::uint64_t>(cfg.parallelism);
    std::uint64_t cycles = 0;
    for (std::size_t m : pass_sizes) cycles += ceil_div(m, p);
    cycles += ceil_div(n, p);
    cycles += static_cast<std::uint64_t>(ceil_log2(n));
    return cycles;
}

// Cost of the classical alternative, a Batcher odd-even merge sorter feeding
// a full sort: log2(n)*(log2(n)+1)/2 compare-exchange stages over n-padded
// inputs at P lanes. Comparison-table material only; the engine above is the
// implemented unit.
inline std::uint64_t batcher_sort_cycles(std::size_t n, int parallelism) {
    check_arg(parallelism >= 1, "batcher_sort_cycles: parallelism must be >= 1");
    const std::uint64_t stages = static_cast<std::uint64_t>(ceil_log2(n)) *
                                 (static_cast<std::uint64_t>(ceil_log2(n)) + 1) / 2;
    return stages * ceil_div(n, static_cast<std::uint64_t>(parallelism));
}

struct TopKResult {
    double kth_value = 0.0;
    std::size_t num_eq_kth = 0;
    std::vector<std::size_t> kept_indices;  // original input order
    std::uint64_t cycles = 0;
    std::size_t passes = 0;
    bool fifo_overflow = false;
};

// Keeps every score strictly above the k-th largest plus the first num_eq_kth
// ties in input order; the zero eliminator compacts the filtered stream.
inline TopKResult filter_top_k(std::span<const double> scores, std::size_t k, const TopKConfig& cfg) {
    QuickSelectResult qs = quick_select(scores, k, cfg);

    std::vector<double> marked(scores.size(), 0.0);
    std::size_t eq_used = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > qs.kth_value) {
            marked[i] = static_cast<double>(i + 1);
        } else if (scores[i] == qs.kth_value && eq_used < qs.num_eq_kth) {
            marked[i] = static_cast<double>(i + 1);
            ++eq_used;
        }
    }
    auto [compacted, sources] = zero_eliminate(marked);

    TopKResult res;
    res.kth_value = qs.kth_value;
    res.num_eq_kth = qs.num_eq_kth;
    res.kept_indices = std::move(sources);
    res.passes = qs.pass_sizes.size();
    res.cycles = topk_cycles(scores.size(), qs.pass_sizes, cfg);
    res.fifo_overflow = qs.fifo_overflow;
    return res;
}

}  // namespace spatten
