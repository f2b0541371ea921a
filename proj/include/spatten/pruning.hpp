#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "spatten/core.hpp"
#include "spatten/topk_engine.hpp"

namespace spatten {

// Cumulative token/head importance plus the surviving index sets. Kept sets
// only ever shrink (cascade); scores persist across layers and, in the
// generation stage, across iterations.
struct ImportanceState {
    std::vector<double> token_scores;
    std::vector<double> head_scores;
    std::vector<std::size_t> kept_tokens;  // sorted, original order
    std::vector<std::size_t> kept_heads;

    ImportanceState() = default;
    ImportanceState(std::size_t num_tokens, std::size_t num_heads)
        : token_scores(num_tokens, 0.0),
          head_scores(num_heads, 0.0),
          kept_tokens(iota_indices(num_tokens)),
          kept_heads(iota_indices(num_heads)) {}

    // New tokens produced during generation enter alive with zero score.
    void append_tokens(std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            kept_tokens.push_back(token_scores.size());
            token_scores.push_back(0.0);
        }
    }
};

// probs holds one L0 x |kept_tokens| matrix per kept head (same order as
// state.kept_heads); column j accumulates into token kept_tokens[j].
inline void accumulate_token_importance(ImportanceState& state, const std::vector<Matrix>& probs) {
    check_arg(probs.size() == state.kept_heads.size(),
              "accumulate_token_importance: head count mismatch");
    for (const Matrix& p : probs) {
        check_arg(p.cols() == state.kept_tokens.size(),
                  "accumulate_token_importance: token count mismatch");
        for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t j = 0; j < p.cols(); ++j)
                state.token_scores[state.kept_tokens[j]] += p(r, j);
    }
}

// attention_out is the full-width L0 x D_in output; pruned heads hold zero
// chunks so only kept heads are visited.
inline void accumulate_head_importance(ImportanceState& state, const Matrix& attention_out) {
    const std::size_t h = state.head_scores.size();
    check_arg(h > 0 && attention_out.cols() % h == 0,
              "accumulate_head_importance: D_in not divisible by head count");
    const std::size_t d = attention_out.cols() / h;
    for (std::size_t head : state.kept_heads) {
        double sum = 0.0;
        for (std::size_t r = 0; r < attention_out.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) sum += std::abs(attention_out(r, head * d + c));
        state.head_scores[head] += sum;
    }
}

namespace detail {

// Shared selection core: keep the `count` highest-scoring survivors, smaller
// original index winning ties, via the same control logic as the hardware
// filter. Returns the engine result for cycle accounting.
inline TopKResult select_from(const std::vector<double>& scores,
                              std::vector<std::size_t>& kept,
                              std::size_t count,
                              const TopKConfig& cfg) {
    check_arg(count >= 1 && count <= kept.size(), "selection count out of range");
    std::vector<double> alive(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) alive[i] = scores[kept[i]];
    TopKResult res = filter_top_k(alive, count, cfg);
    std::vector<std::size_t> next;
    next.reserve(count);
    for (std::size_t pos : res.kept_indices) next.push_back(kept[pos]);
    kept = std::move(next);
    return res;
}

}  // namespace detail

inline TopKResult select_tokens_count(ImportanceState& state, std::size_t count,
                                      const TopKConfig& cfg = {}) {
    return detail::select_from(state.token_scores, state.kept_tokens, count, cfg);
}

inline TopKResult select_heads_count(ImportanceState& state, std::size_t count,
                                     const TopKConfig& cfg = {}) {
    return detail::select_from(state.head_scores, state.kept_heads, count, cfg);
}

// Keeps ceil(keep_ratio * |kept|) tokens; at least one survives.
inline const std::vector<std::size_t>& select_tokens(ImportanceState& state, double keep_ratio,
                                                     const TopKConfig& cfg = {}) {
    check_arg(keep_ratio > 0.0 && keep_ratio <= 1.0, "select_tokens: keep_ratio out of (0, 1]");
    const auto count = static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(state.kept_tokens.size())));
    if (count < state.kept_tokens.size()) select_tokens_count(state, count, cfg);
    return state.kept_tokens;
}

inline const std::vector<std::size_t>& select_heads(ImportanceState& state, double keep_ratio,
                                                    const TopKConfig& cfg = {}) {
    check_arg(keep_ratio > 0.0 && keep_ratio <= 1.0, "select_heads: keep_ratio out of (0, 1]");
    const auto count = static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(state.kept_heads.size())));
    if (count < state.kept_heads.size()) select_heads_count(state, count, cfg);
    return state.kept_heads;
}

// Per-head, per-query V selection from the current probability row only; the
// importance state is untouched. Returns positions within the row, ascending.
inline std::vector<std::size_t> local_value_prune(std::span<const double> prob_row, double keep_ratio,
                                                  const TopKConfig& cfg = {}) {
    check_arg(!prob_row.empty(), "local_value_prune: empty probability row");
    check_arg(keep_ratio > 0.0 && keep_ratio <= 1.0, "local_value_prune: keep_ratio out of (0, 1]");
    const auto count = static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(prob_row.size())));
    if (count >= prob_row.size()) return iota_indices(prob_row.size());
    return filter_top_k(prob_row, count, cfg).kept_indices;
}

// Layer-wise keep-ratio schedule. Ratios are cumulative: layer_keep_ratio[l]
// is the fraction of the current total token count that should survive when
// layer l runs, so the mean over pruned layers equals r_avg exactly.
struct PruneSchedule {
    std::vector<double> layer_keep_ratio_tokens;
    std::vector<double> layer_keep_ratio_heads;
    double token_unpruned_prefix = 0.15;
    double head_unpruned_prefix = 0.30;
    double r_start = 1.0;
    double r_end = 1.0;

    std::size_t num_layers() const { return layer_keep_ratio_tokens.size(); }

    static PruneSchedule all_keep(std::size_t layers) { return flat(layers, 1.0, 1.0); }

    static PruneSchedule flat(std::size_t layers, double token_keep, double head_keep) {
        check_arg(layers >= 1, "schedule: num_layers must be >= 1");
        check_arg(token_keep > 0.0 && token_keep <= 1.0, "schedule: token keep out of (0, 1]");
        check_arg(head_keep > 0.0 && head_keep <= 1.0, "schedule: head keep out of (0, 1]");
        PruneSchedule s;
        s.layer_keep_ratio_tokens.assign(layers, token_keep);
        s.layer_keep_ratio_heads.assign(layers, head_keep);
        s.r_start = s.r_end = token_keep;
        return s;
    }
};

// Front prefix layers stay unpruned; the rest interpolate linearly from
// r_start = r_avg + delta down to r_end = r_avg - delta, which keeps their
// mean at r_avg for any delta. delta defaults to (1 - r_avg)/2 and is clamped
// so both endpoints stay inside (0, 1].
inline std::vector<double> schedule_ratios(std::size_t num_layers, double r_avg,
                                           double prefix_fraction, double delta = -1.0) {
    check_arg(num_layers >= 1, "schedule_ratios: num_layers must be >= 1");
    check_arg(r_avg > 0.0 && r_avg <= 1.0, "schedule_ratios: r_avg out of (0, 1]");
    check_arg(prefix_fraction >= 0.0 && prefix_fraction <= 1.0, "schedule_ratios: prefix out of [0, 1]");
    if (delta < 0.0) delta = (1.0 - r_avg) / 2.0;
    delta = std::min({delta, 1.0 - r_avg, std::max(0.0, r_avg - 1e-3)});

    const auto prefix = static_cast<std::size_t>(std::ceil(prefix_fraction * static_cast<double>(num_layers)));
    std::vector<double> ratios(num_layers, 1.0);
    const std::size_t rest = num_layers - std::min(prefix, num_layers);
    if (rest == 0) return ratios;
    const double r_start = r_avg + delta;
    const double r_end = r_avg - delta;
    for (std::size_t i = 0; i < rest; ++i) {
        const double t = rest == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(rest - 1);
        ratios[prefix + i] = r_start + (r_end - r_start) * t;
    }
    return ratios;
}

inline PruneSchedule make_interpolated_schedule(std::size_t num_layers, double token_r_avg,
                                                double head_r_avg,
                                                double token_prefix = 0.15,
                                                double head_prefix = 0.30) {
    PruneSchedule s;
    s.token_unpruned_prefix = token_prefix;
    s.head_unpruned_prefix = head_prefix;
    s.layer_keep_ratio_tokens = schedule_ratios(num_layers, token_r_avg, token_prefix);
    s.layer_keep_ratio_heads = schedule_ratios(num_layers, head_r_avg, head_prefix);
    double d = std::min((1.0 - token_r_avg) / 2.0, std::min(1.0 - token_r_avg, std::max(0.0, token_r_avg - 1e-3)));
    s.r_start = token_r_avg + d;
    s.r_end = token_r_avg - d;
    return s;
}

// Cumulative-target selection for one layer: prune down to
// ceil(ratio * total_now) survivors when fewer are not already kept.
// Returns the engine results actually run (empty when selection is a no-op).
struct LayerSelection {
    std::vector<TopKResult> engine_runs;
    std::size_t kept_tokens = 0;
    std::size_t kept_heads = 0;
};

inline LayerSelection apply_schedule_layer(ImportanceState& state, const PruneSchedule& sched,
                                           std::size_t layer, std::size_t total_tokens_now,
                                           std::size_t total_heads, const TopKConfig& cfg = {}) {
    check_arg(layer < sched.num_layers(), "apply_schedule_layer: layer out of range");
    LayerSelection sel;
    const double tr = sched.layer_keep_ratio_tokens[layer];
    const double hr = sched.layer_keep_ratio_heads[layer];
    auto token_target = static_cast<std::size_t>(std::ceil(tr * static_cast<double>(total_tokens_now)));
    auto head_target = static_cast<std::size_t>(std::ceil(hr * static_cast<double>(total_heads)));
    token_target = std::max<std::size_t>(1, token_target);
    head_target = std::max<std::size_t>(1, head_target);
    if (token_target < state.kept_tokens.size())
        sel.engine_runs.push_back(select_tokens_count(state, token_target, cfg));
    if (head_target < state.kept_heads.size())
        sel.engine_runs.push_back(select_heads_count(state, head_target, cfg));
    sel.kept_tokens = state.kept_tokens.size();
    sel.kept_heads = state.kept_heads.size();
    return sel;
}

// --- importance trace CSV (token index, cumulative score) ---

inline void write_importance_csv(std::ostream& os, const ImportanceState& state) {
    os << "token,score\n";
    for (std::size_t i = 0; i < state.token_scores.size(); ++i)
        os << i << "," << state.token_scores[i] << "\n";
}

inline std::vector<double> read_importance_csv(std::istream& is) {
    std::string line;
    std::getline(is, line);  // header
    std::vector<double> scores;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        check_arg(comma != std::string::npos, "importance csv: malformed line");
        const auto idx = static_cast<std::size_t>(std::stoull(line.substr(0, comma)));
        const double score = std::stod(line.substr(comma + 1));
        if (scores.size() <= idx) scores.resize(idx + 1, 0.0);
        scores[idx] = score;
    }
    return scores;
}

}  // namespace spatten
