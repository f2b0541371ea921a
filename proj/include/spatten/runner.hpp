#pragma once

#include "spatten/simarch.hpp"

namespace spatten {

struct RunOptions {
    double v_keep = 1.0;
    // Apply token selection after every head instead of once per layer,
    // spreading the layer's target across the head loop.
    bool per_head_token_select = false;
    const ProbTrace* prob_trace = nullptr;  // externally computed probabilities
    SoftmaxMode softmax_mode = SoftmaxMode::Exact;
};

struct LayerRunSummary {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::size_t kept_tokens = 0;
    std::size_t kept_heads = 0;
};

struct RunModelResult {
    // Functional per-layer results (generation: final iteration).
    std::vector<AttentionResult> layer_results;
    ImportanceState state;
    std::vector<LayerRunSummary> summaries;
    PQStats pq;
    std::optional<SimReport> report;  // filled when an ArchConfig is supplied
};

namespace detail {

// Compacts the full-shape masked result into per-kept-head L0 x |kept| blocks
// for the importance accumulator.
inline std::vector<Matrix> compact_probs(const AttentionResult& res,
                                         const std::vector<std::size_t>& kept_heads,
                                         const std::vector<std::size_t>& kept_tokens) {
    std::vector<Matrix> out;
    out.reserve(kept_heads.size());
    for (std::size_t h : kept_heads) {
        const Matrix& full = res.prob[h];
        Matrix m(full.rows(), kept_tokens.size());
        for (std::size_t r = 0; r < full.rows(); ++r)
            for (std::size_t j = 0; j < kept_tokens.size(); ++j) m(r, j) = full(r, kept_tokens[j]);
        out.push_back(std::move(m));
    }
    return out;
}

inline Matrix slice_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    return out;
}

}  // namespace detail

// Functional driver: threads the importance state across layers (and, in the
// generation stage, across iterations), applies the schedule, and computes
// per-layer attention on the surviving tokens and heads. With an ArchConfig
// the cycle/traffic simulation runs on the same workload and its report is
// merged in.
inline RunModelResult run_model(const ModelConfig& cfg, const PruneSchedule& sched,
                                const PQPolicy& pq, const TopKConfig& topk_cfg,
                                const ArchConfig* arch = nullptr, const RunOptions& opt = {}) {
    cfg.validate();
    check_arg(sched.num_layers() == static_cast<std::size_t>(cfg.num_layers),
              "run_model: schedule layer count mismatch");
    check_arg(opt.v_keep > 0.0 && opt.v_keep <= 1.0, "run_model: v_keep out of (0, 1]");
    if (opt.prob_trace != nullptr) {
        check_arg(opt.prob_trace->layers == static_cast<std::size_t>(cfg.num_layers) &&
                      opt.prob_trace->heads == static_cast<std::size_t>(cfg.heads_per_layer),
                  "run_model: probability trace shape mismatch");
    }

    SynthWorkload wl(cfg);
    const std::size_t heads = static_cast<std::size_t>(cfg.heads_per_layer);
    const std::size_t d = static_cast<std::size_t>(cfg.d_per_head);
    const bool generation = cfg.stage == Stage::Generation;

    RunModelResult out;
    out.layer_results.resize(cfg.num_layers);
    out.state = ImportanceState(generation ? cfg.prompt_len : cfg.seq_len, heads);
    ImportanceState& state = out.state;

    const std::size_t steps = generation ? cfg.gen_steps : 1;
    for (std::size_t step = 0; step < steps; ++step) {
        if (generation) state.append_tokens(1);
        const std::size_t total_now = generation ? cfg.prompt_len + step + 1 : cfg.seq_len;

        for (int l = 0; l < cfg.num_layers; ++l) {
            if (!opt.per_head_token_select || state.kept_tokens.empty()) {
                apply_schedule_layer(state, sched, static_cast<std::size_t>(l), total_now, heads, topk_cfg);
            } else {
                // Head-granular mode: walk the layer target in per-head slices.
                const double tr = sched.layer_keep_ratio_tokens[l];
                auto target = static_cast<std::size_t>(
                    std::ceil(tr * static_cast<double>(total_now)));
                target = std::max<std::size_t>(1, target);
                const std::size_t start = state.kept_tokens.size();
                if (target < start) {
                    const std::size_t hs = state.kept_heads.size();
                    for (std::size_t hi = 1; hi <= hs; ++hi) {
                        const auto mid = static_cast<std::size_t>(
                            start - (start - target) * static_cast<double>(hi) / static_cast<double>(hs));
                        if (mid < state.kept_tokens.size())
                            select_tokens_count(state, std::max<std::size_t>(1, mid), topk_cfg);
                    }
                }
                const double hr = sched.layer_keep_ratio_heads[l];
                auto htarget = static_cast<std::size_t>(std::ceil(hr * static_cast<double>(heads)));
                htarget = std::max<std::size_t>(1, htarget);
                if (htarget < state.kept_heads.size()) select_heads_count(state, htarget, topk_cfg);
            }

            const std::vector<std::size_t>& tokens = state.kept_tokens;
            const std::vector<std::size_t>& kept_heads = state.kept_heads;
            LayerInputs li = wl.layer_inputs(static_cast<std::size_t>(l));

            AttentionInput inp;
            inp.k = std::move(li.k);
            inp.v = std::move(li.v);
            inp.heads = cfg.heads_per_layer;
            if (generation) {
                inp.q = Matrix(1, cfg.d_in());
                std::copy(li.q.row(step).begin(), li.q.row(step).end(), inp.q.row(0).begin());
                // Tokens beyond the current iteration do not exist yet.
                inp.k = detail::slice_rows(inp.k, iota_indices(total_now));
                inp.v = detail::slice_rows(inp.v, iota_indices(total_now));
            } else {
                inp.q = std::move(li.q);
            }

            AttentionResult res;
            if (pq.enabled) {
                // Quantized path on the physically sliced survivors: kept
                // token rows and kept head column chunks.
                const std::size_t kh = kept_heads.size();
                auto slice = [&](const Matrix& m, std::span<const std::size_t> rows) {
                    Matrix s(rows.size(), kh * d);
                    for (std::size_t i = 0; i < rows.size(); ++i)
                        for (std::size_t hi = 0; hi < kh; ++hi)
                            for (std::size_t c = 0; c < d; ++c)
                                s(i, hi * d + c) = m(rows[i], kept_heads[hi] * d + c);
                    return s;
                };
                const std::vector<std::size_t> all_rows = iota_indices(inp.q.rows());
                QuantTensor qq = quantize(slice(inp.q, all_rows), pq.msb_bits, pq.lsb_bits);
                QuantTensor kq = quantize(slice(inp.k, tokens), pq.msb_bits, pq.lsb_bits);
                QuantTensor vq = quantize(slice(inp.v, tokens), pq.msb_bits, pq.lsb_bits);
                ProgressiveResult prog =
                    progressive_attention(qq, kq, vq, static_cast<int>(kh), pq);
                out.pq.merge(prog.stats);
                if (opt.v_keep < 1.0) {
                    // Rebuild output rows from the surviving V rows only.
                    const QuantTensor v_msb = pq.lsb_bits > 0 ? msb_only_value(vq) : vq;
                    for (std::size_t hi = 0; hi < kh; ++hi) {
                        for (std::size_t r = 0; r < prog.result.out.rows(); ++r) {
                            std::vector<double> row(tokens.size());
                            for (std::size_t j = 0; j < tokens.size(); ++j)
                                row[j] = prog.result.prob[hi](r, j);
                            const std::vector<std::size_t> kept_pos =
                                local_value_prune(row, opt.v_keep, topk_cfg);
                            const QuantTensor& vv = prog.refetched[hi][r] ? vq : v_msb;
                            for (std::size_t c = 0; c < d; ++c) {
                                double sum = 0.0;
                                for (std::size_t pos : kept_pos)
                                    sum += row[pos] * vv.code(pos, hi * d + c) * vq.params.scale;
                                prog.result.out(r, hi * d + c) = sum;
                            }
                        }
                    }
                }
                // Scatter the compact result back to full token positions and
                // zero the pruned heads.
                res.out = Matrix(inp.q.rows(), cfg.d_in());
                res.prob.assign(heads, Matrix(inp.q.rows(), inp.k.rows()));
                res.score.assign(heads, Matrix(inp.q.rows(), inp.k.rows()));
                for (std::size_t hi = 0; hi < kh; ++hi) {
                    const std::size_t h = kept_heads[hi];
                    for (std::size_t r = 0; r < inp.q.rows(); ++r) {
                        for (std::size_t j = 0; j < tokens.size(); ++j) {
                            res.prob[h](r, tokens[j]) = prog.result.prob[hi](r, j);
                            res.score[h](r, tokens[j]) = prog.result.score[hi](r, j);
                        }
                        for (std::size_t c = 0; c < d; ++c)
                            res.out(r, h * d + c) = prog.result.out(r, hi * d + c);
                    }
                }
            } else {
                ValueMask vmask;
                const ValueMask* vmask_ptr = nullptr;
                if (opt.v_keep < 1.0) {
                    // Pre-rank each row's probabilities to build the value mask,
                    // then recompute with it. Selection never touches state.
                    AttentionResult pre =
                        attention_masked(inp, tokens, kept_heads, nullptr, opt.softmax_mode);
                    vmask.assign(heads, std::vector<std::vector<std::size_t>>(inp.q.rows()));
                    for (std::size_t h : kept_heads) {
                        for (std::size_t r = 0; r < inp.q.rows(); ++r) {
                            std::vector<double> row(tokens.size());
                            for (std::size_t j = 0; j < tokens.size(); ++j)
                                row[j] = pre.prob[h](r, tokens[j]);
                            std::vector<std::size_t> kept_pos =
                                local_value_prune(row, opt.v_keep, topk_cfg);
                            auto& slot = vmask[h][r];
                            slot.reserve(kept_pos.size());
                            for (std::size_t pos : kept_pos) slot.push_back(tokens[pos]);
                        }
                    }
                    vmask_ptr = &vmask;
                }
                res = attention_masked(inp, tokens, kept_heads, vmask_ptr, opt.softmax_mode);
            }

            // Importance accumulation; an external probability trace overrides
            // the computed probabilities when provided.
            if (opt.prob_trace != nullptr) {
                std::vector<Matrix> traced;
                traced.reserve(kept_heads.size());
                for (std::size_t h : kept_heads) {
                    Matrix m(inp.q.rows(), tokens.size());
                    for (std::size_t r = 0; r < inp.q.rows(); ++r)
                        for (std::size_t j = 0; j < tokens.size(); ++j) {
                            check_arg(r < opt.prob_trace->l0 && tokens[j] < opt.prob_trace->l1,
                                      "run_model: probability trace smaller than workload");
                            m(r, j) = opt.prob_trace->at(static_cast<std::size_t>(l), h, r, tokens[j]);
                        }
                    traced.push_back(std::move(m));
                }
                accumulate_token_importance(state, traced);
            } else {
                accumulate_token_importance(state, detail::compact_probs(res, kept_heads, tokens));
            }
            accumulate_head_importance(state, res.out);

            out.summaries.push_back({step, static_cast<std::size_t>(l), tokens.size(), kept_heads.size()});
            out.layer_results[l] = std::move(res);
        }
    }

    if (arch != nullptr) {
        SimOptions sopt;
        sopt.v_keep = opt.v_keep;
        out.report = simulate(wl, *arch, sched, pq, topk_cfg, sopt).report;
    }
    return out;
}

}  // namespace spatten
