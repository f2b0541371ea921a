#pragma once

#include <algorithm>
#include <cinttypes>
#include <cstdarg>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "spatten/runner.hpp"

// Self-contained verification suites behind the `verify` CLI command and the
// acceptance test binary. Oracles here are written independently of the
// library paths they check (stable sorts, naive filters, closed-form byte
// arithmetic, hand-rolled integer attention).

namespace spatten::verify {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

struct VerifyOptions {
    // Fault injection for the harness itself: flips the top-k tie rule so the
    // oracle-equivalence suite must go red.
    bool inject_topk_tie_fault = false;
};

namespace detail {

inline std::string format(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

inline std::vector<std::size_t> stable_topk_oracle(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Swap the surviving ties from first occurrences to last occurrences.
inline std::vector<std::size_t> flip_tie_rule(std::span<const double> scores,
                                              const TopKResult& res) {
    std::vector<std::size_t> kept;
    for (std::size_t i : res.kept_indices)
        if (scores[i] > res.kth_value) kept.push_back(i);
    std::vector<std::size_t> ties;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] == res.kth_value) ties.push_back(i);
    const std::size_t take = std::min(res.num_eq_kth, ties.size());
    kept.insert(kept.end(), ties.end() - static_cast<std::ptrdiff_t>(take), ties.end());
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace detail

// 1. filter_top_k against the stable-sort oracle: 1000 seeded vectors with
//    lengths 1..1024 and 20% duplicate mass, exact equality.
inline CriterionResult check_topk_oracle(const VerifyOptions& opt) {
    CriterionResult res{1, "top-k oracle equivalence", true, ""};
    std::mt19937_64 rng(20240001);
    std::uniform_real_distribution<double> uni(0.0, 100.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> grid(0, 7);
    std::size_t checked = 0;
    for (int iter = 0; iter < 1000; ++iter) {
        std::uniform_int_distribution<std::size_t> len(1, 1024);
        const std::size_t n = len(rng);
        std::vector<double> s(n);
        for (double& x : s) x = coin(rng) < 0.2 ? static_cast<double>(grid(rng)) : uni(rng);
        std::uniform_int_distribution<std::size_t> kd(1, n);
        const std::size_t k = kd(rng);
        TopKConfig cfg;
        cfg.rng_seed = rng();
        TopKResult r = filter_top_k(s, k, cfg);
        std::vector<std::size_t> got =
            opt.inject_topk_tie_fault ? detail::flip_tie_rule(s, r) : r.kept_indices;
        if (got != detail::stable_topk_oracle(s, k)) {
            res.pass = false;
            res.detail = detail::format("mismatch at iter %d (n=%zu, k=%zu)", iter, n, k);
            return res;
        }
        ++checked;
    }
    res.detail = detail::format("%zu random vectors matched exactly", checked);
    return res;
}

// 2. Zero eliminator vs naive nonzero filtering: every length 1..256 plus 500
//    random length-1024 cases, exact.
inline CriterionResult check_zero_eliminator() {
    CriterionResult res{2, "zero eliminator equivalence", true, ""};
    std::mt19937_64 rng(20240002);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto run_case = [&](const std::vector<double>& arr) {
        std::vector<double> want_vals;
        std::vector<std::size_t> want_src;
        for (std::size_t i = 0; i < arr.size(); ++i)
            if (arr[i] != 0.0) {
                want_vals.push_back(arr[i]);
                want_src.push_back(i);
            }
        auto [vals, src] = zero_eliminate(arr);
        return vals == want_vals && src == want_src;
    };
    for (std::size_t n = 1; n <= 256; ++n) {
        for (int rep = 0; rep < 3; ++rep) {
            std::vector<double> arr(n);
            const double density = rep == 0 ? 0.5 : rep == 1 ? 0.0 : 1.0;
            for (double& x : arr) x = uni(rng) < density ? uni(rng) + 0.1 : 0.0;
            if (!run_case(arr)) {
                res.pass = false;
                res.detail = detail::format("mismatch at n=%zu", n);
                return res;
            }
        }
    }
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<double> arr(1024);
        for (double& x : arr) x = uni(rng) < 0.5 ? uni(rng) + 0.1 : 0.0;
        if (!run_case(arr)) {
            res.pass = false;
            res.detail = detail::format("mismatch at random 1024 iter %d", iter);
            return res;
        }
    }
    res.detail = "all lengths 1..256 and 500 random length-1024 cases exact";
    return res;
}

// 3. Softmax first-order sensitivity: the measured probability change stays
//    within the 2p(1-p) bound (1% slack) and below the perturbation itself.
inline CriterionResult check_softmax_error_bound() {
    CriterionResult res{3, "softmax perturbation bound", true, ""};
    std::mt19937_64 rng(20240003);
    std::normal_distribution<double> dist(0.0, 1.0);
    const double ds = 1e-4;
    double worst_ratio = 0.0;
    for (int iter = 0; iter < 10000; ++iter) {
        std::uniform_int_distribution<std::size_t> len(2, 1024);
        std::vector<double> s(len(rng));
        for (double& x : s) x = dist(rng);
        std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
        SoftmaxErrorBound b = softmax_error_bound_check(s, pick(rng), ds);
        if (b.measured_error > b.bound * (1.0 + 1e-2) || b.measured_error >= ds) {
            res.pass = false;
            res.detail = detail::format("violation at iter %d: measured=%.3e bound=%.3e", iter,
                                        b.measured_error, b.bound);
            return res;
        }
        if (b.bound > 0) worst_ratio = std::max(worst_ratio, b.measured_error / b.bound);
    }
    res.detail = detail::format("10000 vectors, worst measured/bound = %.6f", worst_ratio);
    return res;
}

// 4. Pruning functional fidelity: masked attention equals dense attention on
//    physically sliced tensors (1e-9), and the keep-everything fixed-point
//    pipeline equals an independent integer attention bit for bit.
inline CriterionResult check_pruning_fidelity() {
    CriterionResult res{4, "pruning functional fidelity", true, ""};
    std::mt19937_64 rng(20240004);

    for (int iter = 0; iter < 20; ++iter) {
        const std::size_t l0 = 6, l1 = 16;
        const int heads = 4;
        const std::size_t d = 8;
        AttentionInput inp;
        inp.q = random_normal_matrix(l0, heads * d, rng);
        inp.k = random_normal_matrix(l1, heads * d, rng);
        inp.v = random_normal_matrix(l1, heads * d, rng);
        inp.heads = heads;

        std::vector<std::size_t> tokens;
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        for (std::size_t t = 0; t < l1; ++t)
            if (coin(rng) < 0.6) tokens.push_back(t);
        if (tokens.empty()) tokens.push_back(0);

        AttentionInput sliced = inp;
        sliced.k = Matrix(tokens.size(), inp.d_in());
        sliced.v = Matrix(tokens.size(), inp.d_in());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            std::copy(inp.k.row(tokens[i]).begin(), inp.k.row(tokens[i]).end(),
                      sliced.k.row(i).begin());
            std::copy(inp.v.row(tokens[i]).begin(), inp.v.row(tokens[i]).end(),
                      sliced.v.row(i).begin());
        }
        AttentionResult want = attention_dense(sliced);
        AttentionResult got = attention_masked(inp, tokens, iota_indices(heads));
        for (std::size_t i = 0; i < want.out.size(); ++i) {
            if (std::abs(got.out.flat()[i] - want.out.flat()[i]) > 1e-9) {
                res.pass = false;
                res.detail = detail::format("mask-vs-slice mismatch at iter %d", iter);
                return res;
            }
        }
    }

    // Fixed-point path, keep ratio 1 everywhere: bitwise against a
    // self-contained integer reference.
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 16;
    cfg.seed = 44;
    SynthWorkload wl(cfg);
    ArchConfig arch;
    SimOptions opt;
    opt.capture = true;
    SimResult sim = simulate(wl, arch, PruneSchedule::all_keep(cfg.num_layers),
                             PQPolicy{.enabled = false}, TopKConfig{}, opt);
    const std::size_t d = 8;
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerInputs li = wl.layer_inputs(l);
        auto quant_codes = [](const Matrix& m, double& scale) {
            double mx = 0.0;
            for (double v : m.flat()) mx = std::max(mx, std::abs(v));
            scale = mx > 0 ? mx / 2047.0 : 1.0;
            std::vector<int> codes(m.size());
            for (std::size_t i = 0; i < m.size(); ++i)
                codes[i] = static_cast<int>(
                    std::clamp(std::lround(m.flat()[i] / scale), -2047l, 2047l));
            return codes;
        };
        double sq, sk, sv;
        auto qc = quant_codes(li.q, sq);
        auto kc = quant_codes(li.k, sk);
        auto vc = quant_codes(li.v, sv);
        const double score_scale = sq * sk / std::sqrt(static_cast<double>(d));
        for (std::size_t head = 0; head < 2; ++head) {
            for (std::size_t row = 0; row < cfg.seq_len; ++row) {
                std::vector<double> score(cfg.seq_len);
                for (std::size_t t = 0; t < cfg.seq_len; ++t) {
                    std::int64_t acc = 0;
                    for (std::size_t c = 0; c < d; ++c)
                        acc += static_cast<std::int64_t>(qc[row * cfg.d_in() + head * d + c]) *
                               kc[t * cfg.d_in() + head * d + c];
                    score[t] = static_cast<double>(acc) * score_scale;
                }
                double m = -std::numeric_limits<double>::infinity();
                for (double s : score) m = std::max(m, s);
                std::vector<double> prob(score.size());
                double denom = 0.0;
                for (std::size_t t = 0; t < score.size(); ++t) {
                    prob[t] = std::exp(score[t] - m);
                    denom += prob[t];
                }
                for (double& p : prob) p /= denom;
                for (std::size_t c = 0; c < d; ++c) {
                    std::int64_t sum = 0;
                    for (std::size_t t = 0; t < cfg.seq_len; ++t)
                        sum += static_cast<std::int64_t>(
                                   std::clamp(std::lround(prob[t] * 2047.0), 0l, 2047l)) *
                               vc[t * cfg.d_in() + head * d + c];
                    const double want = static_cast<double>(sum) * ((1.0 / 2047.0) * sv);
                    if (sim.capture.layer_out[l](row, head * d + c) != want) {
                        res.pass = false;
                        res.detail =
                            detail::format("fixed-point mismatch layer %d head %zu row %zu", l,
                                           head, row);
                        return res;
                    }
                }
            }
        }
    }
    res.detail = "masked == sliced-dense to 1e-9; keep-all fixed-point path bitwise exact";
    return res;
}

// 5. Cascade invariants over 100 random 24-layer schedules: kept sets only
//    shrink and every layer's accumulation adds kept_heads * L0 probability
//    mass.
inline CriterionResult check_cascade_invariants() {
    CriterionResult res{5, "cascade invariants", true, ""};
    std::mt19937_64 rng(20240005);
    std::uniform_real_distribution<double> ravg(0.25, 1.0);
    std::uniform_real_distribution<double> prefix(0.0, 0.4);
    for (int run = 0; run < 100; ++run) {
        const int layers = 24;
        const int heads = 4;
        const std::size_t d = 8, seq = 32;
        PruneSchedule sched = make_interpolated_schedule(layers, ravg(rng), ravg(rng),
                                                         prefix(rng), prefix(rng));
        ModelConfig cfg;
        cfg.num_layers = layers;
        cfg.heads_per_layer = heads;
        cfg.d_per_head = static_cast<int>(d);
        cfg.stage = Stage::Summarization;
        cfg.seq_len = seq;
        cfg.seed = 1000 + static_cast<std::uint64_t>(run);
        SynthWorkload wl(cfg);

        ImportanceState state(seq, heads);
        std::vector<std::size_t> prev_tokens = state.kept_tokens;
        std::vector<std::size_t> prev_heads = state.kept_heads;
        for (int l = 0; l < layers; ++l) {
            apply_schedule_layer(state, sched, static_cast<std::size_t>(l), seq, heads);
            if (!std::includes(prev_tokens.begin(), prev_tokens.end(), state.kept_tokens.begin(),
                               state.kept_tokens.end()) ||
                !std::includes(prev_heads.begin(), prev_heads.end(), state.kept_heads.begin(),
                               state.kept_heads.end())) {
                res.pass = false;
                res.detail = detail::format("cascade violated at run %d layer %d", run, l);
                return res;
            }
            prev_tokens = state.kept_tokens;
            prev_heads = state.kept_heads;

            LayerInputs li = wl.layer_inputs(static_cast<std::size_t>(l));
            AttentionInput inp{std::move(li.q), std::move(li.k), std::move(li.v), heads};
            AttentionResult ar = attention_masked(inp, state.kept_tokens, state.kept_heads);

            const double before =
                std::accumulate(state.token_scores.begin(), state.token_scores.end(), 0.0);
            std::vector<Matrix> compact;
            for (std::size_t h : state.kept_heads) {
                Matrix m(seq, state.kept_tokens.size());
                for (std::size_t r = 0; r < seq; ++r)
                    for (std::size_t j = 0; j < state.kept_tokens.size(); ++j)
                        m(r, j) = ar.prob[h](r, state.kept_tokens[j]);
                compact.push_back(std::move(m));
            }
            accumulate_token_importance(state, compact);
            accumulate_head_importance(state, ar.out);
            const double after =
                std::accumulate(state.token_scores.begin(), state.token_scores.end(), 0.0);
            const double want = static_cast<double>(state.kept_heads.size() * seq);
            if (std::abs((after - before) - want) > 1e-9) {
                res.pass = false;
                res.detail = detail::format("conservation off at run %d layer %d: got %.12f want %.1f",
                                            run, l, after - before, want);
                return res;
            }
        }
    }
    res.detail = "100 random schedules: kept sets shrink, probability mass conserved";
    return res;
}

// 6. DRAM traffic against the closed-form series for the generation preset,
//    unpruned and at an average token keep of 1/3.8.
inline CriterionResult check_traffic_oracle() {
    CriterionResult res{6, "DRAM traffic oracle", true, ""};
    ModelConfig cfg = preset("gpt2-small");
    SynthWorkload wl(cfg);
    ArchConfig arch;
    SimOptions opt;
    opt.functional = false;

    SimResult full = simulate(wl, arch, PruneSchedule::all_keep(cfg.num_layers),
                              PQPolicy{.enabled = false}, TopKConfig{}, opt);
    double want_k = 0.0;
    for (std::size_t t = 0; t < cfg.gen_steps; ++t)
        want_k += static_cast<double>(cfg.prompt_len + t + 1) * 64.0 * 1.5 * 12.0 * 12.0;
    const double rel_err = std::abs(full.report.traffic.k_bytes() - want_k) / want_k;
    if (rel_err > 0.01 || std::abs(full.report.traffic.v_bytes() - want_k) / want_k > 0.01) {
        res.pass = false;
        res.detail = detail::format("unpruned K/V bytes off by %.4f%%", rel_err * 100.0);
        return res;
    }

    const double f = 1.0 / 3.8;
    SimResult kept = simulate(wl, arch, PruneSchedule::flat(cfg.num_layers, f, 1.0),
                              PQPolicy{.enabled = false}, TopKConfig{}, opt);
    double want_kept = 0.0;
    for (std::size_t t = 0; t < cfg.gen_steps; ++t) {
        const auto n = static_cast<double>(static_cast<std::size_t>(
            std::ceil(f * static_cast<double>(cfg.prompt_len + t + 1))));
        want_kept += n * 64.0 * 1.5 * 12.0 * 12.0;
    }
    const double kept_err = std::abs(kept.report.traffic.k_bytes() - want_kept) / want_kept;
    const double ratio =
        (full.report.traffic.k_bytes() + full.report.traffic.v_bytes()) /
        (kept.report.traffic.k_bytes() + kept.report.traffic.v_bytes());
    if (kept_err > 0.01 || std::abs(ratio - 3.8) > 3.8 * 0.05) {
        res.pass = false;
        res.detail = detail::format("pruned bytes err %.4f%%, reduction %.3fx", kept_err * 100.0, ratio);
        return res;
    }
    res.detail = detail::format("series match <= 1%%; keep 1/3.8 cuts K/V bytes by %.2fx", ratio);
    return res;
}

// 7. Progressive quantization traffic at a 5.9% injected refetch rate: Q/K
//    bytes sit between the MSB-only floor and the full-width ceiling, and
//    match msb + rate * lsb within 2%.
inline CriterionResult check_pq_traffic() {
    CriterionResult res{7, "progressive quantization traffic", true, ""};
    ModelConfig cfg = preset("gpt2-small");
    cfg.input_mode = InputMode::Mixed;
    cfg.flat_fraction = 0.059;
    SynthWorkload wl(cfg);
    ArchConfig arch;
    PQPolicy pq;
    pq.msb_bits = 8;
    pq.lsb_bits = 4;
    pq.threshold = 0.1;
    SimResult r = simulate(wl, arch, PruneSchedule::all_keep(cfg.num_layers), pq, TopKConfig{});

    // Closed-form MSB/LSB plane sizes for the unpruned generation run.
    double msb_qk = 0.0, lsb_qk = 0.0;
    for (std::size_t t = 0; t < cfg.gen_steps; ++t) {
        const double n = static_cast<double>(cfg.prompt_len + t + 1);
        const double elems = 12.0 * 12.0 * (n * 64.0 + 64.0);  // K rows + the Q row, per layer/head
        msb_qk += elems * 1.0;   // 8-bit MSB plane
        lsb_qk += elems * 0.5;   // 4-bit LSB plane
    }
    const double rate = static_cast<double>(r.report.pq.rows_refetched) /
                        static_cast<double>(r.report.pq.rows_total);
    const double got_qk = r.report.traffic.q_bytes() + r.report.traffic.k_bytes();
    const double want_qk = msb_qk + rate * lsb_qk;
    const double err = std::abs(got_qk - want_qk) / want_qk;
    const bool bounded = got_qk >= msb_qk && got_qk <= msb_qk + lsb_qk;
    if (!bounded || err > 0.02 || std::abs(rate - 0.059) > 0.01) {
        res.pass = false;
        res.detail = detail::format("rate=%.4f, formula err=%.3f%%, bounded=%d", rate, err * 100.0,
                                    bounded);
        return res;
    }
    res.detail = detail::format("refetch rate %.4f; Q/K bytes match msb + rate*lsb within %.3f%%",
                                rate, err * 100.0);
    return res;
}

// 8. Roofline placement: the summarization preset lands compute-bound at
//    >= 1.4 TFLOPS under the 2 TFLOPS roof; the generation preset is
//    memory-bound and capped by OI x bandwidth.
inline CriterionResult check_roofline() {
    CriterionResult res{8, "roofline placement", true, ""};
    ArchConfig arch;
    SimOptions opt;
    opt.functional = false;

    ModelConfig bert = preset("bert-base");
    SynthWorkload bw(bert);
    SimResult br = simulate(bw, arch, PruneSchedule::all_keep(bert.num_layers),
                            PQPolicy{.enabled = false}, TopKConfig{}, opt);
    RooflinePoint bp = roofline_eval(br.report, arch);
    if (bp.bound != RooflineBound::Compute || bp.achieved_flops < 1.4e12 ||
        bp.achieved_flops >= 2.0e12) {
        res.pass = false;
        res.detail = detail::format("summarization achieved %.3f TFLOPS (bound %s)",
                                    bp.achieved_flops / 1e12,
                                    bp.bound == RooflineBound::Compute ? "compute" : "memory");
        return res;
    }

    ModelConfig gpt = preset("gpt2-small");
    SynthWorkload gw(gpt);
    SimResult gr = simulate(gw, arch, PruneSchedule::all_keep(gpt.num_layers),
                            PQPolicy{.enabled = false}, TopKConfig{}, opt);
    RooflinePoint gp = roofline_eval(gr.report, arch);
    const double cap = gp.operational_intensity * arch.total_bandwidth_bytes_per_s();
    if (gp.bound != RooflineBound::Memory || gp.achieved_flops > cap * (1.0 + 1e-12)) {
        res.pass = false;
        res.detail = detail::format("generation bound %s, achieved %.1f GFLOPS vs cap %.1f",
                                    gp.bound == RooflineBound::Compute ? "compute" : "memory",
                                    gp.achieved_flops / 1e9, cap / 1e9);
        return res;
    }
    res.detail = detail::format(
        "summarization %.2f TFLOPS compute-bound; generation %.1f GFLOPS memory-bound",
        bp.achieved_flops / 1e12, gp.achieved_flops / 1e9);
    return res;
}

// Canonical generation configuration for the design-space and breakdown
// criteria: average token keep 1/3.8, head keep 1/1.1, local V keep 0.5.
struct SweepBase {
    ModelConfig cfg;
    PruneSchedule sched;
    SimOptions opt;
};

inline SweepBase breakdown_base(const std::string& preset_name) {
    SweepBase base;
    base.cfg = preset(preset_name);
    base.sched = PruneSchedule::flat(base.cfg.num_layers, 1.0 / 3.8, 1.0 / 1.1);
    base.opt.functional = false;
    base.opt.v_keep = 0.5;
    return base;
}

// 9. Design-space curves: cycles fall monotonically with top-k parallelism,
//    jump >= 3x from P=1 to P=16, gain < 5% from 16 to 32, and key/value SRAM
//    past 196 KB changes nothing measurable.
inline CriterionResult check_design_space() {
    CriterionResult res{9, "design-space curves", true, ""};
    SweepBase base = breakdown_base("gpt2-small");
    SynthWorkload wl(base.cfg);
    ArchConfig arch;

    std::vector<int> ps{1, 2, 4, 8, 16, 32};
    std::vector<std::uint64_t> cycles;
    for (int p : ps) {
        TopKConfig tk;
        tk.parallelism = p;
        cycles.push_back(simulate(wl, arch, base.sched, PQPolicy{.enabled = false}, tk, base.opt)
                             .report.total_cycles);
    }
    for (std::size_t i = 1; i < cycles.size(); ++i) {
        if (cycles[i] > cycles[i - 1]) {
            res.pass = false;
            res.detail = detail::format("cycles increased from P=%d to P=%d", ps[i - 1], ps[i]);
            return res;
        }
    }
    const double jump = static_cast<double>(cycles[0]) / static_cast<double>(cycles[4]);
    const double tail_gain =
        static_cast<double>(cycles[4] - cycles[5]) / static_cast<double>(cycles[4]);
    if (jump < 3.0 || tail_gain >= 0.05) {
        res.pass = false;
        res.detail = detail::format("P1/P16 = %.2fx, P16->P32 gain %.2f%%", jump, tail_gain * 100.0);
        return res;
    }

    TopKConfig tk16;
    ArchConfig big = arch;
    big.key_sram_bytes = 392 * 1024;
    big.value_sram_bytes = 392 * 1024;
    const auto c196 =
        simulate(wl, arch, base.sched, PQPolicy{.enabled = false}, tk16, base.opt).report.total_cycles;
    const auto c392 =
        simulate(wl, big, base.sched, PQPolicy{.enabled = false}, tk16, base.opt).report.total_cycles;
    const double sram_diff = std::abs(static_cast<double>(c196) - static_cast<double>(c392)) /
                             static_cast<double>(c196);
    if (sram_diff >= 0.01) {
        res.pass = false;
        res.detail = detail::format("SRAM sweep changed cycles by %.3f%%", sram_diff * 100.0);
        return res;
    }
    res.detail = detail::format("P1/P16 = %.2fx, P16->P32 gain %.2f%%, SRAM diff %.3f%%", jump,
                                tail_gain * 100.0, sram_diff * 100.0);
    return res;
}

// 10. Speedup breakdown on the gpt2-medium shape: cumulative configurations
//     never slow down; the pruning and quantization steps each contribute
//     more than 1.5x. Exact ratios are reported, not pinned.
inline CriterionResult check_speedup_breakdown() {
    CriterionResult res{10, "speedup breakdown", true, ""};
    SweepBase base = breakdown_base("gpt2-medium");
    SynthWorkload wl(base.cfg);
    ArchConfig arch;
    PQPolicy pq;
    pq.msb_bits = 8;
    pq.lsb_bits = 4;
    pq.fixed_refetch_rate = 0.059;
    BreakdownCycles bd = speedup_breakdown(wl, arch, base.sched, pq, TopKConfig{}, base.opt);

    const bool monotone = bd.datapath_only > bd.with_pruning &&
                          bd.with_pruning > bd.with_parallel_topk &&
                          bd.with_parallel_topk > bd.with_pq;
    const double pruning_gain =
        static_cast<double>(bd.datapath_only) / static_cast<double>(bd.with_parallel_topk);
    const double pq_gain =
        static_cast<double>(bd.with_parallel_topk) / static_cast<double>(bd.with_pq);
    if (!monotone || pruning_gain <= 1.5 || pq_gain <= 1.5) {
        res.pass = false;
        res.detail = detail::format("monotone=%d pruning %.2fx pq %.2fx", monotone, pruning_gain,
                                    pq_gain);
        return res;
    }
    res.detail = detail::format(
        "cycles %" PRIu64 " -> %" PRIu64 " -> %" PRIu64 " -> %" PRIu64
        "; pruning+engine %.2fx, quantization %.2fx",
        bd.datapath_only, bd.with_pruning, bd.with_parallel_topk, bd.with_pq, pruning_gain, pq_gain);
    return res;
}

inline std::vector<CriterionResult> run_acceptance(const VerifyOptions& opt = {}) {
    std::vector<CriterionResult> out;
    out.push_back(check_topk_oracle(opt));
    out.push_back(check_zero_eliminator());
    out.push_back(check_softmax_error_bound());
    out.push_back(check_pruning_fidelity());
    out.push_back(check_cascade_invariants());
    out.push_back(check_traffic_oracle());
    out.push_back(check_pq_traffic());
    out.push_back(check_roofline());
    out.push_back(check_design_space());
    out.push_back(check_speedup_breakdown());
    return out;
}

}  // namespace spatten::verify
