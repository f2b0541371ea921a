#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "spatten/runner.hpp"

using namespace spatten;

TEST(Preset, PaperShapes) {
    ModelConfig g = preset("gpt2-small");
    EXPECT_EQ(g.num_layers, 12);
    EXPECT_EQ(g.heads_per_layer, 12);
    EXPECT_EQ(g.prompt_len, 992u);
    EXPECT_EQ(g.gen_steps, 32u);
    EXPECT_EQ(g.stage, Stage::Generation);

    ModelConfig b = preset("bert-large");
    EXPECT_EQ(b.num_layers, 24);
    EXPECT_EQ(b.heads_per_layer, 16);
    EXPECT_EQ(b.stage, Stage::Summarization);

    EXPECT_THROW(preset("bort-huge"), std::invalid_argument);
}

TEST(Preset, CustomOverrideRoundTrip) {
    ModelConfig c = preset("bert-base");
    c.seq_len = 128;
    c.seed = 99;
    ModelConfig d = c;
    EXPECT_EQ(d.seq_len, 128u);
    EXPECT_EQ(d.seed, 99u);
    EXPECT_EQ(d.num_layers, c.num_layers);
}

TEST(Preset, ContextLimitEnforced) {
    ModelConfig c = preset("gpt2-small");
    c.prompt_len = 1000;
    c.gen_steps = 32;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SynthInputs, DeterministicPerSeed) {
    ModelConfig cfg = preset("bert-base");
    cfg.seq_len = 16;
    SynthWorkload a(cfg), b(cfg);
    LayerInputs la = a.layer_inputs(3), lb = b.layer_inputs(3);
    EXPECT_TRUE(la.q == lb.q);
    EXPECT_TRUE(la.k == lb.k);
    EXPECT_TRUE(la.v == lb.v);

    cfg.seed = 2;
    SynthWorkload c(cfg);
    EXPECT_FALSE(c.layer_inputs(3).q == la.q);
}

namespace {

// Fraction of (head, row) pairs whose max softmax probability exceeds `cut`.
double dominant_fraction(const SynthWorkload& wl, std::size_t layer, double cut,
                         double* mean_max = nullptr) {
    const ModelConfig& cfg = wl.config();
    LayerInputs li = wl.layer_inputs(layer);
    const std::size_t d = static_cast<std::size_t>(cfg.d_per_head);
    const std::size_t l1 = li.k.rows();
    std::size_t hits = 0, total = 0;
    double accum = 0.0;
    for (int h = 0; h < cfg.heads_per_layer; ++h) {
        for (std::size_t r = 0; r < li.q.rows(); ++r) {
            std::vector<double> score(l1);
            for (std::size_t t = 0; t < l1; ++t) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += li.q(r, h * d + c) * li.k(t, h * d + c);
                score[t] = s / std::sqrt(static_cast<double>(d));
            }
            auto p = softmax_row(score, iota_indices(l1));
            double mx = 0.0;
            for (double x : p) mx = std::max(mx, x);
            accum += mx;
            hits += mx > cut;
            ++total;
        }
    }
    if (mean_max != nullptr) *mean_max = accum / static_cast<double>(total);
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST(SynthInputs, PeakedModeDominates) {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 64;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 256;
    cfg.input_mode = InputMode::Peaked;
    SynthWorkload wl(cfg);
    EXPECT_GE(dominant_fraction(wl, 0, 0.5), 0.9);
}

TEST(SynthInputs, NormalModeStaysFlat) {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.heads_per_layer = 1;
    cfg.d_per_head = 64;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 1024;
    cfg.input_mode = InputMode::Normal;
    SynthWorkload wl(cfg);
    double mean_max = 1.0;
    dominant_fraction(wl, 0, 0.5, &mean_max);
    EXPECT_LT(mean_max, 0.1);
}

TEST(SynthInputs, MixedModeHitsRequestedFlatFraction) {
    ModelConfig cfg;
    cfg.num_layers = 4;
    cfg.heads_per_layer = 8;
    cfg.d_per_head = 16;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 64;
    cfg.input_mode = InputMode::Mixed;
    cfg.flat_fraction = 0.059;
    SynthWorkload wl(cfg);
    std::size_t flats = 0, total = 0;
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t h = 0; h < 8; ++h)
            for (std::size_t r = 0; r < 64; ++r) {
                flats += wl.is_flat_row(l, h, r);
                ++total;
            }
    const double rate = static_cast<double>(flats) / static_cast<double>(total);
    EXPECT_NEAR(rate, 0.059, 0.002);
}

TEST(ProbTrace, RoundTrip) {
    ProbTrace t;
    t.l0 = 2;
    t.l1 = 3;
    t.heads = 2;
    t.layers = 2;
    t.data.resize(t.l0 * t.l1 * t.heads * t.layers);
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i) * 0.25f;

    const std::string path =
        (std::filesystem::temp_directory_path() / "spatten_trace_test.bin").string();
    write_prob_trace(path, t);
    ProbTrace back = read_prob_trace(path);
    std::remove(path.c_str());
    EXPECT_EQ(back.l0, t.l0);
    EXPECT_EQ(back.l1, t.l1);
    EXPECT_EQ(back.heads, t.heads);
    EXPECT_EQ(back.layers, t.layers);
    EXPECT_EQ(back.data, t.data);
}

namespace {

ModelConfig small_gen() {
    ModelConfig cfg;
    cfg.num_layers = 4;
    cfg.heads_per_layer = 4;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Generation;
    cfg.prompt_len = 24;
    cfg.gen_steps = 6;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST(RunModel, AllKeepEqualsDenseAttention) {
    ModelConfig cfg;
    cfg.num_layers = 3;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 12;
    cfg.seed = 7;
    RunModelResult r = run_model(cfg, PruneSchedule::all_keep(3), PQPolicy{.enabled = false},
                                 TopKConfig{});
    SynthWorkload wl(cfg);
    for (int l = 0; l < 3; ++l) {
        LayerInputs li = wl.layer_inputs(l);
        AttentionInput inp{std::move(li.q), std::move(li.k), std::move(li.v), 2};
        AttentionResult want = attention_dense(inp);
        ASSERT_TRUE(r.layer_results[l].out == want.out) << "layer " << l;
    }
}

TEST(RunModel, KeptCountsFollowScheduleArithmetic) {
    ModelConfig cfg = small_gen();
    const double f = 1.0 / 3.8;
    RunModelResult r = run_model(cfg, PruneSchedule::flat(cfg.num_layers, f, 1.0),
                                 PQPolicy{.enabled = false}, TopKConfig{});
    for (const LayerRunSummary& s : r.summaries) {
        const std::size_t total_now = cfg.prompt_len + s.step + 1;
        const auto want = static_cast<std::size_t>(std::ceil(f * static_cast<double>(total_now)));
        ASSERT_EQ(s.kept_tokens, want) << "step " << s.step << " layer " << s.layer;
    }
}

TEST(RunModel, HeadCountsMonotoneUnderCascade) {
    ModelConfig cfg = small_gen();
    PruneSchedule sched = make_interpolated_schedule(cfg.num_layers, 0.9, 1.0 / 1.1);
    RunModelResult r = run_model(cfg, sched, PQPolicy{.enabled = false}, TopKConfig{});
    std::size_t prev = cfg.heads_per_layer;
    for (const LayerRunSummary& s : r.summaries) {
        ASSERT_LE(s.kept_heads, prev);
        prev = s.kept_heads;
    }
}

TEST(RunModel, TraceDrivenImportance) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 8;

    // A trace that concentrates probability on token 5 forces it to survive.
    ProbTrace t;
    t.l0 = 8;
    t.l1 = 8;
    t.heads = 2;
    t.layers = 2;
    t.data.assign(t.l0 * t.l1 * t.heads * t.layers, 0.0f);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t r = 0; r < 8; ++r) t.data[((l * 2 + h) * 8 + r) * 8 + 5] = 1.0f;

    RunOptions opt;
    opt.prob_trace = &t;
    PruneSchedule sched = PruneSchedule::all_keep(2);
    sched.layer_keep_ratio_tokens[1] = 0.25;  // prune only after the trace has voted
    RunModelResult r = run_model(cfg, sched, PQPolicy{.enabled = false}, TopKConfig{}, nullptr, opt);
    const auto& kept = r.state.kept_tokens;
    EXPECT_NE(std::find(kept.begin(), kept.end(), 5u), kept.end());
}

TEST(RunModel, PerHeadGranularityStillCascades) {
    ModelConfig cfg = small_gen();
    RunOptions opt;
    opt.per_head_token_select = true;
    RunModelResult r = run_model(cfg, PruneSchedule::flat(cfg.num_layers, 0.5, 1.0),
                                 PQPolicy{.enabled = false}, TopKConfig{}, nullptr, opt);
    std::size_t prev = cfg.prompt_len + 1;
    std::size_t step = 0;
    for (const LayerRunSummary& s : r.summaries) {
        if (s.step != step) {
            step = s.step;
            prev += 1;  // one appended token per iteration
        }
        ASSERT_LE(s.kept_tokens, prev);
        prev = s.kept_tokens;
    }
}

TEST(RunModel, ValuePruningDropsSmallestProbabilities) {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 10;
    cfg.seed = 13;
    RunOptions opt;
    opt.v_keep = 0.5;
    RunModelResult got = run_model(cfg, PruneSchedule::all_keep(1), PQPolicy{.enabled = false},
                                   TopKConfig{}, nullptr, opt);

    SynthWorkload wl(cfg);
    LayerInputs li = wl.layer_inputs(0);
    AttentionInput inp{std::move(li.q), std::move(li.k), std::move(li.v), 2};
    AttentionResult dense = attention_dense(inp);
    for (int h = 0; h < 2; ++h) {
        ASSERT_TRUE(got.layer_results[0].prob[h] == dense.prob[h]);
        for (std::size_t r = 0; r < 10; ++r) {
            std::vector<double> row(dense.prob[h].row(r).begin(), dense.prob[h].row(r).end());
            const std::vector<std::size_t> kept = local_value_prune(row, 0.5);
            for (std::size_t c = 0; c < 8; ++c) {
                double want = 0.0;
                for (std::size_t t : kept) want += row[t] * inp.v(t, h * 8 + c);
                ASSERT_NEAR(got.layer_results[0].out(r, h * 8 + c), want, 1e-12);
            }
        }
    }
}

TEST(RunModel, ProgressivePathHonorsValuePruning) {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 12;
    cfg.seed = 31;
    PQPolicy pq;
    pq.msb_bits = 8;
    pq.lsb_bits = 4;
    RunOptions full, pruned;
    pruned.v_keep = 0.5;
    RunModelResult a = run_model(cfg, PruneSchedule::all_keep(1), pq, TopKConfig{}, nullptr, full);
    RunModelResult b = run_model(cfg, PruneSchedule::all_keep(1), pq, TopKConfig{}, nullptr, pruned);
    EXPECT_FALSE(a.layer_results[0].out == b.layer_results[0].out);
    for (int h = 0; h < 2; ++h)  // probabilities themselves are untouched
        EXPECT_TRUE(a.layer_results[0].prob[h] == b.layer_results[0].prob[h]);
}

TEST(RunModel, ProgressiveStatsCountOnlySurvivingHeads) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.heads_per_layer = 4;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 8;
    PQPolicy pq;
    pq.msb_bits = 8;
    pq.lsb_bits = 4;
    PruneSchedule sched = PruneSchedule::flat(2, 1.0, 0.5);  // half the heads survive from layer 0 on
    RunModelResult r = run_model(cfg, sched, pq, TopKConfig{});
    // Two kept heads x 8 rows per layer.
    EXPECT_EQ(r.pq.rows_total, 2u * 8u + 2u * 8u);
    // Pruned head chunks stay zero in the scattered output.
    const auto& kept = r.state.kept_heads;
    for (std::size_t h = 0; h < 4; ++h) {
        if (std::find(kept.begin(), kept.end(), h) != kept.end()) continue;
        for (std::size_t c = 0; c < 8; ++c)
            EXPECT_DOUBLE_EQ(r.layer_results[1].out(0, h * 8 + c), 0.0);
    }
}

TEST(RunModel, MergesSimReportWhenArchGiven) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.heads_per_layer = 2;
    cfg.d_per_head = 8;
    cfg.stage = Stage::Summarization;
    cfg.seq_len = 8;
    ArchConfig arch;
    RunModelResult r =
        run_model(cfg, PruneSchedule::all_keep(2), PQPolicy{.enabled = false}, TopKConfig{}, &arch);
    ASSERT_TRUE(r.report.has_value());
    EXPECT_GT(r.report->total_cycles, 0u);
    EXPECT_GT(r.report->dram_bytes_total, 0.0);
}
