#pragma once

#include <cstdint>
#include <optional>

#include "spatten/progressive_quant.hpp"
#include "spatten/pruning.hpp"
#include "spatten/workloads.hpp"

namespace spatten {

struct ArchConfig {
    int qk_multipliers = 512;
    int pv_multipliers = 512;
    std::size_t key_sram_bytes = 196 * 1024;    // double-buffered: half per head image
    std::size_t value_sram_bytes = 196 * 1024;
    int hbm_channels = 16;
    int channel_bw_bytes_per_cycle = 32;        // 32 GB/s per channel at 1 GHz
    double freq_hz = 1e9;
    int softmax_parallelism = 8;
    int softmax_fifo_depth = 128;
    int onchip_bits = 12;
    std::size_t max_context = 1024;

    double total_bandwidth_bytes_per_s() const {
        return static_cast<double>(hbm_channels) * channel_bw_bytes_per_cycle * freq_hz;
    }
    // Multiply and add both count, so 1024 multipliers at 1 GHz give 2.048 TFLOPS.
    double peak_flops() const {
        return static_cast<double>(qk_multipliers + pv_multipliers) * 2.0 * freq_hz;
    }
    void validate() const {
        check_arg(qk_multipliers > 0 && pv_multipliers > 0 && hbm_channels > 0 &&
                      channel_bw_bytes_per_cycle > 0 && freq_hz > 0 && softmax_parallelism > 0 &&
                      softmax_fifo_depth > 0 && onchip_bits > 0 && max_context > 0,
                  "arch: all parameters must be positive");
    }
};

// DRAM bit counters by category plus SRAM/multiplier activity. Bits internally
// so 4-bit planes stay exact; reported as bytes.
struct TrafficStats {
    std::uint64_t q_msb_bits = 0, k_msb_bits = 0, v_msb_bits = 0;
    std::uint64_t q_lsb_bits = 0, k_lsb_bits = 0, v_lsb_bits = 0;
    std::uint64_t out_bits = 0;
    std::uint64_t sram_reads = 0, sram_writes = 0;  // element accesses
    std::uint64_t mult_ops = 0;                     // multiply-accumulates

    double bytes(std::uint64_t bits) const { return static_cast<double>(bits) / 8.0; }
    double q_bytes() const { return bytes(q_msb_bits + q_lsb_bits); }
    double k_bytes() const { return bytes(k_msb_bits + k_lsb_bits); }
    double v_bytes() const { return bytes(v_msb_bits + v_lsb_bits); }
    double dram_bytes_total() const {
        return bytes(q_msb_bits + k_msb_bits + v_msb_bits + q_lsb_bits + k_lsb_bits + v_lsb_bits +
                     out_bits);
    }
};

// Service cycles of one (head, query) work unit per pipeline stage. A layer is
// the classic pipeline composition: the first unit pays its full stage sum,
// every later unit the bottleneck stage.
struct PipelineUnit {
    std::uint64_t fetch = 0, qk = 0, softmax = 0, topk = 0, pv = 0;
    std::uint64_t sum() const { return fetch + qk + softmax + topk + pv; }
    std::uint64_t max() const {
        return std::max({fetch, qk, softmax, topk, pv});
    }
};

inline std::uint64_t pipeline_compose(std::span<const PipelineUnit> units) {
    if (units.empty()) return 0;
    std::uint64_t total = units[0].sum();
    for (std::size_t i = 1; i < units.size(); ++i) total += units[i].max();
    return total;
}

struct StageTotals {
    std::uint64_t fetch = 0, qk = 0, softmax = 0, pv = 0, topk = 0;
    std::uint64_t max() const { return std::max({fetch, qk, softmax, pv, topk}); }
};

struct StageTraceRow {
    std::size_t layer = 0, step = 0, head = 0, query = 0;
    PipelineUnit stages;
};

struct BreakdownCycles {
    std::uint64_t datapath_only = 0;
    std::uint64_t with_pruning = 0;
    std::uint64_t with_parallel_topk = 0;
    std::uint64_t with_pq = 0;
    bool filled = false;
};

struct SimReport {
    std::uint64_t total_cycles = 0;
    double latency_s = 0.0;
    TrafficStats traffic;
    double dram_bytes_total = 0.0;
    double flops = 0.0;
    double effective_flops_per_s = 0.0;
    double operational_intensity = 0.0;  // flops per theoretical DRAM byte
    StageTotals stage_cycles;
    PQStats pq;
    struct {
        double token_keep_avg = 1.0;
        double head_keep_avg = 1.0;
        double v_keep_avg = 1.0;
    } pruning_summary;
    BreakdownCycles breakdown;
    std::string notes;  // modeling caveats (head refill, idealized HBM)
};

struct SimOptions {
    double v_keep = 1.0;          // local value pruning ratio (1 disables)
    bool functional = true;       // run the numeric fixed-point path
    bool capture = false;         // keep per-layer outputs and masks (tests)
    bool collect_trace = false;   // per-(layer, head, query) stage rows
    int dram_stream_bits = 0;     // >0: override per-element DRAM width (unquantized streaming)
};

struct SimCapture {
    std::vector<Matrix> layer_out;                         // final outputs per layer
    std::vector<std::vector<std::size_t>> kept_tokens;     // masks in effect per layer
    std::vector<std::vector<std::size_t>> kept_heads;
    std::vector<QuantParams> q_params, k_params, v_params;
};

struct SimResult {
    SimReport report;
    std::vector<StageTraceRow> trace;
    SimCapture capture;
    ImportanceState final_state;
};

// --- stage service-time models ---

// The 512-multiplier array computes 512/D scores per cycle; the query is
// broadcast across 512/D D-way adder trees.
inline std::uint64_t qk_stage_cycles(std::size_t l1_kept, std::size_t d, int multipliers = 512) {
    check_arg(d >= 1 && d <= static_cast<std::size_t>(multipliers), "qk_stage_cycles: D out of range");
    check_arg(multipliers % d == 0, "qk_stage_cycles: D must divide the multiplier count");
    return ceil_div(l1_kept, static_cast<std::uint64_t>(multipliers) / d);
}

inline std::uint64_t pv_stage_cycles(std::size_t v_kept, std::size_t d, int multipliers = 512) {
    check_arg(d >= 1 && d <= static_cast<std::size_t>(multipliers), "pv_stage_cycles: D out of range");
    check_arg(multipliers % d == 0, "pv_stage_cycles: D must divide the multiplier count");
    return ceil_div(v_kept, static_cast<std::uint64_t>(multipliers) / d);
}

// Exponent+accumulate streams at the softmax parallelism; the divide pass
// re-reads the row from the softmax FIFO and only overlaps the next row when
// both rows fit the FIFO together.
inline std::uint64_t softmax_stage_cycles(std::size_t l1_kept, const ArchConfig& arch) {
    const auto par = static_cast<std::uint64_t>(arch.softmax_parallelism);
    std::uint64_t cycles = ceil_div(l1_kept, par);
    if (2 * l1_kept > static_cast<std::size_t>(arch.softmax_fifo_depth))
        cycles += ceil_div(std::min(l1_kept, static_cast<std::size_t>(arch.softmax_fifo_depth)), par);
    return cycles;
}

// Each channel serves at most one request at a time at its fixed bandwidth.
inline std::uint64_t fetch_cycles(std::span<const std::uint64_t> channel_bytes, const ArchConfig& arch) {
    std::uint64_t worst = 0;
    for (std::uint64_t b : channel_bytes)
        worst = std::max(worst, ceil_div(b, static_cast<std::uint64_t>(arch.channel_bw_bytes_per_cycle)));
    return worst;
}

namespace detail {

// Addresses interleave across channels at one-cycle granules (32 B). Higher
// address bits XOR into the channel index so power-of-two row strides do not
// alias onto a channel subset. Byte counters stay bit-exact elsewhere; bins
// only drive cycles.
struct ChannelBins {
    std::vector<std::uint64_t> bytes;
    std::uint64_t granule_bytes = 32;

    explicit ChannelBins(const ArchConfig& arch)
        : bytes(static_cast<std::size_t>(arch.hbm_channels), 0),
          granule_bytes(static_cast<std::uint64_t>(arch.channel_bw_bytes_per_cycle)) {}

    void add_bit_span(std::uint64_t bit_offset, std::uint64_t bit_len) {
        if (bit_len == 0) return;
        const std::uint64_t granule_bits = granule_bytes * 8;
        const std::uint64_t g0 = bit_offset / granule_bits;
        const std::uint64_t g1 = (bit_offset + bit_len - 1) / granule_bits;
        for (std::uint64_t g = g0; g <= g1; ++g)
            bytes[(g ^ (g >> 4) ^ (g >> 8)) % bytes.size()] += granule_bytes;
    }
};

struct LayerQuant {
    QuantTensor q, k, v;
    QuantTensor k_msb, v_msb;  // truncated codes, populated when PQ is on
};

inline std::int16_t quantize_prob_code(double p, int onchip_bits) {
    const auto qmax = static_cast<std::int32_t>((1 << (onchip_bits - 1)) - 1);
    long c = std::lround(p * qmax);
    if (c > qmax) c = qmax;
    if (c < 0) c = 0;
    return static_cast<std::int16_t>(c);
}

}  // namespace detail

enum class RooflineBound { Compute, Memory };

struct RooflinePoint {
    RooflineBound bound = RooflineBound::Memory;
    double roof_flops = 0.0;
    double achieved_flops = 0.0;
    double operational_intensity = 0.0;
};

// roof = min(compute peak, OI x bandwidth); a run can never sit above it.
inline RooflinePoint roofline_eval(const SimReport& report, const ArchConfig& arch) {
    RooflinePoint pt;
    pt.operational_intensity = report.operational_intensity;
    const double bw_roof = pt.operational_intensity * arch.total_bandwidth_bytes_per_s();
    pt.roof_flops = std::min(arch.peak_flops(), bw_roof);
    pt.bound = bw_roof >= arch.peak_flops() ? RooflineBound::Compute : RooflineBound::Memory;
    pt.achieved_flops = report.effective_flops_per_s;
    if (pt.achieved_flops > pt.roof_flops * (1.0 + 1e-12))
        throw std::logic_error("roofline_eval: achieved FLOPS exceed the roofline");
    return pt;
}

// --- the simulator ---

inline SimResult simulate(const SynthWorkload& wl, const ArchConfig& arch,
                          const PruneSchedule& sched, const PQPolicy& pq,
                          const TopKConfig& topk_cfg, const SimOptions& opt = {}) {
    arch.validate();
    topk_cfg.validate();
    if (pq.enabled) pq.validate();
    const ModelConfig& cfg = wl.config();
    cfg.validate();
    check_arg(sched.num_layers() == static_cast<std::size_t>(cfg.num_layers),
              "simulate: schedule layer count mismatch");
    check_arg(opt.v_keep > 0.0 && opt.v_keep <= 1.0, "simulate: v_keep out of (0, 1]");
    check_arg(cfg.total_len() <= arch.max_context, "simulate: context exceeds max_context");

    const std::size_t d = static_cast<std::size_t>(cfg.d_per_head);
    const std::size_t heads = static_cast<std::size_t>(cfg.heads_per_layer);
    check_arg(d <= 512 && 512 % d == 0, "simulate: D must divide 512");

    const bool pq_on = pq.enabled;
    const int msb_bits = opt.dram_stream_bits > 0 ? opt.dram_stream_bits
                         : pq_on                  ? pq.msb_bits
                                                  : arch.onchip_bits;
    const int lsb_bits = pq_on ? pq.lsb_bits : 0;
    const double prob_scale = 1.0 / static_cast<double>((1 << (arch.onchip_bits - 1)) - 1);

    // Quantize every layer up front (int16 codes; doubles are transient).
    std::vector<detail::LayerQuant> lq(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerInputs li = wl.layer_inputs(static_cast<std::size_t>(l));
        if (pq_on) {
            lq[l].q = quantize(li.q, pq.msb_bits, pq.lsb_bits);
            lq[l].k = quantize(li.k, pq.msb_bits, pq.lsb_bits);
            lq[l].v = quantize(li.v, pq.msb_bits, pq.lsb_bits);
            lq[l].k_msb = msb_only_value(lq[l].k);
            lq[l].v_msb = msb_only_value(lq[l].v);
        } else {
            lq[l].q = quantize(li.q, arch.onchip_bits, 0);
            lq[l].k = quantize(li.k, arch.onchip_bits, 0);
            lq[l].v = quantize(li.v, arch.onchip_bits, 0);
        }
    }

    SimResult out;
    SimReport& rep = out.report;
    if (opt.capture) {
        out.capture.layer_out.assign(cfg.num_layers, Matrix());
        out.capture.kept_tokens.resize(cfg.num_layers);
        out.capture.kept_heads.resize(cfg.num_layers);
        for (int l = 0; l < cfg.num_layers; ++l) {
            out.capture.q_params.push_back(lq[l].q.params);
            out.capture.k_params.push_back(lq[l].k.params);
            out.capture.v_params.push_back(lq[l].v.params);
        }
    }

    const bool generation = cfg.stage == Stage::Generation;
    const std::size_t initial_tokens = generation ? cfg.prompt_len : cfg.seq_len;
    ImportanceState state(initial_tokens, heads);

    std::uint64_t pq_row_counter = 0;  // drives the flat-rate refetch spread
    double token_keep_accum = 0.0, head_keep_accum = 0.0, v_keep_accum = 0.0;
    std::size_t keep_samples = 0, v_samples = 0;

    std::vector<std::int64_t> acc;
    std::vector<double> score_row, prob_row;
    std::vector<std::int16_t> prob_codes;

    auto refetch_decision = [&](std::span<const double> probs) {
        bool refetch;
        if (pq.fixed_refetch_rate >= 0.0) {
            const double f = pq.fixed_refetch_rate;
            refetch = std::floor(static_cast<double>(pq_row_counter + 1) * f) >
                      std::floor(static_cast<double>(pq_row_counter) * f);
        } else {
            refetch = decide_lsb(probs, pq);
        }
        ++pq_row_counter;
        return refetch;
    };

    const std::size_t steps = generation ? cfg.gen_steps : 1;
    for (std::size_t step = 0; step < steps; ++step) {
        if (generation) state.append_tokens(1);
        const std::size_t total_now = generation ? cfg.prompt_len + step + 1 : cfg.seq_len;
        const std::size_t l0 = generation ? 1 : cfg.seq_len;

        for (int l = 0; l < cfg.num_layers; ++l) {
            LayerSelection sel = apply_schedule_layer(state, sched, static_cast<std::size_t>(l),
                                                      total_now, heads, topk_cfg);
            std::uint64_t boundary_cycles = 0;
            for (const TopKResult& r : sel.engine_runs) boundary_cycles += r.cycles;

            const std::vector<std::size_t>& tokens = state.kept_tokens;
            const std::vector<std::size_t>& kept_heads = state.kept_heads;
            const std::size_t n = tokens.size();
            token_keep_accum += static_cast<double>(n) / static_cast<double>(total_now);
            head_keep_accum += static_cast<double>(kept_heads.size()) / static_cast<double>(heads);
            ++keep_samples;

            if (!generation) {
                // Kept K (and V) for one head must fit half of its SRAM
                // (the other half double-buffers the next head).
                const std::uint64_t image_bytes = ceil_div(
                    static_cast<std::uint64_t>(n) * d * static_cast<std::uint64_t>(arch.onchip_bits), 8);
                if (image_bytes > arch.key_sram_bytes / 2 || image_bytes > arch.value_sram_bytes / 2)
                    throw std::runtime_error(
                        "simulate: kept K/V image (" + std::to_string(image_bytes) +
                        " B/head) exceeds half the key/value SRAM; shrink the context or keep ratio");
            }

            const detail::LayerQuant& t = lq[l];
            const QuantTensor q_msb = pq_on ? msb_only_value(t.q) : QuantTensor{};
            const double score_scale =
                t.q.params.scale * t.k.params.scale / std::sqrt(static_cast<double>(d));
            const std::vector<std::size_t> all_idx = iota_indices(n);

            // Plane base addresses for channel interleaving: the MSB planes of
            // K, V, Q, the output region, then the LSB planes, each bit-packed
            // and contiguous.
            const std::uint64_t k_plane_bits = static_cast<std::uint64_t>(cfg.total_len()) * cfg.d_in() * msb_bits;
            const std::uint64_t v_plane_base = k_plane_bits;
            const std::uint64_t q_plane_base = 2 * k_plane_bits;
            const std::uint64_t out_plane_base = 3 * k_plane_bits;
            const std::uint64_t k_lsb_base = 4 * k_plane_bits;
            const std::uint64_t v_lsb_base = 5 * k_plane_bits;
            const std::uint64_t q_lsb_base = 6 * k_plane_bits;
            const std::uint64_t row_bits = d * static_cast<std::uint64_t>(msb_bits);
            const std::uint64_t lsb_row_bits = d * static_cast<std::uint64_t>(lsb_bits);

            std::vector<PipelineUnit> units;
            units.reserve(kept_heads.size() * l0);
            Matrix layer_out(l0, cfg.d_in());

            for (std::size_t hi = 0; hi < kept_heads.size(); ++hi) {
                const std::size_t head = kept_heads[hi];
                const std::size_t head_base_bits = head * row_bits;  // column chunk offset inside a row
                bool head_lsb_charged = false;

                for (std::size_t r = 0; r < l0; ++r) {
                    PipelineUnit u;
                    detail::ChannelBins bins(arch);
                    const std::size_t q_row = generation ? step : r;

                    // Bulk K/V into SRAM once per head in the summarization
                    // stage; streamed per query in generation.
                    const bool bulk = generation || r == 0;
                    if (bulk) {
                        for (std::size_t tok : tokens) {
                            bins.add_bit_span(tok * cfg.d_in() * msb_bits + head_base_bits, row_bits);
                        }
                        rep.traffic.k_msb_bits += static_cast<std::uint64_t>(n) * d * msb_bits;
                        if (!generation) {
                            for (std::size_t tok : tokens)
                                bins.add_bit_span(v_plane_base + tok * cfg.d_in() * msb_bits + head_base_bits,
                                                  row_bits);
                            rep.traffic.v_msb_bits += static_cast<std::uint64_t>(n) * d * msb_bits;
                            rep.traffic.sram_writes += 2 * static_cast<std::uint64_t>(n) * d;
                        }
                    }
                    bins.add_bit_span(q_plane_base + q_row * cfg.d_in() * msb_bits + head_base_bits, row_bits);
                    rep.traffic.q_msb_bits += d * static_cast<std::uint64_t>(msb_bits);

                    u.qk = qk_stage_cycles(n, d, arch.qk_multipliers);
                    u.softmax = softmax_stage_cycles(n, arch);
                    rep.traffic.mult_ops += static_cast<std::uint64_t>(n) * d;
                    rep.traffic.sram_reads += static_cast<std::uint64_t>(n) * d;

                    bool refetch = false;
                    if (opt.functional) {
                        acc.assign(n, 0);
                        score_row.assign(n, 0.0);
                        const QuantTensor& qq = pq_on ? q_msb : t.q;
                        const QuantTensor& kk = pq_on ? t.k_msb : t.k;
                        detail::qk_scores_int(qq, kk, q_row, head, d, tokens, acc);
                        for (std::size_t j = 0; j < n; ++j)
                            score_row[j] = static_cast<double>(acc[j]) * score_scale;
                        prob_row = softmax_row(score_row, all_idx);

                        if (pq_on) refetch = refetch_decision(prob_row);
                        if (refetch) {
                            detail::qk_scores_int(t.q, t.k, q_row, head, d, tokens, acc);
                            for (std::size_t j = 0; j < n; ++j)
                                score_row[j] = static_cast<double>(acc[j]) * score_scale;
                            prob_row = softmax_row(score_row, all_idx);
                        }
                    } else if (pq_on) {
                        // Without the numeric path only the flat-rate mode can
                        // decide; data-driven PQ needs probabilities.
                        check_arg(pq.fixed_refetch_rate >= 0.0,
                                  "simulate: data-driven PQ requires the functional path");
                        refetch = refetch_decision({});
                    }
                    if (pq_on) {
                        ++rep.pq.rows_total;
                        if (refetch) {
                            ++rep.pq.rows_refetched;
                            // Second pass over the same keys plus the LSB fields.
                            u.qk += qk_stage_cycles(n, d, arch.qk_multipliers);
                            rep.traffic.mult_ops += static_cast<std::uint64_t>(n) * d;
                            rep.traffic.sram_reads += static_cast<std::uint64_t>(n) * d;
                            rep.traffic.q_lsb_bits += d * static_cast<std::uint64_t>(lsb_bits);
                            rep.pq.lsb_bytes_fetched += d * static_cast<std::uint64_t>(lsb_bits) / 8;
                            bins.add_bit_span(q_lsb_base + q_row * cfg.d_in() * lsb_bits + head * lsb_row_bits,
                                              lsb_row_bits);
                            if (!head_lsb_charged) {
                                head_lsb_charged = true;
                                const std::uint64_t plane = static_cast<std::uint64_t>(n) * d * lsb_bits;
                                rep.traffic.k_lsb_bits += plane;
                                rep.traffic.v_lsb_bits += plane;
                                rep.pq.lsb_bytes_fetched += 2 * plane / 8;
                                for (std::size_t tok : tokens) {
                                    bins.add_bit_span(k_lsb_base + tok * cfg.d_in() * lsb_bits +
                                                          head * lsb_row_bits,
                                                      lsb_row_bits);
                                    bins.add_bit_span(v_lsb_base + tok * cfg.d_in() * lsb_bits +
                                                          head * lsb_row_bits,
                                                      lsb_row_bits);
                                }
                            }
                        }
                    }

                    // Token importance accumulates from the final probabilities,
                    // in parallel with the critical path.
                    if (opt.functional)
                        for (std::size_t j = 0; j < n; ++j)
                            state.token_scores[tokens[j]] += prob_row[j];

                    // Local V selection ranks the requantized probability codes.
                    // The engine ingests its first pass while the softmax unit
                    // is still streaming the row out, so that portion hides
                    // behind the softmax stage; the remaining passes, the
                    // filter pass and the zero eliminator are its serial time.
                    std::vector<std::size_t> v_positions;
                    std::size_t v_kept = n;
                    if (opt.v_keep < 1.0) {
                        v_kept = std::max<std::size_t>(
                            1, static_cast<std::size_t>(std::ceil(opt.v_keep * static_cast<double>(n))));
                        if (v_kept < n) {
                            TopKResult vres;
                            if (opt.functional) {
                                std::vector<double> code_scores(n);
                                for (std::size_t j = 0; j < n; ++j)
                                    code_scores[j] = static_cast<double>(
                                        detail::quantize_prob_code(prob_row[j], arch.onchip_bits));
                                vres = filter_top_k(code_scores, v_kept, topk_cfg);
                            } else {
                                // Cycle model without numerics: charge the engine
                                // with a deterministic synthetic ranking.
                                std::vector<double> synth(n);
                                for (std::size_t j = 0; j < n; ++j)
                                    synth[j] = static_cast<double>((j * 2654435761u) % 65536);
                                vres = filter_top_k(synth, v_kept, topk_cfg);
                            }
                            const std::uint64_t ingest =
                                ceil_div(n, static_cast<std::uint64_t>(topk_cfg.parallelism));
                            u.topk = vres.cycles - std::min(ingest, u.softmax);
                            v_positions = std::move(vres.kept_indices);
                        }
                    }
                    if (v_positions.empty() && v_kept == n) v_positions = iota_indices(n);
                    v_keep_accum += static_cast<double>(v_kept) / static_cast<double>(n);
                    ++v_samples;

                    u.pv = pv_stage_cycles(v_kept, d, arch.pv_multipliers);
                    rep.traffic.mult_ops += static_cast<std::uint64_t>(v_kept) * d;
                    rep.traffic.sram_reads += static_cast<std::uint64_t>(v_kept) * d;
                    if (generation) {
                        // Only surviving V rows stream from DRAM.
                        for (std::size_t pos : v_positions)
                            bins.add_bit_span(v_plane_base + tokens[pos] * cfg.d_in() * msb_bits +
                                                  head_base_bits,
                                              row_bits);
                        rep.traffic.v_msb_bits += static_cast<std::uint64_t>(v_kept) * d * msb_bits;
                    }

                    if (opt.functional) {
                        prob_codes.assign(n, 0);
                        for (std::size_t j = 0; j < n; ++j)
                            prob_codes[j] = detail::quantize_prob_code(prob_row[j], arch.onchip_bits);
                        const QuantTensor& vv = (pq_on && !refetch) ? t.v_msb : t.v;
                        const double out_scale = prob_scale * t.v.params.scale;
                        for (std::size_t c = 0; c < d; ++c) {
                            std::int64_t sum = 0;
                            for (std::size_t pos : v_positions)
                                sum += static_cast<std::int64_t>(prob_codes[pos]) *
                                       vv.codes[tokens[pos] * cfg.d_in() + head * d + c];
                            layer_out(r, head * d + c) = static_cast<double>(sum) * out_scale;
                        }
                    }

                    // Attention output written back at the on-chip width.
                    rep.traffic.out_bits += d * static_cast<std::uint64_t>(arch.onchip_bits);
                    bins.add_bit_span(out_plane_base + q_row * cfg.d_in() * arch.onchip_bits +
                                          head * d * arch.onchip_bits,
                                      d * static_cast<std::uint64_t>(arch.onchip_bits));

                    u.fetch = fetch_cycles(bins.bytes, arch);
                    rep.stage_cycles.fetch += u.fetch;
                    rep.stage_cycles.qk += u.qk;
                    rep.stage_cycles.softmax += u.softmax;
                    rep.stage_cycles.topk += u.topk;
                    rep.stage_cycles.pv += u.pv;
                    if (opt.collect_trace)
                        out.trace.push_back({static_cast<std::size_t>(l), step, head,
                                             generation ? step : r, u});
                    units.push_back(u);
                }

                // Head importance from the magnitude of this head's outputs.
                if (opt.functional) {
                    double mag = 0.0;
                    for (std::size_t r = 0; r < l0; ++r)
                        for (std::size_t c = 0; c < d; ++c) mag += std::abs(layer_out(r, head * d + c));
                    state.head_scores[head] += mag;
                }
            }

            rep.total_cycles += pipeline_compose(units) + boundary_cycles;
            rep.stage_cycles.topk += boundary_cycles;

            if (opt.capture) {
                out.capture.layer_out[l] = layer_out;
                out.capture.kept_tokens[l] = tokens;
                out.capture.kept_heads[l] = kept_heads;
            }
        }
    }

    rep.latency_s = static_cast<double>(rep.total_cycles) / arch.freq_hz;
    rep.dram_bytes_total = rep.traffic.dram_bytes_total();
    rep.flops = 2.0 * static_cast<double>(rep.traffic.mult_ops);
    rep.effective_flops_per_s = rep.latency_s > 0 ? rep.flops / rep.latency_s : 0.0;
    rep.operational_intensity =
        rep.dram_bytes_total > 0 && rep.flops > 0 ? rep.flops / rep.dram_bytes_total : 0.0;
    if (keep_samples > 0) {
        rep.pruning_summary.token_keep_avg = token_keep_accum / static_cast<double>(keep_samples);
        rep.pruning_summary.head_keep_avg = head_keep_accum / static_cast<double>(keep_samples);
    }
    if (v_samples > 0) rep.pruning_summary.v_keep_avg = v_keep_accum / static_cast<double>(v_samples);
    rep.notes = "heads run back-to-back with pipeline refill; HBM modeled as ideal per-channel bandwidth";
    out.final_state = std::move(state);
    return out;
}

// Four cumulative configurations: bare datapath with the serial (P=1) engine,
// plus cascade token/head pruning, plus the parallel engine, plus progressive
// quantization. Pre-quantization steps stream 16-bit elements from DRAM.
inline BreakdownCycles speedup_breakdown(const SynthWorkload& wl, const ArchConfig& arch,
                                         const PruneSchedule& sched, const PQPolicy& pq,
                                         const TopKConfig& topk_cfg, const SimOptions& opt = {}) {
    const std::size_t layers = sched.num_layers();
    const PruneSchedule all_keep = PruneSchedule::all_keep(layers);

    bool prunes = false;
    for (double r : sched.layer_keep_ratio_tokens) prunes |= r < 1.0;
    for (double r : sched.layer_keep_ratio_heads) prunes |= r < 1.0;
    const bool degenerate = !prunes && !pq.enabled && opt.v_keep >= 1.0;

    TopKConfig serial = topk_cfg;
    serial.parallelism = 1;
    PQPolicy pq_off = pq;
    pq_off.enabled = false;
    SimOptions stream16 = opt;
    stream16.dram_stream_bits = 16;
    stream16.capture = false;
    stream16.collect_trace = false;

    BreakdownCycles bd;
    bd.filled = true;
    if (degenerate) {
        const std::uint64_t c = simulate(wl, arch, all_keep, pq_off, serial, stream16).report.total_cycles;
        bd.datapath_only = bd.with_pruning = bd.with_parallel_topk = bd.with_pq = c;
        return bd;
    }

    bd.datapath_only = simulate(wl, arch, all_keep, pq_off, serial, stream16).report.total_cycles;
    bd.with_pruning = simulate(wl, arch, sched, pq_off, serial, stream16).report.total_cycles;
    bd.with_parallel_topk = simulate(wl, arch, sched, pq_off, topk_cfg, stream16).report.total_cycles;
    if (pq.enabled) {
        SimOptions quant_stream = stream16;
        quant_stream.dram_stream_bits = 0;
        bd.with_pq = simulate(wl, arch, sched, pq, topk_cfg, quant_stream).report.total_cycles;
    } else {
        bd.with_pq = bd.with_parallel_topk;
    }
    return bd;
}

}  // namespace spatten
