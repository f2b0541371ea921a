#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "spatten/core.hpp"

namespace spatten {

enum class Stage { Summarization, Generation };

// Score-shape regimes for the synthetic inputs. Peaked rows carry one
// dominant key so the max probability is high; Mixed interleaves flat rows at
// a fixed fraction for refetch-rate studies.
enum class InputMode { Normal, Peaked, Mixed };

struct ModelConfig {
    std::string name = "custom";
    int num_layers = 12;
    int heads_per_layer = 12;
    int d_per_head = 64;
    Stage stage = Stage::Summarization;
    std::size_t seq_len = 512;      // summarization: L0 = L1
    std::size_t prompt_len = 992;   // generation
    std::size_t gen_steps = 32;
    std::uint64_t seed = 1;
    InputMode input_mode = InputMode::Normal;
    double flat_fraction = 0.059;   // Mixed mode: fraction of flat rows

    std::size_t d_in() const { return static_cast<std::size_t>(heads_per_layer) * d_per_head; }
    std::size_t total_len() const {
        return stage == Stage::Generation ? prompt_len + gen_steps : seq_len;
    }
    std::size_t query_rows() const { return stage == Stage::Generation ? gen_steps : seq_len; }

    void validate() const {
        check_arg(num_layers >= 1 && heads_per_layer >= 1 && d_per_head >= 1, "model: bad shape");
        if (stage == Stage::Generation)
            check_arg(prompt_len + gen_steps <= 1024, "model: prompt_len + gen_steps must be <= 1024");
        if (input_mode == InputMode::Mixed)
            check_arg(flat_fraction >= 0.0 && flat_fraction <= 1.0, "model: flat_fraction out of [0, 1]");
    }
};

inline ModelConfig preset(const std::string& name) {
    ModelConfig c;
    c.name = name;
    if (name == "bert-base") {
        c.num_layers = 12;
        c.heads_per_layer = 12;
        c.stage = Stage::Summarization;
        c.seq_len = 512;
    } else if (name == "bert-large") {
        c.num_layers = 24;
        c.heads_per_layer = 16;
        c.stage = Stage::Summarization;
        c.seq_len = 512;
    } else if (name == "gpt2-small") {
        c.num_layers = 12;
        c.heads_per_layer = 12;
        c.stage = Stage::Generation;
        c.prompt_len = 992;
        c.gen_steps = 32;
    } else if (name == "gpt2-medium") {
        c.num_layers = 24;
        c.heads_per_layer = 16;
        c.stage = Stage::Generation;
        c.prompt_len = 992;
        c.gen_steps = 32;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return c;
}

struct LayerInputs {
    Matrix q;  // summarization: seq_len x D_in; generation: gen_steps x D_in (one row per step)
    Matrix k;  // total_len x D_in
    Matrix v;
};

// Deterministic per-seed synthetic Q/K/V. Layers regenerate independently so
// callers never hold more than one layer of doubles at a time.
class SynthWorkload {
public:
    explicit SynthWorkload(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const ModelConfig& config() const { return cfg_; }

    LayerInputs layer_inputs(std::size_t layer) const {
        std::mt19937_64 rng(cfg_.seed * 0x9e3779b97f4a7c15ULL + layer + 1);
        LayerInputs li;
        const std::size_t d_in = cfg_.d_in();
        li.k = random_normal_matrix(cfg_.total_len(), d_in, rng);
        li.v = random_normal_matrix(cfg_.total_len(), d_in, rng);
        li.q = random_normal_matrix(cfg_.query_rows(), d_in, rng);
        shape_queries(layer, li);
        return li;
    }

    // True when the Mixed generator shapes row `r` of `layer` flat for `head`.
    bool is_flat_row(std::size_t layer, std::size_t head, std::size_t r) const {
        if (cfg_.input_mode != InputMode::Mixed) return false;
        const std::size_t idx = (layer * cfg_.query_rows() + r) * static_cast<std::size_t>(cfg_.heads_per_layer) + head;
        // Bresenham spread: flat rows land evenly at flat_fraction density.
        const double f = cfg_.flat_fraction;
        return std::floor(static_cast<double>(idx + 1) * f) > std::floor(static_cast<double>(idx) * f);
    }

private:
    // Peaked rows aim the query chunk at one key row with a wide margin, so
    // the max probability stays dominant even after MSB-only quantization.
    void shape_queries(std::size_t layer, LayerInputs& li) const {
        if (cfg_.input_mode == InputMode::Normal) return;
        const std::size_t d = static_cast<std::size_t>(cfg_.d_per_head);
        const std::size_t heads = static_cast<std::size_t>(cfg_.heads_per_layer);
        std::mt19937_64 rng(cfg_.seed * 0xda942042e4dd58b5ULL + layer + 7);
        std::uniform_int_distribution<std::size_t> pick_token(0, cfg_.total_len() - 1);
        constexpr double kPeakGain = 24.0;

        for (std::size_t r = 0; r < li.q.rows(); ++r) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t target = pick_token(rng);  // drawn for determinism either way
                if (is_flat_row(layer, h, r)) {
                    // All-zero chunk: every score ties, probabilities uniform.
                    for (std::size_t c = 0; c < d; ++c) li.q(r, h * d + c) = 0.0;
                    continue;
                }
                double norm = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double kv = li.k(target, h * d + c);
                    norm += kv * kv;
                }
                norm = std::sqrt(std::max(norm, 1e-12));
                for (std::size_t c = 0; c < d; ++c)
                    li.q(r, h * d + c) = kPeakGain * li.k(target, h * d + c) / norm;
            }
        }
    }

    ModelConfig cfg_;
};

inline SynthWorkload synth_inputs(const ModelConfig& cfg) { return SynthWorkload(cfg); }

// --- attention-probability trace file ---
// Header line "L0,L1,h,layers", then layers*h*L0*L1 float32 values, row-major,
// little-endian. Lets externally dumped probabilities drive the pruning path.

struct ProbTrace {
    std::size_t l0 = 0, l1 = 0, heads = 0, layers = 0;
    std::vector<float> data;  // [layer][head][row][token]

    float at(std::size_t layer, std::size_t head, std::size_t row, std::size_t token) const {
        return data[((layer * heads + head) * l0 + row) * l1 + token];
    }
};

inline void write_prob_trace(std::ostream& os, const ProbTrace& trace) {
    os << trace.l0 << "," << trace.l1 << "," << trace.heads << "," << trace.layers << "\n";
    os.write(reinterpret_cast<const char*>(trace.data.data()),
             static_cast<std::streamsize>(trace.data.size() * sizeof(float)));
}

inline void write_prob_trace(const std::string& path, const ProbTrace& trace) {
    std::ofstream os(path, std::ios::binary);
    check_arg(os.good(), "write_prob_trace: cannot open " + path);
    write_prob_trace(os, trace);
}

inline ProbTrace read_prob_trace(std::istream& is) {
    std::string header;
    std::getline(is, header);
    ProbTrace t;
    unsigned long long a = 0, b = 0, c = 0, d = 0;
    if (std::sscanf(header.c_str(), "%llu,%llu,%llu,%llu", &a, &b, &c, &d) != 4)
        throw std::invalid_argument("prob trace: malformed header line");
    t.l0 = a;
    t.l1 = b;
    t.heads = c;
    t.layers = d;
    t.data.resize(t.l0 * t.l1 * t.heads * t.layers);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    check_arg(static_cast<std::size_t>(is.gcount()) == t.data.size() * sizeof(float),
              "prob trace: truncated payload");
    return t;
}

inline ProbTrace read_prob_trace(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check_arg(is.good(), "read_prob_trace: cannot open " + path);
    return read_prob_trace(is);
}

}  // namespace spatten
