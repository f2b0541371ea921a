// Command-line frontend: single simulations, parameter sweeps, and the
// verification suites, emitting JSON reports and CSV tables.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "spatten/report_io.hpp"
#include "spatten/spatten.hpp"
#include "spatten/verify.hpp"

namespace {

using namespace spatten;

struct RunSpec {
    std::string preset_name;
    std::size_t seq_len = 0;      // 0: preset default
    std::size_t prompt_len = 0;
    std::size_t gen_steps = 0;
    double token_keep = 1.0;
    double head_keep = 1.0;
    double v_keep = 1.0;
    bool interpolate = false;     // prefix + linear ramp instead of a flat schedule
    bool pq_enabled = false;
    int msb = 8;
    int lsb = 4;
    double pq_threshold = 0.1;
    double pq_flat_rate = -1.0;
    int topk_parallelism = 16;
    int fifo_depth = 64;
    std::uint64_t seed = 1;
    std::string mode = "normal";
    double flat_fraction = 0.059;
    std::size_t sram_kb = 196;
    bool functional = false;
};

int parse_bits(const std::string& text, int& msb, int& lsb) {
    const auto plus = text.find('+');
    if (plus == std::string::npos) return -1;
    try {
        msb = std::stoi(text.substr(0, plus));
        lsb = std::stoi(text.substr(plus + 1));
    } catch (const std::exception&) {
        return -1;
    }
    return 0;
}

// Flat key=value config file; keys mirror the command-line flags.
int load_config_file(const std::string& path, RunSpec& spec, std::string& error) {
    std::ifstream is(path);
    if (!is.good()) {
        error = path + ": cannot open config file";
        return -1;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            error = path + ":" + std::to_string(lineno) + ": expected key=value";
            return -1;
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "preset") spec.preset_name = value;
            else if (key == "seq_len") spec.seq_len = std::stoull(value);
            else if (key == "prompt_len") spec.prompt_len = std::stoull(value);
            else if (key == "gen_steps") spec.gen_steps = std::stoull(value);
            else if (key == "token_keep_avg") spec.token_keep = std::stod(value);
            else if (key == "head_keep_avg") spec.head_keep = std::stod(value);
            else if (key == "v_keep") spec.v_keep = std::stod(value);
            else if (key == "interpolate") spec.interpolate = value == "1" || value == "true";
            else if (key == "msb") { spec.msb = std::stoi(value); spec.pq_enabled = true; }
            else if (key == "lsb") { spec.lsb = std::stoi(value); spec.pq_enabled = true; }
            else if (key == "pq_threshold") spec.pq_threshold = std::stod(value);
            else if (key == "pq_flat_rate") spec.pq_flat_rate = std::stod(value);
            else if (key == "topk_parallelism") spec.topk_parallelism = std::stoi(value);
            else if (key == "fifo_depth") spec.fifo_depth = std::stoi(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "mode") spec.mode = value;
            else if (key == "flat_fraction") spec.flat_fraction = std::stod(value);
            else if (key == "sram_kb") spec.sram_kb = std::stoull(value);
            else {
                error = path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'";
                return -1;
            }
        } catch (const std::exception&) {
            error = path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'";
            return -1;
        }
    }
    return 0;
}

struct AssembledRun {
    ModelConfig cfg;
    ArchConfig arch;
    PruneSchedule sched;
    PQPolicy pq;
    TopKConfig topk;
    SimOptions opt;
};

AssembledRun assemble(const RunSpec& spec) {
    AssembledRun run;
    run.cfg = preset(spec.preset_name);
    if (spec.seq_len > 0) run.cfg.seq_len = spec.seq_len;
    if (spec.prompt_len > 0) run.cfg.prompt_len = spec.prompt_len;
    if (spec.gen_steps > 0) run.cfg.gen_steps = spec.gen_steps;
    run.cfg.seed = spec.seed;
    if (spec.mode == "normal") run.cfg.input_mode = InputMode::Normal;
    else if (spec.mode == "peaked") run.cfg.input_mode = InputMode::Peaked;
    else if (spec.mode == "mixed") run.cfg.input_mode = InputMode::Mixed;
    else throw std::invalid_argument("unknown input mode: " + spec.mode);
    run.cfg.flat_fraction = spec.flat_fraction;
    run.cfg.validate();

    run.arch.key_sram_bytes = spec.sram_kb * 1024;
    run.arch.value_sram_bytes = spec.sram_kb * 1024;

    run.sched = spec.interpolate
                    ? make_interpolated_schedule(run.cfg.num_layers, spec.token_keep, spec.head_keep)
                    : PruneSchedule::flat(run.cfg.num_layers, spec.token_keep, spec.head_keep);

    run.pq.enabled = spec.pq_enabled;
    run.pq.msb_bits = spec.msb;
    run.pq.lsb_bits = spec.lsb;
    run.pq.threshold = spec.pq_threshold;
    run.pq.fixed_refetch_rate = spec.pq_flat_rate;

    run.topk.parallelism = spec.topk_parallelism;
    run.topk.fifo_depth = spec.fifo_depth;
    run.topk.rng_seed = spec.seed;

    run.opt.v_keep = spec.v_keep;
    // The numeric path is required for data-driven refetch decisions; traffic
    // and cycle accounting do not need it otherwise.
    run.opt.functional =
        spec.functional || (spec.pq_enabled && spec.pq_flat_rate < 0.0 && spec.lsb > 0);
    return run;
}

int cmd_simulate(const RunSpec& spec, const std::string& report_path,
                 const std::string& stages_path, const std::string& importance_path,
                 bool with_breakdown) {
    AssembledRun run = assemble(spec);
    if (!importance_path.empty()) run.opt.functional = true;
    run.opt.collect_trace = !stages_path.empty();

    SynthWorkload wl(run.cfg);
    SimResult result = simulate(wl, run.arch, run.sched, run.pq, run.topk, run.opt);
    if (with_breakdown)
        result.report.breakdown =
            speedup_breakdown(wl, run.arch, run.sched, run.pq, run.topk, run.opt);

    if (!report_path.empty()) write_report_json(report_path, result.report);
    if (!stages_path.empty()) write_stage_csv(stages_path, result.trace);
    if (!importance_path.empty()) {
        std::ofstream os(importance_path);
        write_importance_csv(os, result.final_state);
    }

    const RooflinePoint roof = roofline_eval(result.report, run.arch);
    std::cout << "cycles: " << result.report.total_cycles << "\n"
              << "latency_s: " << result.report.latency_s << "\n"
              << "dram_bytes: " << result.report.dram_bytes_total << "\n"
              << "effective_gflops: " << result.report.effective_flops_per_s / 1e9 << "\n"
              << "operational_intensity: " << result.report.operational_intensity << "\n"
              << "bound: " << (roof.bound == RooflineBound::Compute ? "compute" : "memory") << "\n"
              << "token_keep_avg: " << result.report.pruning_summary.token_keep_avg << "\n";
    if (!report_path.empty()) std::cout << "report: " << report_path << "\n";
    if (!stages_path.empty()) std::cout << "stages: " << stages_path << "\n";
    return 0;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_sweep(const RunSpec& base, const std::string& out_path, const std::string& p_list,
              const std::string& token_list, const std::string& head_list,
              const std::string& sram_list, const std::string& bits_list) {
    std::ofstream os(out_path);
    if (!os.good()) {
        std::cerr << "error: cannot open " << out_path << "\n";
        return 1;
    }
    os << "preset,token_keep,head_keep,v_keep,msb,lsb,P,sram_kb,total_cycles,latency_s,"
          "dram_bytes,flops,effective_gflops,operational_intensity\n";

    const auto ps = split_list(p_list);
    const auto tokens = split_list(token_list);
    const auto heads = split_list(head_list);
    const auto srams = split_list(sram_list);
    const auto bits = split_list(bits_list);
    if (ps.empty() && tokens.empty() && heads.empty() && srams.empty() && bits.empty()) {
        std::cout << "sweep: empty grid, header-only output at " << out_path << "\n";
        return 0;
    }
    auto dims = [](const std::vector<std::string>& v) { return v.empty() ? std::size_t{1} : v.size(); };

    std::size_t rows = 0;
    for (std::size_t ip = 0; ip < dims(ps); ++ip)
        for (std::size_t it = 0; it < dims(tokens); ++it)
            for (std::size_t ih = 0; ih < dims(heads); ++ih)
                for (std::size_t is = 0; is < dims(srams); ++is)
                    for (std::size_t ib = 0; ib < dims(bits); ++ib) {
                        RunSpec spec = base;
                        if (!ps.empty()) spec.topk_parallelism = std::stoi(ps[ip]);
                        if (!tokens.empty()) spec.token_keep = std::stod(tokens[it]);
                        if (!heads.empty()) spec.head_keep = std::stod(heads[ih]);
                        if (!srams.empty()) spec.sram_kb = std::stoull(srams[is]);
                        if (!bits.empty()) {
                            if (parse_bits(bits[ib], spec.msb, spec.lsb) != 0) {
                                std::cerr << "error: bad bits entry '" << bits[ib] << "'\n";
                                return 2;
                            }
                            spec.pq_enabled = true;
                        }
                        AssembledRun run = assemble(spec);
                        SynthWorkload wl(run.cfg);
                        SimReport rep =
                            simulate(wl, run.arch, run.sched, run.pq, run.topk, run.opt).report;
                        os << run.cfg.name << "," << spec.token_keep << "," << spec.head_keep << ","
                           << spec.v_keep << "," << (spec.pq_enabled ? spec.msb : run.arch.onchip_bits)
                           << "," << (spec.pq_enabled ? spec.lsb : 0) << "," << spec.topk_parallelism
                           << "," << spec.sram_kb << "," << rep.total_cycles << "," << rep.latency_s
                           << "," << rep.dram_bytes_total << "," << rep.flops << ","
                           << rep.effective_flops_per_s / 1e9 << "," << rep.operational_intensity
                           << "\n";
                        ++rows;
                    }
    std::cout << "sweep: wrote " << rows << " rows to " << out_path << "\n";
    return 0;
}

int cmd_verify(const std::string& inject_fault) {
    verify::VerifyOptions opt;
    if (inject_fault == "topk-tie") {
        opt.inject_topk_tie_fault = true;
    } else if (!inject_fault.empty()) {
        std::cerr << "error: unknown fault '" << inject_fault << "'\n";
        return 2;
    }
    const auto results = verify::run_acceptance(opt);
    bool all_pass = true;
    std::printf("%-4s %-6s %-36s %s\n", "id", "result", "criterion", "detail");
    for (const auto& r : results) {
        all_pass &= r.pass;
        std::printf("%-4d %-6s %-36s %s\n", r.id, r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
    }
    std::printf("%s\n", all_pass ? "all criteria passed" : "FAILURES present");
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-efficiency model and accelerator simulator"};
    app.require_subcommand(1);

    RunSpec spec;
    std::string config_path, pq_bits, report_path = "report.json", stages_path = "stages.csv";
    std::string importance_path;
    bool no_prune = false, no_pq = false, no_breakdown = false;

    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--preset", spec.preset_name,
                        "bert-base | bert-large | gpt2-small | gpt2-medium");
        cmd->add_option("--seq-len", spec.seq_len, "summarization sequence length override");
        cmd->add_option("--prompt-len", spec.prompt_len, "generation prompt length override");
        cmd->add_option("--gen-steps", spec.gen_steps, "generated token count override");
        cmd->add_option("--token-keep", spec.token_keep, "average token keep ratio");
        cmd->add_option("--head-keep", spec.head_keep, "average head keep ratio");
        cmd->add_option("--v-keep", spec.v_keep, "local value keep ratio");
        cmd->add_flag("--interpolate", spec.interpolate,
                      "unpruned prefix plus linear ramp instead of a flat schedule");
        cmd->add_flag("--no-prune", no_prune, "force all keep ratios to 1");
        cmd->add_option("--pq", pq_bits, "progressive quantization split, e.g. 8+4");
        cmd->add_flag("--no-pq", no_pq, "static on-chip-width quantization only");
        cmd->add_option("--threshold", spec.pq_threshold, "max-probability refetch threshold");
        cmd->add_option("--pq-flat-rate", spec.pq_flat_rate,
                        "inject a fixed refetch rate instead of the probability test");
        cmd->add_option("--topk-parallelism,-P", spec.topk_parallelism, "comparators per array");
        cmd->add_option("--fifo-depth", spec.fifo_depth, "top-k FIFO depth in blocks");
        cmd->add_option("--seed", spec.seed, "workload seed (SPATTEN_SEED overrides)");
        cmd->add_option("--mode", spec.mode, "input mode: normal | peaked | mixed");
        cmd->add_option("--flat-fraction", spec.flat_fraction, "flat-row fraction in mixed mode");
        cmd->add_option("--sram-kb", spec.sram_kb, "key/value SRAM size in KB");
        cmd->add_flag("--functional", spec.functional, "force the numeric fixed-point path");
    };

    CLI::App* sim = app.add_subcommand("simulate", "run one workload through the simulator");
    add_run_flags(sim);
    sim->add_option("--report", report_path, "JSON report path");
    sim->add_option("--stages-csv", stages_path, "per-(layer,head,query) stage trace CSV");
    sim->add_option("--dump-importance", importance_path, "token importance CSV");
    sim->add_flag("--no-breakdown", no_breakdown, "skip the four-step speedup breakdown");

    CLI::App* sweep = app.add_subcommand("sweep", "cross-product design-space sweep to CSV");
    add_run_flags(sweep);
    std::string sweep_out = "sweep.csv", sweep_p, sweep_token, sweep_head, sweep_sram, sweep_bits;
    sweep->add_option("--out", sweep_out, "output CSV path");
    sweep->add_option("--sweep-p", sweep_p, "comma list of top-k parallelisms");
    sweep->add_option("--sweep-token-keep", sweep_token, "comma list of token keep ratios");
    sweep->add_option("--sweep-head-keep", sweep_head, "comma list of head keep ratios");
    sweep->add_option("--sweep-sram-kb", sweep_sram, "comma list of SRAM sizes (KB)");
    sweep->add_option("--sweep-bits", sweep_bits, "comma list of msb+lsb splits");

    CLI::App* ver = app.add_subcommand("verify", "run the oracle and invariant suites");
    std::string inject_fault;
    ver->add_option("--inject-fault", inject_fault, "harness fault injection (topk-tie)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (ver->parsed()) return cmd_verify(inject_fault);

        CLI::App* active = sim->parsed() ? sim : sweep;
        if (!config_path.empty()) {
            // The file provides the base values; explicit flags win.
            RunSpec file_spec;
            std::string error;
            if (load_config_file(config_path, file_spec, error) != 0) {
                std::cerr << "error: " << error << "\n";
                return 2;
            }
            RunSpec flags = spec;
            auto given = [&](const char* name) { return active->count(name) > 0; };
            spec = file_spec;
            if (given("--preset")) spec.preset_name = flags.preset_name;
            if (given("--seq-len")) spec.seq_len = flags.seq_len;
            if (given("--prompt-len")) spec.prompt_len = flags.prompt_len;
            if (given("--gen-steps")) spec.gen_steps = flags.gen_steps;
            if (given("--token-keep")) spec.token_keep = flags.token_keep;
            if (given("--head-keep")) spec.head_keep = flags.head_keep;
            if (given("--v-keep")) spec.v_keep = flags.v_keep;
            if (given("--interpolate")) spec.interpolate = flags.interpolate;
            if (given("--threshold")) spec.pq_threshold = flags.pq_threshold;
            if (given("--pq-flat-rate")) spec.pq_flat_rate = flags.pq_flat_rate;
            if (given("--topk-parallelism")) spec.topk_parallelism = flags.topk_parallelism;
            if (given("--fifo-depth")) spec.fifo_depth = flags.fifo_depth;
            if (given("--seed")) spec.seed = flags.seed;
            if (given("--mode")) spec.mode = flags.mode;
            if (given("--flat-fraction")) spec.flat_fraction = flags.flat_fraction;
            if (given("--sram-kb")) spec.sram_kb = flags.sram_kb;
            if (given("--functional")) spec.functional = flags.functional;
        }
        if (!pq_bits.empty()) {
            if (parse_bits(pq_bits, spec.msb, spec.lsb) != 0) {
                std::cerr << "error: --pq expects MSB+LSB, e.g. 8+4\n";
                return 2;
            }
            spec.pq_enabled = true;
        }
        if (no_pq) spec.pq_enabled = false;
        if (no_prune) {
            spec.token_keep = 1.0;
            spec.head_keep = 1.0;
            spec.v_keep = 1.0;
        }
        if (const char* env_seed = std::getenv("SPATTEN_SEED")) spec.seed = std::stoull(env_seed);
        if (spec.preset_name.empty()) {
            std::cerr << "error: missing required option --preset (or a preset= config entry)\n";
            return 2;
        }

        if (sim->parsed())
            return cmd_simulate(spec, report_path, stages_path, importance_path, !no_breakdown);
        if (sweep->parsed())
            return cmd_sweep(spec, sweep_out, sweep_p, sweep_token, sweep_head, sweep_sram,
                             sweep_bits);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
