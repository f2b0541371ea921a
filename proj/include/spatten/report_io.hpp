#pragma once

#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "spatten/simarch.hpp"

namespace spatten {

inline nlohmann::json to_json(const TrafficStats& t) {
    return {
        {"q_msb_bytes", t.bytes(t.q_msb_bits)}, {"k_msb_bytes", t.bytes(t.k_msb_bits)},
        {"v_msb_bytes", t.bytes(t.v_msb_bits)}, {"q_lsb_bytes", t.bytes(t.q_lsb_bits)},
        {"k_lsb_bytes", t.bytes(t.k_lsb_bits)}, {"v_lsb_bytes", t.bytes(t.v_lsb_bits)},
        {"out_bytes", t.bytes(t.out_bits)},     {"sram_reads", t.sram_reads},
        {"sram_writes", t.sram_writes},         {"mult_ops", t.mult_ops},
    };
}

inline nlohmann::json to_json(const SimReport& r) {
    nlohmann::json j{
        {"total_cycles", r.total_cycles},
        {"latency_s", r.latency_s},
        {"dram_bytes_total", r.dram_bytes_total},
        {"flops", r.flops},
        {"effective_flops_per_s", r.effective_flops_per_s},
        {"operational_intensity", r.operational_intensity},
        {"stage_cycles",
         {{"fetch", r.stage_cycles.fetch},
          {"qk", r.stage_cycles.qk},
          {"softmax", r.stage_cycles.softmax},
          {"pv", r.stage_cycles.pv},
          {"topk", r.stage_cycles.topk}}},
        {"traffic", to_json(r.traffic)},
        {"pq_stats",
         {{"rows_total", r.pq.rows_total},
          {"rows_refetched", r.pq.rows_refetched},
          {"lsb_bytes_fetched", r.pq.lsb_bytes_fetched}}},
        {"pruning_summary",
         {{"token_keep_avg", r.pruning_summary.token_keep_avg},
          {"head_keep_avg", r.pruning_summary.head_keep_avg},
          {"v_keep_avg", r.pruning_summary.v_keep_avg}}},
        {"notes", r.notes},
    };
    if (r.breakdown.filled) {
        j["breakdown"] = {{"datapath_only", r.breakdown.datapath_only},
                          {"with_pruning", r.breakdown.with_pruning},
                          {"with_parallel_topk", r.breakdown.with_parallel_topk},
                          {"with_pq", r.breakdown.with_pq}};
    }
    return j;
}

inline void write_report_json(const std::string& path, const SimReport& report) {
    std::ofstream os(path);
    check_arg(os.good(), "write_report_json: cannot open " + path);
    os << to_json(report).dump(2) << "\n";
}

inline void write_stage_csv(std::ostream& os, std::span<const StageTraceRow> rows) {
    os << "layer,step,head,query,fetch,qk,softmax,topk,pv\n";
    for (const StageTraceRow& r : rows) {
        os << r.layer << "," << r.step << "," << r.head << "," << r.query << "," << r.stages.fetch
           << "," << r.stages.qk << "," << r.stages.softmax << "," << r.stages.topk << ","
           << r.stages.pv << "\n";
    }
}

inline void write_stage_csv(const std::string& path, std::span<const StageTraceRow> rows) {
    std::ofstream os(path);
    check_arg(os.good(), "write_stage_csv: cannot open " + path);
    write_stage_csv(os, rows);
}

}  // namespace spatten
