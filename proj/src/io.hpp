#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "downstream.hpp"
#include "model.hpp"
#include "pretrain.hpp"

namespace ub::io {

// Shortest text form that round-trips a double exactly.
std::string fmt_double(double x);

struct Checkpoint {
    TrainConfig cfg;
    model::ModelParams params;
    std::string data_hash;  // fnv1a of the log file the model was trained on
};

// "UBCK v1" container: magic line, one-line JSON header (config, fingerprint,
// data hash, group shapes), then the raw doubles of every parameter group in
// declaration order. Round-trip is bitwise lossless.
void save_checkpoint(const std::string& path, const model::ModelParams& params,
                     const TrainConfig& cfg, const std::string& data_hash);
Checkpoint load_checkpoint(const std::string& path);

// One header line carrying the config fingerprint, then one TSV record per
// step: step, loss_total, loss_mbp, loss_bsm, mbp_acc, bsm_acc, pool_refresh.
void write_metrics_log(const std::string& path, const std::vector<pretrain::StepRecord>& log,
                       const std::string& fingerprint);

void write_eval_report(const std::string& path, const downstream::EvalReport& report,
                       const std::string& fingerprint, const std::string& checkpoint_hash);

void write_neg_dump(const std::string& path, const std::vector<pretrain::NegDumpLine>& lines,
                    const std::string& fingerprint);

// JSON face of the synthetic generator config (unknown keys rejected).
data::SynthConfig synth_config_from_json(const nlohmann::json& j);
data::SynthConfig synth_config_from_json_text(const std::string& text);
nlohmann::json synth_config_to_json(const data::SynthConfig& cfg);

}  // namespace ub::io
