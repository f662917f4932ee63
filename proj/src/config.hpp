#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "errors.hpp"

namespace ub {

// Every pre-training hyperparameter, desk-scale defaults. Serialized into
// checkpoints and fingerprinted into every output artifact.
struct TrainConfig {
    std::size_t hidden_dim = 32;
    std::size_t query_dim = 32;
    std::size_t heads = 2;
    std::size_t max_len = 48;
    std::size_t vocab_size = 0;  // 0 = take from the corpus
    std::size_t max_behaviors = 100;

    std::size_t negatives_k = 4;      // MBP candidates per slot = K+1
    std::size_t negatives_p = 4;      // BSM candidates per pair = P+1
    std::size_t behavior_pool_m = 1000;
    std::size_t sequence_pool_u = 100;
    std::size_t update_interval = 50;

    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 16;
    std::size_t steps = 2000;
    std::uint64_t seed = 1;

    std::string sampling_mode = "medium_hard";  // random | medium_hard | global_hardest
    std::string tasks = "both";                 // both | mbp | bsm
    double mask_rate = 0.1;
    double boundary_fraction = 0.5;
    double dropout = 0.0;  // accepted, inert at desk scale
    double init_scale = 0.05;
    bool mean_pooling = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig from_json_text(const std::string& text);

    // Stable 64-bit hash of the resolved config, hex-encoded.
    std::string fingerprint() const;
};

struct FinetuneConfig {
    double lr = 1e-4;
    std::size_t steps = 500;
    std::size_t batch_size = 32;
    double label_fraction = 0.1;
    bool freeze_encoder = false;
    std::uint64_t seed = 1;
    std::size_t pairs_per_user = 6;
    double holdout_fraction = 0.25;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    nlohmann::json to_json() const;
    static FinetuneConfig from_json(const nlohmann::json& j);
    static FinetuneConfig from_json_text(const std::string& text);
};

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull);
std::string hash_hex(std::uint64_t h);
std::string file_hash(const std::string& path);

}  // namespace ub
