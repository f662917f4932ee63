#include "config.hpp"

#include <fstream>
#include <set>
#include <vector>

namespace ub {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError(std::string(what) + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

json parse_text(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (hidden_dim == 0 || query_dim == 0 || heads == 0 || max_len == 0 ||
        max_behaviors == 0 || batch_size == 0)
        throw ConfigError("TrainConfig: dimensions and batch size must be positive");
    if (hidden_dim % heads != 0) throw ConfigError("TrainConfig: heads must divide hidden_dim");
    if (negatives_k == 0 || negatives_p == 0)
        throw ConfigError("TrainConfig: negative counts must be positive");
    if (behavior_pool_m < 2 || sequence_pool_u < 2 || update_interval == 0)
        throw ConfigError("TrainConfig: pool sizes and update interval must be positive");
    if (negatives_k > behavior_pool_m - 1)
        throw ConfigError("TrainConfig: negatives_k must be <= behavior_pool_m - 1");
    if (negatives_p > sequence_pool_u - 1)
        throw ConfigError("TrainConfig: negatives_p must be <= sequence_pool_u - 1");
    if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || adam_eps <= 0.0)
        throw ConfigError("TrainConfig: bad Adam parameters");
    if (mask_rate <= 0.0 || mask_rate > 1.0)
        throw ConfigError("TrainConfig: mask_rate must be in (0,1]");
    if (boundary_fraction <= 0.0 || boundary_fraction >= 1.0)
        throw ConfigError("TrainConfig: boundary_fraction must be in (0,1)");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("TrainConfig: bad dropout");
    if (init_scale <= 0.0) throw ConfigError("TrainConfig: init_scale must be positive");
    if (sampling_mode != "random" && sampling_mode != "medium_hard" &&
        sampling_mode != "global_hardest")
        throw ConfigError("TrainConfig: unknown sampling_mode '" + sampling_mode + "'");
    if (tasks != "both" && tasks != "mbp" && tasks != "bsm")
        throw ConfigError("TrainConfig: unknown tasks '" + tasks + "'");
}

json TrainConfig::to_json() const {
    return json{{"hidden_dim", hidden_dim},
                {"query_dim", query_dim},
                {"heads", heads},
                {"max_len", max_len},
                {"vocab_size", vocab_size},
                {"max_behaviors", max_behaviors},
                {"negatives_k", negatives_k},
                {"negatives_p", negatives_p},
                {"behavior_pool_m", behavior_pool_m},
                {"sequence_pool_u", sequence_pool_u},
                {"update_interval", update_interval},
                {"lr", lr},
                {"beta1", beta1},
                {"beta2", beta2},
                {"adam_eps", adam_eps},
                {"batch_size", batch_size},
                {"steps", steps},
                {"seed", seed},
                {"sampling_mode", sampling_mode},
                {"tasks", tasks},
                {"mask_rate", mask_rate},
                {"boundary_fraction", boundary_fraction},
                {"dropout", dropout},
                {"init_scale", init_scale},
                {"mean_pooling", mean_pooling}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "hidden_dim",    "query_dim",       "heads",          "max_len",
        "vocab_size",    "max_behaviors",   "negatives_k",    "negatives_p",
        "behavior_pool_m", "sequence_pool_u", "update_interval", "lr",
        "beta1",         "beta2",           "adam_eps",       "batch_size",
        "steps",         "seed",            "sampling_mode",  "tasks",
        "mask_rate",     "boundary_fraction", "dropout",      "init_scale",
        "mean_pooling"};
    reject_unknown_keys(j, known, "TrainConfig");
    TrainConfig c;
    read(j, "hidden_dim", c.hidden_dim);
    read(j, "query_dim", c.query_dim);
    read(j, "heads", c.heads);
    read(j, "max_len", c.max_len);
    read(j, "vocab_size", c.vocab_size);
    read(j, "max_behaviors", c.max_behaviors);
    read(j, "negatives_k", c.negatives_k);
    read(j, "negatives_p", c.negatives_p);
    read(j, "behavior_pool_m", c.behavior_pool_m);
    read(j, "sequence_pool_u", c.sequence_pool_u);
    read(j, "update_interval", c.update_interval);
    read(j, "lr", c.lr);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "adam_eps", c.adam_eps);
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "seed", c.seed);
    read(j, "sampling_mode", c.sampling_mode);
    read(j, "tasks", c.tasks);
    read(j, "mask_rate", c.mask_rate);
    read(j, "boundary_fraction", c.boundary_fraction);
    read(j, "dropout", c.dropout);
    read(j, "init_scale", c.init_scale);
    read(j, "mean_pooling", c.mean_pooling);
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    return from_json(parse_text(text, "TrainConfig"));
}

std::string TrainConfig::fingerprint() const {
    const std::string canon = to_json().dump();
    return hash_hex(fnv1a(canon.data(), canon.size()));
}

void FinetuneConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("FinetuneConfig: lr must be positive");
    if (batch_size == 0 || pairs_per_user == 0)
        throw ConfigError("FinetuneConfig: batch_size and pairs_per_user must be positive");
    if (label_fraction <= 0.0 || label_fraction > 1.0)
        throw ConfigError("FinetuneConfig: label_fraction must be in (0,1]");
    if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0)
        throw ConfigError("FinetuneConfig: holdout_fraction must be in (0,1)");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || adam_eps <= 0.0)
        throw ConfigError("FinetuneConfig: bad Adam parameters");
}

json FinetuneConfig::to_json() const {
    return json{{"lr", lr},
                {"steps", steps},
                {"batch_size", batch_size},
                {"label_fraction", label_fraction},
                {"freeze_encoder", freeze_encoder},
                {"seed", seed},
                {"pairs_per_user", pairs_per_user},
                {"holdout_fraction", holdout_fraction},
                {"beta1", beta1},
                {"beta2", beta2},
                {"adam_eps", adam_eps}};
}

FinetuneConfig FinetuneConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "lr",        "steps",           "batch_size", "label_fraction",
        "freeze_encoder", "seed",       "pairs_per_user", "holdout_fraction",
        "beta1",     "beta2",           "adam_eps"};
    reject_unknown_keys(j, known, "FinetuneConfig");
    FinetuneConfig c;
    read(j, "lr", c.lr);
    read(j, "steps", c.steps);
    read(j, "batch_size", c.batch_size);
    read(j, "label_fraction", c.label_fraction);
    read(j, "freeze_encoder", c.freeze_encoder);
    read(j, "seed", c.seed);
    read(j, "pairs_per_user", c.pairs_per_user);
    read(j, "holdout_fraction", c.holdout_fraction);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "adam_eps", c.adam_eps);
    c.validate();
    return c;
}

FinetuneConfig FinetuneConfig::from_json_text(const std::string& text) {
    return from_json(parse_text(text, "FinetuneConfig"));
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a(buf.data(), static_cast<std::size_t>(in.gcount()), h);
    }
    return hash_hex(h);
}

}  // namespace ub
