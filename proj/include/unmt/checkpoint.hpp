// Self-describing checkpoint container: format version, config echoes,
// vocabulary, named parameter arrays with shapes, Adam state, RNG seed,
// counters and the metrics log. CBOR on disk, write-then-rename for
// atomicity.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "unmt/train_state.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

inline constexpr int checkpoint_format_version = 1;

namespace detail {

inline json::binary_t doubles_to_binary(const std::vector<double>& v) {
    std::vector<uint8_t> bytes(v.size() * sizeof(double));
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return json::binary_t(std::move(bytes));
}

inline std::vector<double> binary_to_doubles(const json::binary_t& b) {
    if (b.size() % sizeof(double) != 0)
        throw std::runtime_error("checkpoint: corrupt double array");
    std::vector<double> v(b.size() / sizeof(double));
    std::memcpy(v.data(), b.data(), b.size());
    return v;
}

inline json param_set_to_json(const ParamSet& set) {
    json out = json::object();
    for (const auto& [name, t] : set.items()) {
        out[name] = {{"shape", t.shape()}, {"data", doubles_to_binary(t.value())}};
    }
    return out;
}

inline void param_set_from_json(const json& j, ParamSet& set) {
    for (auto& [name, t] : set.items()) {
        if (!j.contains(name)) throw std::runtime_error("checkpoint: missing parameter " + name);
        const auto& entry = j.at(name);
        Shape shape = entry.at("shape").get<Shape>();
        if (shape != t.shape()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
        t.value() = binary_to_doubles(entry.at("data").get_binary());
        if (t.value().size() != t.numel()) throw std::runtime_error("checkpoint: size mismatch for " + name);
    }
}

inline json adam_to_json(const AdamState& s) {
    json m = json::array(), v = json::array();
    for (const auto& x : s.m) m.push_back(doubles_to_binary(x));
    for (const auto& x : s.v) v.push_back(doubles_to_binary(x));
    return {{"t", s.t},
            {"lr", s.cfg.lr},
            {"beta1", s.cfg.beta1},
            {"beta2", s.cfg.beta2},
            {"eps", s.cfg.eps},
            {"m", std::move(m)},
            {"v", std::move(v)}};
}

inline AdamState adam_from_json(const json& j) {
    AdamState s;
    j.at("t").get_to(s.t);
    j.at("lr").get_to(s.cfg.lr);
    j.at("beta1").get_to(s.cfg.beta1);
    j.at("beta2").get_to(s.cfg.beta2);
    j.at("eps").get_to(s.cfg.eps);
    for (const auto& x : j.at("m")) s.m.push_back(binary_to_doubles(x.get_binary()));
    for (const auto& x : j.at("v")) s.v.push_back(binary_to_doubles(x.get_binary()));
    return s;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                            const TrainConfig& train_cfg, const Vocab& vocab) {
    json j;
    j["format_version"] = checkpoint_format_version;
    j["model_config"] = to_json(state.model.cfg);
    j["train_config"] = to_json(train_cfg);
    j["vocab"] = std::vector<std::string>(vocab.tokens().begin() + Vocab::reserved,
                                          vocab.tokens().end());
    j["epoch"] = state.epoch;
    j["step"] = state.step;
    j["best_bleu"] = state.best_bleu;
    j["best_epoch"] = state.best_epoch;
    j["stagnant"] = state.stagnant;
    j["bt_updates"] = state.bt_updates;
    j["generations"] = state.generations;
    j["rng"] = {{"master_seed", state.seed}};
    j["params"] = detail::param_set_to_json(state.model.set);
    j["adam_model"] = detail::adam_to_json(state.opt_model);
    j["ld_enabled"] = state.ld_enabled;
    if (state.ld_enabled) {
        j["ld_params"] = detail::param_set_to_json(state.ld.set);
        j["adam_ld"] = detail::adam_to_json(state.opt_ld);
    }
    json log = json::array();
    for (const auto& r : state.log) log.push_back(to_json(r));
    j["log"] = std::move(log);

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
        const auto bytes = json::to_cbor(j);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
        if (!out) throw std::runtime_error("short write on checkpoint: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
    TrainState state;
    TrainConfig train_cfg;
    Vocab vocab;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j = json::from_cbor(bytes);
    if (!j.contains("format_version") || j.at("format_version").get<int>() != checkpoint_format_version)
        throw std::runtime_error("checkpoint: unsupported format version in " + path.string());

    LoadedCheckpoint out;
    out.train_cfg = train_config_from_json(j.at("train_config"));
    ModelConfig mcfg = model_config_from_json(j.at("model_config"));
    out.vocab = Vocab(j.at("vocab").get<std::vector<std::string>>());

    // materialize with the right shapes, then overwrite values
    Rng scratch(0);
    out.state.model = Parameters(mcfg, out.vocab.size(), scratch);
    detail::param_set_from_json(j.at("params"), out.state.model.set);
    out.state.opt_model = detail::adam_from_json(j.at("adam_model"));
    j.at("ld_enabled").get_to(out.state.ld_enabled);
    if (out.state.ld_enabled) {
        out.state.ld = DiscriminatorParams(mcfg.embed_dim, scratch);
        detail::param_set_from_json(j.at("ld_params"), out.state.ld.set);
        out.state.opt_ld = detail::adam_from_json(j.at("adam_ld"));
    }
    j.at("epoch").get_to(out.state.epoch);
    j.at("step").get_to(out.state.step);
    j.at("best_bleu").get_to(out.state.best_bleu);
    j.at("best_epoch").get_to(out.state.best_epoch);
    j.at("stagnant").get_to(out.state.stagnant);
    j.at("bt_updates").get_to(out.state.bt_updates);
    j.at("generations").get_to(out.state.generations);
    out.state.seed = j.at("rng").at("master_seed").get<uint64_t>();
    for (const auto& r : j.at("log")) out.state.log.push_back(epoch_record_from_json(r));
    return out;
}

}  // namespace unmt
