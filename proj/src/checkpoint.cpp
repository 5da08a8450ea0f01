#include "stric/checkpoint.hpp"

#include "stric/config.hpp"
#include "stric/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>

namespace stric::checkpoint {
namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v(i))) {
            throw NumericError("checkpoint: refusing to save a non-finite value");
        }
        out.push_back(v(i));
    }
    return out;
}

Eigen::VectorXd vector_from(const json& j, std::size_t expected, const std::string& what) {
    if (!j.is_array() || j.size() != expected) {
        throw DataError("checkpoint: '" + what + "' should hold " + std::to_string(expected) + " values");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
    for (std::size_t i = 0; i < expected; ++i) {
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

} // namespace

void save(const Checkpoint& ckpt, const std::string& path) {
    StricModel model = ckpt.model;  // parameters() needs a mutable model
    json tensors = json::array();
    for (const auto& p : parameters(model)) {
        json data = json::array();
        for (double x : p.values) {
            if (!std::isfinite(x)) {
                throw NumericError("checkpoint: tensor '" + p.name + "' holds a non-finite value");
            }
            data.push_back(x);
        }
        tensors.push_back({{"name", p.name}, {"group", p.group}, {"shape", {p.rows, p.cols}}, {"data", data}});
    }
    json stats_degenerate = json::array();
    for (bool d : ckpt.stats.degenerate) {
        stats_degenerate.push_back(d);
    }
    const json doc = {
        {"format", kFormat},
        {"version", kVersion},
        {"seed", model.seed},
        {"variant", ckpt.variant},
        {"best_epoch", ckpt.best_epoch},
        {"model", config::model_to_json(model.config)},
        {"standardization",
         {{"mean", vector_json(ckpt.stats.mean)},
          {"std", vector_json(ckpt.stats.std)},
          {"degenerate", stats_degenerate}}},
        {"residual_std", vector_json(ckpt.residual_std)},
        {"norm",
         {{"running_mean", vector_json(model.norm.running_mean)},
          {"running_var", vector_json(model.norm.running_var)},
          {"momentum", model.norm.momentum},
          {"epsilon", model.norm.epsilon}}},
        {"prior",
         {{"lambda_logit", model.prior.lambda_logit},
          {"log_kappa", model.prior.log_kappa},
          {"log_eta2", model.prior.log_eta2},
          {"learn_eta2", model.prior.learn_eta2}}},
        {"tensors", tensors},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("checkpoint: cannot write '" + path + "'");
    }
    out << doc.dump(1) << '\n';
    if (!out) {
        throw DataError("checkpoint: write to '" + path + "' failed");
    }
}

Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("checkpoint: cannot open '" + path + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("checkpoint: '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormat) {
        throw DataError("checkpoint: '" + path + "' is not a " + std::string(kFormat) + " file");
    }
    if (doc.value("version", -1) != kVersion) {
        throw DataError("checkpoint: unsupported version in '" + path + "'");
    }
    Checkpoint ckpt;
    try {
        const ModelConfig mc = config::model_from_json(doc.at("model"));
        ckpt.model = StricModel(mc, doc.at("seed").get<std::uint64_t>());
        ckpt.variant = doc.at("variant").get<std::string>();
        ckpt.best_epoch = doc.at("best_epoch").get<std::size_t>();

        const std::size_t n = mc.n_channels;
        const json& st = doc.at("standardization");
        ckpt.stats.mean = vector_from(st.at("mean"), n, "standardization.mean");
        ckpt.stats.std = vector_from(st.at("std"), n, "standardization.std");
        ckpt.stats.degenerate = st.at("degenerate").get<std::vector<bool>>();
        if (ckpt.stats.degenerate.size() != n) {
            throw DataError("checkpoint: 'standardization.degenerate' should hold " + std::to_string(n) + " flags");
        }
        ckpt.residual_std = vector_from(doc.at("residual_std"), n, "residual_std");

        StricModel& model = ckpt.model;
        const json& norm = doc.at("norm");
        const auto features = static_cast<std::size_t>(model.norm.running_mean.size());
        model.norm.running_mean = vector_from(norm.at("running_mean"), features, "norm.running_mean");
        model.norm.running_var = vector_from(norm.at("running_var"), features, "norm.running_var");
        model.norm.momentum = norm.at("momentum").get<double>();
        model.norm.epsilon = norm.at("epsilon").get<double>();

        const json& prior = doc.at("prior");
        model.prior.lambda_logit = prior.at("lambda_logit").get<double>();
        model.prior.log_kappa = prior.at("log_kappa").get<double>();
        model.prior.log_eta2 = prior.at("log_eta2").get<double>();
        model.prior.learn_eta2 = prior.at("learn_eta2").get<bool>();

        std::map<std::string, const json*> stored;
        for (const json& t : doc.at("tensors")) {
            stored[t.at("name").get<std::string>()] = &t;
        }
        const auto params = parameters(model);
        if (stored.size() != params.size()) {
            throw DataError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                            std::to_string(stored.size()));
        }
        for (const auto& p : params) {
            const auto it = stored.find(p.name);
            if (it == stored.end()) {
                throw DataError("checkpoint: missing tensor '" + p.name + "'");
            }
            const json& t = *it->second;
            const auto shape = t.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != p.rows || shape[1] != p.cols) {
                throw DataError("checkpoint: tensor '" + p.name + "' has shape mismatch (expected " +
                                std::to_string(p.rows) + "x" + std::to_string(p.cols) + ")");
            }
            const json& data = t.at("data");
            if (!data.is_array() || data.size() != p.values.size()) {
                throw DataError("checkpoint: tensor '" + p.name + "' has the wrong number of values");
            }
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                p.values[i] = data[i].get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw DataError("checkpoint: malformed '" + path + "': " + e.what());
    }
    return ckpt;
}

} // namespace stric::checkpoint
