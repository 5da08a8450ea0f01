#include "stric/config.hpp"

#include "stric/error.hpp"

#include <fstream>
#include <set>

namespace stric::config {
namespace {

using nlohmann::json;

// Reads typed keys out of one JSON object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& doc, std::string path) : path_(std::move(path)) {
        if (!doc.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
        doc_ = &doc;
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = doc_->find(key);
        return it == doc_->end() ? nullptr : &*it;
    }

    std::string key_path(const std::string& key) const { return path_ + "." + key; }

    void read(const std::string& key, std::size_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) {
                throw ConfigError(key_path(key) + ": expected a non-negative integer");
            }
            out = v->get<std::size_t>();
        }
    }

    void read(const std::string& key, std::uint64_t& out, int /*seed tag*/) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
                throw ConfigError(key_path(key) + ": expected a non-negative integer");
            }
            out = v->get<std::uint64_t>();
        }
    }

    void read(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(key_path(key) + ": expected a number");
            }
            out = v->get<double>();
        }
    }

    void read(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(key_path(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) {
                throw ConfigError(key_path(key) + ": expected a string");
            }
            out = v->get<std::string>();
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : doc_->items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown config key '" + key_path(key) + "'");
            }
        }
    }

private:
    const json* doc_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
};

void read_tcn(Section& parent, tcn::TcnConfig& tcn) {
    const json* v = parent.find("tcn");
    if (!v) {
        return;
    }
    Section s(*v, parent.key_path("tcn"));
    s.read("layers", tcn.layers);
    s.read("channels", tcn.channels);
    s.read("kernel", tcn.kernel_size);
    s.reject_unknown();
}

void read_model(const json& doc, RunConfig& rc) {
    Section s(doc, "model");
    ModelConfig& m = rc.model;
    s.read("n_p", m.n_past);
    s.read("n_f", m.n_future);
    s.read("l0", m.l_trend);
    s.read("l1", m.l_seasonal);
    s.read("l2", m.l_linear);
    s.read("kernel_length", m.kernel_length);
    s.read("rho_max", m.rho_max);
    s.read("lambda_init", m.lambda_init);
    s.read("kappa_init", m.kappa_init);
    std::string variant = to_string(rc.variant);
    s.read("variant", variant);
    try {
        rc.variant = parse_variant(variant);
    } catch (const ConfigError& e) {
        throw ConfigError("model.variant: " + std::string(e.what()));
    }
    read_tcn(s, m.tcn);
    s.reject_unknown();
}

void read_train(const json& doc, train::TrainConfig& t) {
    Section s(doc, "train");
    s.read("lr", t.learning_rate);
    s.read("batch", t.batch_size);
    s.read("epochs", t.max_epochs);
    s.read("patience", t.patience);
    s.read("seed", t.seed, 0);
    s.read("l1_weight", t.l1_weight);
    s.read("kernel_weight", t.kernel_weight);
    s.read("learn_eta2", t.learn_eta2);
    s.read("eta2", t.eta2);
    s.reject_unknown();
}

void read_detector(const json& doc, detector::DetectorConfig& d) {
    Section s(doc, "detector");
    s.read("n_n", d.n_n);
    s.read("n_a", d.n_a);
    if (const json* v = s.find("sigma")) {
        if (v->is_string() && v->get<std::string>() == "median") {
            d.sigma_median = true;
        } else if (v->is_number()) {
            d.sigma_median = false;
            d.sigma = v->get<double>();
        } else {
            throw ConfigError("detector.sigma: expected a positive number or \"median\"");
        }
    }
    s.read("gamma", d.gamma);
    s.read("epsilon", d.epsilon);
    s.read("ratio_floor", d.ratio_floor);
    s.read("constrained", d.constrained);
    std::string scale = d.ridge_scale == detector::RidgeScale::kReference ? "reference" : "centers";
    s.read("ridge_scale", scale);
    if (scale == "reference") {
        d.ridge_scale = detector::RidgeScale::kReference;
    } else if (scale == "centers") {
        d.ridge_scale = detector::RidgeScale::kCenters;
    } else {
        throw ConfigError("detector.ridge_scale: expected \"reference\" or \"centers\"");
    }
    s.reject_unknown();
}

} // namespace

void RunConfig::validate() const {
    if (!(data.train_frac > 0.0 && data.train_frac < 1.0)) {
        throw ConfigError("data.train_frac must lie in (0, 1)");
    }
    if (!(data.val_frac >= 0.0 && data.val_frac < 1.0)) {
        throw ConfigError("data.val_frac must lie in [0, 1)");
    }
    model.validate();
    train.validate();
    detector.validate();
}

RunConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    RunConfig rc;
    for (const auto& [key, value] : doc.items()) {
        if (key == "data") {
            Section s(value, "data");
            s.read("path", rc.data.path);
            s.read("train_frac", rc.data.train_frac);
            s.read("val_frac", rc.data.val_frac);
            s.reject_unknown();
        } else if (key == "model") {
            read_model(value, rc);
        } else if (key == "train") {
            read_train(value, rc.train);
        } else if (key == "detector") {
            read_detector(value, rc.detector);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    rc.validate();
    return rc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

nlohmann::json model_to_json(const ModelConfig& m) {
    return {
        {"n_channels", m.n_channels},
        {"n_p", m.n_past},
        {"n_f", m.n_future},
        {"l0", m.l_trend},
        {"l1", m.l_seasonal},
        {"l2", m.l_linear},
        {"kernel_length", m.kernel_length},
        {"rho_max", m.rho_max},
        {"use_ldl", m.use_ldl},
        {"use_fading", m.use_fading},
        {"lambda_init", m.lambda_init},
        {"kappa_init", m.kappa_init},
        {"tcn_a_init_std", m.tcn_a_init_std},
        {"tcn",
         {{"layers", m.tcn.layers},
          {"channels", m.tcn.channels},
          {"kernel", m.tcn.kernel_size},
          {"activation", m.tcn.activation == tcn::Activation::kRelu ? "relu" : "identity"}}},
    };
}

ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig m;
    try {
        m.n_channels = j.at("n_channels").get<std::size_t>();
        m.n_past = j.at("n_p").get<std::size_t>();
        m.n_future = j.at("n_f").get<std::size_t>();
        m.l_trend = j.at("l0").get<std::size_t>();
        m.l_seasonal = j.at("l1").get<std::size_t>();
        m.l_linear = j.at("l2").get<std::size_t>();
        m.kernel_length = j.at("kernel_length").get<std::size_t>();
        m.rho_max = j.at("rho_max").get<double>();
        m.use_ldl = j.at("use_ldl").get<bool>();
        m.use_fading = j.at("use_fading").get<bool>();
        m.lambda_init = j.at("lambda_init").get<double>();
        m.kappa_init = j.at("kappa_init").get<double>();
        m.tcn_a_init_std = j.at("tcn_a_init_std").get<double>();
        const auto& t = j.at("tcn");
        m.tcn.layers = t.at("layers").get<std::size_t>();
        m.tcn.channels = t.at("channels").get<std::size_t>();
        m.tcn.kernel_size = t.at("kernel").get<std::size_t>();
        m.tcn.activation = t.at("activation").get<std::string>() == "relu" ? tcn::Activation::kRelu
                                                                          : tcn::Activation::kIdentity;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    m.validate();
    return m;
}

} // namespace stric::config
