#include "fundus/svm.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace fundus {

using nlohmann::json;

namespace {

int sign_of(Label l) {
    if (l == Label::positive) return 1;
    if (l == Label::negative) return -1;
    throw Error("training records must be labelled positive or negative");
}

struct ClassWeights {
    double positive = 1.0;
    double negative = 1.0;
};

ClassWeights class_weights(std::span<const FeatureRecord> records, bool weighting) {
    std::size_t pos = 0, neg = 0;
    for (const auto& r : records) (sign_of(r.label) > 0 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw Error("training needs both positive and negative records");
    ClassWeights w;
    if (weighting) w.positive = static_cast<double>(neg) / static_cast<double>(pos);
    return w;
}

double dot_aug(const std::vector<double>& w, std::span<const double> x) {
    double s = w.back();  // constant input 1
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    return s;
}

double objective_aug(const std::vector<double>& w, std::span<const FeatureRecord> records, const ClassWeights& cw,
                     double C) {
    double reg = 0.0;
    for (double v : w) reg += v * v;
    double loss = 0.0;
    for (const auto& r : records) {
        const int y = sign_of(r.label);
        const double h = std::max(0.0, 1.0 - y * dot_aug(w, r.values));
        loss += (y > 0 ? cw.positive : cw.negative) * h;
    }
    return 0.5 * reg + C * loss;
}

}  // namespace

SvmModel train_svm(std::span<const FeatureRecord> records, const TrainOptions& opt, TrainTrace* trace) {
    if (records.empty()) throw Error("no training records");
    if (!(opt.C > 0.0) || !std::isfinite(opt.C)) throw Error("C must be positive");
    const std::size_t dim = records.front().values.size();
    for (const auto& r : records) {
        if (r.values.size() != dim) throw Error("training records differ in dimension");
        for (double v : r.values)
            if (!std::isfinite(v)) throw Error("training record " + r.window_id + " has a non-finite feature");
    }
    const ClassWeights cw = class_weights(records, opt.class_weighting);
    const std::size_t n = records.size();
    const int epochs = opt.epochs > 0 ? opt.epochs : 50 * static_cast<int>((n + 999) / 1000);
    const double lambda = 1.0 / (opt.C * static_cast<double>(n));

    double weight_sum = 0.0;
    for (const auto& r : records) weight_sum += sign_of(r.label) > 0 ? cw.positive : cw.negative;
    // The optimum satisfies 1/2|w|^2 <= J(0) = C * sum(c_i).
    const double radius = std::sqrt(2.0 * opt.C * weight_sum);

    std::vector<double> w(dim + 1, 0.0);
    // Iterate average weighted by step index; the last iterate alone oscillates.
    std::vector<double> avg(dim + 1, 0.0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(opt.seed);
    long long t = 0;
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
        for (std::size_t idx : order) {
            ++t;
            const auto& r = records[idx];
            const int y = sign_of(r.label);
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const double m = y * dot_aug(w, r.values);
            const double shrink = 1.0 - eta * lambda;
            for (auto& v : w) v *= shrink;
            if (m < 1.0) {
                const double step = eta * (y > 0 ? cw.positive : cw.negative) * y;
                for (std::size_t k = 0; k < dim; ++k) w[k] += step * r.values[k];
                w[dim] += step;
            }
            double norm = 0.0;
            for (double v : w) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > radius) {
                const double s = radius / norm;
                for (auto& v : w) v *= s;
            }
            const double rho = 2.0 / (static_cast<double>(t) + 1.0);
            for (std::size_t k = 0; k <= dim; ++k) avg[k] += rho * (w[k] - avg[k]);
        }
        if (trace) trace->epoch_objective.push_back(objective_aug(avg, records, cw, opt.C));
    }

    SvmModel model;
    model.weights.assign(avg.begin(), avg.end() - 1);
    model.bias = avg.back();
    model.C = opt.C;
    model.extractor = records.front().extractor;
    model.seed = opt.seed;
    model.epochs = epochs;
    model.scaler = {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    return model;
}

SvmModel train_scaled(std::span<const FeatureRecord> raw, const TrainOptions& opt, TrainTrace* trace) {
    const auto stats = fit_scaler(raw);
    std::vector<FeatureRecord> scaled;
    scaled.reserve(raw.size());
    for (const auto& r : raw) scaled.push_back(apply_scaler(stats, r));
    SvmModel m = train_svm(scaled, opt, trace);
    m.scaler = stats;
    return m;
}

double svm_objective(const SvmModel& m, std::span<const FeatureRecord> records, bool class_weighting) {
    std::vector<double> w(m.weights);
    w.push_back(m.bias);
    return objective_aug(w, records, class_weights(records, class_weighting), m.C);
}

double decision(const SvmModel& m, std::span<const double> x) {
    if (x.size() != m.weights.size())
        throw Error("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                    std::to_string(m.weights.size()));
    double s = m.bias;
    for (std::size_t i = 0; i < x.size(); ++i) s += m.weights[i] * x[i];
    return s;
}

Prediction predict(const SvmModel& m, const FeatureRecord& record) {
    if (record.values.size() != m.weights.size())
        throw Error("feature dimension " + std::to_string(record.values.size()) + " does not match model dimension " +
                    std::to_string(m.weights.size()));
    const double margin =
        record.scaled ? decision(m, record.values) : decision(m, apply_scaler(m.scaler, record).values);
    return {margin > 0.0 ? Label::positive : Label::negative, margin};
}

std::string model_to_json(const SvmModel& m) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["extractor"] = to_string(m.extractor);
    j["dim"] = m.weights.size();
    j["C"] = m.C;
    j["seed"] = m.seed;
    j["epochs"] = m.epochs;
    j["weights"] = m.weights;
    j["bias"] = m.bias;
    j["scaler"] = {{"mean", m.scaler.mean}, {"std", m.scaler.stddev}};
    return j.dump(2);
}

SvmModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("corrupt model file: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("format_version")) throw Error("corrupt model file: no format_version");
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion)
            throw Error("model format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
        SvmModel m;
        m.extractor = extractor_from_string(j.at("extractor").get<std::string>());
        m.C = j.at("C").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.epochs = j.at("epochs").get<int>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
        m.scaler.stddev = j.at("scaler").at("std").get<std::vector<double>>();
        const auto dim = j.at("dim").get<std::size_t>();
        if (m.weights.size() != dim || m.scaler.mean.size() != dim || m.scaler.stddev.size() != dim)
            throw Error("corrupt model file: dimension fields disagree");
        if (!std::isfinite(m.bias)) throw Error("corrupt model file: non-finite bias");
        for (double v : m.weights)
            if (!std::isfinite(v)) throw Error("corrupt model file: non-finite weight");
        return m;
    } catch (const json::exception& e) {
        throw Error(std::string("corrupt model file: ") + e.what());
    }
}

void save_model(const SvmModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model " + path);
    out << model_to_json(m) << '\n';
}

SvmModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace fundus
