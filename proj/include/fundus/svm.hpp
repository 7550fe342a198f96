#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fundus/features.hpp"

namespace fundus {

inline constexpr int kModelFormatVersion = 1;

struct SvmModel {
    std::vector<double> weights;
    double bias = 0.0;
    double C = 1.0;
    Extractor extractor = Extractor::conventional;
    ScalerStats scaler;
    std::uint64_t seed = 0;
    int epochs = 0;
};

struct TrainOptions {
    double C = 1.0;
    std::uint64_t seed = 42;
    int epochs = 0;  // 0: 50 * ceil(N / 1000)
    bool class_weighting = true;
};

// Linear SVM by stochastic subgradient descent (Pegasos) returning the
// step-weighted iterate average. Class weights make C+ / C- = N- / N+. Bias is
// learned as a weight on a constant input. Records are expected to be scaled already.
struct TrainTrace {
    std::vector<double> epoch_objective;  // full-batch primal objective after each epoch
};
SvmModel train_svm(std::span<const FeatureRecord> records, const TrainOptions& opt, TrainTrace* trace = nullptr);

// Fits the scaler on the records, scales them and trains.
SvmModel train_scaled(std::span<const FeatureRecord> raw_records, const TrainOptions& opt,
                      TrainTrace* trace = nullptr);

// Primal objective 1/2|w|^2 + C * sum(c_i * hinge_i) with the same class weights as training.
double svm_objective(const SvmModel& m, std::span<const FeatureRecord> records, bool class_weighting = true);

struct Prediction {
    Label label;
    double margin;
};

// Unscaled records get the model's scaler applied first. A zero margin
// counts as negative.
Prediction predict(const SvmModel& m, const FeatureRecord& record);
double decision(const SvmModel& m, std::span<const double> x);

std::string model_to_json(const SvmModel& m);
SvmModel model_from_json(const std::string& text);
void save_model(const SvmModel& m, const std::string& path);
SvmModel load_model(const std::string& path);

}  // namespace fundus
