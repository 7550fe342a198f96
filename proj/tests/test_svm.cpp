#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "fundus/svm.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "fundus_svm_test";
    fs::create_directories(dir);
    return dir / name;
}

FeatureRecord point(double x, double y, Label l, int k) {
    FeatureRecord r;
    r.window_id = "img000_w" + std::to_string(k);
    r.image_id = "img000";
    r.bbox = {0, 0, 14, 14};
    r.label = l;
    r.values = {x, y};
    r.scaled = true;
    return r;
}

// Two clouds on either side of x + y = 0, each at least `gap` away from it.
std::vector<FeatureRecord> clouds(int per_class, double gap, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> along(-3.0, 3.0), away(0.0, 2.0);
    std::vector<FeatureRecord> out;
    const double s = std::sqrt(0.5);
    for (int k = 0; k < 2 * per_class; ++k) {
        const bool pos = k % 2 == 0;
        const double t = along(rng), d = (gap + away(rng)) * (pos ? 1.0 : -1.0);
        out.push_back(point(s * (d - t), s * (d + t), pos ? Label::positive : Label::negative, k));
    }
    return out;
}

double accuracy(const SvmModel& m, const std::vector<FeatureRecord>& rs) {
    int ok = 0;
    for (const auto& r : rs) ok += predict(m, r).label == r.label;
    return static_cast<double>(ok) / static_cast<double>(rs.size());
}

}  // namespace

TEST_CASE("separable clouds") {
    const auto train = clouds(100, 1.0, 1);
    const SvmModel m = train_svm(train, {});
    CHECK(accuracy(m, train) == 1.0);
    CHECK(accuracy(m, clouds(200, 1.0, 2)) >= 0.98);
    CHECK(m.weights.size() == 2);
    CHECK(m.epochs == 50);

    const SvmModel again = train_svm(train, {});
    CHECK(again.weights == m.weights);
    CHECK(again.bias == m.bias);

    TrainOptions other;
    other.seed = 7;
    CHECK(train_svm(train, other).weights != m.weights);
}

TEST_CASE("flipping labels negates the decision function") {
    const auto train = clouds(100, 0.5, 3);
    auto flipped = train;
    for (auto& r : flipped) r.label = r.label == Label::positive ? Label::negative : Label::positive;
    const SvmModel a = train_svm(train, {});
    const SvmModel b = train_svm(flipped, {});
    for (const auto& r : clouds(50, 0.0, 4)) CHECK(std::abs(decision(a, r.values) + decision(b, r.values)) <= 1e-6);
}

TEST_CASE("objective decreases across epochs") {
    const auto train = clouds(150, 0.2, 5);
    TrainTrace trace;
    TrainOptions opt;
    opt.epochs = 60;
    const SvmModel m = train_svm(train, opt, &trace);
    REQUIRE(trace.epoch_objective.size() == 60);
    for (std::size_t e = 1; e < trace.epoch_objective.size(); ++e)
        CHECK(trace.epoch_objective[e] <= trace.epoch_objective[e - 1] * 1.01);
    CHECK(svm_objective(m, train) == doctest::Approx(trace.epoch_objective.back()).epsilon(1e-12));
}

TEST_CASE("class weights balance the hinge terms") {
    // 20 positives against 180 negatives, overlapping.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<FeatureRecord> train;
    for (int k = 0; k < 200; ++k) {
        const bool pos = k < 20;
        train.push_back(point(nd(rng) + (pos ? 1.0 : -1.0), nd(rng), pos ? Label::positive : Label::negative, k));
    }
    TrainOptions plain;
    plain.class_weighting = false;
    const SvmModel weighted = train_svm(train, {});
    const SvmModel unweighted = train_svm(train, plain);
    auto sensitivity = [&](const SvmModel& m) {
        int hit = 0;
        for (int k = 0; k < 20; ++k) hit += predict(m, train[k]).label == Label::positive;
        return hit;
    };
    CHECK(sensitivity(weighted) > sensitivity(unweighted));

    // Objective by hand with c+ = 180/20.
    double reg = weighted.bias * weighted.bias, loss = 0.0;
    for (double w : weighted.weights) reg += w * w;
    for (const auto& r : train) {
        const double y = r.label == Label::positive ? 1.0 : -1.0;
        loss += (y > 0 ? 9.0 : 1.0) * std::max(0.0, 1.0 - y * decision(weighted, r.values));
    }
    CHECK(svm_objective(weighted, train) == doctest::Approx(0.5 * reg + loss).epsilon(1e-12));
}

TEST_CASE("prediction") {
    SvmModel m;
    m.weights = {1.0, 0.5};
    m.bias = -1.0;
    m.scaler = {{0.0, 0.0}, {0.0, 0.0}};
    const Prediction p = predict(m, point(2.0, 2.0, Label::unlabeled, 0));
    CHECK(p.label == Label::positive);
    CHECK(p.margin == doctest::Approx(2.0));
    CHECK(predict(m, point(1.0, 0.0, Label::unlabeled, 0)).label == Label::negative);  // margin 0

    SvmModel never;
    never.weights = {0.0, 0.0};
    never.bias = -1.0;
    never.scaler = m.scaler;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int k = 0; k < 20; ++k) CHECK(predict(never, point(u(rng), u(rng), Label::unlabeled, k)).label == Label::negative);

    // The margin is affine in the input.
    const std::vector<double> x{0.3, -1.7};
    for (double a : {-2.0, 0.5, 3.0}) {
        const std::vector<double> ax{a * x[0], a * x[1]};
        CHECK(decision(m, ax) - m.bias == doctest::Approx(a * (decision(m, x) - m.bias)));
    }

    FeatureRecord wide = point(1.0, 1.0, Label::unlabeled, 0);
    wide.values.push_back(3.0);
    CHECK_THROWS_AS(predict(m, wide), Error);

    // Unscaled records get the stored scaler first.
    SvmModel scaled = m;
    scaled.scaler = {{1.0, 2.0}, {2.0, 4.0}};
    FeatureRecord raw = point(5.0, 10.0, Label::unlabeled, 0);
    raw.scaled = false;
    CHECK(predict(scaled, raw).margin == doctest::Approx(1.0 * 2.0 + 0.5 * 2.0 - 1.0));
}

TEST_CASE("training input errors") {
    auto one_class = clouds(10, 1.0, 6);
    for (auto& r : one_class) r.label = Label::negative;
    CHECK_THROWS_AS(train_svm(one_class, {}), Error);

    auto with_nan = clouds(10, 1.0, 6);
    with_nan[3].values[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_svm(with_nan, {}), Error);

    auto unlabeled = clouds(10, 1.0, 6);
    unlabeled[0].label = Label::unlabeled;
    CHECK_THROWS_AS(train_svm(unlabeled, {}), Error);

    TrainOptions bad;
    bad.C = 0.0;
    CHECK_THROWS_AS(train_svm(clouds(10, 1.0, 6), bad), Error);
    CHECK_THROWS_AS(train_svm(std::vector<FeatureRecord>{}, {}), Error);
}

TEST_CASE("model persistence") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 3.0);
    std::vector<FeatureRecord> raw;
    for (int k = 0; k < 120; ++k) {
        FeatureRecord r;
        r.window_id = "img001_w" + std::to_string(k);
        r.image_id = "img001";
        r.bbox = {0, 0, 20, 20};
        r.label = k % 3 == 0 ? Label::positive : Label::negative;
        for (int i = 0; i < 28; ++i) r.values.push_back(nd(rng) + (r.label == Label::positive ? 1.5 : 0.0) * (i % 4));
        raw.push_back(r);
    }
    TrainOptions opt;
    opt.C = 0.7;
    opt.seed = 4;
    const SvmModel m = train_scaled(raw, opt);
    const fs::path path = scratch("model.json");
    save_model(m, path.string());
    const SvmModel back = load_model(path.string());
    CHECK(back.weights == m.weights);
    CHECK(back.bias == m.bias);
    CHECK(back.C == m.C);
    CHECK(back.seed == m.seed);
    CHECK(back.epochs == m.epochs);
    CHECK(back.extractor == m.extractor);
    CHECK(back.scaler.mean == m.scaler.mean);
    CHECK(back.scaler.stddev == m.scaler.stddev);

    for (int k = 0; k < 100; ++k) {
        FeatureRecord r = raw[0];
        for (auto& v : r.values) v = nd(rng);
        const Prediction a = predict(m, r), b = predict(back, r);
        CHECK(a.label == b.label);
        CHECK(a.margin == b.margin);
    }

    const std::string text = model_to_json(m);
    const fs::path truncated = scratch("truncated.json");
    { std::ofstream(truncated) << text.substr(0, text.size() / 2); }
    CHECK_THROWS_AS(load_model(truncated.string()), Error);

    std::string future = text;
    const auto pos = future.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    future.replace(pos, 19, "\"format_version\": 2");
    CHECK_THROWS_WITH_AS(model_from_json(future), doctest::Contains("version 2"), Error);

    CHECK_THROWS_AS(model_from_json("{\"weights\": []}"), Error);
    CHECK_THROWS_AS(load_model(scratch("missing.json").string()), Error);
}
