#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "robult/eval.hpp"
#include "robult/synthdata.hpp"

using namespace robult;

namespace {

std::string serialize(const Dataset& ds) {
    std::ostringstream os;
    write_dataset(os, ds);
    return os.str();
}

// Perceptron with bias; returns training accuracy.
double perceptron_accuracy(const Matrix& x, const std::vector<int>& y, int epochs) {
    std::vector<double> w(x.cols + 1, 0.0);
    auto predict = [&](std::size_t r) {
        double s = w.back();
        for (std::size_t c = 0; c < x.cols; ++c) s += w[c] * x(r, c);
        return s > 0.0 ? 1 : 0;
    };
    for (int e = 0; e < epochs; ++e) {
        bool clean = true;
        for (std::size_t r = 0; r < x.rows; ++r) {
            const int p = predict(r);
            if (p == y[r]) continue;
            clean = false;
            const double sign = y[r] == 1 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < x.cols; ++c) w[c] += sign * x(r, c);
            w.back() += sign;
        }
        if (clean) break;
    }
    std::size_t hit = 0;
    for (std::size_t r = 0; r < x.rows; ++r) hit += predict(r) == y[r] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(x.rows);
}

}  // namespace

TEST(Generate, PureRedundancyIsLinearlySeparablePerModality) {
    SynthSpec s;
    s.n = 200;
    s.beta = {0, 0, 0};
    s.noise = 0;
    const Dataset ds = generate(s);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(perceptron_accuracy(ds.modalities[i], ds.labels, 20000), 1.0) << i;
}

TEST(Generate, NoSharedFactorMeansIndependentModalities) {
    SynthSpec s;
    s.n = 20000;
    s.alpha = 0;
    const Dataset ds = generate(s);
    EXPECT_LT(histogram_mi(ds.modalities[0], ds.modalities[1], 8), 0.05);
}

TEST(Generate, SeedDeterminesBytes) {
    SynthSpec s;
    s.n = 50;
    EXPECT_EQ(serialize(generate(s)), serialize(generate(s)));
    SynthSpec t = s;
    t.seed = 99;
    EXPECT_NE(serialize(generate(s)), serialize(generate(t)));
}

TEST(Generate, ShapesAndClasses) {
    SynthSpec s;
    s.n = 300;
    s.raw_dims = {10, 7};
    s.beta = {0.5, 0.5};
    s.classes = 3;
    const Dataset ds = generate(s);
    EXPECT_EQ(ds.size(), 300U);
    EXPECT_EQ(ds.raw_dims(), (std::vector<std::size_t>{10, 7}));
    std::set<int> seen(ds.labels.begin(), ds.labels.end());
    EXPECT_EQ(seen, (std::set<int>{0, 1, 2}));
}

TEST(Generate, RegressionTargetsInRangeAndBinned) {
    SynthSpec s;
    s.n = 500;
    s.task = TaskKind::regression;
    const Dataset ds = generate(s);
    EXPECT_EQ(ds.classes, 7U);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        EXPECT_LE(std::abs(ds.targets[r]), 3.0);
        EXPECT_EQ(ds.labels[r], discretize_label(ds.targets[r]));
    }
}

TEST(Generate, SynergyChangesLabels) {
    SynthSpec s;
    s.n = 400;
    SynthSpec t = s;
    t.synergy = true;
    const Dataset a = generate(s), b = generate(t);
    std::size_t differ = 0;
    for (std::size_t r = 0; r < a.size(); ++r) differ += a.labels[r] != b.labels[r] ? 1 : 0;
    EXPECT_GT(differ, 100U);
    EXPECT_LT(differ, 300U);
}

TEST(Generate, InvalidSpecRejected) {
    SynthSpec s;
    s.alpha = -1;
    EXPECT_THROW(generate(s), ConfigError);
    s = {};
    s.beta = {1, 1};
    EXPECT_THROW(generate(s), ConfigError);
    s = {};
    s.classes = 1;
    EXPECT_THROW(generate(s), ConfigError);
}

TEST(Mask, SingleExposesOneModality) {
    SynthSpec s;
    s.n = 20;
    const Dataset ds = generate(s);
    const Dataset v = mask_modalities(ds, MaskPolicy::single(0));
    for (std::size_t r = 0; r < ds.size(); ++r) {
        EXPECT_TRUE(v.available[0][r]);
        EXPECT_FALSE(v.available[1][r]);
        EXPECT_FALSE(v.available[2][r]);
        for (double x : v.modalities[1].row(r)) EXPECT_TRUE(std::isnan(x));
    }
    EXPECT_EQ(v.modalities[0], ds.modalities[0]);
}

TEST(Mask, FullIsIdentity) {
    SynthSpec s;
    s.n = 20;
    const Dataset ds = generate(s);
    EXPECT_EQ(serialize(mask_modalities(ds, MaskPolicy::full())), serialize(ds));
}

TEST(Mask, RandomIsReproducibleAndKeepsOne) {
    SynthSpec s;
    s.n = 200;
    const Dataset ds = generate(s);
    const Dataset a = mask_modalities(ds, MaskPolicy::random(0.9, 3));
    EXPECT_EQ(serialize(a), serialize(mask_modalities(ds, MaskPolicy::random(0.9, 3))));
    for (std::size_t r = 0; r < ds.size(); ++r)
        EXPECT_TRUE(a.available[0][r] || a.available[1][r] || a.available[2][r]);
}

TEST(Mask, InvalidPoliciesRejected) {
    SynthSpec s;
    s.n = 5;
    const Dataset ds = generate(s);
    EXPECT_THROW(mask_modalities(ds, MaskPolicy::subset({})), ContractError);
    EXPECT_THROW(mask_modalities(ds, MaskPolicy::single(3)), ContractError);
}

TEST(Serialization, RoundTripIncludingPoison) {
    SynthSpec s;
    s.n = 30;
    const Dataset masked = mask_modalities(generate(s), MaskPolicy::pair(0, 2));
    std::istringstream is(serialize(masked));
    const Dataset back = read_dataset(is);
    EXPECT_EQ(serialize(back), serialize(masked));
    EXPECT_EQ(back.modalities[0], masked.modalities[0]);
    EXPECT_FALSE(back.available[1][0]);
}

TEST(Serialization, BadHeaderRejected) {
    std::istringstream is("something,else\n");
    EXPECT_THROW(read_dataset(is), std::runtime_error);
    std::istringstream v("robult-dataset,9,classification,2,3\nlabel\n");
    EXPECT_THROW(read_dataset(v), std::runtime_error);
}
