#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "robult/config.hpp"

using namespace robult;

TEST(Config, DefaultsMatchReferenceSettings) {
    const RunConfig c = parse_config_string("");
    EXPECT_EQ(c.epochs, 40U);
    EXPECT_EQ(c.learning_rate, 1e-3);
    EXPECT_EQ(c.latent_dim, 60U);
    EXPECT_EQ(c.temperature, 0.1);
    EXPECT_EQ(c.label_ratio, 0.05);
}

TEST(Config, ParsesValuesAndComments) {
    const RunConfig c = parse_config_string(
        "# comment\n\nepochs = 3\nkernel = l2\ngamma = 0.5\ndrop_rec = true\nraw_dims = 14, 15\nbeta = 1,2\n"
        "task = regression\n");
    EXPECT_EQ(c.epochs, 3U);
    EXPECT_EQ(c.kernel, KernelKind::l2);
    EXPECT_EQ(*c.gamma, 0.5);
    EXPECT_TRUE(c.ablation.drop_rec);
    EXPECT_EQ(c.data.raw_dims, (std::vector<std::size_t>{14, 15}));
    EXPECT_EQ(c.data.beta, (std::vector<double>{1, 2}));
    EXPECT_EQ(c.task(), TaskKind::regression);
}

TEST(Config, UnknownKeyNamed) {
    try {
        parse_config_string("epochs = 2\nlearnign_rate = 0.1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("learnign_rate"), std::string::npos);
    }
}

TEST(Config, BadValuesNamed) {
    for (const char* text : {"epochs = -1\n", "epochs = two\n", "learning_rate = 0\n", "kernel = gauss\n",
                             "label_ratio = 1.5\n", "drop_rec = maybe\n", "beta = 1,2\n", "temperature = -0.1\n",
                             "no equals sign\n"}) {
        EXPECT_THROW(parse_config_string(text), ConfigError) << text;
    }
    try {
        parse_config_string("learning_rate = 0\n");
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
}

TEST(Config, EchoRoundTrips) {
    const RunConfig c = parse_config_string("epochs = 7\nseed = 99\ngamma = 0.25\nweight_filter = true\nalpha = 0.3\n");
    const std::string text = config_to_string(c);
    EXPECT_EQ(config_to_string(parse_config_string(text)), text);
    std::istringstream report(config_echo(c) + "epoch,l_sup\n1,0.5\n");
    EXPECT_EQ(config_to_string(config_from_report(report)), text);
}

TEST(Config, EchoListsEveryKeyOnce) {
    const std::string echo = config_echo(RunConfig{});
    for (const auto& [name, field] : detail::config_fields()) {
        const std::string needle = "# " + name + " = ";
        EXPECT_EQ(echo.find(needle), echo.rfind(needle)) << name;
        EXPECT_NE(echo.find(needle), std::string::npos) << name;
    }
}

TEST(Config, SeedEnvironmentOverride) {
    RunConfig c;
    ::setenv("RB_SEED", "77", 1);
    apply_environment(c);
    EXPECT_EQ(c.seed, 77U);
    ::setenv("RB_SEED", "x", 1);
    EXPECT_THROW(apply_environment(c), ConfigError);
    ::unsetenv("RB_SEED");
    c.seed = 5;
    apply_environment(c);
    EXPECT_EQ(c.seed, 5U);
}
