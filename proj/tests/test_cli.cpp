#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "robult/cli.hpp"

using namespace robult;

namespace {

RunConfig small_config() {
    RunConfig c;
    c.epochs = 2;
    c.data.n = 200;
    c.data.raw_dims = {6, 6, 6};
    c.latent_dim = 8;
    c.mi_bins = 8;
    c.probe_epochs = 5;
    return c;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("robult_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string body(const std::string& report) {
    std::istringstream is(report);
    std::string line, out;
    while (std::getline(is, line))
        if (line.rfind("# ", 0) != 0) out += line + "\n";
    return out;
}

std::string line_with_prefix(const std::string& text, const std::string& prefix) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line))
        if (line.rfind(prefix, 0) == 0) return line;
    return {};
}

}  // namespace

TEST(MaskSpec, AllCombinations) {
    const auto masks = parse_mask_spec("all", 3);
    ASSERT_EQ(masks.size(), 7U);
    EXPECT_EQ(masks.front().first, "m1");
    EXPECT_EQ(masks.back().first, "m1+m2+m3");
    EXPECT_EQ(parse_mask_spec("pair:1,3", 3)[0].first, "m1+m3");
    EXPECT_EQ(parse_mask_spec("single:2", 3)[0].second.keep, (std::set<std::size_t>{1}));
    EXPECT_THROW(parse_mask_spec("single:4", 3), ConfigError);
    EXPECT_THROW(parse_mask_spec("pair:1,1", 3), ConfigError);
    EXPECT_THROW(parse_mask_spec("bogus", 3), ConfigError);
}

TEST(Train, WritesBundleWithEchoedConfig) {
    const fs::path dir = temp_dir("bundle");
    const RunConfig cfg = small_config();
    const ReportBundle b = cmd_train(cfg, dir);
    for (const auto& p : {b.config, b.losses, b.metrics, b.diagnostics, b.checkpoint, b.test_data})
        EXPECT_TRUE(fs::exists(p)) << p;
    const std::string echo = config_echo(cfg);
    for (const auto& p : {b.losses, b.metrics, b.diagnostics}) EXPECT_EQ(read_file(p).rfind(echo, 0), 0U) << p;
    EXPECT_EQ(line_with_prefix(body(read_file(b.losses)), "epoch"), "epoch,l_sup,l_rec,l_lb,l_ulb,l_total");
    EXPECT_NE(read_file(b.diagnostics).find("mi_final,m1,mi_z_s,"), std::string::npos);
}

TEST(Train, RerunFromEchoReproducesBody) {
    const fs::path a = temp_dir("echo_a"), b = temp_dir("echo_b");
    const ReportBundle first = cmd_train(small_config(), a);
    std::ifstream report(first.losses);
    const RunConfig replay = config_from_report(report);
    const ReportBundle second = cmd_train(replay, b);
    EXPECT_EQ(body(read_file(first.losses)), body(read_file(second.losses)));
    EXPECT_EQ(read_file(first.metrics), read_file(second.metrics));
}

TEST(Eval, FullMaskMatchesTrainingMetrics) {
    const fs::path dir = temp_dir("eval");
    const ReportBundle b = cmd_train(small_config(), dir);
    const auto rows = cmd_eval(b.checkpoint, b.test_data, "full", dir);
    ASSERT_EQ(rows.size(), 1U);
    const std::string trained = line_with_prefix(body(read_file(b.metrics)), "m1+m2+m3,");
    const std::string evaluated = line_with_prefix(body(read_file(dir / "eval_metrics.csv")), "m1+m2+m3,");
    EXPECT_FALSE(trained.empty());
    EXPECT_EQ(trained, evaluated);
}

TEST(Eval, AllCombinationsGiveSevenFiniteRows) {
    const fs::path dir = temp_dir("eval_all");
    const ReportBundle b = cmd_train(small_config(), dir);
    const auto rows = cmd_eval(b.checkpoint, b.test_data, "all", dir);
    ASSERT_EQ(rows.size(), 7U);
    for (const auto& r : rows) EXPECT_TRUE(r.accuracy && std::isfinite(*r.accuracy)) << r.tag;
    EXPECT_EQ(cmd_eval(b.checkpoint, b.test_data, "random:0.5", dir, 3).size(), 1U);
}

TEST(Eval, VersionMismatchRefused) {
    const fs::path dir = temp_dir("eval_version");
    const ReportBundle b = cmd_train(small_config(), dir);
    std::string bytes = read_file(b.checkpoint);
    bytes[8] = 2;
    {
        std::ofstream os(dir / "v2.ckpt", std::ios::binary);
        os << bytes;
    }
    EXPECT_THROW(cmd_eval(dir / "v2.ckpt", b.test_data, "full", dir), CheckpointVersionError);
}

TEST(Ablate, VariantsSetSwitches) {
    const RunConfig base = small_config();
    EXPECT_TRUE(apply_variant(base, "drop_sup").ablation.drop_sup);
    EXPECT_TRUE(apply_variant(base, "drop_rec").ablation.drop_rec);
    EXPECT_TRUE(apply_variant(base, "drop_lb").ablation.drop_lb);
    EXPECT_TRUE(apply_variant(base, "drop_ulb").ablation.drop_ulb);
    EXPECT_TRUE(apply_variant(base, "uniform_weights").ablation.uniform_weights);
    EXPECT_TRUE(apply_variant(base, "drop_pseudo").ablation.drop_pseudo);
    EXPECT_TRUE(apply_variant(base, "drop_unique").ablation.drop_unique_branches);
    EXPECT_THROW(apply_variant(base, "drop_everything"), ConfigError);
}

TEST(Ablate, EveryVariantRuns) {
    for (const auto& v : ablation_variants()) {
        const fs::path dir = temp_dir("ablate_" + v);
        const ReportBundle b = cmd_ablate(small_config(), v, dir);
        EXPECT_NE(read_file(b.metrics).find("m1+m2+m3,"), std::string::npos) << v;
    }
}

TEST(GenData, WritesReadableDataset) {
    const fs::path dir = temp_dir("gen");
    const fs::path p = cmd_gen_data(small_config(), dir);
    std::ifstream is(p);
    EXPECT_EQ(read_dataset(is).size(), 200U);
}
