#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "gic/config.hpp"
#include "gic/error.hpp"

using namespace gic;

namespace {

std::string config_error(const std::string& arch) {
  try {
    parse_architecture(arch);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Architecture, DeskString) {
  const auto s = parse_architecture(kDeskArchitecture);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0].kind, StageKind::conv);
  EXPECT_EQ(s[0].width, 16u);
  EXPECT_EQ(s[1].kind, StageKind::pool);
  EXPECT_DOUBLE_EQ(*s[1].ratio, 0.25);
  EXPECT_EQ(s[2].width, 32u);
  EXPECT_FALSE(s[3].ratio.has_value());
  EXPECT_EQ(s[4].kind, StageKind::fc);
  EXPECT_EQ(s[4].width, 32u);
  EXPECT_EQ(s[4].position, 22u);
}

TEST(Architecture, FullStringDepth) {
  const auto s = parse_architecture(kFullArchitecture);
  EXPECT_EQ(s.size(), 7u);
  EXPECT_EQ(network_depth(s), 8u);
  EXPECT_EQ(network_depth(parse_architecture(kDeskArchitecture)), 6u);
}

TEST(Architecture, ErrorsCarryPosition) {
  EXPECT_NE(config_error("C(16)-X-FC(2)").find("position 6"), std::string::npos);
  EXPECT_NE(config_error("C(16)-P(1.5)-P-FC(2)").find("position 8"), std::string::npos);
  EXPECT_NE(config_error("C(0)-P-FC(2)").find("position 2"), std::string::npos);
  EXPECT_NE(config_error("C(8)-P-FC(2)-").find("trailing"), std::string::npos);
  EXPECT_NE(config_error("C(8)-P-FC(2").find("position 9"), std::string::npos);
  EXPECT_NE(config_error("C(8)P-FC(2)").find("position 4"), std::string::npos);
  EXPECT_NE(config_error("C-P-FC(2)").find("position 1"), std::string::npos);
  EXPECT_NE(config_error("C(a)-P-FC(2)").find("bad argument"), std::string::npos);
}

TEST(Architecture, StructuralRules) {
  EXPECT_FALSE(config_error("").empty());
  EXPECT_FALSE(config_error("C(8)-P").empty());
  EXPECT_FALSE(config_error("FC(4)-C(8)-P-FC(2)").empty());
  EXPECT_FALSE(config_error("C(8)-P(0.5)-FC(2)").empty());
  EXPECT_FALSE(config_error("C(8)-FC(2)").empty());
  EXPECT_TRUE(config_error("C(8)-P-FC(8)").empty());
  EXPECT_TRUE(config_error("C(8)-P(1)-C(4)-P-FC(2)").empty());
}

TEST(Config, Defaults) {
  const NetworkConfig c;
  EXPECT_EQ(c.architecture, kDeskArchitecture);
  EXPECT_EQ(c.num_scales, 3u);
  EXPECT_EQ(c.num_components, 3u);
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.batch_size, 100u);
  EXPECT_EQ(c.folds, 10u);
  EXPECT_DOUBLE_EQ(c.em_precision, 1.0);
  EXPECT_NO_THROW(c.validate());
  const auto p = NetworkConfig::full();
  EXPECT_EQ(p.architecture, kFullArchitecture);
  EXPECT_EQ(p.num_scales, 7u);
  EXPECT_EQ(p.num_components, 7u);
  EXPECT_EQ(p.epochs, 300u);
  EXPECT_DOUBLE_EQ(p.learning_rate, 0.1);
  EXPECT_DOUBLE_EQ(p.momentum, 0.95);
  EXPECT_NO_THROW(p.validate());
}

TEST(Config, JsonRoundTrip) {
  NetworkConfig c = NetworkConfig::full();
  c.weight_mode = WeightMode::attribute_norm;
  c.laplacian = LaplacianKind::combinatorial;
  c.khop = KhopPolynomial::self_loop_power;
  c.master_seed = 99;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"epoch", 3}}), ConfigError);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"epochs", "many"}}), ConfigError);
}

TEST(Config, ValidationRanges) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"momentum", 1.0}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"K", 0}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"folds", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"architecture", "C(8)"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"weight_mode", "learned"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"use_labels", false}, {"use_degree", false}}), ConfigError);
}

TEST(Config, Overrides) {
  const std::vector<std::string> kv{"epochs=5", "architecture=C(8)-P-FC(8)", "weight_mode=attribute-norm",
                                    "learning_rate=0.5"};
  const auto c = apply_overrides(NetworkConfig{}, kv);
  EXPECT_EQ(c.epochs, 5u);
  EXPECT_EQ(c.architecture, "C(8)-P-FC(8)");
  EXPECT_EQ(c.weight_mode, WeightMode::attribute_norm);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.5);
  EXPECT_EQ(c.num_scales, 3u);
  const std::vector<std::string> bad{"epochs"};
  EXPECT_THROW(apply_overrides(NetworkConfig{}, bad), ConfigError);
}

TEST(Config, LoadFile) {
  const auto path = std::filesystem::temp_directory_path() / ("gic_cfg_" + std::to_string(::getpid()) + ".json");
  std::ofstream(path) << R"({"epochs": 7, "seed": 3})";
  const auto c = load_config(path);
  std::filesystem::remove(path);
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_EQ(c.master_seed, 3u);
  EXPECT_THROW(load_config(path), IoError);
}
