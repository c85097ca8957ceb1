#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gic/checkpoint.hpp"
#include "gic/error.hpp"
#include "gic/network.hpp"

using namespace gic;

namespace {

Network small_network(std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.architecture = "C(4)-P(0.5)-C(3)-P-FC(5)";
  cfg.num_scales = 2;
  cfg.num_components = 2;
  std::mt19937_64 rng(seed);
  return Network(cfg, 3, 2, rng);
}

std::string serialize(Network& net) {
  std::ostringstream out(std::ios::binary);
  const auto params = net.parameters();
  write_checkpoint(out, params);
  return out.str();
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  Network net = small_network(1);
  const std::string bytes = serialize(net);
  EXPECT_EQ(bytes.substr(0, 4), "GIC1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);
  std::size_t expected = 5;
  for (const auto& p : net.parameters()) expected += 4 + p.name.size() + 4 + 16 + 8 * p.value->size();
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Checkpoint, RoundTripRestoresNetwork) {
  Network a = small_network(1);
  Network b = small_network(2);
  std::istringstream in(serialize(a), std::ios::binary);
  const auto entries = read_checkpoint(in);
  ASSERT_EQ(entries.size(), a.parameters().size());
  const auto pb = b.parameters();
  restore_parameters(pb, entries);
  const auto pa = a.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, entries[i].name);
    EXPECT_EQ(*pa[i].value, *pb[i].value);
  }
  EXPECT_EQ(serialize(a), serialize(b));
}

TEST(Checkpoint, BadMagic) {
  Network net = small_network(1);
  std::string bytes = serialize(net);
  bytes[0] = 'X';
  std::istringstream in(bytes, std::ios::binary);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, BadVersion) {
  Network net = small_network(1);
  std::string bytes = serialize(net);
  bytes[4] = 9;
  std::istringstream in(bytes, std::ios::binary);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, Truncated) {
  Network net = small_network(1);
  const std::string bytes = serialize(net);
  std::istringstream in(bytes.substr(0, bytes.size() - 3), std::ios::binary);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, MissingOrMismatchedParameter) {
  Network net = small_network(1);
  std::istringstream in(serialize(net), std::ios::binary);
  auto entries = read_checkpoint(in);
  const auto params = net.parameters();
  auto dropped = entries;
  dropped.pop_back();
  EXPECT_THROW(restore_parameters(params, dropped), FormatError);
  entries[0].value = ad::Tensor(ad::Shape{7, 7});
  EXPECT_THROW(restore_parameters(params, entries), FormatError);
}

TEST(Checkpoint, MissingFile) { EXPECT_THROW(read_checkpoint(std::filesystem::path("/nonexistent/x.gic")), IoError); }
