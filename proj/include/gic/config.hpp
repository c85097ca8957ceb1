#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gic/coarsen.hpp"
#include "gic/graph.hpp"

namespace gic {

enum class StageKind { conv, pool, fc };

struct StageSpec {
  StageKind kind = StageKind::conv;
  std::size_t width = 0;               // C(width), FC(width)
  std::optional<double> ratio;         // P(ratio); empty for a bare P
  std::size_t position = 0;            // character offset in the string
};

/// Parses strings like "C(64)-P(0.25)-C(128)-P-FC(256)". Errors carry the
/// character position of the offending token.
std::vector<StageSpec> parse_architecture(const std::string& text);

/// Stage count including the final softmax layer.
std::size_t network_depth(std::span<const StageSpec> stages);

inline constexpr const char* kDeskArchitecture = "C(16)-P(0.25)-C(32)-P-FC(32)";
inline constexpr const char* kFullArchitecture = "C(64)-P(0.25)-C(128)-P(0.25)-C(256)-P-FC(256)";

struct NetworkConfig {
  std::string architecture = kDeskArchitecture;
  std::size_t num_scales = 3;      // K
  std::size_t num_components = 3;  // C1
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
  std::size_t folds = 10;
  std::size_t repeats = 1;
  std::uint64_t master_seed = 0;
  std::size_t c_final = 1;
  WeightMode weight_mode = WeightMode::uniform;
  LaplacianKind laplacian = LaplacianKind::normalized;
  KhopPolynomial khop = KhopPolynomial::power;
  int em_restarts = 3;
  int em_max_iters = 10;
  double em_tol = 1e-6;
  /// Component precision beta of the vertex clustering EM.
  double em_precision = 1.0;
  bool use_labels = true;
  bool use_degree = true;
  /// Train one more model on the whole dataset after cross-validation.
  bool final_fit = true;

  /// Full-size settings: C(64)-P(0.25)-C(128)-P(0.25)-C(256)-P-FC(256),
  /// lr 0.1, momentum 0.95,
  /// K = C1 = 7, 300 epochs.
  static NetworkConfig full();

  /// Throws ConfigError when a field is out of range or the architecture does
  /// not parse.
  void validate() const;
};

nlohmann::json to_json(const NetworkConfig& cfg);
/// Unknown keys are rejected; missing keys keep their defaults.
NetworkConfig config_from_json(const nlohmann::json& j, NetworkConfig base = {});
NetworkConfig load_config(const std::filesystem::path& path);
/// Applies "key=value" overrides; values parse as JSON when possible and as
/// plain strings otherwise.
NetworkConfig apply_overrides(const NetworkConfig& cfg, std::span<const std::string> overrides);

}  // namespace gic
