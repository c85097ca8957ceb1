#include "gic/config.hpp"

#include <cctype>
#include <fstream>

#include "gic/error.hpp"

namespace gic {

using nlohmann::json;

namespace {

[[noreturn]] void arch_error(const std::string& text, std::size_t pos, const std::string& what) {
  throw ConfigError("architecture '" + text + "' at position " + std::to_string(pos) + ": " + what);
}

}  // namespace

std::vector<StageSpec> parse_architecture(const std::string& text) {
  std::vector<StageSpec> out;
  std::size_t pos = 0;
  const std::size_t n = text.size();
  if (n == 0) arch_error(text, 0, "empty architecture");
  while (pos < n) {
    StageSpec s;
    s.position = pos;
    if (text.compare(pos, 2, "FC") == 0) {
      s.kind = StageKind::fc;
      pos += 2;
    } else if (text[pos] == 'C') {
      s.kind = StageKind::conv;
      pos += 1;
    } else if (text[pos] == 'P') {
      s.kind = StageKind::pool;
      pos += 1;
    } else {
      arch_error(text, pos, "expected C, P or FC");
    }
    if (pos < n && text[pos] == '(') {
      const std::size_t close = text.find(')', pos);
      if (close == std::string::npos) arch_error(text, pos, "unterminated '('");
      const std::string arg = text.substr(pos + 1, close - pos - 1);
      try {
        std::size_t used = 0;
        if (s.kind == StageKind::pool) {
          const double r = std::stod(arg, &used);
          if (used != arg.size()) throw std::invalid_argument(arg);
          if (!(r > 0.0 && r <= 1.0)) arch_error(text, pos + 1, "coarsening factor must be in (0, 1]");
          s.ratio = r;
        } else {
          if (arg.empty() || !std::isdigit(static_cast<unsigned char>(arg[0]))) throw std::invalid_argument(arg);
          const unsigned long w = std::stoul(arg, &used);
          if (used != arg.size()) throw std::invalid_argument(arg);
          if (w == 0) arch_error(text, pos + 1, "width must be positive");
          s.width = w;
        }
      } catch (const std::logic_error&) {
        arch_error(text, pos + 1, "bad argument '" + arg + "'");
      }
      pos = close + 1;
    } else if (s.kind != StageKind::pool) {
      arch_error(text, pos, "missing width '(n)'");
    }
    out.push_back(s);
    if (pos < n) {
      if (text[pos] != '-') arch_error(text, pos, "expected '-'");
      ++pos;
      if (pos == n) arch_error(text, pos, "trailing '-'");
    }
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    if (out[i].kind == StageKind::fc) arch_error(text, out[i].position, "FC must be the last stage");
  }
  if (out.back().kind != StageKind::fc) arch_error(text, out.back().position, "architecture must end with FC(n)");
  const StageSpec* last_pool = nullptr;
  for (const auto& s : out) {
    if (s.kind == StageKind::pool) last_pool = &s;
  }
  if (last_pool == nullptr || last_pool->ratio) {
    arch_error(text, out.back().position, "FC needs a preceding bare P to fix its input size");
  }
  return out;
}

std::size_t network_depth(std::span<const StageSpec> stages) { return stages.size() + 1; }

NetworkConfig NetworkConfig::full() {
  NetworkConfig cfg;
  cfg.architecture = kFullArchitecture;
  cfg.num_scales = 7;
  cfg.num_components = 7;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.95;
  cfg.epochs = 300;
  cfg.repeats = 10;
  return cfg;
}

void NetworkConfig::validate() const {
  parse_architecture(architecture);
  if (num_scales < 1 || num_components < 1) throw ConfigError("K and C1 must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (c_final < 1) throw ConfigError("c_final must be >= 1");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (em_restarts < 1 || em_max_iters < 1) throw ConfigError("EM restarts and iterations must be >= 1");
  if (!(em_precision > 0.0)) throw ConfigError("em_precision must be positive");
  if (!use_labels && !use_degree) throw ConfigError("use_labels and use_degree cannot both be false");
}

namespace {

std::string laplacian_name(LaplacianKind k) { return k == LaplacianKind::normalized ? "normalized" : "combinatorial"; }

LaplacianKind parse_laplacian(const std::string& s) {
  if (s == "normalized") return LaplacianKind::normalized;
  if (s == "combinatorial") return LaplacianKind::combinatorial;
  throw ConfigError("unknown laplacian '" + s + "' (expected normalized or combinatorial)");
}

std::string khop_name(KhopPolynomial k) { return k == KhopPolynomial::power ? "power" : "self-loop-power"; }

KhopPolynomial parse_khop(const std::string& s) {
  if (s == "power") return KhopPolynomial::power;
  if (s == "self-loop-power") return KhopPolynomial::self_loop_power;
  throw ConfigError("unknown khop '" + s + "' (expected power or self-loop-power)");
}

}  // namespace

json to_json(const NetworkConfig& c) {
  return json{{"architecture", c.architecture},
              {"K", c.num_scales},
              {"C1", c.num_components},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"folds", c.folds},
              {"repeats", c.repeats},
              {"master_seed", c.master_seed},
              {"c_final", c.c_final},
              {"weight_mode", to_string(c.weight_mode)},
              {"laplacian", laplacian_name(c.laplacian)},
              {"khop", khop_name(c.khop)},
              {"em_restarts", c.em_restarts},
              {"em_max_iters", c.em_max_iters},
              {"em_tol", c.em_tol},
              {"em_precision", c.em_precision},
              {"use_labels", c.use_labels},
              {"use_degree", c.use_degree},
              {"final_fit", c.final_fit}};
}

NetworkConfig config_from_json(const json& j, NetworkConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "architecture") c.architecture = v.get<std::string>();
      else if (key == "K") c.num_scales = v.get<std::size_t>();
      else if (key == "C1") c.num_components = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "folds") c.folds = v.get<std::size_t>();
      else if (key == "repeats") c.repeats = v.get<std::size_t>();
      else if (key == "master_seed" || key == "seed") c.master_seed = v.get<std::uint64_t>();
      else if (key == "c_final") c.c_final = v.get<std::size_t>();
      else if (key == "weight_mode") c.weight_mode = parse_weight_mode(v.get<std::string>());
      else if (key == "laplacian") c.laplacian = parse_laplacian(v.get<std::string>());
      else if (key == "khop") c.khop = parse_khop(v.get<std::string>());
      else if (key == "em_restarts") c.em_restarts = v.get<int>();
      else if (key == "em_max_iters") c.em_max_iters = v.get<int>();
      else if (key == "em_tol") c.em_tol = v.get<double>();
      else if (key == "em_precision") c.em_precision = v.get<double>();
      else if (key == "use_labels") c.use_labels = v.get<bool>();
      else if (key == "use_degree") c.use_degree = v.get<bool>();
      else if (key == "final_fit") c.final_fit = v.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

NetworkConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

NetworkConfig apply_overrides(const NetworkConfig& cfg, std::span<const std::string> overrides) {
  json patch = json::object();
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not key=value");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    patch[key] = parsed.is_discarded() ? json(value) : parsed;
  }
  return config_from_json(patch, cfg);
}

}  // namespace gic
