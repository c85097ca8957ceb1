#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gic/checkpoint.hpp"
#include "gic/coarsen.hpp"
#include "gic/config.hpp"
#include "gic/cutcheck.hpp"
#include "gic/dataset.hpp"
#include "gic/error.hpp"
#include "gic/network.hpp"
#include "gic/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommandConfig {
  std::string dataset;
  std::string name;
  std::string config_path;
  std::string output;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool full = false;
};

gic::NetworkConfig resolve_config(const CommandConfig& c, const fs::path& fallback = {}) {
  gic::NetworkConfig cfg = c.full ? gic::NetworkConfig::full() : gic::NetworkConfig{};
  const fs::path file = !c.config_path.empty() ? fs::path(c.config_path) : fallback;
  if (!c.config_path.empty() || (!file.empty() && fs::exists(file))) {
    std::ifstream in(file);
    if (!in) throw gic::IoError("cannot open config file: " + file.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw gic::ConfigError("config file " + file.string() + " is not valid JSON");
    cfg = gic::config_from_json(j, cfg);
  }
  cfg = gic::apply_overrides(cfg, c.overrides);
  if (c.seed) cfg.master_seed = *c.seed;
  cfg.validate();
  return cfg;
}

gic::GraphCollection load_dataset(const CommandConfig& c, const gic::NetworkConfig& cfg) {
  if (c.dataset.empty()) throw gic::ConfigError("--dataset is required");
  const fs::path path(c.dataset);
  if (!fs::exists(path)) throw gic::IoError("dataset path does not exist: " + path.string());
  if (fs::is_regular_file(path)) return gic::read_graph_jsonl(path);
  if (c.name.empty()) throw gic::ConfigError("--name is required for a TU dataset directory");
  fs::path dir = path;
  if (!fs::exists(dir / (c.name + "_A.txt")) && fs::is_directory(dir / c.name)) dir /= c.name;
  gic::GraphCollection coll = gic::load_tu_dataset(dir, c.name);
  gic::build_features(coll, gic::FeatureOptions{cfg.use_labels, cfg.use_degree});
  return coll;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gic::IoError("cannot write " + path.string());
  return out;
}

std::vector<gic::PreparedGraph> prepare(const gic::GraphCollection& coll, const gic::NetworkConfig& cfg) {
  return gic::prepare_graphs(coll.graphs, cfg.num_scales, cfg.khop);
}

gic::Network load_network(const CommandConfig& c, const gic::NetworkConfig& cfg, const gic::GraphCollection& coll) {
  if (c.checkpoint.empty()) throw gic::ConfigError("--checkpoint is required");
  const auto entries = gic::read_checkpoint(fs::path(c.checkpoint));
  std::mt19937_64 rng(0);
  gic::Network net(cfg, coll.feature_dim, static_cast<std::size_t>(coll.num_classes), rng);
  gic::restore_parameters(net.parameters(), entries);
  return net;
}

fs::path checkpoint_config(const CommandConfig& c) {
  return c.checkpoint.empty() ? fs::path() : fs::path(c.checkpoint).parent_path() / "config.json";
}

int cmd_train(const CommandConfig& c) {
  const gic::NetworkConfig cfg = resolve_config(c);
  const gic::GraphCollection coll = load_dataset(c, cfg);
  const auto graphs = prepare(coll, cfg);
  const fs::path out_dir = c.output.empty() ? fs::path("gic-run") : fs::path(c.output);
  fs::create_directories(out_dir);
  open_output(out_dir / "config.json") << gic::to_json(cfg).dump(2) << "\n";

  std::ofstream metrics = open_output(out_dir / "metrics.jsonl");
  const gic::MetricSink sink = [&metrics](const gic::MetricRecord& r) {
    metrics << gic::to_json(r).dump() << "\n";
    metrics.flush();
  };
  const auto classes = static_cast<std::size_t>(coll.num_classes);
  const gic::FoldReport report = gic::cross_validate(graphs, coll.feature_dim, classes, cfg, sink);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  open_output(out_dir / "report.json") << gic::to_json(report).dump(2) << "\n";

  if (cfg.final_fit) {
    std::vector<const gic::PreparedGraph*> all;
    for (const auto& g : graphs) all.push_back(&g);
    gic::Network net = gic::fit(all, coll.feature_dim, classes, cfg, gic::mix_seed(cfg.master_seed, 0xF1A1ULL), sink,
                                0, 0, "final");
    gic::write_checkpoint(out_dir / "model.gic", net.parameters());
  }
  std::cout << json{{"mean", report.mean},
                    {"std", report.stddev},
                    {"runs", report.runs.size()},
                    {"epochs", cfg.epochs},
                    {"seconds", report.seconds},
                    {"output", out_dir.string()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const CommandConfig& c) {
  const gic::NetworkConfig cfg = resolve_config(c, checkpoint_config(c));
  const gic::GraphCollection coll = load_dataset(c, cfg);
  const gic::Network net = load_network(c, cfg, coll);
  const auto graphs = prepare(coll, cfg);
  std::vector<const gic::PreparedGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  const gic::Evaluation ev = gic::evaluate(net, ptrs);
  const std::string line = json{{"graphs", graphs.size()}, {"accuracy", ev.accuracy}, {"loss", ev.loss}}.dump();
  if (!c.output.empty()) open_output(c.output) << line << "\n";
  std::cout << line << "\n";
  return 0;
}

int cmd_encode(const CommandConfig& c) {
  const gic::NetworkConfig cfg = resolve_config(c, checkpoint_config(c));
  const gic::GraphCollection coll = load_dataset(c, cfg);
  const gic::Network net = load_network(c, cfg, coll);
  const auto graphs = prepare(coll, cfg);
  std::ofstream file;
  if (!c.output.empty()) file = open_output(c.output);
  std::ostream& out = c.output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const gic::ad::Tensor e = net.embedding(graphs[i]);
    out << json{{"graph", i}, {"label", graphs[i].label}, {"embedding", e.storage()}}.dump() << "\n";
  }
  return 0;
}

int cmd_coarsen(const CommandConfig& c, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw gic::ConfigError("--ratio must be in (0, 1]");
  const gic::NetworkConfig cfg = resolve_config(c);
  const gic::GraphCollection coll = load_dataset(c, cfg);
  std::vector<gic::AttributeGraph> out;
  out.reserve(coll.graphs.size());
  for (const auto& g : coll.graphs) {
    const std::size_t m = g.num_vertices();
    const auto clusters = static_cast<std::size_t>(
        std::clamp(std::ceil(ratio * static_cast<double>(m) - 1e-9), 1.0, static_cast<double>(std::max<std::size_t>(m, 1))));
    gic::EmOptions opt;
    opt.num_clusters = clusters;
    opt.max_iters = cfg.em_max_iters;
    opt.tol = cfg.em_tol;
    opt.restarts = cfg.em_restarts;
    opt.precision = cfg.em_precision;
    opt.seed = gic::mix_seed(cfg.master_seed, 0x100);
    const gic::CoarsenState state =
        gic::pool_assignments(g.adjacency(), g.attributes(), opt, cfg.laplacian, cfg.weight_mode);
    out.push_back(gic::coarsen(g, state).with_label(g.graph_label()));
  }
  if (c.output.empty()) {
    gic::write_graph_jsonl(std::cout, out);
  } else {
    std::ofstream file = open_output(c.output);
    gic::write_graph_jsonl(file, out);
  }
  return 0;
}

int cmd_cut_check(const CommandConfig& c, gic::CutCheckOptions opt, const std::string& input) {
  if (c.seed) opt.seed = *c.seed;
  gic::CutCheckSummary s;
  if (!input.empty()) {
    s = gic::run_cut_check(gic::read_graph_jsonl(input).graphs, opt);
  } else {
    s = gic::run_cut_check(opt);
  }
  std::ofstream file;
  if (!c.output.empty()) file = open_output(c.output);
  std::ostream& rows = c.output.empty() ? std::cout : file;
  for (const auto& r : s.rows) {
    if (r.skipped) {
      std::cerr << "notice: graph " << r.graph << " has " << r.m << " vertices; skipped (bound "
                << gic::kMaxBruteForceVertices << ")\n";
    }
    rows << gic::to_json(r).dump() << "\n";
  }
  std::cout << json{{"summary", true},
                    {"evaluated", s.evaluated},
                    {"within", s.within},
                    {"tolerance", opt.tolerance},
                    {"fraction", s.fraction},
                    {"fraction_uniform", s.fraction_uniform},
                    {"fraction_random", s.fraction_random}}
                   .dump()
            << "\n";
  return 0;
}

void add_common(CLI::App* sub, CommandConfig& c, bool dataset = true) {
  if (dataset) {
    sub->add_option("--dataset", c.dataset, "TU dataset directory or canonical .jsonl file");
    sub->add_option("--name", c.name, "TU dataset name, e.g. MUTAG");
  }
  sub->add_option("--config", c.config_path, "JSON config file");
  sub->add_option("--output,-o", c.output, "Output path");
  sub->add_option("--seed", c.seed, "Master seed");
  sub->add_option("--set", c.overrides, "key=value config override")->take_all();
  sub->add_flag("--full", c.full, "Start from the full-size configuration");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph inception convolution: training, evaluation and coarsening tools", "gic"};
  app.require_subcommand(1);
  CommandConfig c;

  CLI::App* train = app.add_subcommand("train", "Cross-validate on a dataset and write a report and checkpoint");
  add_common(train, c);
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(eval, c);
  eval->add_option("--checkpoint", c.checkpoint, "Checkpoint file")->required();
  CLI::App* encode = app.add_subcommand("encode", "Write graph-level feature vectors as JSON lines");
  add_common(encode, c);
  encode->add_option("--checkpoint", c.checkpoint, "Checkpoint file")->required();
  double ratio = 0.25;
  CLI::App* coarsen = app.add_subcommand("coarsen", "Coarsen each graph once and write canonical JSON lines");
  add_common(coarsen, c);
  coarsen->add_option("--ratio", ratio, "Coarsening factor in (0, 1]");
  gic::CutCheckOptions cut;
  std::string cut_input;
  CLI::App* cutcheck = app.add_subcommand("cut-check", "Compare EM clustering with the exact minimum weighted cut");
  add_common(cutcheck, c, false);
  cutcheck->add_option("--input", cut_input, "Canonical .jsonl graphs instead of generated ones");
  cutcheck->add_option("--count", cut.count, "Number of generated graphs");
  cutcheck->add_option("--min-vertices", cut.min_vertices, "Smallest generated graph");
  cutcheck->add_option("--max-vertices", cut.max_vertices, "Largest generated graph");
  cutcheck->add_option("--clusters", cut.clusters, "Number of parts C2");
  cutcheck->add_option("--restarts", cut.restarts, "EM restarts");
  cutcheck->add_option("--iters", cut.max_iters, "EM iterations per restart");
  cutcheck->add_option("--precision", cut.precision, "EM component precision");
  cutcheck->add_option("--tolerance", cut.tolerance, "Relative tolerance for the summary fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(c);
    if (eval->parsed()) return cmd_eval(c);
    if (encode->parsed()) return cmd_encode(c);
    if (coarsen->parsed()) return cmd_coarsen(c, ratio);
    if (cutcheck->parsed()) return cmd_cut_check(c, cut, cut_input);
  } catch (const gic::IoError& e) {
    std::cerr << "gic: " << e.what() << "\n";
    return 2;
  } catch (const gic::FormatError& e) {
    std::cerr << "gic: " << e.what() << "\n";
    return 2;
  } catch (const gic::ConfigError& e) {
    std::cerr << "gic: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gic: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
