#include "gic/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "gic/error.hpp"

namespace gic {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::size_t argmax(const ad::Tensor& z) {
  return static_cast<std::size_t>(std::max_element(z.data().begin(), z.data().end()) - z.data().begin());
}

}  // namespace

OptimizerState::OptimizerState(std::span<const NamedParameter> params, double lr, double mom)
    : learning_rate(lr), momentum(mom) {
  velocity.reserve(params.size());
  for (const auto& p : params) velocity.emplace_back(p.value->shape());
}

void sgd_step(std::span<const NamedParameter> params, std::span<const ad::Tensor> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("optimizer received " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& p = *params[i].value;
    ad::Tensor& v = state.velocity[i];
    if (grads[i].shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("gradient shape mismatch for '" + params[i].name + "'");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] - state.learning_rate * grads[i][k];
      p[k] += v[k];
    }
  }
}

LossAndGrad loss_and_gradients(Network& net, const PreparedGraph& g, const PoolTrace* frozen) {
  ad::Tape tape;
  ParamBinder bind(tape);
  const ForwardResult fwd = net.forward(g, bind, frozen);
  const ad::Var loss = ad::softmax_cross_entropy(fwd.logits, g.label);
  tape.backward(loss);
  LossAndGrad out;
  out.loss = loss.value().item();
  out.prediction = argmax(fwd.logits.value());
  for (const auto& p : net.parameters()) out.grads.push_back(bind.grad(*p.value));
  return out;
}

EpochStats train_epoch(Network& net, std::span<const PreparedGraph* const> graphs, OptimizerState& opt,
                       std::mt19937_64& rng, std::size_t batch_size) {
  if (graphs.empty()) throw ConfigError("training set is empty");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const auto params = net.parameters();
  EpochStats stats;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<ad::Tensor> sum;
    for (std::size_t b = start; b < end; ++b) {
      const PreparedGraph& g = *graphs[order[b]];
      LossAndGrad lg = loss_and_gradients(net, g, nullptr);
      stats.loss += lg.loss;
      if (lg.prediction == g.label) ++correct;
      if (sum.empty()) {
        sum = std::move(lg.grads);
      } else {
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i].map() += lg.grads[i].map();
      }
    }
    const double inv = 1.0 / static_cast<double>(end - start);
    for (auto& t : sum) t.map() *= inv;
    sgd_step(params, sum, opt);
    ++stats.steps;
  }
  stats.loss /= static_cast<double>(graphs.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(graphs.size());
  return stats;
}

Evaluation evaluate(const Network& net, std::span<const PreparedGraph* const> graphs) {
  Evaluation ev;
  if (graphs.empty()) return ev;
  std::size_t correct = 0;
  for (const PreparedGraph* g : graphs) {
    const ad::Tensor z = net.logits(*g);
    const double mx = *std::max_element(z.data().begin(), z.data().end());
    double acc = 0.0;
    for (double v : z.data()) acc += std::exp(v - mx);
    ev.loss += mx + std::log(acc) - z[g->label];
    if (argmax(z) == g->label) ++correct;
  }
  ev.loss /= static_cast<double>(graphs.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(graphs.size());
  return ev;
}

std::vector<std::size_t> stratified_folds(std::span<const std::size_t> labels, std::size_t folds, std::uint64_t seed) {
  if (folds == 0) throw ConfigError("folds must be >= 1");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold_of(labels.size(), 0);
  std::size_t counter = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) fold_of[i] = counter++ % folds;
  }
  return fold_of;
}

nlohmann::json to_json(const MetricRecord& r) {
  return nlohmann::json{{"phase", r.phase}, {"epoch", r.epoch},       {"fold", r.fold},      {"repeat", r.repeat},
                        {"loss", r.loss},   {"accuracy", r.accuracy}, {"seconds", r.seconds}};
}

std::vector<double> FoldReport::accuracies() const {
  std::vector<double> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.accuracy);
  return out;
}

nlohmann::json to_json(const FoldReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& f : r.runs) {
    runs.push_back({{"repeat", f.repeat}, {"fold", f.fold}, {"seed", f.seed}, {"accuracy", f.accuracy},
                    {"test_loss", f.test_loss}});
  }
  return nlohmann::json{{"mean", r.mean},   {"std", r.stddev},     {"seed", r.seed},
                        {"epochs", r.epochs}, {"runs", std::move(runs)}, {"warnings", r.warnings}};
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("GIC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Network fit(std::span<const PreparedGraph* const> train, std::size_t feature_dim, std::size_t num_classes,
            const NetworkConfig& cfg, std::uint64_t seed, const MetricSink& sink, std::size_t fold,
            std::size_t repeat, const char* phase) {
  const auto start = Clock::now();
  std::mt19937_64 init_rng(mix_seed(seed, 1));
  std::mt19937_64 shuffle_rng(mix_seed(seed, 2));
  Network net(cfg, feature_dim, num_classes, init_rng);
  OptimizerState opt(net.parameters(), cfg.learning_rate, cfg.momentum);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const EpochStats s = train_epoch(net, train, opt, shuffle_rng, cfg.batch_size);
    if (!std::isfinite(s.loss)) throw DomainError("training loss became non-finite at epoch " + std::to_string(e + 1));
    if (sink) sink(MetricRecord{phase, e + 1, fold, repeat, s.loss, s.accuracy, elapsed(start)});
  }
  return net;
}

FoldReport cross_validate(std::span<const PreparedGraph> graphs, std::size_t feature_dim, std::size_t num_classes,
                          const NetworkConfig& cfg, const MetricSink& sink) {
  cfg.validate();
  if (graphs.size() < cfg.folds) {
    throw ConfigError("need at least " + std::to_string(cfg.folds) + " graphs for " + std::to_string(cfg.folds) +
                      "-fold cross-validation, got " + std::to_string(graphs.size()));
  }
  const auto start = Clock::now();
  std::vector<std::size_t> labels;
  labels.reserve(graphs.size());
  for (const auto& g : graphs) labels.push_back(g.label);

  FoldReport report;
  report.seed = cfg.master_seed;
  report.epochs = cfg.epochs;

  struct Job {
    std::size_t repeat;
    std::size_t fold;
    std::vector<const PreparedGraph*> train;
    std::vector<const PreparedGraph*> test;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto fold_of = stratified_folds(labels, cfg.folds, mix_seed(cfg.master_seed, 0xF01D0000ULL + r));
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      Job job{r, f, {}, {}};
      std::vector<bool> seen(num_classes, false);
      for (std::size_t i = 0; i < graphs.size(); ++i) {
        if (fold_of[i] == f) {
          job.test.push_back(&graphs[i]);
        } else {
          job.train.push_back(&graphs[i]);
          if (graphs[i].label < num_classes) seen[graphs[i].label] = true;
        }
      }
      for (std::size_t c = 0; c < num_classes; ++c) {
        if (!seen[c]) {
          report.warnings.push_back("repeat " + std::to_string(r) + " fold " + std::to_string(f) +
                                    ": class " + std::to_string(c) + " absent from training split");
        }
      }
      jobs.push_back(std::move(job));
    }
  }

  report.runs.resize(jobs.size());
  std::vector<std::vector<MetricRecord>> metrics(jobs.size());
  std::vector<bool> done(jobs.size(), false);
  std::vector<std::exception_ptr> errors(jobs.size());
  std::size_t next_job = 0;
  std::size_t next_emit = 0;
  std::mutex mu;

  auto worker = [&]() {
    while (true) {
      std::size_t j = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next_job >= jobs.size()) return;
        j = next_job++;
      }
      const Job& job = jobs[j];
      FoldRun run;
      run.repeat = job.repeat;
      run.fold = job.fold;
      run.seed = mix_seed(mix_seed(cfg.master_seed, job.repeat), job.fold);
      std::vector<MetricRecord> local;
      const auto run_start = Clock::now();
      try {
        const Network net = fit(job.train, feature_dim, num_classes, cfg, run.seed,
                                [&local](const MetricRecord& m) { local.push_back(m); }, job.fold, job.repeat);
        const Evaluation ev = evaluate(net, job.test);
        run.accuracy = ev.accuracy;
        run.test_loss = ev.loss;
        run.seconds = elapsed(run_start);
        local.push_back(MetricRecord{"test", cfg.epochs, job.fold, job.repeat, ev.loss, ev.accuracy, run.seconds});
      } catch (...) {
        errors[j] = std::current_exception();
      }
      std::lock_guard<std::mutex> lock(mu);
      report.runs[j] = run;
      metrics[j] = std::move(local);
      done[j] = true;
      while (next_emit < jobs.size() && done[next_emit]) {
        if (sink) {
          for (const auto& m : metrics[next_emit]) sink(m);
        }
        metrics[next_emit].clear();
        ++next_emit;
      }
    }
  };

  const std::size_t threads = std::min(worker_threads(), jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto acc = report.accuracies();
  const double n = static_cast<double>(acc.size());
  report.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  double var = 0.0;
  for (double a : acc) var += (a - report.mean) * (a - report.mean);
  report.stddev = std::sqrt(var / n);
  report.seconds = elapsed(start);
  return report;
}

}  // namespace gic
