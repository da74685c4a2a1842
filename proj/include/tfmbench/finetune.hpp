#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tfmbench/classifier.hpp"
#include "tfmbench/common.hpp"
#include "tfmbench/mock_tfm.hpp"

namespace tfmbench {

// ---------------------------------------------------------------------------
// Loss

/// Mean binary cross-entropy over positive-class logits with temperature
/// scaling: -mean[y log s(z/tau) + (1-y) log(1 - s(z/tau))]. At tau = 1
/// this is plain BCE.
inline double temperature_bce_loss(const Eigen::VectorXd& positive_logits,
                                   const std::vector<int>& labels,
                                   double tau) {
  require(tau > 0, "temperature_bce_loss: tau must be > 0, got ", tau);
  require(static_cast<std::size_t>(positive_logits.size()) == labels.size(),
          "temperature_bce_loss: logits length ", positive_logits.size(),
          " != labels ", labels.size());
  require(!labels.empty(), "temperature_bce_loss: empty input");

  // softplus(x) = log(1+e^x) without overflow or cancellation on either tail
  auto softplus = [](double x) {
    return x >= 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  };
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double z = positive_logits(static_cast<Eigen::Index>(i)) / tau;
    // -log s(z) = softplus(-z); -log(1-s(z)) = softplus(z)
    total += labels[i] == 1 ? softplus(-z) : softplus(z);
  }
  return total / static_cast<double>(labels.size());
}

/// Analytic dLoss/dlogit for the mean-reduced loss above:
/// (s(z/tau) - y) / (tau * N).
inline Eigen::VectorXd temperature_bce_grad(
    const Eigen::VectorXd& positive_logits, const std::vector<int>& labels,
    double tau) {
  require(tau > 0, "temperature_bce_grad: tau must be > 0, got ", tau);
  require(static_cast<std::size_t>(positive_logits.size()) == labels.size(),
          "temperature_bce_grad: length mismatch");
  const double n = static_cast<double>(labels.size());
  Eigen::VectorXd grad(positive_logits.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-positive_logits(i) / tau));
    grad(i) = (s - labels[static_cast<std::size_t>(i)]) / (tau * n);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Configuration

struct FinetuneConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  double temperature = 1.0;
  std::set<std::string> frozen;
  int max_steps = 200;
  double warmup_fraction = 0.1;
  int min_patience = 16;
  double patience_scale = 0.3;  // rho in the adaptive patience rule
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  double div_factor = 25.0;   // warm-up starts at peak / div_factor
  double weight_decay = 0.01;
  std::string optimizer = "adamw_onecycle";  // adamw | adamw_onecycle |
                                             // schedulefree_adamw

  void validate() const {
    require(learning_rate > 0, "finetune: learning_rate must be > 0");
    require(batch_size >= 1, "finetune: batch_size must be >= 1");
    require(temperature > 0, "finetune: temperature must be > 0, got ",
            temperature);
    require(max_steps >= 2, "finetune: max_steps must be >= 2");
    require(warmup_fraction > 0 && warmup_fraction < 1,
            "finetune: warmup_fraction must be in (0,1)");
    require(validation_fraction > 0 && validation_fraction < 0.5,
            "finetune: validation_fraction must be in (0,0.5)");
    require(min_patience >= 1, "finetune: min_patience must be >= 1");
    require(patience_scale >= 0, "finetune: patience_scale must be >= 0");
    require(div_factor > 1, "finetune: div_factor must be > 1");
    require(optimizer == "adamw" || optimizer == "adamw_onecycle" ||
                optimizer == "schedulefree_adamw",
            "finetune: unknown optimizer '", optimizer, "'");
  }

  static FinetuneConfig from_json(const nlohmann::json& j) {
    FinetuneConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("frozen"))
      for (const auto& g : j["frozen"]) c.frozen.insert(g.get<std::string>());
    c.max_steps = j.value("max_steps", c.max_steps);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.min_patience = j.value("min_patience", c.min_patience);
    c.patience_scale = j.value("patience_scale", c.patience_scale);
    c.validation_fraction =
        j.value("validation_fraction", c.validation_fraction);
    c.seed = j.value("seed", c.seed);
    c.div_factor = j.value("div_factor", c.div_factor);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.optimizer = j.value("optimizer", c.optimizer);
    return c;
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"temperature", temperature},
            {"frozen", std::vector<std::string>(frozen.begin(), frozen.end())},
            {"max_steps", max_steps},
            {"warmup_fraction", warmup_fraction},
            {"min_patience", min_patience},
            {"patience_scale", patience_scale},
            {"validation_fraction", validation_fraction},
            {"seed", seed},
            {"div_factor", div_factor},
            {"weight_decay", weight_decay},
            {"optimizer", optimizer}};
  }
};

// ---------------------------------------------------------------------------
// Parameter groups and freezing

struct ParameterGroupMap {
  std::vector<std::string> names;  // ordered
  std::map<std::string, std::size_t> counts;
  std::set<std::string> frozen;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [_, c] : counts) t += c;
    return t;
  }
  std::size_t trainable() const {
    std::size_t t = 0;
    for (const auto& n : names)
      if (!frozen.count(n)) t += counts.at(n);
    return t;
  }
};

inline ParameterGroupMap parameter_group_map(const TrainableTfm& model) {
  ParameterGroupMap map;
  map.names = model.group_names();
  for (const auto& n : map.names) map.counts[n] = model.group_size(n);
  return map;
}

/// Marks groups as frozen. Unknown names are rejected up front.
inline ParameterGroupMap freeze(ParameterGroupMap map,
                                const std::set<std::string>& names) {
  for (const auto& n : names)
    require(map.counts.count(n), "freeze: unknown parameter group '", n,
            "' (model has: x_encoder, y_encoder, transformer_blocks, decoder)");
  map.frozen.insert(names.begin(), names.end());
  return map;
}

// ---------------------------------------------------------------------------
// One-cycle schedule

/// Linear warm-up from peak/div_factor to the peak, then cosine annealing
/// down to peak*final_factor. Monotone up, then monotone down.
class OneCycleSchedule {
 public:
  OneCycleSchedule(double peak, int max_steps, double warmup_fraction,
                   double div_factor, double final_factor = 1e-4)
      : peak_(peak),
        max_steps_(max_steps),
        div_factor_(div_factor),
        floor_(peak * final_factor) {
    require(max_steps >= 2, "one_cycle: max_steps must be >= 2");
    warm_end_ = static_cast<int>(
        std::llround(warmup_fraction * static_cast<double>(max_steps - 1)));
    warm_end_ = std::clamp(warm_end_, 1, std::max(1, max_steps - 2));
  }

  double rate(int step) const {
    require(step >= 0 && step < max_steps_, "one_cycle: step ", step,
            " outside [0,", max_steps_, ")");
    double start = peak_ / div_factor_;
    if (step <= warm_end_)
      return start + (peak_ - start) * static_cast<double>(step) /
                         static_cast<double>(warm_end_);
    double progress = static_cast<double>(step - warm_end_) /
                      static_cast<double>(max_steps_ - 1 - warm_end_);
    return floor_ + (peak_ - floor_) * 0.5 * (1.0 + std::cos(M_PI * progress));
  }

  int warm_end() const { return warm_end_; }

 private:
  double peak_;
  int max_steps_;
  int warm_end_;
  double div_factor_;
  double floor_;
};

// ---------------------------------------------------------------------------
// Adaptive early stopping

struct HistoryPoint {
  int step = 0;
  double validation_accuracy = 0;
};

enum class StopDecision { kContinue, kStop };

/// Patience grows with training progress: stop once steps-since-best reaches
/// max(min_patience, ceil(rho * step_of_best)). Ties on accuracy keep the
/// earliest best, matching best-checkpoint selection.
inline StopDecision adaptive_early_stop(const std::vector<HistoryPoint>& history,
                                        const FinetuneConfig& config) {
  if (history.empty()) return StopDecision::kContinue;
  int best_step = history.front().step;
  double best_acc = history.front().validation_accuracy;
  for (const auto& h : history)
    if (h.validation_accuracy > best_acc) {
      best_acc = h.validation_accuracy;
      best_step = h.step;
    }
  int last_step = history.back().step;
  int patience = std::max(
      config.min_patience,
      static_cast<int>(std::ceil(config.patience_scale *
                                 static_cast<double>(best_step))));
  return (last_step - best_step) >= patience ? StopDecision::kStop
                                             : StopDecision::kContinue;
}

// ---------------------------------------------------------------------------
// Optimizers (per-group flat vectors; frozen groups are never touched)

namespace detail {

struct AdamWState {
  Eigen::VectorXd m, v;
  int t = 0;
};

inline void adamw_update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad,
                         AdamWState& state, double lr, double weight_decay,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8) {
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.t = 0;
  }
  ++state.t;
  state.m = beta1 * state.m + (1 - beta1) * grad;
  state.v = beta2 * state.v.array().matrix() +
            (1 - beta2) * grad.array().square().matrix();
  double bc1 = 1 - std::pow(beta1, state.t);
  double bc2 = 1 - std::pow(beta2, state.t);
  Eigen::ArrayXd m_hat = state.m.array() / bc1;
  Eigen::ArrayXd v_hat = state.v.array() / bc2;
  theta.array() -= lr * (m_hat / (v_hat.sqrt() + eps) +
                         weight_decay * theta.array());
}

/// Schedule-free AdamW: gradients taken at the interpolation point y,
/// evaluation at the running average x; no learning-rate schedule.
struct ScheduleFreeState {
  Eigen::VectorXd z, x, v;
  int t = 0;

  void init(const Eigen::VectorXd& theta) {
    z = theta;
    x = theta;
    v = Eigen::VectorXd::Zero(theta.size());
    t = 0;
  }

  Eigen::VectorXd eval_point(double beta1 = 0.9) const {
    return (1 - beta1) * z + beta1 * x;
  }

  void update(const Eigen::VectorXd& grad_at_y, double lr,
              double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8) {
    ++t;
    Eigen::VectorXd y = eval_point(beta1);
    v = beta2 * v.array().matrix() +
        (1 - beta2) * grad_at_y.array().square().matrix();
    double bc2 = 1 - std::pow(beta2, t);
    Eigen::ArrayXd v_hat = v.array() / bc2;
    z.array() -= lr * (grad_at_y.array() / (v_hat.sqrt() + eps) +
                       weight_decay * y.array());
    double c = 1.0 / static_cast<double>(t);
    x = (1 - c) * x + c * z;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  int step = -1;
  double validation_accuracy = -1;
  std::map<std::string, Eigen::VectorXd> params;
};

/// Atomic on-disk snapshot: raw little-endian doubles per group plus a JSON
/// metadata record, written to temp names and renamed into place.
inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& dir,
                            const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  std::filesystem::path bin = dir / "checkpoint.bin";
  std::filesystem::path bin_tmp = dir / "checkpoint.bin.tmp";
  {
    std::ofstream out(bin_tmp, std::ios::binary);
    require(out.good(), bin_tmp.string(), ": cannot open for writing");
    for (const auto& [name, values] : ckpt.params) {
      std::uint64_t name_len = name.size();
      std::uint64_t count = static_cast<std::uint64_t>(values.size());
      out.write(reinterpret_cast<const char*>(&name_len), sizeof name_len);
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      out.write(reinterpret_cast<const char*>(&count), sizeof count);
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(sizeof(double) * values.size()));
    }
    require(out.good(), bin_tmp.string(), ": write failed");
  }
  std::filesystem::rename(bin_tmp, bin);

  nlohmann::json meta = metadata;
  meta["step"] = ckpt.step;
  meta["validation_accuracy"] = ckpt.validation_accuracy;
  std::filesystem::path meta_path = dir / "checkpoint.meta.json";
  std::filesystem::path meta_tmp = dir / "checkpoint.meta.json.tmp";
  {
    std::ofstream out(meta_tmp);
    require(out.good(), meta_tmp.string(), ": cannot open for writing");
    out << meta.dump(2) << "\n";
  }
  std::filesystem::rename(meta_tmp, meta_path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ckpt;
  std::filesystem::path bin = dir / "checkpoint.bin";
  std::ifstream in(bin, std::ios::binary);
  require(in.good(), bin.string(), ": cannot open");
  while (true) {
    std::uint64_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (!in) break;
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    Eigen::VectorXd values(static_cast<Eigen::Index>(count));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * count));
    require(static_cast<bool>(in), bin.string(), ": truncated group '", name, "'");
    ckpt.params[name] = std::move(values);
  }
  std::ifstream meta_in(dir / "checkpoint.meta.json");
  if (meta_in.good()) {
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    ckpt.step = meta.value("step", -1);
    ckpt.validation_accuracy = meta.value("validation_accuracy", -1.0);
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// The fine-tuning loop

struct FinetuneResult {
  Checkpoint best;
  std::vector<HistoryPoint> history;
  int steps_run = 0;
  double mean_step_seconds = 0;
  double final_loss = 0;
};

namespace detail {

struct StratifiedHoldout {
  std::vector<std::size_t> train_pool, validation;
};

inline StratifiedHoldout stratified_holdout(const std::vector<int>& labels,
                                            double fraction,
                                            std::uint64_t seed) {
  StratifiedHoldout split;
  Rng rng = make_rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    require(members.size() >= 2, "finetune: class ", cls,
            " has fewer than 2 samples, cannot hold out validation data");
    auto n_val = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(members.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    std::shuffle(members.begin(), members.end(), rng);
    split.validation.insert(split.validation.end(), members.begin(),
                            members.begin() + static_cast<long>(n_val));
    split.train_pool.insert(split.train_pool.end(),
                            members.begin() + static_cast<long>(n_val),
                            members.end());
  }
  std::sort(split.train_pool.begin(), split.train_pool.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

}  // namespace detail

/// Runs the full procedure: stratified validation holdout, per-step
/// query-batch/context split, temperature-scaled BCE with the configured
/// optimizer and schedule, adaptive early stopping, best-checkpoint
/// selection and restore. Non-finite loss aborts with a diagnostic.
inline FinetuneResult finetune(TrainableTfm& model, const TabularDataset& train,
                               const FinetuneConfig& config,
                               const std::filesystem::path& checkpoint_dir = {},
                               const nlohmann::json& checkpoint_metadata = {}) {
  config.validate();
  train.validate();
  require(train.has_both_classes(),
          "finetune: training data contain a single class");

  ParameterGroupMap groups = freeze(parameter_group_map(model), config.frozen);

  auto split = detail::stratified_holdout(train.labels,
                                          config.validation_fraction,
                                          config.seed);
  TabularDataset pool = train.select_rows(split.train_pool);
  TabularDataset validation = train.select_rows(split.validation);

  OneCycleSchedule schedule(config.learning_rate, config.max_steps,
                            config.warmup_fraction, config.div_factor);

  const bool schedule_free = config.optimizer == "schedulefree_adamw";
  std::map<std::string, detail::AdamWState> adam_state;
  std::map<std::string, detail::ScheduleFreeState> sf_state;
  if (schedule_free)
    for (const auto& g : groups.names)
      if (!groups.frozen.count(g)) sf_state[g].init(model.get_group(g));

  // Per-step batches cycle through a reshuffled pool.
  Rng batch_rng = make_rng(config.seed + 1);
  std::vector<std::size_t> order = shuffled_indices(pool.n_rows(), batch_rng);
  std::size_t cursor = 0;
  auto next_batch = [&]() {
    // Leave at least two context rows so the ICL forward pass always has a
    // non-trivial context.
    std::size_t want = std::min<std::size_t>(
        static_cast<std::size_t>(config.batch_size),
        pool.n_rows() > 2 ? pool.n_rows() - 2 : 1);
    std::vector<std::size_t> batch;
    while (batch.size() < want) {
      if (cursor >= order.size()) {
        order = shuffled_indices(pool.n_rows(), batch_rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    std::sort(batch.begin(), batch.end());
    batch.erase(std::unique(batch.begin(), batch.end()), batch.end());
    return batch;
  };

  auto context_for = [&](const std::vector<std::size_t>& batch) {
    std::set<std::size_t> in_batch(batch.begin(), batch.end());
    std::vector<std::size_t> ctx;
    for (std::size_t i = 0; i < pool.n_rows(); ++i)
      if (!in_batch.count(i)) ctx.push_back(i);
    // The context must keep both classes; pull a row out of the batch when a
    // class would vanish.
    for (int cls = 0; cls < 2; ++cls) {
      bool present = false;
      for (auto i : ctx)
        if (pool.labels[i] == cls) present = true;
      if (!present)
        for (auto it = in_batch.begin(); it != in_batch.end(); ++it)
          if (pool.labels[*it] == cls) {
            ctx.push_back(*it);
            break;
          }
    }
    std::sort(ctx.begin(), ctx.end());
    return ctx;
  };

  auto validation_accuracy = [&]() {
    Eigen::VectorXd z =
        model.positive_logits(pool.features, pool.labels, validation.features);
    int hits = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      int pred = z(i) >= 0 ? 1 : 0;  // argmax; temperature cannot flip it
      if (pred == validation.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(z.size());
  };

  FinetuneResult result;
  auto t_start = std::chrono::steady_clock::now();

  for (int step = 0; step < config.max_steps; ++step) {
    std::vector<std::size_t> batch = next_batch();
    std::vector<std::size_t> ctx = context_for(batch);
    TabularDataset batch_ds = pool.select_rows(batch);
    TabularDataset ctx_ds = pool.select_rows(ctx);

    if (schedule_free)
      for (auto& [g, state] : sf_state) model.set_group(g, state.eval_point());

    Eigen::VectorXd logits = model.positive_logits(
        ctx_ds.features, ctx_ds.labels, batch_ds.features);
    double loss =
        temperature_bce_loss(logits, batch_ds.labels, config.temperature);
    require(std::isfinite(loss), "finetune: non-finite loss ", loss,
            " at step ", step, " (learning rate ",
            config.optimizer == "adamw_onecycle" ? schedule.rate(step)
                                                 : config.learning_rate,
            "), aborting");
    result.final_loss = loss;

    Eigen::VectorXd dz =
        temperature_bce_grad(logits, batch_ds.labels, config.temperature);
    auto grads = model.logits_backward(ctx_ds.features, ctx_ds.labels,
                                       batch_ds.features, dz, nullptr);

    double lr = config.optimizer == "adamw_onecycle" ? schedule.rate(step)
                                                     : config.learning_rate;
    for (const auto& g : groups.names) {
      if (groups.frozen.count(g)) continue;
      if (schedule_free) {
        sf_state[g].update(grads.at(g), lr, config.weight_decay);
        model.set_group(g, sf_state[g].x);
      } else {
        Eigen::VectorXd theta = model.get_group(g);
        detail::adamw_update(theta, grads.at(g), adam_state[g], lr,
                             config.weight_decay);
        model.set_group(g, theta);
      }
    }

    double val_acc = validation_accuracy();
    result.history.push_back({step, val_acc});
    if (val_acc > result.best.validation_accuracy) {
      result.best.validation_accuracy = val_acc;
      result.best.step = step;
      result.best.params.clear();
      for (const auto& g : groups.names)
        result.best.params[g] = model.get_group(g);
    }
    result.steps_run = step + 1;

    if (adaptive_early_stop(result.history, config) == StopDecision::kStop)
      break;
  }

  auto t_end = std::chrono::steady_clock::now();
  result.mean_step_seconds =
      std::chrono::duration<double>(t_end - t_start).count() /
      std::max(1, result.steps_run);

  // Restore the best checkpoint before handing the model back.
  for (const auto& [g, values] : result.best.params) model.set_group(g, values);

  if (!checkpoint_dir.empty()) {
    nlohmann::json meta = checkpoint_metadata;
    meta["config"] = config.to_json();
    meta["steps_run"] = result.steps_run;
    meta["mean_step_seconds"] = result.mean_step_seconds;
    save_checkpoint(result.best, checkpoint_dir, meta);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Fine-tuned mock backend

class MockTfmFinetuneClassifier : public Classifier {
 public:
  explicit MockTfmFinetuneClassifier(const Hyperparameters& hyper) {
    MockTfmConfig mc;
    mc.x_width = hyper.value("x_width", mc.x_width);
    mc.y_width = hyper.value("y_width", mc.y_width);
    mc.block_width = hyper.value("block_width", mc.block_width);
    mc.seed = hyper.value("seed", mc.seed);
    model_ = std::make_unique<MockTfm>(mc);
    config_ = FinetuneConfig::from_json(
        hyper.contains("finetune") ? hyper["finetune"] : nlohmann::json::object());
  }

  const std::string& name() const override {
    static const std::string n = "mock_tfm_finetune";
    return n;
  }
  ClassifierKind kind() const override { return ClassifierKind::kTfmFinetuned; }
  std::string backend_version() const override {
    return std::string("mock-tfm/") + kVersion;
  }

  Hyperparameters hyperparameters() const override {
    const auto& c = model_->config();
    return {{"x_width", c.x_width},
            {"y_width", c.y_width},
            {"block_width", c.block_width},
            {"seed", c.seed},
            {"finetune", config_.to_json()}};
  }

  void set_checkpoint_dir(const std::filesystem::path& dir,
                          const nlohmann::json& metadata = {}) {
    checkpoint_dir_ = dir;
    checkpoint_metadata_ =
        metadata.is_object() ? metadata : nlohmann::json::object();
  }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    nlohmann::json meta = checkpoint_metadata_;
    meta["backend_version"] = backend_version();
    result_ = finetune(*model_, train, config_, checkpoint_dir_, meta);
    context_x_ = train.features;
    context_y_ = train.labels;
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name(), ": predict before fit");
    check_query_width(query.cols(), context_x_.cols());
    Eigen::VectorXd z = model_->positive_logits(context_x_, context_y_, query);
    double tau = config_.temperature;
    return z.unaryExpr(
        [tau](double v) { return 1.0 / (1.0 + std::exp(-v / tau)); });
  }

  MockTfm& model() { return *model_; }
  const FinetuneResult& result() const { return result_; }
  const FinetuneConfig& config() const { return config_; }

 private:
  std::unique_ptr<MockTfm> model_;
  FinetuneConfig config_;
  std::filesystem::path checkpoint_dir_;
  nlohmann::json checkpoint_metadata_;
  Eigen::MatrixXd context_x_;
  std::vector<int> context_y_;
  FinetuneResult result_;
  bool fitted_ = false;
};

}  // namespace tfmbench
