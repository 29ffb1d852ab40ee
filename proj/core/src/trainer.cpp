#include "relkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "relkit/eval.hpp"

namespace relkit {

void TrainHyper::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam moment coefficients must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

namespace {

struct BatchResult {
  BatchObjective objective;
  ForwardCache cache;
};

std::vector<std::size_t> concat(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> rows(a.begin(), a.end());
  rows.insert(rows.end(), b.begin(), b.end());
  return rows;
}

BatchResult run_batch(const LinearHead& head, const FeatureMatrix& x,
                      std::span<const std::size_t> pos_rows, std::span<const std::size_t> neg_rows,
                      const EstimatorConfig& cfg, const ObjectiveContext& ctx, Rng& rng) {
  const auto rows = concat(pos_rows, neg_rows);
  BatchResult out;
  out.cache = forward_train(head, x, rows, rng);
  const std::span<const double> scores(out.cache.scores);
  const auto pos = scores.subspan(0, pos_rows.size());
  const auto neg = scores.subspan(pos_rows.size());
  const RiskValue risk = objective(cfg, pos, neg, ctx);
  std::vector<double> dscores = risk.grad_pos;
  dscores.insert(dscores.end(), risk.grad_neg.begin(), risk.grad_neg.end());
  out.objective.value = risk.value;
  out.objective.grad = backward(head, out.cache, dscores);
  out.objective.scores = out.cache.scores;
  return out;
}

void check_rows(std::span<const std::size_t> rows, const FeatureMatrix& x, const char* what) {
  for (std::size_t r : rows) {
    if (r >= x.rows) {
      throw DataError(std::string(what) + ": member index " + std::to_string(r) +
                      " has no feature row");
    }
  }
}

/// Adam state over the flattened parameter vector (w, b, gamma, beta).
class Adam {
 public:
  Adam(std::size_t dim, const TrainHyper& h)
      : h_(h), m_(3 * dim + 1, 0.0), v_(3 * dim + 1, 0.0) {}

  void step(LinearHead& head, const HeadGradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    auto upd = [&](double& p, double grad) {
      m_[k] = h_.beta1 * m_[k] + (1.0 - h_.beta1) * grad;
      v_[k] = h_.beta2 * v_[k] + (1.0 - h_.beta2) * grad * grad;
      const double mhat = m_[k] / c1;
      const double vhat = v_[k] / c2;
      p -= h_.learning_rate * mhat / (std::sqrt(vhat) + h_.adam_eps);
      ++k;
    };
    for (std::size_t j = 0; j < head.dim(); ++j) upd(head.w[j], g.w[j]);
    upd(head.b, g.b);
    for (std::size_t j = 0; j < head.dim(); ++j) upd(head.gamma[j], g.gamma[j]);
    for (std::size_t j = 0; j < head.dim(); ++j) upd(head.beta[j], g.beta[j]);
  }

 private:
  TrainHyper h_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long t_ = 0;
};

void ema_update(LinearHead& teacher, const LinearHead& student, double decay) {
  auto mix = [decay](double& t, double s) { t = decay * t + (1.0 - decay) * s; };
  for (std::size_t j = 0; j < student.dim(); ++j) {
    mix(teacher.w[j], student.w[j]);
    mix(teacher.gamma[j], student.gamma[j]);
    mix(teacher.beta[j], student.beta[j]);
  }
  mix(teacher.b, student.b);
  teacher.running_mean = student.running_mean;
  teacher.running_var = student.running_var;
  teacher.has_running_stats = student.has_running_stats;
}

bool is_risk_selected(Estimator e) {
  switch (e) {
    case Estimator::kUU:
    case Estimator::kPcompUnbiased:
    case Estimator::kPcompReLU:
    case Estimator::kPcompABS:
    case Estimator::kNoisyUnbiased:
      return true;
    default:
      return false;
  }
}

double dev_risk(const LinearHead& head, const FeatureMatrix& x, const PointwiseSets& sets,
                const EstimatorConfig& cfg, const ObjectiveContext& weights) {
  const auto pos = forward_infer(head, x, sets.pos_set);
  const auto neg = forward_infer(head, x, sets.neg_set);
  ObjectiveContext ctx;
  ctx.weight_pos = weights.weight_pos;
  ctx.weight_neg = weights.weight_neg;
  return objective(cfg, pos, neg, ctx).value;
}

/// Splits [0, n) into `parts` contiguous slices of near-equal size.
std::pair<std::size_t, std::size_t> slice(std::size_t n, std::size_t parts, std::size_t k) {
  return {k * n / parts, (k + 1) * n / parts};
}

}  // namespace

BatchObjective evaluate_batch(const LinearHead& head, const FeatureMatrix& x,
                              std::span<const std::size_t> pos_rows,
                              std::span<const std::size_t> neg_rows, const EstimatorConfig& cfg,
                              const ObjectiveContext& ctx, Rng& rng) {
  return run_batch(head, x, pos_rows, neg_rows, cfg, ctx, rng).objective;
}

TrainedHead train(const PointwiseSets& sets, const FeatureMatrix& x, const EstimatorConfig& cfg,
                  const TrainHyper& hyper, const DevData* dev) {
  cfg.validate();
  hyper.validate();
  if (sets.pos_set.empty() || sets.neg_set.empty()) {
    throw DataError("train: pointwise sets must both be non-empty");
  }
  check_rows(sets.pos_set, x, "train");
  check_rows(sets.neg_set, x, "train");
  if (dev) {
    check_rows(dev->sets.pos_set, x, "dev");
    check_rows(dev->sets.neg_set, x, "dev");
    check_rows(dev->rows, x, "dev");
    if (dev->rows.size() != dev->labels.size()) {
      throw std::invalid_argument("train: dev rows and labels differ in length");
    }
  }

  TrainedHead model;
  model.config = cfg;
  model.hyper = hyper;

  ObjectiveContext base_ctx;
  PointwiseSets work = sets;
  if (cfg.method == Estimator::kRankPruning || cfg.method == Estimator::kPcompTeacher) {
    model.pruning = rank_prune(sets, x, cfg.rates_mode, cfg, hyper);
    work = model.pruning->sets;
    base_ctx.weight_pos = model.pruning->weight_pos;
    base_ctx.weight_neg = model.pruning->weight_neg;
  }

  Rng root(cfg.seed);
  Rng init_rng = root.split();
  Rng order_rng = root.split();
  Rng dropout_rng = root.split();
  Rng teacher_rng = root.split();

  LinearHead head = LinearHead::initialize(x.dim, hyper.dropout, init_rng);
  const bool use_teacher = cfg.method == Estimator::kPcompTeacher;
  LinearHead teacher = head;
  Adam adam(x.dim, hyper);

  std::string criterion = "none";
  if (dev) {
    const bool has_sets = !dev->sets.pos_set.empty() && !dev->sets.neg_set.empty();
    if (is_risk_selected(cfg.method)) {
      if (has_sets) criterion = "dev_risk";
    } else if (dev->has_labels()) {
      criterion = "dev_f1";
    } else if (has_sets) {
      criterion = "dev_risk";
    }
  }

  std::vector<std::size_t> pos = work.pos_set;
  std::vector<std::size_t> neg = work.neg_set;
  const bool paired = pos.size() == neg.size();
  std::vector<std::size_t> perm(pos.size());

  LinearHead best = head;
  double best_value = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    if (paired) {
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      order_rng.shuffle(perm);
      for (std::size_t i = 0; i < perm.size(); ++i) {
        pos[i] = work.pos_set[perm[i]];
        neg[i] = work.neg_set[perm[i]];
      }
    } else {
      order_rng.shuffle(pos);
      order_rng.shuffle(neg);
    }
    const std::size_t largest = std::max(pos.size(), neg.size());
    const std::size_t batches = (largest + hyper.batch_size - 1) / hyper.batch_size;
    const double lambda =
        use_teacher ? cfg.teacher.lambda_max *
                          (cfg.teacher.ramp_epochs > 0
                               ? std::min(1.0, static_cast<double>(epoch) / cfg.teacher.ramp_epochs)
                               : 1.0)
                    : 0.0;

    double risk_sum = 0.0;
    std::size_t risk_count = 0;
    for (std::size_t k = 0; k < batches; ++k) {
      const auto [pa, pb] = slice(pos.size(), batches, k);
      const auto [na, nb] = slice(neg.size(), batches, k);
      // Proportional slicing can leave a set empty for a tiny trailing batch.
      if (pa == pb || na == nb) continue;
      const std::span<const std::size_t> prow(pos.data() + pa, pb - pa);
      const std::span<const std::size_t> nrow(neg.data() + na, nb - na);

      ObjectiveContext ctx = base_ctx;
      std::vector<double> teacher_scores;
      if (use_teacher && lambda > 0.0) {
        teacher_scores = forward_train(teacher, x, concat(prow, nrow), teacher_rng).scores;
        ctx.teacher_pos = std::span<const double>(teacher_scores).subspan(0, prow.size());
        ctx.teacher_neg = std::span<const double>(teacher_scores).subspan(prow.size());
        ctx.consistency_weight = lambda;
      }
      const BatchResult r = run_batch(head, x, prow, nrow, cfg, ctx, dropout_rng);
      if (!std::isfinite(r.objective.value)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(k + 1) + " (" + to_string(cfg.method) +
                                 ")");
      }
      risk_sum += r.objective.value;
      ++risk_count;
      adam.step(head, r.objective.grad);
      update_running_stats(head, r.cache);
      if (use_teacher) ema_update(teacher, head, cfg.teacher.ema_decay);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_risk = risk_count ? risk_sum / static_cast<double>(risk_count) : 0.0;
    entry.criterion = criterion;
    if (criterion == "dev_risk") {
      entry.dev_criterion = dev_risk(head, x, dev->sets, cfg, base_ctx);
    } else if (criterion == "dev_f1") {
      entry.dev_criterion = score(predict_labels(head, x, dev->rows), dev->labels).f1;
    }
    if (entry.dev_criterion && !std::isfinite(*entry.dev_criterion)) {
      throw std::runtime_error("train: non-finite dev criterion at epoch " + std::to_string(epoch));
    }
    model.log.push_back(entry);

    bool better = true;
    if (entry.dev_criterion && best_epoch > 0) {
      better = criterion == "dev_f1" ? *entry.dev_criterion > best_value
                                     : *entry.dev_criterion < best_value;
    }
    if (better) {
      best = head;
      best_epoch = epoch;
      if (entry.dev_criterion) best_value = *entry.dev_criterion;
    }
  }

  model.head = std::move(best);
  model.selected_epoch = best_epoch;
  return model;
}

std::vector<Label> predict(const TrainedHead& model, const FeatureMatrix& x,
                           std::span<const std::size_t> rows) {
  if (x.dim != model.head.dim()) {
    throw std::invalid_argument("predict: feature width " + std::to_string(x.dim) +
                                " differs from head width " + std::to_string(model.head.dim()));
  }
  check_rows(rows, x, "predict");
  return predict_labels(model.head, x, rows);
}

nlohmann::ordered_json head_metadata(const TrainedHead& model) {
  nlohmann::ordered_json j;
  j["format"] = "relkit-head";
  j["version"] = 1;
  j["dim"] = model.head.dim();
  nlohmann::ordered_json est;
  est["method"] = to_string(model.config.method);
  est["pi_plus"] = model.config.pi_plus;
  if (model.config.uu_thetas) {
    est["uu_thetas"] = {model.config.uu_thetas->first, model.config.uu_thetas->second};
  }
  if (model.config.method == Estimator::kPcompTeacher) {
    est["teacher"] = {{"ema_decay", model.config.teacher.ema_decay},
                      {"lambda_max", model.config.teacher.lambda_max},
                      {"ramp_epochs", model.config.teacher.ramp_epochs}};
  }
  if (model.config.method == Estimator::kRankPruning ||
      model.config.method == Estimator::kPcompTeacher) {
    est["rates_mode"] = model.config.rates_mode == RatesMode::kTheory ? "theory" : "estimate";
  }
  j["estimator"] = est;
  j["seed"] = model.config.seed;
  j["hyper"] = {{"learning_rate", model.hyper.learning_rate},
                {"batch_size", model.hyper.batch_size},
                {"epochs", model.hyper.epochs},
                {"dropout", model.hyper.dropout},
                {"beta1", model.hyper.beta1},
                {"beta2", model.hyper.beta2},
                {"adam_eps", model.hyper.adam_eps}};
  j["bn_momentum"] = model.head.bn_momentum;
  j["bn_eps"] = model.head.bn_eps;
  j["selected_epoch"] = model.selected_epoch;
  if (model.pruning) {
    j["pruning"] = {{"eta_pos", model.pruning->rates.eta_pos},
                    {"eta_neg", model.pruning->rates.eta_neg},
                    {"pruned_pos", model.pruning->pruned_pos},
                    {"pruned_neg", model.pruning->pruned_neg},
                    {"weight_pos", model.pruning->weight_pos},
                    {"weight_neg", model.pruning->weight_neg}};
  }
  j["parameter_layout"] = {"w", "b", "gamma", "beta", "running_mean", "running_var"};
  return j;
}

namespace {

std::filesystem::path blob_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void save_head(const std::filesystem::path& path, const TrainedHead& model) {
  if (!model.head.has_running_stats) throw std::logic_error("save_head: head was never trained");
  const auto blob = blob_path(path);
  auto meta = head_metadata(model);
  meta["blob"] = blob.filename().string();
  std::vector<float> values;
  const std::size_t d = model.head.dim();
  values.reserve(5 * d + 1);
  auto put = [&](const std::vector<double>& v) {
    for (double x : v) values.push_back(static_cast<float>(x));
  };
  put(model.head.w);
  values.push_back(static_cast<float>(model.head.b));
  put(model.head.gamma);
  put(model.head.beta);
  put(model.head.running_mean);
  put(model.head.running_var);
  write_f32_le(blob, values);
  write_json(path, meta);
}

TrainedHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open head file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "relkit-head") {
      throw DataError(path.string() + ": not a head file");
    }
    TrainedHead m;
    const auto d = j.at("dim").get<std::size_t>();
    const auto& est = j.at("estimator");
    m.config.method = parse_estimator(est.at("method").get<std::string>());
    m.config.pi_plus = est.at("pi_plus").get<double>();
    if (est.contains("uu_thetas")) {
      m.config.uu_thetas = std::make_pair(est["uu_thetas"].at(0).get<double>(),
                                          est["uu_thetas"].at(1).get<double>());
    }
    if (est.contains("teacher")) {
      m.config.teacher.ema_decay = est["teacher"].at("ema_decay").get<double>();
      m.config.teacher.lambda_max = est["teacher"].at("lambda_max").get<double>();
      m.config.teacher.ramp_epochs = est["teacher"].at("ramp_epochs").get<int>();
    }
    if (est.contains("rates_mode")) {
      m.config.rates_mode =
          est["rates_mode"].get<std::string>() == "estimate" ? RatesMode::kEstimate : RatesMode::kTheory;
    }
    m.config.seed = j.at("seed").get<std::uint64_t>();
    const auto& h = j.at("hyper");
    m.hyper.learning_rate = h.at("learning_rate").get<double>();
    m.hyper.batch_size = h.at("batch_size").get<std::size_t>();
    m.hyper.epochs = h.at("epochs").get<int>();
    m.hyper.dropout = h.at("dropout").get<double>();
    m.hyper.beta1 = h.at("beta1").get<double>();
    m.hyper.beta2 = h.at("beta2").get<double>();
    m.hyper.adam_eps = h.at("adam_eps").get<double>();
    m.selected_epoch = j.at("selected_epoch").get<int>();
    if (j.contains("pruning")) {
      // Pruned index sets are not persisted, only the summary.
      const auto& p = j["pruning"];
      RankPruneResult r;
      r.rates.eta_pos = p.at("eta_pos").get<double>();
      r.rates.eta_neg = p.at("eta_neg").get<double>();
      r.pruned_pos = p.at("pruned_pos").get<std::size_t>();
      r.pruned_neg = p.at("pruned_neg").get<std::size_t>();
      r.weight_pos = p.at("weight_pos").get<double>();
      r.weight_neg = p.at("weight_neg").get<double>();
      m.pruning = r;
    }

    const auto blob = path.parent_path() / j.at("blob").get<std::string>();
    const auto values = read_f32_le(blob);
    if (values.size() != 5 * d + 1) {
      throw DataError(blob.string() + ": size mismatch (expected " + std::to_string(5 * d + 1) +
                      " values, found " + std::to_string(values.size()) + ")");
    }
    auto take = [&](std::size_t off) {
      return std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(off),
                                 values.begin() + static_cast<std::ptrdiff_t>(off + d));
    };
    m.head.w = take(0);
    m.head.b = values[d];
    m.head.gamma = take(d + 1);
    m.head.beta = take(2 * d + 1);
    m.head.running_mean = take(3 * d + 1);
    m.head.running_var = take(4 * d + 1);
    m.head.dropout_rate = m.hyper.dropout;
    m.head.bn_momentum = j.at("bn_momentum").get<double>();
    m.head.bn_eps = j.at("bn_eps").get<double>();
    m.head.has_running_stats = true;
    for (double v : m.head.running_var) {
      if (!(v >= 0.0)) throw DataError(blob.string() + ": negative running variance");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_risk"] = e.train_risk;
    j["criterion"] = e.criterion;
    j["dev_criterion"] = e.dev_criterion ? nlohmann::ordered_json(*e.dev_criterion) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace relkit
