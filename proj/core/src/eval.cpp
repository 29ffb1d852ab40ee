#include "relkit/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace relkit {

using nlohmann::json;
using nlohmann::ordered_json;

Metrics Metrics::from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                             std::uint64_t tn) {
  Metrics m{tp, fp, fn, tn, 0.0, 0.0, 0.0};
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

Metrics score(std::span<const Label> preds, std::span<const Label> golds) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("score: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(golds.size()) + " gold labels");
  }
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == Label::kPositive;
    const bool g = golds[i] == Label::kPositive;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
  return Metrics::from_counts(tp, fp, fn, tn);
}

Metrics score(const std::map<std::string, Label>& preds,
              const std::map<std::string, Label>& golds) {
  std::vector<Label> p, g;
  p.reserve(preds.size());
  g.reserve(golds.size());
  for (const auto& [id, label] : golds) {
    const auto it = preds.find(id);
    if (it == preds.end()) throw DataError("id mismatch: no prediction for '" + id + "'");
    p.push_back(it->second);
    g.push_back(label);
  }
  if (preds.size() != golds.size()) {
    for (const auto& [id, label] : preds) {
      if (!golds.count(id)) throw DataError("id mismatch: no gold label for '" + id + "'");
    }
  }
  return score(p, g);
}

CrossValidationResult cross_validate(int k, const FoldRunner& runner, int jobs) {
  if (k < 1) throw std::invalid_argument("cross_validate: no folds");
  CrossValidationResult cv;
  cv.folds.resize(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), jobs, [&](std::size_t f) {
    cv.folds[f] = runner(static_cast<int>(f));
  });
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double p = 0.0, r = 0.0, f1 = 0.0;
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    const auto& m = cv.folds[f];
    if (m.total() == 0) {
      throw DataError("fold " + std::to_string(f) + " has zero evaluable instances");
    }
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    tn += m.tn;
    p += m.precision;
    r += m.recall;
    f1 += m.f1;
  }
  const double kk = static_cast<double>(k);
  cv.mean = Metrics{tp, fp, fn, tn, p / kk, r / kk, f1 / kk};
  cv.pooled = Metrics::from_counts(tp, fp, fn, tn);
  return cv;
}

namespace {

ordered_json echo_to_json(const RunEcho& echo) {
  ordered_json j;
  j["method"] = echo.method;
  j["layer"] = echo.layer ? json(*echo.layer) : json(nullptr);
  j["threshold"] = echo.threshold ? json(*echo.threshold) : json(nullptr);
  j["pi_plus"] = echo.pi_plus ? json(*echo.pi_plus) : json(nullptr);
  j["seed"] = echo.seed ? json(*echo.seed) : json(nullptr);
  for (const auto& [key, value] : echo.extra.items()) j[key] = value;
  return j;
}

ordered_json counts_to_json(const Metrics& m) {
  ordered_json j;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  return j;
}

}  // namespace

ordered_json metrics_to_json(const Metrics& m, const RunEcho& echo) {
  ordered_json j = counts_to_json(m);
  j["config"] = echo_to_json(echo);
  j["zero_denominator_convention"] = "precision, recall and f1 are 0 when undefined";
  return j;
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.tp = j.at("tp").get<std::uint64_t>();
  m.fp = j.at("fp").get<std::uint64_t>();
  m.fn = j.at("fn").get<std::uint64_t>();
  m.tn = j.at("tn").get<std::uint64_t>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  return m;
}

ordered_json cross_validation_to_json(const CrossValidationResult& cv, const RunEcho& echo) {
  ordered_json j;
  ordered_json folds = ordered_json::array();
  for (const auto& m : cv.folds) folds.push_back(counts_to_json(m));
  j["folds"] = std::move(folds);
  j["mean"] = counts_to_json(cv.mean);
  j["pooled"] = counts_to_json(cv.pooled);
  j["config"] = echo_to_json(echo);
  j["aggregation"] = "mean is the unweighted average over folds; pooled uses summed counts";
  return j;
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_sweep_csv(const std::filesystem::path& path, std::vector<SweepRow> rows,
                     const RunEcho& echo) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.threshold < b.threshold; });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,layer,threshold,predicted_positive,tp,fp,fn,tn,precision,recall,f1\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out << echo.method << ',' << (echo.layer ? std::to_string(*echo.layer) : "") << ','
        << format_real(row.threshold) << ',' << row.predicted_positive << ',' << m.tp << ','
        << m.fp << ',' << m.fn << ',' << m.tn << ',' << format_real(m.precision) << ','
        << format_real(m.recall) << ',' << format_real(m.f1) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, json>>& results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "source,method,layer,threshold,pi_plus,seed,tp,fp,fn,tn,precision,recall,f1\n";
  auto field = [](const json& cfg, const char* key) -> std::string {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return "";
    const json& v = cfg.at(key);
    if (v.is_number_float()) return format_real(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  for (const auto& [source, j] : results) {
    const json& body = j.contains("mean") ? j.at("mean") : j;
    const Metrics m = metrics_from_json(body);
    const json cfg = j.value("config", json::object());
    out << source << ',' << field(cfg, "method") << ',' << field(cfg, "layer") << ','
        << field(cfg, "threshold") << ',' << field(cfg, "pi_plus") << ',' << field(cfg, "seed")
        << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << m.tn << ','
        << format_real(m.precision) << ',' << format_real(m.recall) << ','
        << format_real(m.f1) << '\n';
  }
}

}  // namespace relkit
