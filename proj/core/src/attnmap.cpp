#include "relkit/attnmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "relkit/corpus.hpp"

namespace relkit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kRowSumTolerance = 1e-4;

TokenSpan parse_span(const json& j, const std::string& where) {
  if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
  if (j.is_object() && j.contains("start") && j.contains("end")) {
    return {j.at("start").get<int>(), j.at("end").get<int>()};
  }
  throw DataError(where + "span must be {start, end} or [start, end]");
}

std::map<int, fs::path> parse_files(const json& entry, const char* files_key,
                                    const char* layers_key, const std::string& id,
                                    const char* suffix) {
  std::map<int, fs::path> out;
  if (entry.contains("files") && entry.at("files").contains(files_key)) {
    for (const auto& [layer, name] : entry.at("files").at(files_key).items()) {
      out[std::stoi(layer)] = name.get<std::string>();
    }
  } else if (entry.contains(layers_key)) {
    for (const auto& layer : entry.at(layers_key)) {
      const int l = layer.get<int>();
      out[l] = id + ".L" + std::to_string(l) + suffix;
    }
  }
  return out;
}

void check_blob_size(const fs::path& path, std::uintmax_t expected) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw DataError("missing blob " + path.string());
  if (size != expected) {
    throw DataError("size mismatch: " + path.string() + " has " + std::to_string(size) +
                    " bytes, index implies " + std::to_string(expected));
  }
}

}  // namespace

int AttentionRecord::content_token_count() const {
  return static_cast<int>(std::count(special_mask.begin(), special_mask.end(), false));
}

void AttentionRecord::validate() const {
  const auto where = "attention '" + sentence_id + "' layer " + std::to_string(layer) + ": ";
  if (n <= 0) throw DataError(where + "empty matrix");
  if (weights.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw DataError(where + "size mismatch");
  }
  if (special_mask.size() != static_cast<std::size_t>(n)) {
    throw DataError(where + "special_mask length differs from n");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw DataError(where + "non-finite value");
    if (w < 0.0) throw DataError(where + "negative attention weight");
  }
  for (int i = 0; i < n; ++i) {
    const auto r = row(i);
    const double s = std::accumulate(r.begin(), r.end(), 0.0);
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      throw DataError(where + "row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  for (const TokenSpan& s : {tok_e1, tok_e2}) {
    if (!s.valid_for(n)) throw DataError(where + "entity span out of bounds");
    for (int i = s.start; i <= s.end; ++i) {
      if (special_mask[static_cast<std::size_t>(i)]) {
        throw DataError(where + "entity span covers a special token");
      }
    }
  }
  if (tok_e1.overlaps(tok_e2)) throw DataError(where + "entity spans overlap");
}

TensorPack TensorPack::open(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  std::ifstream in(index_path);
  if (!in) throw DataError("cannot open pack index " + index_path.string());
  json index;
  try {
    index = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(index_path.string() + ": malformed JSON (" + e.what() + ")");
  }
  TensorPack pack;
  pack.dir_ = dir;
  pack.manifest_ = index.value("manifest", json::object());
  const json& sentences = index.contains("sentences") ? index.at("sentences") : index;
  for (const auto& [id, e] : sentences.items()) {
    if (id == "manifest") continue;
    const auto where = index_path.string() + ": sentence '" + id + "': ";
    try {
      Entry entry;
      entry.n = e.at("n").get<int>();
      entry.d = e.value("d", 0);
      if (entry.n <= 0) throw DataError(where + "n must be positive");
      const auto mask = e.at("special_mask").get<std::vector<int>>();
      if (mask.size() != static_cast<std::size_t>(entry.n)) {
        throw DataError(where + "special_mask length differs from n");
      }
      entry.special_mask.reserve(mask.size());
      for (int m : mask) entry.special_mask.push_back(m != 0);
      entry.tok_e1 = parse_span(e.at("tok_e1"), where);
      entry.tok_e2 = parse_span(e.at("tok_e2"), where);
      for (const TokenSpan& s : {entry.tok_e1, entry.tok_e2}) {
        if (!s.valid_for(entry.n)) throw DataError(where + "entity span out of bounds");
        for (int i = s.start; i <= s.end; ++i) {
          if (entry.special_mask[static_cast<std::size_t>(i)]) {
            throw DataError(where + "entity span covers a special token");
          }
        }
      }
      if (entry.tok_e1.overlaps(entry.tok_e2)) throw DataError(where + "entity spans overlap");
      entry.attention_files = parse_files(e, "attn", "layers", id, ".attn");
      entry.embedding_files = parse_files(e, "emb", "emb_layers", id, ".emb");
      const auto n = static_cast<std::uintmax_t>(entry.n);
      for (const auto& [layer, name] : entry.attention_files) {
        check_blob_size(dir / name, 4 * n * n);
      }
      if (!entry.embedding_files.empty() && entry.d <= 0) {
        throw DataError(where + "embedding blobs listed but d is not positive");
      }
      for (const auto& [layer, name] : entry.embedding_files) {
        check_blob_size(dir / name, 4 * n * static_cast<std::uintmax_t>(entry.d));
      }
      pack.entries_.emplace(id, std::move(entry));
    } catch (const json::exception& ex) {
      throw DataError(where + ex.what());
    }
  }
  return pack;
}

bool TensorPack::has_layer(const std::string& id, int layer) const {
  const auto it = entries_.find(id);
  return it != entries_.end() && it->second.attention_files.count(layer) > 0;
}

const TensorPack::Entry& TensorPack::entry(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw DataError("tensor pack has no record for '" + id + "'");
  return it->second;
}

AttentionRecord TensorPack::attention(const std::string& id, int layer) const {
  const Entry& e = entry(id);
  const auto it = e.attention_files.find(layer);
  if (it == e.attention_files.end()) {
    throw DataError("tensor pack has no layer " + std::to_string(layer) + " attention for '" +
                    id + "'");
  }
  const auto raw = read_f32_le(dir_ / it->second);
  AttentionRecord rec;
  rec.sentence_id = id;
  rec.layer = layer;
  rec.n = e.n;
  if (raw.size() != static_cast<std::size_t>(e.n) * static_cast<std::size_t>(e.n)) {
    throw DataError("size mismatch: " + (dir_ / it->second).string());
  }
  rec.weights.assign(raw.begin(), raw.end());
  rec.special_mask = e.special_mask;
  rec.tok_e1 = e.tok_e1;
  rec.tok_e2 = e.tok_e2;
  rec.validate();
  return rec;
}

EmbeddingRecord TensorPack::embedding(const std::string& id, int layer) const {
  const Entry& e = entry(id);
  const auto it = e.embedding_files.find(layer);
  if (it == e.embedding_files.end()) {
    throw DataError("tensor pack has no layer " + std::to_string(layer) + " embeddings for '" +
                    id + "'");
  }
  EmbeddingRecord rec;
  rec.sentence_id = id;
  rec.layer = layer;
  rec.n = e.n;
  rec.d = e.d;
  rec.values = read_f32_le(dir_ / it->second);
  if (rec.values.size() != static_cast<std::size_t>(e.n) * static_cast<std::size_t>(e.d)) {
    throw DataError("size mismatch: " + (dir_ / it->second).string());
  }
  for (float v : rec.values) {
    if (!std::isfinite(v)) throw DataError("non-finite value in " + (dir_ / it->second).string());
  }
  return rec;
}

PackWriter::PackWriter(fs::path out_dir) : dir(std::move(out_dir)) {
  fs::create_directories(dir);
}

void PackWriter::add(const std::string& id, const std::vector<bool>& special_mask,
                     TokenSpan tok_e1, TokenSpan tok_e2,
                     const std::map<int, std::vector<float>>& attention_by_layer,
                     const std::map<int, std::vector<float>>& embedding_by_layer, int d) {
  nlohmann::ordered_json e;
  const int n = static_cast<int>(special_mask.size());
  e["n"] = n;
  e["d"] = d;
  std::vector<int> layers, emb_layers;
  for (const auto& [layer, m] : attention_by_layer) {
    layers.push_back(layer);
    write_f32_le(dir / (id + ".L" + std::to_string(layer) + ".attn"), m);
  }
  for (const auto& [layer, m] : embedding_by_layer) {
    emb_layers.push_back(layer);
    write_f32_le(dir / (id + ".L" + std::to_string(layer) + ".emb"), m);
  }
  e["layers"] = layers;
  if (!emb_layers.empty()) e["emb_layers"] = emb_layers;
  std::vector<int> mask;
  for (bool b : special_mask) mask.push_back(b ? 1 : 0);
  e["special_mask"] = mask;
  e["tok_e1"] = {{"start", tok_e1.start}, {"end", tok_e1.end}};
  e["tok_e2"] = {{"start", tok_e2.start}, {"end", tok_e2.end}};
  entries[id] = std::move(e);
}

void PackWriter::finish() const {
  nlohmann::ordered_json index;
  index["manifest"] = manifest;
  index["sentences"] = entries;
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "index.json").string());
  out << index.dump(1) << '\n';
}

std::vector<double> entity_attention(const AttentionRecord& rec, TokenSpan span,
                                     const AttentionOptions& opts) {
  if (!span.valid_for(rec.n)) {
    throw std::invalid_argument("entity_attention: span out of bounds for '" +
                                rec.sentence_id + "'");
  }
  std::vector<double> out(static_cast<std::size_t>(rec.n), 0.0);
  for (int i = span.start; i <= span.end; ++i) {
    const auto r = rec.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += r[j];
  }
  const double inv = 1.0 / static_cast<double>(span.size());
  for (double& v : out) v *= inv;
  if (opts.mask_special) {
    double total = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (rec.special_mask[j]) out[j] = 0.0;
      total += out[j];
    }
    if (!(total > 0.0)) {
      throw std::domain_error("entity_attention: all attention mass falls on special tokens in '" +
                              rec.sentence_id + "'");
    }
    for (double& v : out) v /= total;
  }
  return out;
}

ContextDistribution localized_context_distribution(std::span<const double> a1,
                                                   std::span<const double> a2,
                                                   const std::vector<bool>* support_mask) {
  if (a1.size() != a2.size()) {
    throw std::invalid_argument("localized_context_distribution: length mismatch");
  }
  if (a1.empty()) throw std::invalid_argument("localized_context_distribution: empty input");
  ContextDistribution out;
  out.weights.resize(a1.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < a1.size(); ++i) {
    out.weights[i] = a1[i] * a2[i];
    dot += out.weights[i];
  }
  if (dot > 0.0) {
    for (double& w : out.weights) w /= dot;
    return out;
  }
  out.degenerate = true;
  std::size_t support = a1.size();
  if (support_mask) {
    support = static_cast<std::size_t>(std::count(support_mask->begin(), support_mask->end(), false));
  }
  if (support == 0) support = a1.size(), support_mask = nullptr;
  const double u = 1.0 / static_cast<double>(support);
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    out.weights[i] = (support_mask && (*support_mask)[i]) ? 0.0 : u;
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      throw std::domain_error("kl_divergence: infinite divergence (p > 0 where q = 0 at index " +
                              std::to_string(i) + ")");
    }
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value for p == q.
  return std::max(kl, 0.0);
}

AttnMethod parse_attn_method(const std::string& name) {
  if (name == "picmi") return AttnMethod::kPicMI;
  if (name == "picmi-up" || name == "picmi_up") return AttnMethod::kPicMIUp;
  if (name == "conex") return AttnMethod::kConEx;
  throw std::invalid_argument("unknown attention method '" + name +
                              "' (expected picmi, picmi-up or conex)");
}

std::string to_string(AttnMethod m) {
  switch (m) {
    case AttnMethod::kPicMI: return "picmi";
    case AttnMethod::kPicMIUp: return "picmi-up";
    case AttnMethod::kConEx: return "conex";
  }
  return "?";
}

double picmi_statistic(const ContextDistribution& ctx) {
  if (ctx.degenerate) return -std::numeric_limits<double>::infinity();
  return *std::max_element(ctx.weights.begin(), ctx.weights.end());
}

double picmi_up_statistic(const ContextDistribution& ctx, std::span<const double> a1,
                          std::span<const double> a2) {
  if (ctx.degenerate) return -std::numeric_limits<double>::infinity();
  if (a1.size() != ctx.weights.size() || a2.size() != ctx.weights.size()) {
    throw std::invalid_argument("picmi_up_statistic: length mismatch");
  }
  // max_element returns the first maximum, i.e. the lowest index on ties.
  const auto argmax = static_cast<std::size_t>(
      std::max_element(ctx.weights.begin(), ctx.weights.end()) - ctx.weights.begin());
  return 0.5 * (a1[argmax] + a2[argmax]);
}

double conex_statistic(const ContextDistribution& ctx, const std::vector<bool>* support_mask) {
  if (ctx.degenerate) return 0.0;
  std::size_t content = ctx.weights.size();
  if (support_mask) {
    content = static_cast<std::size_t>(std::count(support_mask->begin(), support_mask->end(), false));
  }
  std::vector<double> uniform(ctx.weights.size(), 0.0);
  for (std::size_t i = 0; i < uniform.size(); ++i) {
    if (!(support_mask && (*support_mask)[i])) uniform[i] = 1.0 / static_cast<double>(content);
  }
  return kl_divergence(ctx.weights, uniform);
}

double attention_statistic(AttnMethod method, const AttentionRecord& rec,
                           const AttentionOptions& opts) {
  const auto a1 = entity_attention(rec, rec.tok_e1, opts);
  const auto a2 = entity_attention(rec, rec.tok_e2, opts);
  const std::vector<bool>* support = opts.mask_special ? &rec.special_mask : nullptr;
  const ContextDistribution ctx = localized_context_distribution(a1, a2, support);
  if (ctx.degenerate && method != AttnMethod::kConEx) {
    spdlog::warn("'{}' layer {}: entity attention vectors do not overlap; predicting -1",
                 rec.sentence_id, rec.layer);
  }
  switch (method) {
    case AttnMethod::kPicMI: return picmi_statistic(ctx);
    case AttnMethod::kPicMIUp: return picmi_up_statistic(ctx, a1, a2);
    case AttnMethod::kConEx: return conex_statistic(ctx, support);
  }
  throw std::invalid_argument("unknown attention method");
}

Label picmi(const AttentionRecord& rec, double t, const AttentionOptions& opts) {
  return attention_statistic(AttnMethod::kPicMI, rec, opts) >= t ? Label::kPositive
                                                                 : Label::kNegative;
}

Label picmi_up(const AttentionRecord& rec, double t, const AttentionOptions& opts) {
  return attention_statistic(AttnMethod::kPicMIUp, rec, opts) >= t ? Label::kPositive
                                                                   : Label::kNegative;
}

Label conex(const AttentionRecord& rec, double t, const AttentionOptions& opts) {
  if (!(t > 0.0)) throw std::invalid_argument("conex: threshold must be positive");
  return attention_statistic(AttnMethod::kConEx, rec, opts) >= t ? Label::kPositive
                                                                 : Label::kNegative;
}

std::vector<double> ThresholdRange::values() const {
  if (!(step > 0.0) || hi < lo) {
    throw std::invalid_argument("threshold range needs lo <= hi and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = lo + static_cast<double>(i) * step;
    out.push_back(std::round(v * 1e10) / 1e10);
  }
  return out;
}

ThresholdRange ThresholdRange::defaults(AttnMethod method) {
  switch (method) {
    case AttnMethod::kPicMI: return {0.30, 0.70, 0.05};
    case AttnMethod::kPicMIUp: return {0.20, 0.60, 0.05};
    case AttnMethod::kConEx: return {0.05, 0.14, 0.01};
  }
  return {};
}

std::vector<double> attention_statistics(AttnMethod method, const Corpus& corpus,
                                         const TensorPack& pack, int layer,
                                         const AttentionOptions& opts, int jobs) {
  for (const auto& r : corpus.records()) {
    if (!pack.has_layer(r.id, layer)) {
      throw DataError("missing record for sentence '" + r.id + "' at layer " +
                      std::to_string(layer));
    }
  }
  std::vector<double> stats(corpus.size(), 0.0);
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    stats[i] = attention_statistic(method, pack.attention(corpus[i].id, layer), opts);
  });
  return stats;
}

std::vector<Label> attention_predict_corpus(AttnMethod method, const Corpus& corpus,
                                            const TensorPack& pack, int layer, double t,
                                            const AttentionOptions& opts, int jobs) {
  if (method == AttnMethod::kConEx && !(t > 0.0)) {
    throw std::invalid_argument("conex: threshold must be positive");
  }
  const auto stats = attention_statistics(method, corpus, pack, layer, opts, jobs);
  std::vector<Label> out;
  out.reserve(stats.size());
  for (double s : stats) out.push_back(s >= t ? Label::kPositive : Label::kNegative);
  return out;
}

std::vector<SweepRow> sweep_thresholds(AttnMethod method, const Corpus& corpus,
                                       const TensorPack& pack, int layer,
                                       const ThresholdRange& range,
                                       const AttentionOptions& opts, int jobs) {
  const auto golds = corpus.gold_labels();
  const auto thresholds = range.values();
  const auto stats = attention_statistics(method, corpus, pack, layer, opts, jobs);
  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  std::vector<Label> preds(stats.size());
  for (double t : thresholds) {
    std::uint64_t positive = 0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      preds[i] = stats[i] >= t ? Label::kPositive : Label::kNegative;
      positive += preds[i] == Label::kPositive;
    }
    rows.push_back({t, score(preds, golds), positive});
  }
  return rows;
}

}  // namespace relkit
