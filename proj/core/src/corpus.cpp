#include "relkit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace relkit {

using nlohmann::json;

namespace {

void validate_record(const SentenceRecord& r) {
  const int n = r.token_count();
  if (r.id.empty()) throw DataError("record has empty id");
  if (n == 0) throw DataError("record '" + r.id + "' has no tokens");
  if (!r.e1.valid_for(n) || !r.e2.valid_for(n)) {
    throw DataError("record '" + r.id + "': span out of bounds (token count " +
                    std::to_string(n) + ")");
  }
  if (r.e1.overlaps(r.e2)) {
    throw DataError("record '" + r.id + "': overlapping entity spans");
  }
}

TokenSpan span_from_json(const json& j, const char* field) {
  if (!j.contains(field)) throw DataError(std::string("missing field '") + field + "'");
  const json& s = j.at(field);
  if (s.is_array() && s.size() == 2) return {s[0].get<int>(), s[1].get<int>()};
  if (!s.is_object() || !s.contains("start") || !s.contains("end")) {
    throw DataError(std::string("field '") + field + "' must be {start, end}");
  }
  return {s.at("start").get<int>(), s.at("end").get<int>()};
}

json span_to_json(const TokenSpan& s) { return json{{"start", s.start}, {"end", s.end}}; }

SentenceRecord record_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  SentenceRecord r;
  if (!j.contains("id") || !j.at("id").is_string()) throw DataError("missing string field 'id'");
  r.id = j.at("id").get<std::string>();
  if (!j.contains("tokens") || !j.at("tokens").is_array()) {
    throw DataError("missing array field 'tokens'");
  }
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.e1 = span_from_json(j, "e1");
  r.e2 = span_from_json(j, "e2");
  if (j.contains("label") && !j.at("label").is_null()) {
    const json& l = j.at("label");
    if (l.is_number_integer()) {
      const int v = l.get<int>();
      if (v != 1 && v != -1) throw DataError("label must be +1 or -1");
      r.gold_label = v == 1 ? Label::kPositive : Label::kNegative;
    } else if (l.is_string()) {
      r.gold_label = parse_label(l.get<std::string>());
    } else {
      throw DataError("label must be +1 or -1");
    }
  }
  return r;
}

}  // namespace

Corpus::Corpus(std::vector<SentenceRecord> records) : records_(std::move(records)) {
  by_id_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i]);
    if (!by_id_.emplace(records_[i].id, i).second) {
      throw DataError("duplicate id '" + records_[i].id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::index_of(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::require_index(const std::string& id) const {
  const auto idx = index_of(id);
  if (!idx) throw DataError("unknown record id '" + id + "'");
  return *idx;
}

std::vector<Label> Corpus::gold_labels() const {
  std::vector<Label> out;
  out.reserve(records_.size());
  for (const auto& r : records_) {
    if (!r.gold_label) throw DataError("record '" + r.id + "' has no gold label");
    out.push_back(*r.gold_label);
  }
  return out;
}

Corpus read_corpus(std::istream& in, const std::string& source_name, Strictness mode,
                   CorpusLoadStats* stats) {
  std::vector<SentenceRecord> records;
  std::map<std::string, std::size_t> seen;
  CorpusLoadStats local;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++local.lines;
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    SentenceRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(where + "malformed line (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    const int n = r.token_count();
    if (!r.e1.valid_for(n) || !r.e2.valid_for(n)) {
      throw DataError(where + "span out of bounds in record '" + r.id + "'");
    }
    if (r.e1.overlaps(r.e2)) {
      if (mode == Strictness::kStrict) {
        throw DataError(where + "overlapping entity spans in record '" + r.id + "'");
      }
      ++local.skipped_overlap;
      continue;
    }
    if (!seen.emplace(r.id, line_no).second) {
      throw DataError(where + "duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  if (local.skipped_overlap > 0) {
    spdlog::warn("{}: skipped {} record(s) with overlapping entity spans", source_name,
                 local.skipped_overlap);
  }
  if (stats) *stats = local;
  return Corpus(std::move(records));
}

Corpus load_corpus(const std::filesystem::path& path, Strictness mode, CorpusLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return read_corpus(in, path.string(), mode, stats);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& r : corpus.records()) {
    json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens;
    j["e1"] = span_to_json(r.e1);
    j["e2"] = span_to_json(r.e2);
    if (r.gold_label) j["label"] = to_int(*r.gold_label);
    out << j.dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_corpus(out, corpus);
}

double empirical_prior(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("empirical_prior: empty corpus");
  const auto labels = corpus.gold_labels();
  const auto pos = std::count(labels.begin(), labels.end(), Label::kPositive);
  return static_cast<double>(pos) / static_cast<double>(labels.size());
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (int f : assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

FoldPlan make_folds(const Corpus& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be at least 2");
  if (corpus.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("make_folds: k=" + std::to_string(k) +
                                " is larger than the corpus size " +
                                std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan{k, seed, std::vector<int>(corpus.size(), 0)};
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    plan.assignment[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return plan;
}

FoldPlan load_fold_file(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fold file " + path.string());
  std::vector<int> assignment(corpus.size(), -1);
  std::string line;
  std::size_t line_no = 0;
  int max_fold = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + "expected '<id>\\t<fold>'");
    const std::string id = line.substr(0, tab);
    int fold = -1;
    try {
      std::size_t used = 0;
      fold = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + "invalid fold id");
    }
    if (fold < 0) throw DataError(where + "negative fold id");
    const auto idx = corpus.index_of(id);
    if (!idx) throw DataError(where + "unknown record id '" + id + "'");
    if (assignment[*idx] != -1) throw DataError(where + "id '" + id + "' assigned twice");
    assignment[*idx] = fold;
    max_fold = std::max(max_fold, fold);
  }
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == -1) {
      throw DataError(path.string() + ": record '" + corpus[i].id + "' has no fold");
    }
  }
  FoldPlan plan{max_fold + 1, 0, std::move(assignment)};
  if (plan.k < 2) throw DataError(path.string() + ": fewer than two folds");
  const auto sizes = plan.fold_sizes();
  for (std::size_t f = 0; f < sizes.size(); ++f) {
    if (sizes[f] == 0) throw DataError(path.string() + ": fold " + std::to_string(f) + " is empty");
  }
  return plan;
}

void write_fold_file(const std::filesystem::path& path, const FoldPlan& plan,
                     const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << corpus[i].id << '\t' << plan.assignment[i] << '\n';
  }
}

TrainDevSplit split_train_dev(std::span<const std::size_t> records, double fraction,
                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_train_dev: fraction must lie in (0, 1)");
  }
  const std::size_t dev_n = round_half_up(fraction * static_cast<double>(records.size()));
  if (dev_n == 0) {
    throw std::invalid_argument("split_train_dev: development set would be empty");
  }
  if (dev_n >= records.size()) {
    throw std::invalid_argument("split_train_dev: training set would be empty");
  }
  std::vector<std::size_t> order(records.begin(), records.end());
  Rng rng(seed);
  rng.shuffle(order);
  TrainDevSplit split;
  split.dev.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_n));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(dev_n), order.end());
  std::sort(split.dev.begin(), split.dev.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace relkit
