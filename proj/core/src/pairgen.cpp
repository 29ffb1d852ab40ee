#include "relkit/pairgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "relkit/corpus.hpp"

namespace relkit {

PairGeneration generate_pairs(std::span<const Label> labels, std::size_t n_pairs,
                              std::uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("generate_pairs: empty label map");
  if (n_pairs == 0) throw std::invalid_argument("generate_pairs: n_pairs must be at least 1");
  Rng rng(seed);
  PairGeneration gen;
  gen.pairs.reserve(n_pairs);
  while (gen.pairs.size() < n_pairs) {
    const std::size_t i = rng.uniform_index(labels.size());
    const std::size_t j = rng.uniform_index(labels.size());
    ++gen.drawn;
    if (labels[i] == Label::kNegative && labels[j] == Label::kPositive) continue;
    gen.pairs.push_back({i, j});
  }
  gen.accepted = gen.pairs.size();
  return gen;
}

PointwiseSets split_pointwise(std::span<const ComparisonPair> pairs, std::string label_source,
                              double pi_plus) {
  if (pairs.empty()) throw std::invalid_argument("split_pointwise: no pairs");
  PointwiseSets sets;
  sets.pos_set.reserve(pairs.size());
  sets.neg_set.reserve(pairs.size());
  for (const auto& p : pairs) {
    sets.pos_set.push_back(p.first);
    sets.neg_set.push_back(p.second);
  }
  sets.label_source = std::move(label_source);
  sets.pi_plus = pi_plus;
  return sets;
}

void check_prior(double pi_plus) {
  if (!(pi_plus > 0.0 && pi_plus < 1.0)) {
    throw std::invalid_argument("class prior must lie strictly between 0 and 1 (got " +
                                std::to_string(pi_plus) + ")");
  }
}

MixtureWeights mixture_weights(double pi_plus) {
  check_prior(pi_plus);
  const double pi_minus = 1.0 - pi_plus;
  return {pi_plus / (pi_minus * pi_minus + pi_plus),
          pi_plus * pi_plus / (pi_plus * pi_plus + pi_minus)};
}

PriorRoots estimate_prior_from_acceptance(std::uint64_t accepted, std::uint64_t drawn) {
  if (accepted == 0 || accepted > drawn) {
    throw std::invalid_argument("estimate_prior_from_acceptance: need 0 < accepted <= drawn");
  }
  const double pi_tilde = static_cast<double>(accepted) / static_cast<double>(drawn);
  const double disc = 4.0 * pi_tilde - 3.0;
  if (disc < 0.0) {
    throw std::domain_error("acceptance rate " + std::to_string(pi_tilde) +
                            " is below 0.75 and inconsistent with any class prior");
  }
  const double root = std::sqrt(disc);
  return {pi_tilde, 0.5 * (1.0 - root), 0.5 * (1.0 + root)};
}

nlohmann::ordered_json generation_report(const PairGeneration& gen,
                                         const std::string& label_source, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["label_source"] = label_source;
  j["seed"] = seed;
  j["accepted"] = gen.accepted;
  j["drawn"] = gen.drawn;
  j["pi_tilde"] = gen.acceptance_rate();
  try {
    const auto roots = estimate_prior_from_acceptance(gen.accepted, gen.drawn);
    j["roots"] = {roots.low, roots.high};
  } catch (const std::domain_error&) {
    j["roots"] = nullptr;
  }
  return j;
}

namespace {

std::vector<std::pair<std::string, std::string>> read_tab_pairs(const std::filesystem::path& path,
                                                                const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected two tab-separated fields");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_pairs(const std::filesystem::path& path, std::span<const ComparisonPair> pairs,
                 const Corpus& corpus) {
  auto out = open_out(path);
  for (const auto& p : pairs) out << corpus[p.first].id << '\t' << corpus[p.second].id << '\n';
}

std::vector<ComparisonPair> read_pairs(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<ComparisonPair> pairs;
  for (const auto& [a, b] : read_tab_pairs(path, "pair")) {
    pairs.push_back({corpus.require_index(a), corpus.require_index(b)});
  }
  return pairs;
}

void write_sets(const std::filesystem::path& path, const PointwiseSets& sets,
                const Corpus& corpus) {
  auto out = open_out(path);
  for (std::size_t i : sets.pos_set) out << corpus[i].id << "\tP\n";
  for (std::size_t i : sets.neg_set) out << corpus[i].id << "\tN\n";
}

PointwiseSets read_sets(const std::filesystem::path& path, const Corpus& corpus) {
  PointwiseSets sets;
  for (const auto& [id, tag] : read_tab_pairs(path, "sets")) {
    if (tag == "P") sets.pos_set.push_back(corpus.require_index(id));
    else if (tag == "N") sets.neg_set.push_back(corpus.require_index(id));
    else throw DataError(path.string() + ": set tag must be P or N (got '" + tag + "')");
  }
  if (sets.pos_set.empty() || sets.neg_set.empty()) {
    throw DataError(path.string() + ": both P and N sets must be non-empty");
  }
  return sets;
}

void write_labels(const std::filesystem::path& path, std::span<const Label> labels,
                  const Corpus& corpus) {
  if (labels.size() != corpus.size()) {
    throw std::invalid_argument("write_labels: label count differs from corpus size");
  }
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << corpus[i].id << '\t' << to_string(labels[i]) << '\n';
  }
}

std::vector<Label> read_labels(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<std::optional<Label>> found(corpus.size());
  for (const auto& [id, text] : read_tab_pairs(path, "label")) {
    const auto idx = corpus.require_index(id);
    if (found[idx]) throw DataError(path.string() + ": id '" + id + "' labelled twice");
    found[idx] = parse_label(text);
  }
  std::vector<Label> out;
  out.reserve(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (!found[i]) throw DataError(path.string() + ": no label for '" + corpus[i].id + "'");
    out.push_back(*found[i]);
  }
  return out;
}

std::optional<SilverConEx> default_conex_silver(const std::string& dataset) {
  std::string key = dataset;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "redres") return SilverConEx{10, 0.08};
  if (key == "redad") return SilverConEx{10, 0.07};
  if (key == "gad") return SilverConEx{11, 0.07};
  if (key == "bioinfer") return SilverConEx{10, 0.08};
  return std::nullopt;
}

}  // namespace relkit
