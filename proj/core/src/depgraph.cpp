#include "relkit/depgraph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "relkit/corpus.hpp"

namespace relkit {

DepTree::DepTree(std::string sentence_id, std::vector<DepNode> nodes)
    : sentence_id_(std::move(sentence_id)), nodes_(std::move(nodes)) {
  const int n = size();
  const auto where = "sentence '" + sentence_id_ + "': ";
  if (n == 0) throw DataError(where + "empty tree");
  for (int i = 0; i < n; ++i) {
    const int h = nodes_[static_cast<std::size_t>(i)].head;
    if (h != kRootHead && (h < 0 || h >= n)) {
      throw DataError(where + "head index out of range at token " + std::to_string(i + 1));
    }
  }

  // Cycle check first: a cycle is reported as such even when it also leaves
  // the sentence without a root.
  enum : char { kUnseen, kOnWalk, kDone };
  std::vector<char> state(static_cast<std::size_t>(n), kUnseen);
  std::vector<int> walk;
  for (int i = 0; i < n; ++i) {
    walk.clear();
    int cur = i;
    while (cur != kRootHead && state[static_cast<std::size_t>(cur)] == kUnseen) {
      state[static_cast<std::size_t>(cur)] = kOnWalk;
      walk.push_back(cur);
      cur = nodes_[static_cast<std::size_t>(cur)].head;
    }
    if (cur != kRootHead && state[static_cast<std::size_t>(cur)] == kOnWalk) {
      throw DataError(where + "cyclic head links");
    }
    for (int w : walk) state[static_cast<std::size_t>(w)] = kDone;
  }

  for (int i = 0; i < n; ++i) {
    if (nodes_[static_cast<std::size_t>(i)].head == kRootHead) {
      if (root_ != -1) throw DataError(where + "multiple roots");
      root_ = i;
    }
  }
  if (root_ == -1) throw DataError(where + "no root");

  depth_.assign(static_cast<std::size_t>(n), -1);
  depth_[static_cast<std::size_t>(root_)] = 0;
  std::vector<int> chain;
  for (int i = 0; i < n; ++i) {
    chain.clear();
    int cur = i;
    while (depth_[static_cast<std::size_t>(cur)] == -1) {
      chain.push_back(cur);
      cur = nodes_[static_cast<std::size_t>(cur)].head;
    }
    int d = depth_[static_cast<std::size_t>(cur)];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      depth_[static_cast<std::size_t>(*it)] = ++d;
    }
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& s, const std::string& where, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError(where + "invalid " + what + " '" + s + "'");
  }
}

}  // namespace

TreeBank read_conllu(std::istream& in, const std::string& source_name) {
  TreeBank bank;
  std::string sent_id;
  std::vector<DepNode> nodes;
  std::size_t block_start = 0;
  std::size_t line_no = 0;
  bool in_block = false;

  auto flush = [&] {
    if (!in_block) return;
    const auto where = source_name + ":" + std::to_string(block_start) + ": ";
    if (sent_id.empty()) throw DataError(where + "missing sentence id (# sent_id)");
    if (bank.count(sent_id)) throw DataError(where + "duplicate sentence id '" + sent_id + "'");
    try {
      bank.emplace(sent_id, DepTree(sent_id, std::move(nodes)));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    nodes.clear();
    sent_id.clear();
    in_block = false;
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (!in_block) {
      in_block = true;
      block_start = line_no;
    }
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    if (line[0] == '#') {
      const auto body = trim(line.substr(1));
      if (body.rfind("sent_id", 0) == 0) {
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw DataError(where + "malformed sent_id comment");
        sent_id = trim(body.substr(eq + 1));
      }
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw DataError(where + "expected 10 tab-separated columns, found " +
                      std::to_string(cols.size()));
    }
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    const int id = parse_int(cols[0], where, "token id");
    if (id != static_cast<int>(nodes.size()) + 1) {
      throw DataError(where + "token ids must be consecutive from 1");
    }
    const int head = parse_int(cols[6], where, "head");
    DepNode node;
    node.form = cols[1];
    node.upos = cols[3];
    node.head = head == 0 ? kRootHead : head - 1;
    node.deprel = cols[7];
    nodes.push_back(std::move(node));
  }
  flush();
  return bank;
}

TreeBank load_conllu(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open parse file " + path.string());
  return read_conllu(in, path.string());
}

void write_conllu(std::ostream& out, const DepTree& tree) {
  out << "# sent_id = " << tree.sentence_id() << '\n';
  for (int i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    out << (i + 1) << '\t' << n.form << "\t_\t" << n.upos << "\t_\t_\t"
        << (n.head == kRootHead ? 0 : n.head + 1) << '\t' << n.deprel << "\t_\t_\n";
  }
  out << '\n';
}

void check_against_corpus(const TreeBank& trees, const Corpus& corpus) {
  for (const auto& r : corpus.records()) {
    const auto it = trees.find(r.id);
    if (it == trees.end()) throw DataError("no parse for sentence '" + r.id + "'");
    if (it->second.size() != r.token_count()) {
      throw DataError("sentence '" + r.id + "': parse has " + std::to_string(it->second.size()) +
                      " tokens, corpus has " + std::to_string(r.token_count()));
    }
  }
}

int entity_anchor(const DepTree& tree, TokenSpan span) {
  if (!span.valid_for(tree.size())) {
    throw std::invalid_argument("entity_anchor: span out of bounds in sentence '" +
                                tree.sentence_id() + "'");
  }
  for (int i = span.start; i <= span.end; ++i) {
    const int h = tree.node(i).head;
    if (h == kRootHead || !span.contains(h)) return i;
  }
  throw std::invalid_argument("entity_anchor: anchor not found in sentence '" +
                              tree.sentence_id() + "'");
}

SdpResult shortest_dependency_path(const DepTree& tree, TokenSpan e1, TokenSpan e2) {
  if (e1 == e2) throw std::invalid_argument("shortest_dependency_path: entities identical");
  if (e1.overlaps(e2)) throw std::invalid_argument("shortest_dependency_path: spans overlap");
  const int a = entity_anchor(tree, e1);
  const int b = entity_anchor(tree, e2);

  // Climb from the deeper anchor until both meet at the lowest common ancestor.
  std::vector<int> up_a{a};
  std::vector<int> up_b{b};
  int x = a;
  int y = b;
  while (tree.depth(x) > tree.depth(y)) up_a.push_back(x = tree.node(x).head);
  while (tree.depth(y) > tree.depth(x)) up_b.push_back(y = tree.node(y).head);
  while (x != y) {
    up_a.push_back(x = tree.node(x).head);
    up_b.push_back(y = tree.node(y).head);
  }

  SdpResult out;
  out.path = std::move(up_a);
  out.path.insert(out.path.end(), up_b.rbegin() + 1, up_b.rend());
  for (std::size_t i = 0; i + 1 < out.path.size(); ++i) {
    const int u = out.path[i];
    const int v = out.path[i + 1];
    out.deprels.push_back(tree.node(u).head == v ? tree.node(u).deprel : tree.node(v).deprel);
  }
  for (int t : out.path) out.upos_seq.push_back(tree.node(t).upos);
  return out;
}

bool check_direct_link(const DepTree& tree, TokenSpan e1, TokenSpan e2) {
  auto heads_into = [&](TokenSpan from, TokenSpan to) {
    for (int i = from.start; i <= from.end; ++i) {
      const int h = tree.node(i).head;
      if (h != kRootHead && to.contains(h)) return true;
    }
    return false;
  };
  if (!e1.valid_for(tree.size()) || !e2.valid_for(tree.size())) {
    throw std::invalid_argument("check_direct_link: span out of bounds");
  }
  return heads_into(e1, e2) || heads_into(e2, e1);
}

SardConfig SardConfig::from_ids(int a_id, int h_id, ConjunctionMode mode) {
  if (a_id < 1 || a_id > 3) {
    throw std::invalid_argument("assumption id must be 1, 2 or 3 (got " + std::to_string(a_id) + ")");
  }
  if (h_id < 1 || h_id > 2) {
    throw std::invalid_argument("heuristic id must be 1 or 2 (got " + std::to_string(h_id) + ")");
  }
  return {static_cast<Assumption>(a_id), static_cast<Heuristic>(h_id), mode};
}

bool check_assumption(Assumption a, const SdpResult& sdp, const DepTree& tree) {
  const int root = tree.root();
  const bool root_on_path = std::find(sdp.path.begin(), sdp.path.end(), root) != sdp.path.end();
  switch (a) {
    case Assumption::kRootVerbOnPath:
      return root_on_path && tree.node(root).upos == "VERB";
    case Assumption::kRootOnPath:
      return root_on_path;
    case Assumption::kVerbOnPath:
      return std::any_of(sdp.path.begin(), sdp.path.end(),
                         [&](int t) { return tree.node(t).upos == "VERB"; });
  }
  throw std::invalid_argument("unknown assumption");
}

bool check_assumption(int a_id, const SdpResult& sdp, const DepTree& tree) {
  if (a_id < 1 || a_id > 3) {
    throw std::invalid_argument("unknown assumption id " + std::to_string(a_id));
  }
  return check_assumption(static_cast<Assumption>(a_id), sdp, tree);
}

bool has_interior_conjunction(const SdpResult& sdp, const DepTree& tree, ConjunctionMode mode) {
  if (sdp.path.size() < 3) return false;
  for (std::size_t i = 1; i + 1 < sdp.path.size(); ++i) {
    const auto& node = tree.node(sdp.path[i]);
    if (mode == ConjunctionMode::kUpos) {
      if (node.upos == "CCONJ" || node.upos == "SCONJ") return true;
    } else if (node.deprel == "conj") {
      return true;
    }
  }
  return false;
}

Label sard_predict(const DepTree& tree, TokenSpan e1, TokenSpan e2, const SardConfig& cfg) {
  const SdpResult sdp = shortest_dependency_path(tree, e1, e2);
  const bool direct = check_direct_link(tree, e1, e2);
  const bool holds = check_assumption(cfg.assumption, sdp, tree);
  if (!holds && !direct) return Label::kNegative;
  if (cfg.heuristic == Heuristic::kAcceptAll) return Label::kPositive;
  return has_interior_conjunction(sdp, tree, cfg.conj_mode) ? Label::kNegative
                                                            : Label::kPositive;
}

std::vector<Label> sard_predict_corpus(const Corpus& corpus, const TreeBank& trees,
                                       const SardConfig& cfg, int jobs) {
  check_against_corpus(trees, corpus);
  std::vector<Label> out(corpus.size(), Label::kNegative);
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const auto& r = corpus[i];
    out[i] = sard_predict(trees.at(r.id), r.e1, r.e2, cfg);
  });
  return out;
}

}  // namespace relkit
