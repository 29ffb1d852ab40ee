#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "relkit/common.hpp"

namespace relkit {

class Corpus;

inline constexpr int kRootHead = -1;

struct DepNode {
  std::string form;
  std::string upos;
  int head = kRootHead;  // 0-based token index, or kRootHead
  std::string deprel;
};

/// Validated dependency tree over the tokens of one sentence.
class DepTree {
 public:
  /// Throws DataError unless the nodes form a single-rooted tree.
  DepTree(std::string sentence_id, std::vector<DepNode> nodes);

  const std::string& sentence_id() const { return sentence_id_; }
  const std::vector<DepNode>& nodes() const { return nodes_; }
  const DepNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int root() const { return root_; }
  /// Distance from the root along head links.
  int depth(int i) const { return depth_[static_cast<std::size_t>(i)]; }

 private:
  std::string sentence_id_;
  std::vector<DepNode> nodes_;
  std::vector<int> depth_;
  int root_ = -1;
};

using TreeBank = std::map<std::string, DepTree>;

/// CoNLL-U reader. Uses ID, FORM, UPOS, HEAD and DEPREL; skips multiword-token
/// and empty-node lines; sentence ids come from `# sent_id = <id>`.
TreeBank load_conllu(const std::filesystem::path& path);
TreeBank read_conllu(std::istream& in, const std::string& source_name);
void write_conllu(std::ostream& out, const DepTree& tree);

/// Token-count agreement between every corpus record and its tree.
void check_against_corpus(const TreeBank& trees, const Corpus& corpus);

/// Syntactic head of a span: the token whose head lies outside the span,
/// leftmost on ties.
int entity_anchor(const DepTree& tree, TokenSpan span);

struct SdpResult {
  std::vector<int> path;             // anchor(e1) ... anchor(e2)
  std::vector<std::string> deprels;  // one label per traversed arc
  std::vector<std::string> upos_seq;
};

/// Unique path between the two entity anchors in the undirected tree.
SdpResult shortest_dependency_path(const DepTree& tree, TokenSpan e1, TokenSpan e2);

/// True iff some token of one span has its head inside the other span.
bool check_direct_link(const DepTree& tree, TokenSpan e1, TokenSpan e2);

enum class Assumption {
  kRootVerbOnPath = 1,  // the root is a verb and lies on the path
  kRootOnPath = 2,
  kVerbOnPath = 3,
};

enum class Heuristic {
  kAcceptAll = 1,
  kRejectConjunction = 2,  // a conjunction inside the path vetoes the relation
};

enum class ConjunctionMode {
  kUpos,    // interior token tagged CCONJ or SCONJ
  kDeprel,  // interior token attached by a `conj` relation
};

struct SardConfig {
  Assumption assumption = Assumption::kVerbOnPath;
  Heuristic heuristic = Heuristic::kAcceptAll;
  ConjunctionMode conj_mode = ConjunctionMode::kUpos;

  /// Builds a config from the integer ids used on the command line.
  static SardConfig from_ids(int a_id, int h_id,
                             ConjunctionMode mode = ConjunctionMode::kUpos);
};

bool check_assumption(Assumption a, const SdpResult& sdp, const DepTree& tree);
bool check_assumption(int a_id, const SdpResult& sdp, const DepTree& tree);
bool has_interior_conjunction(const SdpResult& sdp, const DepTree& tree,
                              ConjunctionMode mode);

Label sard_predict(const DepTree& tree, TokenSpan e1, TokenSpan e2, const SardConfig& cfg);

/// SARD over every corpus record; the tree bank must cover all ids.
std::vector<Label> sard_predict_corpus(const Corpus& corpus, const TreeBank& trees,
                                       const SardConfig& cfg, int jobs = 1);

}  // namespace relkit
