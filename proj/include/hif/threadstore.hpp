#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hif/errors.hpp"
#include "hif/rng.hpp"
#include "hif/tensor.hpp"

namespace hif {

/// Lowercase, split on whitespace and punctuation boundaries. No stemming.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

struct Tweet {
  std::string id;
  std::optional<std::string> parent_id;  // absent for root
  long long timestamp_ms = 0;
  std::string raw_text;
  std::vector<std::string> tokens;
  std::string author_id;
};

struct ConversationThread {
  Tweet root;
  std::vector<Tweet> replies;  // chronological, ties broken by id

  std::size_t length() const { return replies.size(); }

  void sort_replies() {
    std::stable_sort(replies.begin(), replies.end(), [](const Tweet& a, const Tweet& b) {
      if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms < b.timestamp_ms;
      return a.id < b.id;
    });
  }

  /// Validates parent resolution, acyclicity, and timestamp monotonicity
  /// along parent links. Throws DataError naming the thread on violation.
  void validate() const {
    std::map<std::string, const Tweet*> by_id;
    by_id[root.id] = &root;
    for (const auto& r : replies) {
      if (by_id.count(r.id)) {
        throw DataError("thread " + root.id + ": duplicate tweet id " + r.id);
      }
      by_id[r.id] = &r;
    }
    if (root.parent_id.has_value()) {
      throw DataError("thread " + root.id + ": root must not have a parent");
    }
    for (const auto& r : replies) {
      if (!r.parent_id.has_value()) {
        throw DataError("thread " + root.id + ": reply " + r.id + " lacks a parent");
      }
      // walk to the root, bounded by node count to catch cycles
      const Tweet* cur = &r;
      std::size_t hops = 0;
      while (cur != &root) {
        if (!cur->parent_id.has_value()) {
          throw DataError("thread " + root.id + ": " + cur->id + " detached from root");
        }
        auto it = by_id.find(*cur->parent_id);
        if (it == by_id.end()) {
          throw DataError("thread " + root.id + ": dangling parent_id " + *cur->parent_id +
                          " cited by " + cur->id);
        }
        if (it->second->timestamp_ms > cur->timestamp_ms) {
          throw DataError("thread " + root.id + ": timestamp of " + cur->id +
                          " precedes its parent");
        }
        cur = it->second;
        if (++hops > by_id.size()) {
          throw DataError("thread " + root.id + ": cyclic parent links at " + r.id);
        }
      }
    }
  }
};

/// Hidden generator ground truth; out-of-band, visible to evaluation only.
struct SyntheticTruth {
  std::string thread_id;
  std::size_t archetype = 0;
  std::vector<double> reply_scores;
};

struct Corpus {
  std::vector<ConversationThread> threads;
  std::string provenance;                // "ingested" | "synthetic"
  std::vector<SyntheticTruth> truth;     // empty, or parallel to threads

  std::size_t size() const { return threads.size(); }
};

namespace detail {

inline Tweet tweet_from_json(const nlohmann::json& j, bool is_root, std::size_t line_no) {
  Tweet t;
  try {
    t.id = j.at("id").get<std::string>();
    t.timestamp_ms = j.at("ts").get<long long>();
    t.raw_text = j.at("text").get<std::string>();
    t.author_id = j.at("author").get<std::string>();
    if (!is_root && j.contains("parent")) t.parent_id = j.at("parent").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": malformed tweet record: " + e.what());
  }
  t.tokens = tokenize(t.raw_text);
  return t;
}

}  // namespace detail

/// One thread per line: {"root":{id,ts,text,author},"replies":[{id,parent,ts,text,author}...]}.
inline Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  corpus.provenance = "ingested";
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, bool> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    if (!j.contains("root")) {
      throw DataError("line " + std::to_string(line_no) + ": missing root");
    }
    ConversationThread th;
    th.root = detail::tweet_from_json(j["root"], true, line_no);
    if (j.contains("replies")) {
      for (const auto& rj : j["replies"]) {
        th.replies.push_back(detail::tweet_from_json(rj, false, line_no));
      }
    }
    th.sort_replies();
    th.validate();
    if (seen_ids.count(th.root.id)) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate thread id " + th.root.id);
    }
    seen_ids[th.root.id] = true;
    corpus.threads.push_back(std::move(th));
  }
  return corpus;
}

inline Corpus parse_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_corpus(in);
}

inline void serialize_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& th : corpus.threads) {
    nlohmann::json j;
    j["root"] = {{"id", th.root.id},
                 {"ts", th.root.timestamp_ms},
                 {"text", th.root.raw_text},
                 {"author", th.root.author_id}};
    j["replies"] = nlohmann::json::array();
    for (const auto& r : th.replies) {
      j["replies"].push_back({{"id", r.id},
                              {"parent", r.parent_id.value()},
                              {"ts", r.timestamp_ms},
                              {"text", r.raw_text},
                              {"author", r.author_id}});
    }
    out << j.dump() << "\n";
  }
}

inline void serialize_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  serialize_corpus(corpus, out);
}

/// Sidecar: "thread_id, archetype, h_1..h_n" per line (comma-separated).
inline void save_truth(const Corpus& corpus, std::ostream& out) {
  out.precision(17);
  for (const auto& t : corpus.truth) {
    out << t.thread_id << "," << t.archetype;
    for (double h : t.reply_scores) out << "," << h;
    out << "\n";
  }
}

inline void save_truth(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write sidecar file: " + path);
  save_truth(corpus, out);
}

inline std::vector<SyntheticTruth> load_truth(std::istream& in) {
  std::vector<SyntheticTruth> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    SyntheticTruth t;
    std::string field;
    if (!std::getline(ss, t.thread_id, ',') || !std::getline(ss, field, ',')) {
      throw DataError("sidecar line " + std::to_string(line_no) + ": malformed");
    }
    t.archetype = static_cast<std::size_t>(std::stoul(field));
    while (std::getline(ss, field, ',')) t.reply_scores.push_back(std::stod(field));
    result.push_back(std::move(t));
  }
  return result;
}

inline std::vector<SyntheticTruth> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sidecar file: " + path);
  return load_truth(in);
}

/// Undirected 0/1 adjacency over [root, replies in chronological order].
inline Tensor thread_adjacency(const ConversationThread& thread) {
  const std::size_t m = thread.length() + 1;
  std::map<std::string, std::size_t> index;
  index[thread.root.id] = 0;
  for (std::size_t i = 0; i < thread.replies.size(); ++i) index[thread.replies[i].id] = i + 1;
  Tensor a = Tensor::zeros({m, m});
  for (const auto& r : thread.replies) {
    const std::size_t c = index.at(r.id);
    const std::size_t p = index.at(r.parent_id.value());
    a.at(c, p) = 1.0;
    a.at(p, c) = 1.0;
  }
  return a;
}

/// Deterministic shuffled split; stratified by hidden labels when present.
inline std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio,
                                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
  if (corpus.size() < 2) throw DataError("corpus too small to split (need >= 2 threads)");
  const bool has_truth = corpus.truth.size() == corpus.threads.size();

  // Group indices per stratum (single stratum when labels are absent).
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    strata[has_truth ? corpus.truth[i].archetype : 0].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, idx] : strata) {
    Rng local = rng.split(label);
    local.shuffle(idx);
    const std::size_t k = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < k ? train_idx : test_idx).push_back(idx[i]);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto take = [&](const std::vector<std::size_t>& idx) {
    Corpus part;
    part.provenance = corpus.provenance;
    for (auto i : idx) {
      part.threads.push_back(corpus.threads[i]);
      if (has_truth) part.truth.push_back(corpus.truth[i]);
    }
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

}  // namespace hif
