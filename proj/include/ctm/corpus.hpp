#pragma once

// Text ingestion: tokenization, stopword/frequency filtering, integer
// indexing, and per-document label sets.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ctm/common.hpp"

namespace ctm {

struct PreprocessConfig {
  std::unordered_set<std::string> stopwords;
  std::size_t min_count = 10;
  bool lowercase = true;

  void validate() const {
    if (min_count < 1) throw Error("min_count must be >= 1");
  }
};

// Splits on whitespace, strips leading/trailing ASCII punctuation from each
// piece, optionally lowercases ASCII. Interior punctuation ("k-nn", "c'mon")
// is kept.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  const auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && is_punct(text[b])) ++b;
    while (e > b && is_punct(text[e - 1])) --e;
    if (b < e) {
      std::string tok(text.substr(b, e - b));
      if (lowercase) {
        for (auto& c : tok) {
          if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
      }
      out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

// Immutable, integer-indexed corpus. Word ids follow first occurrence in the
// filtered token stream.
class Corpus {
 public:
  Corpus() = default;

  // Builds a corpus from already-tokenized documents with no filtering.
  // Empty documents are dropped and recorded.
  static Corpus from_tokens(const std::vector<std::vector<std::string>>& docs) {
    Corpus c;
    for (std::size_t r = 0; r < docs.size(); ++r) {
      if (docs[r].empty()) {
        c.dropped_.push_back(r);
        continue;
      }
      std::vector<WordId> ids;
      ids.reserve(docs[r].size());
      for (const auto& w : docs[r]) ids.push_back(c.vocab_.add(w));
      c.docs_.push_back(std::move(ids));
      c.source_index_.push_back(r);
    }
    return c;
  }

  // Encodes documents against a fixed vocabulary. Unknown words are dropped
  // and counted in `skipped`.
  static Corpus with_vocabulary(const std::vector<std::vector<std::string>>& docs,
                                const Vocabulary& vocab, std::size_t* skipped = nullptr) {
    Corpus c;
    c.vocab_ = vocab;
    std::size_t miss = 0;
    for (std::size_t r = 0; r < docs.size(); ++r) {
      std::vector<WordId> ids;
      for (const auto& w : docs[r]) {
        if (auto id = vocab.find(w)) {
          ids.push_back(*id);
        } else {
          ++miss;
        }
      }
      if (ids.empty()) {
        c.dropped_.push_back(r);
        continue;
      }
      c.docs_.push_back(std::move(ids));
      c.source_index_.push_back(r);
    }
    if (skipped) *skipped = miss;
    return c;
  }

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t doc_count() const { return docs_.size(); }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t doc_length(std::size_t d) const { return docs_[d].size(); }
  std::span<const WordId> doc(std::size_t d) const { return docs_[d]; }
  const std::vector<std::vector<WordId>>& docs() const { return docs_; }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : docs_) n += d.size();
    return n;
  }

  // Index of each kept document in the raw input.
  const std::vector<std::size_t>& source_index() const { return source_index_; }
  // Raw indices of documents dropped because filtering emptied them.
  const std::vector<std::size_t>& dropped() const { return dropped_; }

  // Decodes a document back to its filtered token stream.
  std::vector<std::string> decode(std::size_t d) const {
    std::vector<std::string> out;
    out.reserve(docs_[d].size());
    for (auto id : docs_[d]) out.push_back(vocab_.word(id));
    return out;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.vocab_ == b.vocab_ && a.docs_ == b.docs_ && a.source_index_ == b.source_index_ &&
           a.dropped_ == b.dropped_;
  }

 private:
  Vocabulary vocab_;
  std::vector<std::vector<WordId>> docs_;
  std::vector<std::size_t> source_index_;
  std::vector<std::size_t> dropped_;
};

inline std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& raw_docs,
                                                          const PreprocessConfig& cfg) {
  std::vector<std::vector<std::string>> toks;
  toks.reserve(raw_docs.size());
  for (const auto& text : raw_docs) {
    auto t = tokenize(text, cfg.lowercase);
    std::erase_if(t, [&](const std::string& w) { return cfg.stopwords.contains(w); });
    toks.push_back(std::move(t));
  }
  return toks;
}

// Tokenizes, removes stopwords and words whose corpus frequency is below
// cfg.min_count, and drops documents left empty.
inline Corpus build_corpus(const std::vector<std::string>& raw_docs, const PreprocessConfig& cfg) {
  cfg.validate();
  if (raw_docs.empty()) throw Error("build_corpus: no input documents");

  auto toks = tokenize_all(raw_docs, cfg);
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& doc : toks)
    for (const auto& w : doc) ++freq[w];
  for (auto& doc : toks) {
    std::erase_if(doc, [&](const std::string& w) { return freq[w] < cfg.min_count; });
  }

  Corpus c = Corpus::from_tokens(toks);
  if (c.doc_count() == 0) {
    throw Error("build_corpus: all " + std::to_string(raw_docs.size()) +
                " documents are empty after stopword and min_count=" + std::to_string(cfg.min_count) +
                " filtering");
  }
  return c;
}

// Per-document label ids over a label vocabulary.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(Vocabulary label_vocab, std::vector<std::vector<LabelId>> per_doc)
      : label_vocab_(std::move(label_vocab)), per_doc_(std::move(per_doc)) {}

  const Vocabulary& label_vocab() const { return label_vocab_; }
  std::size_t label_count() const { return label_vocab_.size(); }
  std::size_t doc_count() const { return per_doc_.size(); }
  // Sorted, duplicate-free label ids of document d.
  std::span<const LabelId> labels(std::size_t d) const { return per_doc_[d]; }

  // Labeled set where every document carries every one of the given names.
  static LabelSet all_topics(std::size_t docs, std::size_t topics) {
    Vocabulary v;
    std::vector<LabelId> all(topics);
    for (std::size_t k = 0; k < topics; ++k) {
      v.add("topic" + std::to_string(k));
      all[k] = static_cast<LabelId>(k);
    }
    return LabelSet(std::move(v), std::vector<std::vector<LabelId>>(docs, all));
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  Vocabulary label_vocab_;
  std::vector<std::vector<LabelId>> per_doc_;
};

// Maps per-document label names to ids. raw_labels must align with the kept
// documents of the corpus; every set must be non-empty.
inline LabelSet attach_labels(const Corpus& corpus, const std::vector<std::vector<std::string>>& raw_labels) {
  if (raw_labels.size() != corpus.doc_count()) {
    throw Error("attach_labels: got " + std::to_string(raw_labels.size()) + " label sets for " +
                std::to_string(corpus.doc_count()) + " documents");
  }
  Vocabulary vocab;
  std::vector<std::vector<LabelId>> per_doc;
  per_doc.reserve(raw_labels.size());
  for (std::size_t d = 0; d < raw_labels.size(); ++d) {
    std::set<LabelId> ids;
    for (const auto& name : raw_labels[d]) ids.insert(vocab.add(name));
    if (ids.empty()) {
      throw Error("attach_labels: document " + std::to_string(d) + " (input line " +
                  std::to_string(corpus.source_index()[d] + 1) + ") has no labels");
    }
    per_doc.emplace_back(ids.begin(), ids.end());
  }
  return LabelSet(std::move(vocab), std::move(per_doc));
}

// ---------------------------------------------------------------------------
// File formats

// Raw documents as read from disk, before preprocessing.
struct RawDocuments {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<std::vector<std::string>> labels;  // empty unless the input carried labels
};

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

// Line-delimited JSON, one object per line: {"id": ..., "text": ..., "labels": [...]}.
inline RawDocuments parse_jsonl_documents(std::istream& in, const std::string& source = "<jsonl>") {
  RawDocuments out;
  std::size_t lineno = 0;
  bool any_labels = false;
  for (const auto& line : read_lines(in)) {
    ++lineno;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw ParseError(source, lineno, "expected an object with a string \"text\" field");
    }
    std::string id;
    if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    out.ids.push_back(id.empty() ? std::to_string(out.texts.size()) : id);
    out.texts.push_back(j["text"].get<std::string>());
    std::vector<std::string> labels;
    if (j.contains("labels")) {
      if (!j["labels"].is_array()) throw ParseError(source, lineno, "\"labels\" must be an array");
      for (const auto& l : j["labels"]) {
        if (!l.is_string()) throw ParseError(source, lineno, "labels must be strings");
        labels.push_back(l.get<std::string>());
      }
      any_labels = true;
    }
    out.labels.push_back(std::move(labels));
  }
  if (!any_labels) out.labels.clear();
  return out;
}

// Plain text, one document per line.
inline RawDocuments parse_text_documents(std::istream& in) {
  RawDocuments out;
  out.texts = read_lines(in);
  for (std::size_t i = 0; i < out.texts.size(); ++i) out.ids.push_back(std::to_string(i));
  return out;
}

inline RawDocuments read_documents(const std::string& path) {
  auto in = open_input(path);
  bool jsonl = path.ends_with(".jsonl") || path.ends_with(".ndjson");
  if (!jsonl) {
    auto c = in.peek();
    while (c == ' ' || c == '\t') {
      in.get();
      c = in.peek();
    }
    jsonl = (c == '{');
    in.clear();
    in.seekg(0);
  }
  return jsonl ? parse_jsonl_documents(in, path) : parse_text_documents(in);
}

// `doc_index<TAB>label1,label2,...`; doc_index is the 0-based raw document
// index. Documents without a line get an empty set.
inline std::vector<std::vector<std::string>> parse_label_lines(std::istream& in, std::size_t raw_doc_count,
                                                               const std::string& source = "<labels>") {
  std::vector<std::vector<std::string>> out(raw_doc_count);
  std::size_t lineno = 0;
  for (const auto& line : read_lines(in)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, lineno, "expected doc_index<TAB>labels");
    std::size_t idx = 0;
    try {
      std::size_t used = 0;
      auto v = std::stoll(line.substr(0, tab), &used);
      if (used != tab || v < 0) throw std::invalid_argument("");
      idx = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad document index '" + line.substr(0, tab) + "'");
    }
    if (idx >= raw_doc_count) {
      throw ParseError(source, lineno, "document index " + std::to_string(idx) + " out of range");
    }
    std::stringstream ss(line.substr(tab + 1));
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto b = name.find_first_not_of(" \t");
      auto e = name.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      out[idx].push_back(name.substr(b, e - b + 1));
    }
  }
  return out;
}

// Selects the label sets of the documents the corpus kept.
inline std::vector<std::vector<std::string>> align_labels(const Corpus& corpus,
                                                          const std::vector<std::vector<std::string>>& raw) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.doc_count());
  for (auto r : corpus.source_index()) {
    if (r >= raw.size()) throw Error("label data shorter than the document list");
    out.push_back(raw[r]);
  }
  return out;
}

inline std::unordered_set<std::string> read_stopwords(std::istream& in) {
  std::unordered_set<std::string> out;
  for (auto& line : read_lines(in)) {
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace ctm
