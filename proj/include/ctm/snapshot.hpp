#pragma once

// Versioned single-file model snapshot. See docs/snapshot_format.md.
// All integers are little-endian; doubles are stored as their IEEE-754 bit
// patterns, so write -> read -> write is byte-identical.

#include <bit>
#include <fstream>
#include <sstream>
#include <string>

#include "ctm/model_state.hpp"

namespace ctm {

inline constexpr char kSnapshotMagic[8] = {'C', 'T', 'M', 'S', 'N', 'A', 'P', '\0'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void strings(const std::vector<std::string>& v) {
    u64(v.size());
    for (const auto& s : v) str(s);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double v : m.data()) f64(v);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t min_elem_bytes) {
    auto n = u64();
    if (min_elem_bytes && n > (data_.size() - pos_) / min_elem_bytes) throw Error("snapshot: truncated or corrupt");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    auto n = count(1);
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<std::string> strings() {
    std::vector<std::string> v(count(8));
    for (auto& s : v) s = str();
    return v;
  }
  Matrix matrix() {
    auto r = u64();
    auto c = u64();
    if (c != 0 && r > (data_.size() - pos_) / 8 / c) throw Error("snapshot: truncated or corrupt");
    Matrix m(r, c);
    for (auto& v : m.data()) v = f64();
    return m;
  }
  std::size_t pos() const { return pos_; }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("snapshot: truncated or corrupt");
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const TopicModel& m) {
  detail::Writer w;
  w.raw(kSnapshotMagic, sizeof kSnapshotMagic);
  w.u32(kSnapshotVersion);

  const auto& hp = m.hp;
  w.u8(static_cast<std::uint8_t>(hp.kind));
  w.u64(hp.topics);
  w.f64(hp.alpha);
  w.u64(hp.alpha_vector.size());
  for (double a : hp.alpha_vector) w.f64(a);
  w.f64(hp.beta);
  w.u64(hp.iterations);
  w.u64(hp.seed);
  w.u8(static_cast<std::uint8_t>(hp.kb_factor));
  w.u8(hp.random_scan ? 1 : 0);
  w.u64(hp.average_last);

  w.u64(m.vocab_hash);
  w.u64(m.kb_hash);
  w.strings(m.vocab.words());
  w.strings(m.concept_names);
  w.u64(m.concept_words.size());
  for (const auto& row : m.concept_words) {
    w.u64(row.size());
    for (const auto& e : row) {
      w.u32(e.word);
      w.f64(e.prob);
      w.f64(e.raw_prob);
    }
  }
  w.u64(m.atomic_word_of.size());
  for (auto a : m.atomic_word_of) w.u32(a);
  w.strings(m.topic_names);
  w.matrix(m.phi);
  w.matrix(m.theta);

  Fnv1a h;
  h.bytes(w.bytes().data(), w.bytes().size());
  w.u64(h.value());
  return w.bytes();
}

inline TopicModel deserialize(std::string_view data) {
  if (data.size() < sizeof kSnapshotMagic + 12 || data.substr(0, sizeof kSnapshotMagic) !=
                                                       std::string_view(kSnapshotMagic, sizeof kSnapshotMagic)) {
    throw Error("snapshot: bad magic");
  }
  {
    Fnv1a h;
    h.bytes(data.data(), data.size() - 8);
    detail::Reader tail(data.substr(data.size() - 8));
    if (tail.u64() != h.value()) throw Error("snapshot: checksum mismatch");
  }
  detail::Reader r(data.substr(0, data.size() - 8));
  for (std::size_t i = 0; i < sizeof kSnapshotMagic; ++i) r.u8();
  const auto version = r.u32();
  if (version != kSnapshotVersion) throw Error("snapshot: unsupported version " + std::to_string(version));

  TopicModel m;
  auto& hp = m.hp;
  const auto kind = r.u8();
  if (kind > 3) throw Error("snapshot: bad model kind");
  hp.kind = static_cast<ModelKind>(kind);
  hp.topics = r.u64();
  hp.alpha = r.f64();
  hp.alpha_vector.resize(r.count(8));
  for (auto& a : hp.alpha_vector) a = r.f64();
  hp.beta = r.f64();
  hp.iterations = r.u64();
  hp.seed = r.u64();
  hp.kb_factor = static_cast<KbFactor>(r.u8());
  hp.random_scan = r.u8() != 0;
  hp.average_last = r.u64();

  m.vocab_hash = r.u64();
  m.kb_hash = r.u64();
  m.vocab = Vocabulary(r.strings());
  m.concept_names = r.strings();
  m.concept_words.resize(r.count(8));
  for (auto& row : m.concept_words) {
    row.resize(r.count(20));
    for (auto& e : row) {
      e.word = r.u32();
      e.prob = r.f64();
      e.raw_prob = r.f64();
    }
  }
  m.atomic_word_of.resize(r.count(4));
  for (auto& a : m.atomic_word_of) a = r.u32();
  m.topic_names = r.strings();
  m.phi = r.matrix();
  m.theta = r.matrix();

  if (m.vocab.hash() != m.vocab_hash) throw Error("snapshot: vocabulary hash mismatch");
  if (m.phi.rows() != hp.topics || m.theta.cols() != hp.topics) throw Error("snapshot: matrix shape mismatch");
  if (m.phi.cols() != m.concept_names.size() + m.atomic_word_of.size()) throw Error("snapshot: entity count mismatch");
  return m;
}

inline void save_snapshot(const TopicModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  const auto bytes = serialize(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

inline TopicModel load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace ctm
