#ifndef BPT_CORPUS_HPP
#define BPT_CORPUS_HPP

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/tokens.hpp"

namespace bpt {

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string &name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw UsageError("unknown split: " + name);
}

/// Character vocabulary: reserved ids first, then train-split symbols in
/// first-occurrence order. Unseen characters encode to the unknown id.
class CharVocab {
 public:
  static CharVocab build(const std::string &train_text) {
    CharVocab vocab;
    vocab.ids_.fill(-1);
    for (const char c : train_text) {
      const auto u = static_cast<unsigned char>(c);
      if (vocab.ids_[u] >= 0) continue;
      vocab.ids_[u] = static_cast<int>(kNumReservedIds + vocab.symbols_.size());
      vocab.symbols_.push_back(u);
    }
    return vocab;
  }

  std::size_t size() const { return kNumReservedIds + symbols_.size(); }

  std::size_t encode(char c) const {
    const int id = ids_[static_cast<unsigned char>(c)];
    return id >= 0 ? static_cast<std::size_t>(id) : kUnkId;
  }

  const std::vector<unsigned char> &symbols() const { return symbols_; }

 private:
  std::vector<unsigned char> symbols_;
  std::array<int, 256> ids_{};
};

/// Raw character stream with fixed train/valid/test splits. Split reads
/// go through accessors that count accesses, so tests can prove the
/// training path never touches held-out text.
class LmCorpus {
 public:
  static LmCorpus from_text(std::string text) {
    if (text.size() < 20)
      throw DataError("corpus too small: need at least 20 characters");
    LmCorpus corpus;
    const std::size_t n = text.size();
    const std::size_t train_end = n * 90 / 100;
    const std::size_t valid_end = train_end + (n - train_end) / 2;
    corpus.train_ = text.substr(0, train_end);
    corpus.valid_ = text.substr(train_end, valid_end - train_end);
    corpus.test_ = text.substr(valid_end);
    corpus.vocab_ = CharVocab::build(corpus.train_);
    return corpus;
  }

  static LmCorpus from_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_text(buffer.str());
  }

  const CharVocab &vocab() const { return vocab_; }

  const std::string &split(Split which) const {
    ++access_counts_[static_cast<std::size_t>(which)];
    switch (which) {
      case Split::train: return train_;
      case Split::valid: return valid_;
      case Split::test: return test_;
    }
    throw InvalidInputError("bad split");
  }

  std::size_t access_count(Split which) const {
    return access_counts_[static_cast<std::size_t>(which)];
  }

 private:
  std::string train_, valid_, test_;
  CharVocab vocab_;
  mutable std::array<std::size_t, 3> access_counts_{};
};

/// Non-overlapping fixed-length contexts; a trailing remainder becomes one
/// shorter final chunk. No state crosses chunk boundaries.
inline std::vector<std::vector<std::size_t>> chunk_text(const std::string &text,
                                                        const CharVocab &vocab,
                                                        std::size_t n_max) {
  if (n_max == 0) throw InvalidInputError("chunk_text: n_max must be >= 1");
  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t begin = 0; begin < text.size(); begin += n_max) {
    const std::size_t end = std::min(begin + n_max, text.size());
    std::vector<std::size_t> chunk;
    chunk.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(vocab.encode(text[i]));
    chunks.push_back(std::move(chunk));
  }
  if (chunks.empty()) throw DataError("chunk_text: empty split");
  return chunks;
}

/// Whitespace-token vocabulary in first-occurrence order over train lines.
class WordVocab {
 public:
  void add_sentence(const std::vector<std::string> &words) {
    for (const std::string &w : words)
      if (ids_.emplace(w, kNumReservedIds + words_.size()).second) words_.push_back(w);
  }

  std::size_t size() const { return kNumReservedIds + words_.size(); }

  std::size_t encode(const std::string &word) const {
    const auto it = ids_.find(word);
    return it == ids_.end() ? kUnkId : it->second;
  }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> ids_;
};

struct ClsExample {
  std::size_t label = 0;
  std::vector<std::size_t> tokens;
};

/// Labeled sequences from `label<TAB>text` lines. Labels and vocabulary
/// come from the train split only; an unseen label outside it is a data
/// error, unseen words map to the unknown id.
class ClsCorpus {
 public:
  static ClsCorpus from_file(const std::string &path, std::size_t n_max) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_text(buffer.str(), n_max);
  }

  static ClsCorpus from_text(const std::string &text, std::size_t n_max) {
    struct RawLine {
      std::string label;
      std::vector<std::string> words;
      Split split;
    };
    std::vector<RawLine> lines;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError("classification line " + std::to_string(line_no + 1) +
                        ": expected label<TAB>text");
      RawLine raw;
      raw.label = line.substr(0, tab);
      std::istringstream words(line.substr(tab + 1));
      std::string w;
      while (words >> w) raw.words.push_back(w);
      if (raw.words.size() > n_max) raw.words.resize(n_max);
      // Deterministic interleaved split: every 10th line to valid/test.
      raw.split = line_no % 10 == 8   ? Split::valid
                  : line_no % 10 == 9 ? Split::test
                                      : Split::train;
      lines.push_back(std::move(raw));
      ++line_no;
    }
    if (lines.empty()) throw DataError("classification corpus is empty");

    ClsCorpus corpus;
    for (const RawLine &raw : lines) {
      if (raw.split != Split::train) continue;
      if (corpus.label_ids_.emplace(raw.label, corpus.labels_.size()).second)
        corpus.labels_.push_back(raw.label);
      corpus.vocab_.add_sentence(raw.words);
    }
    if (corpus.labels_.empty()) throw DataError("no training lines in corpus");

    for (const RawLine &raw : lines) {
      const auto it = corpus.label_ids_.find(raw.label);
      if (it == corpus.label_ids_.end())
        throw DataError("label outside the training label set: " + raw.label);
      ClsExample ex;
      ex.label = it->second;
      for (const std::string &w : raw.words) ex.tokens.push_back(corpus.vocab_.encode(w));
      corpus.splits_[static_cast<std::size_t>(raw.split)].push_back(std::move(ex));
    }
    if (corpus.examples(Split::train).empty())
      throw DataError("train split is empty");
    return corpus;
  }

  const WordVocab &vocab() const { return vocab_; }
  const std::vector<std::string> &labels() const { return labels_; }

  const std::vector<ClsExample> &examples(Split which) const {
    ++access_counts_[static_cast<std::size_t>(which)];
    return splits_[static_cast<std::size_t>(which)];
  }

  std::size_t access_count(Split which) const {
    return access_counts_[static_cast<std::size_t>(which)];
  }

 private:
  std::array<std::vector<ClsExample>, 3> splits_;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> label_ids_;
  WordVocab vocab_;
  mutable std::array<std::size_t, 3> access_counts_{};
};

}  // namespace bpt

#endif  // BPT_CORPUS_HPP
