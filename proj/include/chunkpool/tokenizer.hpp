#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace chunkpool {

// Subword string -> dense id table with the four reserved specials.
class Vocabulary {
  public:
    // Specials first ([PAD]=0, [UNK]=1, [CLS]=2, [SEP]=3), then the given
    // words in order; duplicates and special strings are skipped.
    static Vocabulary build(const std::vector<std::string>& words);

    // Verbatim reconstruction: line order is id order, nothing is reordered
    // or skipped. Duplicates or missing specials are errors.
    static Vocabulary from_ordered(const std::vector<std::string>& words);

    int id_of(const std::string& piece) const;  // -1 when absent
    const std::string& word_at(int id) const;
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    int pad_id() const { return pad_id_; }
    int unk_id() const { return unk_id_; }
    int cls_id() const { return cls_id_; }
    int sep_id() const { return sep_id_; }

  private:
    friend Vocabulary load_vocab(const std::string& path);
    void index_specials();

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
    int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1;
};

struct TokenSequence {
    std::vector<int> ids;
};

// One subword per line, line number = id. The four specials must be present.
Vocabulary load_vocab(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);

// Lowercase (ASCII range), split on Unicode whitespace, and give every
// Unicode punctuation character its own token.
std::vector<std::string> basic_tokenize(const std::string& text);

// Greedy longest-match-first subword split; continuations carry "##". A word
// with an uncoverable suffix, or longer than 100 characters, becomes [UNK].
std::vector<std::string> wordpiece(const std::string& word, const Vocabulary& vocab);

TokenSequence encode(const std::string& text, const Vocabulary& vocab);

}  // namespace chunkpool
