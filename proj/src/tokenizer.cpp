#include "chunkpool/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include "chunkpool/errors.hpp"

namespace chunkpool {

namespace {

struct CodepointRange {
    std::uint32_t lo, hi;
};

#include "generated/unicode_ranges.inc"

template <std::size_t N>
bool in_ranges(const CodepointRange (&ranges)[N], std::uint32_t cp) {
    auto it = std::upper_bound(ranges, ranges + N, cp,
                               [](std::uint32_t v, const CodepointRange& r) { return v < r.lo; });
    return it != ranges && (it - 1)->hi >= cp;
}

bool is_punctuation(std::uint32_t cp) { return in_ranges(kPunctuationRanges, cp); }

bool is_whitespace(std::uint32_t cp) {
    if ((cp >= 0x09 && cp <= 0x0D) || cp == 0x85) return true;
    return in_ranges(kSpaceSeparatorRanges, cp);
}

// Decodes the codepoint at byte position i, advancing i past it. Bytes that
// do not form a valid sequence are taken one at a time as their own values,
// so tokenization is total over arbitrary input.
std::uint32_t next_codepoint(const std::string& s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
        ++i;
        return b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        if ((byte(i + k) & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    i += len;
    return cp;
}

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

bool is_special(const std::string& w) {
    for (const char* s : kSpecials)
        if (w == s) return true;
    return false;
}

constexpr std::size_t kMaxWordChars = 100;

}  // namespace

void Vocabulary::index_specials() {
    pad_id_ = id_of("[PAD]");
    unk_id_ = id_of("[UNK]");
    cls_id_ = id_of("[CLS]");
    sep_id_ = id_of("[SEP]");
    for (const char* s : kSpecials)
        if (id_of(s) < 0)
            throw DataError("vocabulary is missing special token " + std::string(s));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const char* s : kSpecials) {
        v.ids_.emplace(s, static_cast<int>(v.words_.size()));
        v.words_.emplace_back(s);
    }
    for (const std::string& w : words) {
        if (is_special(w) || v.ids_.count(w)) continue;
        v.ids_.emplace(w, static_cast<int>(v.words_.size()));
        v.words_.push_back(w);
    }
    v.index_specials();
    return v;
}

Vocabulary Vocabulary::from_ordered(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const std::string& w : words) {
        if (v.ids_.count(w)) throw DataError("duplicate vocabulary entry \"" + w + "\"");
        v.ids_.emplace(w, static_cast<int>(v.words_.size()));
        v.words_.push_back(w);
    }
    v.index_specials();
    return v;
}

int Vocabulary::id_of(const std::string& piece) const {
    auto it = ids_.find(piece);
    return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::word_at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
        throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
    return words_[static_cast<std::size_t>(id)];
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary file " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty())
            throw DataError("empty line " + std::to_string(v.words_.size() + 1) +
                            " in vocabulary file " + path);
        if (v.ids_.count(line))
            throw DataError("duplicate vocabulary entry \"" + line + "\" in " + path);
        v.ids_.emplace(line, static_cast<int>(v.words_.size()));
        v.words_.push_back(line);
    }
    v.index_specials();
    return v;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const std::string& w : vocab.words()) out << w << '\n';
    if (!out) throw DataError("failed writing vocabulary file " + path);
}

std::vector<std::string> basic_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string word;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::uint32_t cp = next_codepoint(text, i);
        if (is_whitespace(cp)) {
            if (!word.empty()) tokens.push_back(std::move(word));
            word.clear();
        } else if (is_punctuation(cp)) {
            if (!word.empty()) tokens.push_back(std::move(word));
            word.clear();
            std::string punct;
            append_utf8(punct, cp);
            tokens.push_back(std::move(punct));
        } else {
            append_utf8(word, cp >= 'A' && cp <= 'Z' ? cp + 32 : cp);
        }
    }
    if (!word.empty()) tokens.push_back(std::move(word));
    return tokens;
}

std::vector<std::string> wordpiece(const std::string& word, const Vocabulary& vocab) {
    // codepoint boundaries, for slicing at character granularity
    std::vector<std::size_t> bounds;
    std::size_t i = 0;
    while (i < word.size()) {
        bounds.push_back(i);
        next_codepoint(word, i);
    }
    bounds.push_back(word.size());
    const std::size_t chars = bounds.size() - 1;

    const std::vector<std::string> unk = {"[UNK]"};
    if (chars == 0 || chars > kMaxWordChars) return unk;

    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < chars) {
        std::size_t end = chars;
        std::string match;
        while (end > start) {
            std::string piece =
                word.substr(bounds[start], bounds[end] - bounds[start]);
            if (start > 0) piece = "##" + piece;
            if (vocab.id_of(piece) >= 0) {
                match = std::move(piece);
                break;
            }
            --end;
        }
        if (match.empty()) return unk;
        pieces.push_back(std::move(match));
        start = end;
    }
    return pieces;
}

TokenSequence encode(const std::string& text, const Vocabulary& vocab) {
    TokenSequence seq;
    for (const std::string& word : basic_tokenize(text))
        for (const std::string& piece : wordpiece(word, vocab))
            seq.ids.push_back(vocab.id_of(piece));
    return seq;
}

}  // namespace chunkpool
