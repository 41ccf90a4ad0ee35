#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "chunkpool/tokenizer.hpp"

namespace chunkpool {

struct ChunkingConfig {
    std::size_t content_len = 510;  // tokens per chunk between [CLS] and [SEP]
    std::optional<std::size_t> max_chunks;

    std::size_t total_len() const { return content_len + 2; }
    void validate() const;
};

struct Chunk {
    std::vector<int> ids;      // total_len entries: [CLS] content [SEP] [PAD]...
    std::vector<double> mask;  // 1 on CLS/content/SEP, 0 on PAD
};

struct ChunkedDocument {
    std::vector<Chunk> chunks;
    bool truncated = false;

    std::size_t n_chunks() const { return chunks.size(); }
};

// Partition the token ids into fixed-length chunks in order; every chunk is
// [CLS]-wrapped and PAD-filled to total_len. Empty input yields one
// specials-only chunk.
ChunkedDocument chunk_document(const TokenSequence& tokens, const ChunkingConfig& cfg,
                               const Vocabulary& vocab);

}  // namespace chunkpool
