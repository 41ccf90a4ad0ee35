#include "chunkpool/chunker.hpp"

#include "chunkpool/errors.hpp"

namespace chunkpool {

void ChunkingConfig::validate() const {
    if (content_len == 0) throw ConfigError("chunking: content_len must be positive");
    if (max_chunks && *max_chunks == 0)
        throw ConfigError("chunking: max_chunks must be positive when set");
}

ChunkedDocument chunk_document(const TokenSequence& tokens, const ChunkingConfig& cfg,
                               const Vocabulary& vocab) {
    cfg.validate();
    const std::size_t lc = cfg.content_len;
    const std::size_t total = cfg.total_len();
    const std::size_t n = tokens.ids.size();
    const std::size_t groups = n == 0 ? 1 : (n + lc - 1) / lc;

    ChunkedDocument doc;
    std::size_t keep = groups;
    if (cfg.max_chunks && *cfg.max_chunks < groups) {
        keep = *cfg.max_chunks;
        doc.truncated = true;
    }

    for (std::size_t g = 0; g < keep; ++g) {
        const std::size_t begin = g * lc;
        const std::size_t end = std::min(begin + lc, n);
        Chunk chunk;
        chunk.ids.reserve(total);
        chunk.ids.push_back(vocab.cls_id());
        for (std::size_t i = begin; i < end; ++i) chunk.ids.push_back(tokens.ids[i]);
        chunk.ids.push_back(vocab.sep_id());
        chunk.mask.assign(chunk.ids.size(), 1.0);
        chunk.ids.resize(total, vocab.pad_id());
        chunk.mask.resize(total, 0.0);
        doc.chunks.push_back(std::move(chunk));
    }
    return doc;
}

}  // namespace chunkpool
