#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "chunkpool/chunker.hpp"
#include "chunkpool/errors.hpp"
#include "chunkpool/rng.hpp"

using namespace chunkpool;

namespace {

Vocabulary test_vocab() { return Vocabulary::build({"w0", "w1", "w2", "w3", "w4"}); }

TokenSequence seq_of(std::size_t n, const Vocabulary& v) {
    TokenSequence s;
    for (std::size_t i = 0; i < n; ++i)
        s.ids.push_back(v.id_of("w" + std::to_string(i % 5)));
    return s;
}

double mask_sum(const Chunk& c) {
    return std::accumulate(c.mask.begin(), c.mask.end(), 0.0);
}

}  // namespace

TEST_CASE("exact division fills every chunk") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;  // 510 content, total 512
    ChunkedDocument doc = chunk_document(seq_of(1020, v), cfg, v);
    CHECK(doc.n_chunks() == 2);
    CHECK_FALSE(doc.truncated);
    for (const Chunk& c : doc.chunks) {
        CHECK(c.ids.size() == 512);
        CHECK(mask_sum(c) == 512.0);
        CHECK(c.ids.front() == v.cls_id());
        CHECK(c.ids.back() == v.sep_id());
    }
}

TEST_CASE("short document pads the single chunk") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;
    ChunkedDocument doc = chunk_document(seq_of(5, v), cfg, v);
    CHECK(doc.n_chunks() == 1);
    const Chunk& c = doc.chunks[0];
    CHECK(c.ids.size() == 512);
    CHECK(mask_sum(c) == 7.0);
    CHECK(c.ids[0] == v.cls_id());
    CHECK(c.ids[6] == v.sep_id());
    for (std::size_t i = 7; i < 512; ++i) {
        CHECK(c.ids[i] == v.pad_id());
        CHECK(c.mask[i] == 0.0);
    }
}

TEST_CASE("empty document yields one specials-only chunk") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;
    ChunkedDocument doc = chunk_document(TokenSequence{}, cfg, v);
    CHECK(doc.n_chunks() == 1);
    CHECK(mask_sum(doc.chunks[0]) == 2.0);
    CHECK(doc.chunks[0].ids[0] == v.cls_id());
    CHECK(doc.chunks[0].ids[1] == v.sep_id());
    CHECK(doc.chunks[0].ids[2] == v.pad_id());
}

TEST_CASE("max_chunks truncates and flags") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;
    cfg.content_len = 4;
    cfg.max_chunks = 2;
    ChunkedDocument doc = chunk_document(seq_of(13, v), cfg, v);  // 4 groups
    CHECK(doc.n_chunks() == 2);
    CHECK(doc.truncated);

    cfg.max_chunks = 10;
    doc = chunk_document(seq_of(13, v), cfg, v);
    CHECK(doc.n_chunks() == 4);
    CHECK_FALSE(doc.truncated);
}

TEST_CASE("round trip reproduces the input ids") {
    Vocabulary v = test_vocab();
    Prng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        ChunkingConfig cfg;
        cfg.content_len = 1 + rng.uniform_int(9);
        TokenSequence in = seq_of(rng.uniform_int(40), v);
        ChunkedDocument doc = chunk_document(in, cfg, v);
        CHECK_FALSE(doc.truncated);
        CHECK(doc.n_chunks() ==
              std::max<std::size_t>(1, (in.ids.size() + cfg.content_len - 1) /
                                           cfg.content_len));
        std::vector<int> out;
        for (const Chunk& c : doc.chunks) {
            CHECK(c.ids.size() == cfg.total_len());
            CHECK(c.mask.size() == cfg.total_len());
            for (std::size_t i = 0; i < c.ids.size(); ++i) {
                if (c.mask[i] == 0.0) continue;
                if (c.ids[i] == v.cls_id() || c.ids[i] == v.sep_id()) continue;
                out.push_back(c.ids[i]);
            }
        }
        CHECK(out == in.ids);
    }
}

TEST_CASE("all chunks except possibly the last carry full content") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;
    cfg.content_len = 6;
    ChunkedDocument doc = chunk_document(seq_of(15, v), cfg, v);
    CHECK(doc.n_chunks() == 3);
    CHECK(mask_sum(doc.chunks[0]) == 8.0);
    CHECK(mask_sum(doc.chunks[1]) == 8.0);
    CHECK(mask_sum(doc.chunks[2]) == 5.0);  // 3 content + specials
}

TEST_CASE("config validation") {
    ChunkingConfig cfg;
    cfg.content_len = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.content_len = 4;
    cfg.max_chunks = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(ChunkingConfig{}.total_len() == 512);
}

TEST_CASE("chunking is deterministic") {
    Vocabulary v = test_vocab();
    ChunkingConfig cfg;
    cfg.content_len = 3;
    TokenSequence in = seq_of(11, v);
    ChunkedDocument a = chunk_document(in, cfg, v);
    ChunkedDocument b = chunk_document(in, cfg, v);
    REQUIRE(a.n_chunks() == b.n_chunks());
    for (std::size_t i = 0; i < a.n_chunks(); ++i) {
        CHECK(a.chunks[i].ids == b.chunks[i].ids);
        CHECK(a.chunks[i].mask == b.chunks[i].mask);
    }
}
