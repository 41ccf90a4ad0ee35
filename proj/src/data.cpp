#include "chunkpool/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chunkpool/errors.hpp"
#include "chunkpool/rng.hpp"

namespace chunkpool {

namespace {

using nlohmann::json;

[[noreturn]] void line_error(const std::string& path, std::size_t line, const std::string& what) {
    std::ostringstream msg;
    msg << path << ":" << line << ": " << what;
    throw DataError(msg.str());
}

}  // namespace

std::vector<Document> load_jsonl_corpus(const std::string& path, const LabelSpace& space) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);

    std::vector<Document> docs;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            line_error(path, line_no, std::string("malformed record: ") + e.what());
        }
        if (!rec.is_object()) line_error(path, line_no, "record is not an object");
        if (!rec.contains("id") || !rec["id"].is_string())
            line_error(path, line_no, "missing string field \"id\"");
        if (!rec.contains("text") || !rec["text"].is_string())
            line_error(path, line_no, "missing string field \"text\"");
        if (!rec.contains("labels") || !rec["labels"].is_array())
            line_error(path, line_no, "missing array field \"labels\"");

        Document doc;
        doc.id = rec["id"].get<std::string>();
        doc.text = rec["text"].get<std::string>();
        for (const auto& item : rec["labels"]) {
            if (!item.is_string()) line_error(path, line_no, "labels must be strings");
            std::string name = item.get<std::string>();
            if (space.index_of(name) < 0)
                line_error(path, line_no, "unknown label \"" + name + "\"");
            doc.gold_labels.push_back(std::move(name));
        }
        if (!seen_ids.insert(doc.id).second)
            line_error(path, line_no, "duplicate document id \"" + doc.id + "\"");
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_jsonl_corpus(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const auto& doc : docs) {
        json rec;
        rec["id"] = doc.id;
        rec["text"] = doc.text;
        rec["labels"] = doc.gold_labels;
        out << rec.dump() << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

void validate_corpus(const std::vector<Document>& docs, const LabelSpace& space) {
    std::set<std::string> seen_ids;
    for (const auto& doc : docs) {
        if (!seen_ids.insert(doc.id).second)
            throw DataError("duplicate document id \"" + doc.id + "\"");
        std::set<std::string> seen_labels;
        for (const auto& name : doc.gold_labels) {
            if (space.index_of(name) < 0)
                throw DataError("document \"" + doc.id + "\" has unknown label \"" + name + "\"");
            if (!seen_labels.insert(name).second)
                throw DataError("document \"" + doc.id + "\" repeats label \"" + name + "\"");
        }
        if (space.task_type == TaskType::multiclass && doc.gold_labels.size() != 1)
            throw DataError("document \"" + doc.id + "\" needs exactly one label, has " +
                            std::to_string(doc.gold_labels.size()));
    }
}

std::vector<double> target_vector(const Document& doc, const LabelSpace& space) {
    std::vector<double> target(space.size(), 0.0);
    for (const auto& name : doc.gold_labels) {
        int idx = space.index_of(name);
        if (idx < 0)
            throw DataError("document \"" + doc.id + "\" has unknown label \"" + name + "\"");
        target[static_cast<std::size_t>(idx)] = 1.0;
    }
    return target;
}

TriggerPosition trigger_position_from_string(const std::string& name) {
    if (name == "uniform") return TriggerPosition::uniform;
    if (name == "fixed") return TriggerPosition::fixed;
    if (name == "beyond_first") return TriggerPosition::beyond_first;
    throw ConfigError("unknown trigger position: " + name);
}

std::string trigger_position_to_string(TriggerPosition pos) {
    switch (pos) {
        case TriggerPosition::uniform: return "uniform";
        case TriggerPosition::fixed: return "fixed";
        case TriggerPosition::beyond_first: return "beyond_first";
    }
    throw ConfigError("bad trigger position value");
}

namespace {

std::size_t trigger_slot_count(const SyntheticSpec& spec) {
    std::size_t total = spec.chunks_per_doc * spec.tokens_per_chunk;
    switch (spec.trigger_position) {
        case TriggerPosition::uniform: return total;
        case TriggerPosition::fixed: return spec.tokens_per_chunk;
        case TriggerPosition::beyond_first: return total - spec.tokens_per_chunk;
    }
    throw ConfigError("bad trigger position value");
}

}  // namespace

void SyntheticSpec::validate(std::size_t content_len) const {
    if (n_docs == 0) throw ConfigError("n_docs must be positive");
    if (n_labels == 0) throw ConfigError("n_labels must be positive");
    if (chunks_per_doc == 0) throw ConfigError("chunks_per_doc must be positive");
    if (tokens_per_chunk == 0) throw ConfigError("tokens_per_chunk must be positive");
    if (tokens_per_chunk > content_len)
        throw ConfigError("tokens_per_chunk " + std::to_string(tokens_per_chunk) +
                          " exceeds chunk content length " + std::to_string(content_len));
    if (background_vocab_size == 0) throw ConfigError("background_vocab_size must be positive");
    if (label_prevalence.empty())
        throw ConfigError("label_prevalence must have at least one entry");
    if (label_prevalence.size() != 1 && label_prevalence.size() != n_labels)
        throw ConfigError("label_prevalence needs 1 or n_labels entries");
    for (double p : label_prevalence)
        if (!(p > 0.0) || !(p <= 1.0))
            throw ConfigError("label prevalence must lie in (0, 1]");
    if (trigger_position == TriggerPosition::fixed && fixed_chunk >= chunks_per_doc)
        throw ConfigError("fixed_chunk out of range");
    if (trigger_position == TriggerPosition::beyond_first && chunks_per_doc < 2)
        throw ConfigError("beyond_first placement needs at least two chunks per document");
    if (n_labels > trigger_slot_count(*this))
        throw ConfigError("not enough token slots for all triggers");
}

double SyntheticSpec::prevalence_of(std::size_t label) const {
    if (label_prevalence.size() == 1) return label_prevalence[0];
    return label_prevalence.at(label);
}

LabelSpace synthetic_label_space(const SyntheticSpec& spec) {
    LabelSpace space;
    space.task_type = TaskType::multilabel;
    for (std::size_t j = 0; j < spec.n_labels; ++j)
        space.names.push_back("LABEL" + std::to_string(j));
    space.validate();
    return space;
}

Vocabulary synthetic_vocabulary(const SyntheticSpec& spec) {
    std::vector<std::string> words;
    for (std::size_t b = 0; b < spec.background_vocab_size; ++b)
        words.push_back("bg" + std::to_string(b));
    for (std::size_t j = 0; j < spec.n_labels; ++j)
        words.push_back("trig" + std::to_string(j));
    return Vocabulary::build(words);
}

std::pair<std::vector<Document>, std::vector<Document>> generate_synthetic_corpus(
    const SyntheticSpec& spec, const Vocabulary& vocab) {
    for (std::size_t b = 0; b < spec.background_vocab_size; ++b)
        if (vocab.id_of("bg" + std::to_string(b)) < 0)
            throw ConfigError("vocabulary lacks background word bg" + std::to_string(b));
    for (std::size_t j = 0; j < spec.n_labels; ++j)
        if (vocab.id_of("trig" + std::to_string(j)) < 0)
            throw ConfigError("vocabulary lacks trigger word trig" + std::to_string(j));

    std::size_t total = spec.chunks_per_doc * spec.tokens_per_chunk;
    Prng rng(spec.seed);

    std::vector<Document> docs;
    docs.reserve(spec.n_docs);
    for (std::size_t d = 0; d < spec.n_docs; ++d) {
        std::vector<std::string> tokens(total);
        for (std::size_t t = 0; t < total; ++t)
            tokens[t] = "bg" + std::to_string(rng.uniform_int(spec.background_vocab_size));

        std::vector<bool> taken(total, false);
        Document doc;
        doc.id = "doc" + std::to_string(d);
        for (std::size_t j = 0; j < spec.n_labels; ++j) {
            if (rng.uniform() >= spec.prevalence_of(j)) continue;
            std::size_t slot = 0;
            do {
                switch (spec.trigger_position) {
                    case TriggerPosition::uniform:
                        slot = rng.uniform_int(total);
                        break;
                    case TriggerPosition::fixed:
                        slot = spec.fixed_chunk * spec.tokens_per_chunk +
                               rng.uniform_int(spec.tokens_per_chunk);
                        break;
                    case TriggerPosition::beyond_first:
                        slot = spec.tokens_per_chunk + rng.uniform_int(total - spec.tokens_per_chunk);
                        break;
                }
            } while (taken[slot]);
            taken[slot] = true;
            tokens[slot] = "trig" + std::to_string(j);
            doc.gold_labels.push_back("LABEL" + std::to_string(j));
        }

        std::ostringstream text;
        for (std::size_t t = 0; t < total; ++t) {
            if (t > 0) text << ' ';
            text << tokens[t];
        }
        doc.text = text.str();
        docs.push_back(std::move(doc));
    }

    std::vector<std::size_t> order(spec.n_docs);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    std::size_t n_train = spec.n_docs * 4 / 5;
    std::pair<std::vector<Document>, std::vector<Document>> split;
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto& bucket = i < n_train ? split.first : split.second;
        bucket.push_back(std::move(docs[order[i]]));
    }
    return split;
}

}  // namespace chunkpool
