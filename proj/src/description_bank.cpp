#include "saft/description_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "saft/parallel.hpp"
#include "saft/rng.hpp"
#include "saft/synth_data.hpp"

namespace saft {

// Defined in llm_client.cpp.
std::vector<std::string> request_external_descriptions(const GenerationConfig& cfg, const std::string& class_name);

namespace {

const std::map<std::string, std::vector<std::string>>& synonyms() {
    static const std::map<std::string, std::vector<std::string>> table{
        {"red", {"crimson", "scarlet", "cherry"}},
        {"green", {"emerald", "grassy", "lime"}},
        {"blue", {"azure", "navy", "cobalt"}},
        {"yellow", {"golden", "lemon", "amber"}},
        {"square", {"box", "four-sided block", "quadrilateral"}},
        {"circle", {"disc", "round ring", "loop"}},
        {"triangle", {"wedge", "three-sided figure", "pyramid outline"}},
        {"cross", {"plus sign", "pair of crossing bars", "x-like mark"}},
    };
    return table;
}

const std::vector<std::string>& phrasings() {
    static const std::vector<std::string> table{
        "a {c} {s}",
        "a {c} {s} shape",
        "a {s} in {c}",
        "the {c} {s}",
        "a {s} coloured {c}",
        "a simple {c} {s}",
        "a {c} {s} on black",
        "a small {c} {s}",
    };
    return table;
}

/// Visual attributes shared by every class with the same shape or colour.
const std::map<std::string, std::vector<std::string>>& attributes() {
    static const std::map<std::string, std::vector<std::string>> table{
        {"square", {"with four equal sides", "with four right angles", "with straight edges and sharp corners"}},
        {"circle", {"with a smooth round edge", "with no corners at all", "that is perfectly round"}},
        {"triangle", {"with three corners", "with three straight sides", "pointing upward"}},
        {"cross", {"with two crossing bars", "shaped like a plus sign", "with four short arms"}},
        {"red", {"like a ripe cherry", "the colour of fire"}},
        {"green", {"like fresh grass", "the colour of leaves"}},
        {"blue", {"like the clear sky", "the colour of the sea"}},
        {"yellow", {"like a ripe lemon", "the colour of sunshine"}},
    };
    return table;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

std::vector<std::string> stub_descriptions(const GenerationConfig& cfg, const std::string& class_name) {
    const auto [color, shape] = parse_class_name(class_name);
    Rng rng(derive_seed(cfg.seed, fnv1a64(TextEmbedder::kDefaultSeedIndex, class_name)));

    const auto n_off = static_cast<int>(std::lround(cfg.hallucination_fraction * cfg.M));
    std::vector<int> slots(static_cast<std::size_t>(cfg.M));
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(slots);
    std::vector<bool> off_topic(static_cast<std::size_t>(cfg.M), false);
    for (int i = 0; i < n_off; ++i) off_topic[static_cast<std::size_t>(slots[static_cast<std::size_t>(i)])] = true;

    std::vector<std::string> pool = off_topic_descriptions();
    rng.shuffle(pool);
    std::size_t next_off = 0;

    auto pick = [&](const std::string& word) {
        const auto& syn = synonyms().at(word);
        return syn[static_cast<std::size_t>(rng.below(syn.size()))];
    };

    // Sentence structure (phrasing and attribute choice) is a function of the
    // on-topic slot and the seed only, so sibling classes such as "red circle"
    // and "blue circle" are described in parallel; the class enters through
    // its words, synonyms and attributes.
    Rng layout(derive_seed(cfg.seed, 0x6c61796f7574ULL));
    const auto phrase_offset = static_cast<std::size_t>(layout.below(phrasings().size()));
    const auto attr_offset = static_cast<std::size_t>(layout.below(6));

    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(cfg.M));
    std::size_t slot = 0;
    for (int m = 0; m < cfg.M; ++m) {
        if (off_topic[static_cast<std::size_t>(m)]) {
            out.push_back(pool[next_off++ % pool.size()]);
            continue;
        }
        const auto& phrase = phrasings()[(phrase_offset + slot) % phrasings().size()];
        bool syn_color = rng.uniform() < cfg.temperature;
        bool syn_shape = rng.uniform() < cfg.temperature;
        // Keep at least one literal class word in every on-topic description.
        if (syn_color && syn_shape) (rng.below(2) == 0 ? syn_color : syn_shape) = false;
        const std::string c = syn_color ? pick(color) : color;
        const std::string sh = syn_shape ? pick(shape) : shape;
        std::string text = replace_all(replace_all(phrase, "{c}", c), "{s}", sh);
        // Attach a shape attribute, a colour attribute, or both.
        const std::size_t a = attr_offset + slot;
        const std::size_t which = a % 3;
        if (which != 1) {
            const auto& attr = attributes().at(shape);
            text += " " + attr[(a / 3) % attr.size()];
        }
        if (which != 0) {
            const auto& attr = attributes().at(color);
            text += ", " + attr[(a / 3) % attr.size()];
        }
        out.push_back(std::move(text));
        ++slot;
    }
    return out;
}

}  // namespace

void GenerationConfig::validate() const {
    if (M < 1) throw ConfigError("generation: M must be >= 1");
    if (K < 1 || K > M) throw ConfigError("generation: K must satisfy 1 <= K <= M");
    if (!(temperature >= 0)) throw ConfigError("generation: temperature must be >= 0");
    if (!(hallucination_fraction >= 0 && hallucination_fraction <= 1)) {
        throw ConfigError("generation: hallucination_fraction must be in [0, 1]");
    }
    if (prompts.empty()) throw ConfigError("generation: at least one prompt template is required");
    if (source == GeneratorSource::External) {
        if (endpoint.empty()) throw ConfigError("generation: external source needs an endpoint");
        if (model.empty()) throw ConfigError("generation: external source needs a model name");
        if (!(timeout_seconds > 0)) throw ConfigError("generation: timeout must be > 0");
        if (max_retries < 0) throw ConfigError("generation: max_retries must be >= 0");
    }
}

std::string fill_label(const std::string& pattern, const std::string& label) {
    return replace_all(pattern, "{label}", label);
}

const std::vector<std::string>& off_topic_descriptions() {
    static const std::vector<std::string> table{
        "a winged mythical creature", "a bowl of hot soup",          "an old leather boot",
        "a jar of honey",             "a sailing boat at dusk",      "a wooden violin",
        "a snowy mountain peak",      "a sleeping cat on a sofa",    "a cup of coffee",
        "a busy city street at night", "a pile of autumn leaves",    "a dog chasing a frisbee",
        "a rusty bicycle",            "a stack of old books",        "a toy train set",
        "a sandy beach with palm trees",
    };
    return table;
}

std::vector<std::string> class_vocabulary(const std::string& class_name) {
    const auto [color, shape] = parse_class_name(class_name);
    std::vector<std::string> vocab{color, shape};
    for (const auto& w : {color, shape}) {
        for (const auto& syn : synonyms().at(w)) vocab.push_back(syn);
    }
    return vocab;
}

std::vector<std::string> generate_descriptions(const GenerationConfig& cfg, const std::string& class_name) {
    cfg.validate();
    if (class_name.empty()) throw ConfigError("generate_descriptions: empty class name");
    if (cfg.source == GeneratorSource::External) return request_external_descriptions(cfg, class_name);
    return stub_descriptions(cfg, class_name);
}

std::vector<double> relevance_scores(const TextEmbedder& embedder, const std::string& anchor_text,
                                     const std::vector<std::string>& candidates) {
    if (candidates.empty()) throw ConfigError("relevance_scores: no candidates");
    const VectorXd anchor = embedder.embed(anchor_text);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& c : candidates) scores.push_back(cosine_similarity(anchor, embedder.embed(c)));
    return scores;
}

bool ClassDescriptions::is_refined(std::size_t index) const {
    return std::find(refined.begin(), refined.end(), index) != refined.end();
}

EmbeddingSet<double> ClassDescriptions::refined_embeddings() const {
    EmbeddingSet<double> out(static_cast<Eigen::Index>(refined.size()), candidate_embeddings.cols());
    for (std::size_t k = 0; k < refined.size(); ++k) {
        out.row(static_cast<Eigen::Index>(k)) = candidate_embeddings.row(static_cast<Eigen::Index>(refined[k]));
    }
    return out;
}

ClassDescriptions semantic_filter(const std::vector<std::string>& candidates, const std::vector<double>& scores,
                                  int K) {
    if (candidates.size() != scores.size()) throw ShapeMismatchError("semantic_filter: candidates/scores differ");
    const auto M = static_cast<int>(candidates.size());
    if (K < 1) throw ConfigError("semantic_filter: K must be >= 1");
    if (K > M) throw ConfigError("semantic_filter: K = " + std::to_string(K) + " exceeds M = " + std::to_string(M));

    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    ClassDescriptions out;
    out.K = K;
    out.candidates = candidates;
    out.scores = scores;
    out.refined.assign(order.begin(), order.begin() + K);
    return out;
}

const ClassDescriptions& DescriptionBank::at(const std::string& name) const {
    for (const auto& c : classes) {
        if (c.name == name) return c;
    }
    throw DependencyError("description bank has no entry for class '" + name + "'");
}

bool DescriptionBank::contains(const std::string& name) const {
    return std::any_of(classes.begin(), classes.end(), [&](const auto& c) { return c.name == name; });
}

void DescriptionBank::validate() const {
    for (const auto& c : classes) {
        const auto M = c.candidates.size();
        if (c.scores.size() != M) throw FormatError("bank class '" + c.name + "': score count mismatch");
        if (c.K < 1 || static_cast<std::size_t>(c.K) > M || c.refined.size() != static_cast<std::size_t>(c.K)) {
            throw FormatError("bank class '" + c.name + "': K must satisfy 1 <= K <= M");
        }
        for (std::size_t k = 1; k < c.refined.size(); ++k) {
            if (c.scores[c.refined[k]] > c.scores[c.refined[k - 1]]) {
                throw FormatError("bank class '" + c.name + "': refined set is not sorted by score");
            }
        }
        const double floor = c.scores[c.refined.back()];
        for (std::size_t m = 0; m < M; ++m) {
            if (!c.is_refined(m) && c.scores[m] > floor) {
                throw FormatError("bank class '" + c.name + "': excluded candidate outscores a refined one");
            }
        }
        if (c.candidate_embeddings.rows() != static_cast<Eigen::Index>(M) || c.candidate_embeddings.cols() != embed_dim) {
            throw FormatError("bank class '" + c.name + "': embedding matrix has wrong shape");
        }
    }
}

namespace {

EmbeddingSet<double> embed_all(const TextEmbedder& embedder, const std::vector<std::string>& texts) {
    EmbeddingSet<double> out(static_cast<Eigen::Index>(texts.size()), embedder.dim());
    for (std::size_t m = 0; m < texts.size(); ++m) out.row(static_cast<Eigen::Index>(m)) = embedder.embed(texts[m]);
    return out;
}

DescriptionBank empty_bank(const TextEmbedder& embedder) {
    DescriptionBank bank;
    bank.embed_dim = embedder.dim();
    bank.ngram_size = embedder.ngram_size();
    bank.embedder_hash = embedder.config_hash();
    return bank;
}

}  // namespace

DescriptionBank build_bank(const TextEmbedder& embedder, const GenerationConfig& cfg,
                           const std::vector<std::string>& class_names, int threads) {
    cfg.validate();
    DescriptionBank bank = empty_bank(embedder);
    bank.classes.resize(class_names.size());
    parallel_for(class_names.size(), threads, [&](std::size_t i) {
        const auto& name = class_names[i];
        const auto candidates = generate_descriptions(cfg, name);
        const std::string anchor =
            cfg.anchor == RelevanceAnchor::BareLabel ? name : fill_label(cfg.anchor_template, name);
        auto entry = semantic_filter(candidates, relevance_scores(embedder, anchor, candidates), cfg.K);
        entry.name = name;
        entry.candidate_embeddings = embed_all(embedder, entry.candidates);
        bank.classes[i] = std::move(entry);
    });
    return bank;
}

DescriptionBank template_bank(const TextEmbedder& embedder, const std::vector<std::string>& class_names,
                              const std::string& pattern) {
    DescriptionBank bank = empty_bank(embedder);
    for (const auto& name : class_names) {
        const std::vector<std::string> texts{fill_label(pattern, name)};
        auto entry = semantic_filter(texts, relevance_scores(embedder, name, texts), 1);
        entry.name = name;
        entry.candidate_embeddings = embed_all(embedder, texts);
        bank.classes.push_back(std::move(entry));
    }
    return bank;
}

void save_bank(const std::string& path, const DescriptionBank& bank, const std::string& config_hash) {
    nlohmann::ordered_json j;
    j["embed_dim"] = bank.embed_dim;
    j["ngram_size"] = bank.ngram_size;
    j["embedder_hash"] = bank.embedder_hash;
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    j["classes"] = nlohmann::ordered_json::array();
    for (const auto& c : bank.classes) {
        nlohmann::ordered_json jc;
        jc["name"] = c.name;
        jc["K"] = c.K;
        jc["candidates"] = nlohmann::ordered_json::array();
        for (std::size_t m = 0; m < c.candidates.size(); ++m) {
            jc["candidates"].push_back({{"text", c.candidates[m]}, {"score", c.scores[m]}, {"refined", c.is_refined(m)}});
        }
        j["classes"].push_back(std::move(jc));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw FormatError("write failed: " + path);
}

DescriptionBank load_bank(const std::string& path, const TextEmbedder& embedder, std::string* config_hash) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open bank file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    DescriptionBank bank;
    try {
        bank.embed_dim = j.at("embed_dim").get<int>();
        bank.ngram_size = j.at("ngram_size").get<int>();
        bank.embedder_hash = j.at("embedder_hash").get<std::string>();
        if (config_hash != nullptr) *config_hash = j.value("config_hash", std::string());
        if (bank.embed_dim != embedder.dim() || bank.ngram_size != embedder.ngram_size() ||
            bank.embedder_hash != embedder.config_hash()) {
            throw FormatError(path + ": bank was built with a different text embedder (embed_dim " +
                              std::to_string(bank.embed_dim) + ", hash " + bank.embedder_hash + ")");
        }
        for (const auto& jc : j.at("classes")) {
            ClassDescriptions c;
            c.name = jc.at("name").get<std::string>();
            c.K = jc.at("K").get<int>();
            std::vector<std::size_t> flagged;
            for (const auto& cand : jc.at("candidates")) {
                if (cand.at("refined").get<bool>()) flagged.push_back(c.candidates.size());
                c.candidates.push_back(cand.at("text").get<std::string>());
                c.scores.push_back(cand.at("score").get<double>());
            }
            if (flagged.size() != static_cast<std::size_t>(c.K)) {
                throw FormatError(path + ": class '" + c.name + "' flags " + std::to_string(flagged.size()) +
                                  " refined candidates but K = " + std::to_string(c.K));
            }
            std::stable_sort(flagged.begin(), flagged.end(),
                             [&](std::size_t a, std::size_t b) { return c.scores[a] > c.scores[b]; });
            c.refined = std::move(flagged);
            c.candidate_embeddings = embed_all(embedder, c.candidates);
            bank.classes.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    bank.validate();
    return bank;
}

}  // namespace saft
