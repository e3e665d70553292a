#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saft/losses.hpp"
#include "saft/text_embedder.hpp"

namespace saft {

enum class GeneratorSource { Stub, External };
/// Which string the relevance score compares candidates against.
enum class RelevanceAnchor { BareLabel, TemplatedLabel };

struct GenerationConfig {
    int M = 8;
    int K = 5;
    /// Diversity knob: probability that a colour/shape word is replaced by a
    /// synonym (stub) or the sampling temperature (external).
    double temperature = 0.25;
    /// Fraction of the M stub candidates drawn from the off-topic table.
    double hallucination_fraction = 0.0;
    std::vector<std::string> prompts{"What does a {label} look like"};
    GeneratorSource source = GeneratorSource::Stub;
    RelevanceAnchor anchor = RelevanceAnchor::BareLabel;
    std::string anchor_template = "a photo of a {label}";
    std::uint64_t seed = 0;

    // external source only
    std::string endpoint;  // full chat-completions URL
    std::string model;
    double timeout_seconds = 30.0;
    int max_retries = 3;

    void validate() const;
};

/// Replaces every "{label}" in `pattern`.
std::string fill_label(const std::string& pattern, const std::string& label);

/// Candidate descriptions for one class. The stub never fails and is
/// reproducible bit for bit; the external source POSTs OpenAI-compatible
/// chat-completion requests and throws EndpointError once retries run out.
std::vector<std::string> generate_descriptions(const GenerationConfig& cfg, const std::string& class_name);

/// The stub's off-topic table: texts sharing no vocabulary with any class.
const std::vector<std::string>& off_topic_descriptions();

/// Colour and shape words (including synonyms) the stub may use for a class.
std::vector<std::string> class_vocabulary(const std::string& class_name);

/// Cosine similarity between the anchor text and each candidate, in
/// candidate order.
std::vector<double> relevance_scores(const TextEmbedder& embedder, const std::string& anchor_text,
                                     const std::vector<std::string>& candidates);

struct ClassDescriptions {
    std::string name;
    int K = 0;
    std::vector<std::string> candidates;
    std::vector<double> scores;
    /// Indices into `candidates`, best first; always K long.
    std::vector<std::size_t> refined;
    EmbeddingSet<double> candidate_embeddings;  // M x d, unit rows

    bool is_refined(std::size_t index) const;
    /// K x d, rows in `refined` order.
    EmbeddingSet<double> refined_embeddings() const;
    /// Every candidate, ignoring the filter (the no-filtering ablation).
    const EmbeddingSet<double>& all_embeddings() const { return candidate_embeddings; }
};

/// Stable descending sort by score (ties keep original order); the first K
/// indices become the refined set. All candidates are retained.
ClassDescriptions semantic_filter(const std::vector<std::string>& candidates, const std::vector<double>& scores, int K);

struct DescriptionBank {
    int embed_dim = 0;
    int ngram_size = 0;
    std::string embedder_hash;
    std::vector<ClassDescriptions> classes;

    /// Throws DependencyError when the class is missing.
    const ClassDescriptions& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    /// Checks K bounds, refined ordering, and the filtering soundness
    /// invariant for every class.
    void validate() const;
};

/// Generate, score, filter and embed descriptions for each class.
DescriptionBank build_bank(const TextEmbedder& embedder, const GenerationConfig& cfg,
                           const std::vector<std::string>& class_names, int threads = 1);

/// Bank whose single refined description per class is `pattern` filled with
/// the class name (the template-baseline expressed as a bank).
DescriptionBank template_bank(const TextEmbedder& embedder, const std::vector<std::string>& class_names,
                              const std::string& pattern);

/// JSON: {embed_dim, ngram_size, embedder_hash, classes: [{name, K,
/// candidates: [{text, score, refined}]}]} plus optional config_hash.
void save_bank(const std::string& path, const DescriptionBank& bank, const std::string& config_hash = "");

/// Rejects banks built with a different embedder; embeddings are recomputed
/// with `embedder`.
DescriptionBank load_bank(const std::string& path, const TextEmbedder& embedder, std::string* config_hash = nullptr);

}  // namespace saft
