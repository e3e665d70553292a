#pragma once

#include <optional>
#include <string>
#include <vector>

#include "saft/attack.hpp"
#include "saft/description_bank.hpp"
#include "saft/image_encoder.hpp"
#include "saft/synth_data.hpp"

namespace saft {

enum class MetricKind { Template, EnsembleMean };

MetricKind parse_metric(const std::string& name);
std::string to_string(MetricKind k);

/// The candidate label set of a zero-shot task under one similarity metric.
/// `sets[i]` holds class i's text embeddings (one row for the template
/// metric, the refined descriptions for ensemble-mean); `templates[i]` is
/// always the single template embedding, used by template-loss attacks.
struct ClassResources {
    MetricKind metric = MetricKind::Template;
    std::vector<std::uint32_t> labels;  // dataset labels, position = class index
    std::vector<EmbeddingSet<double>> sets;
    std::vector<EmbeddingSet<double>> templates;

    std::size_t size() const { return labels.size(); }
    /// Position of a dataset label, or -1 when the label is not in the task.
    long index_of(std::uint32_t label) const;
};

/// `bank` may be null for the template metric.
ClassResources make_class_resources(MetricKind metric, const TextEmbedder& embedder, const DescriptionBank* bank,
                                    const std::vector<std::string>& class_names,
                                    const std::vector<std::uint32_t>& labels, const std::string& template_pattern);

/// Score of the metric for one class: the cosine to the template, or the
/// mean cosine over the class's description set.
double metric_score(const VectorXd& img_emb, const ClassResources& res, std::size_t class_index);

/// argmax over classes; ties go to the lowest class index.
std::size_t predict_zero_shot(const VectorXd& img_emb, const ClassResources& res);

/// The per-sample attack target for an evaluation attack: the true class's
/// template or description set, or cross-entropy over every class.
AttackTarget eval_target(const ClassResources& res, std::size_t class_index, const AttackConfig& cfg);

struct AccuracyResult {
    std::size_t evaluated = 0;
    double clean_acc = 0;
    std::optional<double> robust_acc;
};

/// Clean accuracy over samples whose label belongs to `res`; with an attack,
/// also robust accuracy on x + delta*, where delta* maximizes the attack
/// loss (classification cross-entropy over the metric's class scores by
/// default).
AccuracyResult evaluate(const Dataset& data, const Encoder& encoder, const ClassResources& res,
                        const std::optional<AttackConfig>& attack, int threads = 1);

struct DiagonalSeries {
    std::string metric;
    std::vector<double> clean;  // true-class score on x
    std::vector<double> adv;    // true-class score on x + delta*
    double below_diagonal = 0;  // fraction with adv < clean (strict)
};

struct DiagonalResult {
    std::vector<std::size_t> sample_ids;
    std::vector<DiagonalSeries> series;
};

/// Crafts one template-dissimilarity AE per sample (the template set of
/// metrics[0] drives the attack) and records clean/adversarial true-class
/// scores under every metric.
DiagonalResult diagonal_analysis(const Dataset& data, const Encoder& encoder, const std::vector<ClassResources>& metrics,
                                 const AttackConfig& attack, int threads = 1);

struct RetrievalRecall {
    double image_recall = 0;  // IRR@k: caption queries, true image in top k
    double text_recall = 0;   // TRR@k: image queries, true caption in top k
};

/// Row i of `image_embs` is paired with row i of `caption_embs`. Ranking is
/// by cosine, ties broken by lower index.
RetrievalRecall retrieval_recall(const MatrixXd& image_embs, const MatrixXd& caption_embs, int k);

RetrievalRecall retrieval_recall(const std::vector<VectorXd>& images, const std::vector<std::string>& captions,
                                 const Encoder& encoder, const TextEmbedder& embedder, int k);

}  // namespace saft
