#include "saft/eval.hpp"

#include "saft/parallel.hpp"
#include "saft/rng.hpp"

namespace saft {

MetricKind parse_metric(const std::string& name) {
    if (name == "template") return MetricKind::Template;
    if (name == "ensemble" || name == "ensemble-mean") return MetricKind::EnsembleMean;
    throw ConfigError("unknown similarity metric '" + name + "' (expected template or ensemble-mean)");
}

std::string to_string(MetricKind k) { return k == MetricKind::Template ? "template" : "ensemble-mean"; }

long ClassResources::index_of(std::uint32_t label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return static_cast<long>(i);
    }
    return -1;
}

ClassResources make_class_resources(MetricKind metric, const TextEmbedder& embedder, const DescriptionBank* bank,
                                    const std::vector<std::string>& class_names,
                                    const std::vector<std::uint32_t>& labels, const std::string& template_pattern) {
    if (labels.size() < 2) throw ConfigError("zero-shot task needs at least two classes");
    ClassResources res;
    res.metric = metric;
    res.labels = labels;
    for (const auto label : labels) {
        const auto& name = class_names.at(label);
        EmbeddingSet<double> tmpl = embedder.embed(fill_label(template_pattern, name)).transpose();
        if (metric == MetricKind::EnsembleMean) {
            if (bank == nullptr) throw DependencyError("ensemble-mean metric requires a description bank");
            res.sets.push_back(bank->at(name).refined_embeddings());
        } else {
            res.sets.push_back(tmpl);
        }
        res.templates.push_back(std::move(tmpl));
    }
    return res;
}

double metric_score(const VectorXd& img_emb, const ClassResources& res, std::size_t class_index) {
    return ensemble_score<double>(img_emb, res.sets.at(class_index));
}

std::size_t predict_zero_shot(const VectorXd& img_emb, const ClassResources& res) {
    if (res.size() < 2) throw ConfigError("predict_zero_shot: need at least two classes");
    std::size_t best = 0;
    double best_score = metric_score(img_emb, res, 0);
    for (std::size_t i = 1; i < res.size(); ++i) {
        const double s = metric_score(img_emb, res, i);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

AttackTarget eval_target(const ClassResources& res, std::size_t class_index, const AttackConfig& cfg) {
    switch (cfg.loss) {
        case AttackLoss::TemplateDissimilarity:
            return AttackTarget::template_target(res.templates[class_index].row(0).transpose());
        case AttackLoss::EnsembleDissimilarity:
            return AttackTarget::ensemble_target(res.sets[class_index]);
        case AttackLoss::ClassificationXent:
            break;
    }
    return AttackTarget::classification_target(res.sets, class_index, cfg.logit_scale);
}

namespace {

std::vector<std::size_t> task_samples(const Dataset& data, const ClassResources& res) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        if (res.index_of(data.samples[i].label) >= 0) ids.push_back(i);
    }
    return ids;
}

}  // namespace

AccuracyResult evaluate(const Dataset& data, const Encoder& encoder, const ClassResources& res,
                        const std::optional<AttackConfig>& attack, int threads) {
    if (attack) attack->validate();
    const auto ids = task_samples(data, res);
    if (ids.empty()) throw ConfigError("evaluate: no samples belong to the evaluated classes");

    std::vector<char> clean_ok(ids.size(), 0);
    std::vector<char> robust_ok(ids.size(), 0);
    parallel_for(ids.size(), threads, [&](std::size_t k) {
        const auto& s = data.samples[ids[k]];
        const auto truth = static_cast<std::size_t>(res.index_of(s.label));
        clean_ok[k] = predict_zero_shot(encode_image(encoder, s.pixels), res) == truth;
        if (attack) {
            const auto p = pgd_attack(encoder, s.pixels, eval_target(res, truth, *attack), *attack, ids[k]);
            const VectorXd x_adv = s.pixels + p.delta;
            robust_ok[k] = predict_zero_shot(encode_image(encoder, x_adv), res) == truth;
        }
    });

    AccuracyResult out;
    out.evaluated = ids.size();
    const double n = static_cast<double>(ids.size());
    out.clean_acc = static_cast<double>(std::count(clean_ok.begin(), clean_ok.end(), 1)) / n;
    if (attack) out.robust_acc = static_cast<double>(std::count(robust_ok.begin(), robust_ok.end(), 1)) / n;
    return out;
}

DiagonalResult diagonal_analysis(const Dataset& data, const Encoder& encoder, const std::vector<ClassResources>& metrics,
                                 const AttackConfig& attack, int threads) {
    if (metrics.size() < 2) throw ConfigError("diagonal_analysis: need at least two metrics");
    attack.validate();
    const auto& driver = metrics.front();
    const auto ids = task_samples(data, driver);
    if (ids.empty()) throw ConfigError("diagonal_analysis: no samples belong to the evaluated classes");

    DiagonalResult out;
    out.sample_ids = ids;
    for (const auto& m : metrics) {
        if (m.labels != driver.labels) throw ConfigError("diagonal_analysis: metrics must cover the same classes");
        out.series.push_back({to_string(m.metric), std::vector<double>(ids.size()), std::vector<double>(ids.size()), 0});
    }
    parallel_for(ids.size(), threads, [&](std::size_t k) {
        const auto& s = data.samples[ids[k]];
        const auto truth = static_cast<std::size_t>(driver.index_of(s.label));
        const auto target = AttackTarget::template_target(driver.templates[truth].row(0).transpose());
        const auto p = pgd_attack(encoder, s.pixels, target, attack, ids[k]);
        const VectorXd clean_emb = encode_image(encoder, s.pixels);
        const VectorXd x_adv = s.pixels + p.delta;
        const VectorXd adv_emb = encode_image(encoder, x_adv);
        for (std::size_t m = 0; m < metrics.size(); ++m) {
            out.series[m].clean[k] = metric_score(clean_emb, metrics[m], truth);
            out.series[m].adv[k] = metric_score(adv_emb, metrics[m], truth);
        }
    });
    for (auto& series : out.series) {
        std::size_t below = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) below += series.adv[k] < series.clean[k] ? 1 : 0;
        series.below_diagonal = static_cast<double>(below) / static_cast<double>(ids.size());
    }
    return out;
}

namespace {

/// Fraction of queries (rows of `sim`) whose own column ranks in the top k.
double recall_at_k(const MatrixXd& sim, int k) {
    std::size_t hits = 0;
    for (Eigen::Index q = 0; q < sim.rows(); ++q) {
        const double own = sim(q, q);
        Eigen::Index rank = 0;
        for (Eigen::Index c = 0; c < sim.cols(); ++c) {
            if (sim(q, c) > own || (sim(q, c) == own && c < q)) ++rank;
        }
        hits += rank < k ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

}  // namespace

RetrievalRecall retrieval_recall(const MatrixXd& image_embs, const MatrixXd& caption_embs, int k) {
    if (image_embs.rows() != caption_embs.rows() || image_embs.cols() != caption_embs.cols()) {
        throw ShapeMismatchError("retrieval_recall: need one caption per image in a shared space");
    }
    if (image_embs.rows() == 0) throw ShapeMismatchError("retrieval_recall: empty corpus");
    if (k < 1) throw ConfigError("retrieval_recall: k must be >= 1");
    if (k > image_embs.rows()) throw ConfigError("retrieval_recall: k exceeds corpus size");

    MatrixXd img(image_embs.rows(), image_embs.cols());
    MatrixXd cap(caption_embs.rows(), caption_embs.cols());
    for (Eigen::Index i = 0; i < img.rows(); ++i) {
        img.row(i) = l2_normalize(image_embs.row(i).transpose()).transpose();
        cap.row(i) = l2_normalize(caption_embs.row(i).transpose()).transpose();
    }
    const MatrixXd caption_by_image = cap * img.transpose();  // (caption, image)
    return {recall_at_k(caption_by_image, k), recall_at_k(caption_by_image.transpose(), k)};
}

RetrievalRecall retrieval_recall(const std::vector<VectorXd>& images, const std::vector<std::string>& captions,
                                 const Encoder& encoder, const TextEmbedder& embedder, int k) {
    if (images.size() != captions.size()) throw ShapeMismatchError("retrieval_recall: one caption per image");
    if (images.empty()) throw ShapeMismatchError("retrieval_recall: empty corpus");
    MatrixXd img(static_cast<Eigen::Index>(images.size()), encoder.embed_dim());
    MatrixXd cap(static_cast<Eigen::Index>(captions.size()), embedder.dim());
    for (std::size_t i = 0; i < images.size(); ++i) {
        img.row(static_cast<Eigen::Index>(i)) = encode_image(encoder, images[i]).transpose();
        cap.row(static_cast<Eigen::Index>(i)) = embedder.embed(captions[i]).transpose();
    }
    return retrieval_recall(img, cap, k);
}

}  // namespace saft
