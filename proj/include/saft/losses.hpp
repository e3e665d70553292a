#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "saft/numerics.hpp"

namespace saft {

/// Rows are text embeddings (one per description or template), M x d.
template <typename Scalar>
using EmbeddingSet = Mat<Scalar>;

template <typename Scalar>
struct LossGrad {
    Scalar value;
    Vec<Scalar> grad;  // with respect to the image embedding
};

/// Mean cosine similarity between an image embedding and every row of `set`.
/// With a single row this is bit-identical to cosine_similarity.
template <typename Scalar>
Scalar ensemble_score(const Vec<Scalar>& img_emb, const EmbeddingSet<Scalar>& set) {
    if (set.rows() < 1) throw DegenerateInputError("ensemble_score: empty description set");
    // Rows are copied out so each cosine runs the same kernel as a plain vector.
    Vec<Scalar> row = set.row(0).transpose();
    Scalar sum = cosine_similarity(img_emb, row);
    for (Eigen::Index m = 1; m < set.rows(); ++m) {
        row = set.row(m).transpose();
        sum += cosine_similarity(img_emb, row);
    }
    return sum / static_cast<Scalar>(set.rows());
}

template <typename Scalar>
LossGrad<Scalar> ensemble_score_with_grad(const Vec<Scalar>& img_emb, const EmbeddingSet<Scalar>& set) {
    if (set.rows() < 1) throw DegenerateInputError("ensemble_score: empty description set");
    Vec<Scalar> row = set.row(0).transpose();
    Scalar sum = cosine_similarity(img_emb, row);
    Vec<Scalar> grad = cosine_similarity_grad(img_emb, row);
    for (Eigen::Index m = 1; m < set.rows(); ++m) {
        row = set.row(m).transpose();
        sum += cosine_similarity(img_emb, row);
        grad += cosine_similarity_grad(img_emb, row);
    }
    const auto count = static_cast<Scalar>(set.rows());
    return {sum / count, grad / count};
}

/// Cosine dissimilarity to a single template embedding: -cos(img, template).
template <typename Scalar>
Scalar template_loss(const Vec<Scalar>& img_emb, const Vec<Scalar>& template_emb) {
    return -cosine_similarity(img_emb, template_emb);
}

template <typename Scalar>
LossGrad<Scalar> template_loss_with_grad(const Vec<Scalar>& img_emb, const Vec<Scalar>& template_emb) {
    return {-cosine_similarity(img_emb, template_emb), -cosine_similarity_grad(img_emb, template_emb)};
}

/// Average cosine dissimilarity to a set of description embeddings:
///   -(1/M) sum_m cos(img, desc_m)
template <typename Scalar>
Scalar saft_loss(const Vec<Scalar>& img_emb, const EmbeddingSet<Scalar>& descriptions) {
    return -ensemble_score(img_emb, descriptions);
}

template <typename Scalar>
LossGrad<Scalar> saft_loss_with_grad(const Vec<Scalar>& img_emb, const EmbeddingSet<Scalar>& descriptions) {
    auto s = ensemble_score_with_grad(img_emb, descriptions);
    return {-s.value, -s.grad};
}

/// Cross-entropy of softmax(logit_scale * score_i) against `label`, where
/// score_i is the ensemble score of class i (a template metric is the
/// one-row case).
template <typename Scalar>
LossGrad<Scalar> classification_xent_with_grad(const Vec<Scalar>& img_emb,
                                               std::span<const EmbeddingSet<Scalar>> class_sets,
                                               std::size_t label, Scalar logit_scale) {
    const std::size_t n = class_sets.size();
    if (n < 2) throw DegenerateInputError("classification_xent: need at least two classes");
    if (label >= n) throw ShapeMismatchError("classification_xent: label out of range");

    std::vector<LossGrad<Scalar>> scores;
    scores.reserve(n);
    Scalar max_logit = -std::numeric_limits<Scalar>::infinity();
    for (const auto& set : class_sets) {
        scores.push_back(ensemble_score_with_grad(img_emb, set));
        max_logit = std::max(max_logit, logit_scale * scores.back().value);
    }
    Scalar denom = 0;
    for (const auto& s : scores) denom += std::exp(logit_scale * s.value - max_logit);
    const Scalar log_z = max_logit + std::log(denom);

    Vec<Scalar> grad = Vec<Scalar>::Zero(img_emb.size());
    for (std::size_t i = 0; i < n; ++i) {
        const Scalar p = std::exp(logit_scale * scores[i].value - log_z);
        const Scalar coeff = logit_scale * (p - (i == label ? Scalar(1) : Scalar(0)));
        grad += coeff * scores[i].grad;
    }
    return {log_z - logit_scale * scores[label].value, grad};
}

template <typename Scalar>
Scalar classification_xent_loss(const Vec<Scalar>& img_emb, std::span<const EmbeddingSet<Scalar>> class_sets,
                                std::size_t label, Scalar logit_scale) {
    return classification_xent_with_grad(img_emb, class_sets, label, logit_scale).value;
}

/// Single-prototype form: row i of `class_embs` is class i's text embedding.
template <typename Scalar>
Scalar classification_xent_loss(const Vec<Scalar>& img_emb, const Mat<Scalar>& class_embs, std::size_t label,
                                Scalar logit_scale) {
    std::vector<EmbeddingSet<Scalar>> sets;
    for (Eigen::Index i = 0; i < class_embs.rows(); ++i) sets.emplace_back(class_embs.row(i));
    return classification_xent_loss<Scalar>(img_emb, std::span<const EmbeddingSet<Scalar>>(sets), label, logit_scale);
}

}  // namespace saft
