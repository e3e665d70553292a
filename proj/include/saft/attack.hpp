#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "saft/image_encoder.hpp"
#include "saft/losses.hpp"

namespace saft {

enum class AttackLoss { TemplateDissimilarity, EnsembleDissimilarity, ClassificationXent };
enum class AttackInit { Zero, RandomUniform };

AttackLoss parse_attack_loss(const std::string& name);
AttackInit parse_attack_init(const std::string& name);
std::string to_string(AttackLoss k);
std::string to_string(AttackInit k);

/// l_inf PGD settings. `alpha` defaults to 2 * epsilon / steps.
struct AttackConfig {
    double epsilon = 1.0 / 255.0;
    int steps = 2;
    std::optional<double> alpha;
    AttackInit init = AttackInit::Zero;
    AttackLoss loss = AttackLoss::EnsembleDissimilarity;
    double logit_scale = 100.0;
    int restarts = 1;
    std::uint64_t seed = 0;

    double step_size() const { return alpha ? *alpha : (steps > 0 ? 2.0 * epsilon / steps : epsilon); }

    /// Throws ConfigError. epsilon = 0 is accepted (null budget).
    void validate() const;

    /// Training defaults: PGD-2, zero init.
    static AttackConfig train_default();
    /// Evaluation defaults: PGD-100, random init, classification loss.
    static AttackConfig eval_default();
};

/// What the attack pushes away from. Which fields are used depends on `kind`:
/// template uses row 0 of `texts`, ensemble uses every row of `texts`,
/// classification uses `class_sets` and `label`.
struct AttackTarget {
    AttackLoss kind = AttackLoss::EnsembleDissimilarity;
    EmbeddingSet<double> texts;
    std::vector<EmbeddingSet<double>> class_sets;
    std::size_t label = 0;
    double logit_scale = 100.0;

    static AttackTarget template_target(const VectorXd& template_emb);
    static AttackTarget ensemble_target(EmbeddingSet<double> descriptions);
    static AttackTarget classification_target(std::vector<EmbeddingSet<double>> class_sets, std::size_t label,
                                              double logit_scale);
};

/// The attack objective (to be maximized) and its gradient with respect to
/// the image embedding.
LossGrad<double> attack_objective(const AttackTarget& target, const VectorXd& img_emb);

struct Perturbation {
    VectorXd delta;
    std::vector<double> loss_trace;  // objective at delta^(0), ..., delta^(steps)
};

/// Clamps delta to [-eps, eps], then to the pixel box so that x + delta lies
/// in [0, 1]. The result satisfies both constraints exactly as evaluated in
/// double precision.
VectorXd project_linf(const VectorXd& delta, double epsilon, const VectorXd& x_clean);

/// Sign-gradient ascent: delta <- Proj(delta + alpha * sign(grad)). `stream`
/// decorrelates the random init across samples; results do not depend on
/// thread scheduling. With restarts > 1 the run with the highest final
/// objective wins.
Perturbation pgd_attack(const Encoder& encoder, const VectorXd& x, const AttackTarget& target, const AttackConfig& cfg,
                        std::uint64_t stream = 0);

}  // namespace saft
