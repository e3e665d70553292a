#include "saft/attack.hpp"

#include <cmath>

#include "saft/rng.hpp"

namespace saft {

AttackLoss parse_attack_loss(const std::string& name) {
    if (name == "template" || name == "template-dissimilarity") return AttackLoss::TemplateDissimilarity;
    if (name == "ensemble" || name == "ensemble-dissimilarity") return AttackLoss::EnsembleDissimilarity;
    if (name == "xent" || name == "classification-xent") return AttackLoss::ClassificationXent;
    throw ConfigError("unknown attack loss '" + name + "'");
}

AttackInit parse_attack_init(const std::string& name) {
    if (name == "zero") return AttackInit::Zero;
    if (name == "random" || name == "random-uniform") return AttackInit::RandomUniform;
    throw ConfigError("unknown attack init '" + name + "'");
}

std::string to_string(AttackLoss k) {
    switch (k) {
        case AttackLoss::TemplateDissimilarity: return "template-dissimilarity";
        case AttackLoss::EnsembleDissimilarity: return "ensemble-dissimilarity";
        case AttackLoss::ClassificationXent: return "classification-xent";
    }
    return "?";
}

std::string to_string(AttackInit k) { return k == AttackInit::Zero ? "zero" : "random-uniform"; }

void AttackConfig::validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("attack: epsilon must be >= 0");
    if (steps < 0) throw ConfigError("attack: steps must be >= 0");
    if (alpha && !(*alpha > 0)) throw ConfigError("attack: alpha must be > 0");
    if (!alpha && epsilon > 0 && !(step_size() > 0)) throw ConfigError("attack: derived step size is not positive");
    if (restarts < 1) throw ConfigError("attack: restarts must be >= 1");
    if (!(logit_scale > 0)) throw ConfigError("attack: logit_scale must be > 0");
}

AttackConfig AttackConfig::train_default() { return {}; }

AttackConfig AttackConfig::eval_default() {
    AttackConfig c;
    c.steps = 100;
    c.init = AttackInit::RandomUniform;
    c.loss = AttackLoss::ClassificationXent;
    return c;
}

AttackTarget AttackTarget::template_target(const VectorXd& template_emb) {
    AttackTarget t;
    t.kind = AttackLoss::TemplateDissimilarity;
    t.texts = template_emb.transpose();
    return t;
}

AttackTarget AttackTarget::ensemble_target(EmbeddingSet<double> descriptions) {
    AttackTarget t;
    t.kind = AttackLoss::EnsembleDissimilarity;
    t.texts = std::move(descriptions);
    return t;
}

AttackTarget AttackTarget::classification_target(std::vector<EmbeddingSet<double>> class_sets, std::size_t label,
                                                 double logit_scale) {
    AttackTarget t;
    t.kind = AttackLoss::ClassificationXent;
    t.class_sets = std::move(class_sets);
    t.label = label;
    t.logit_scale = logit_scale;
    return t;
}

LossGrad<double> attack_objective(const AttackTarget& target, const VectorXd& img_emb) {
    switch (target.kind) {
        case AttackLoss::TemplateDissimilarity:
            if (target.texts.rows() < 1) throw DegenerateInputError("template attack: no template embedding");
            return template_loss_with_grad<double>(img_emb, target.texts.row(0).transpose());
        case AttackLoss::EnsembleDissimilarity:
            return saft_loss_with_grad<double>(img_emb, target.texts);
        case AttackLoss::ClassificationXent:
            return classification_xent_with_grad<double>(
                img_emb, std::span<const EmbeddingSet<double>>(target.class_sets), target.label, target.logit_scale);
    }
    throw ConfigError("unknown attack loss");
}

VectorXd project_linf(const VectorXd& delta, double epsilon, const VectorXd& x_clean) {
    if (delta.size() != x_clean.size()) throw ShapeMismatchError("project_linf: delta and image sizes differ");
    VectorXd out(delta.size());
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        const double x = x_clean[i];
        double d = std::isnan(delta[i]) ? 0.0 : std::clamp(delta[i], -epsilon, epsilon);
        const double y = x + d;
        if (y > 1.0) d = 1.0 - x;
        if (y < 0.0) d = -x;
        // 1 - x and x + d round independently; step toward zero until both
        // constraints hold in floating point.
        while (d != 0.0 && (std::abs(d) > epsilon || x + d > 1.0 || x + d < 0.0)) d = std::nextafter(d, 0.0);
        out[i] = d;
    }
    return out;
}

namespace {

Perturbation run_once(const Encoder& encoder, const VectorXd& x, const AttackTarget& target, const AttackConfig& cfg,
                      std::uint64_t seed) {
    Perturbation p;
    p.delta = VectorXd::Zero(x.size());
    if (cfg.init == AttackInit::RandomUniform && cfg.epsilon > 0) {
        Rng rng(seed);
        for (Eigen::Index i = 0; i < x.size(); ++i) p.delta[i] = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    p.delta = project_linf(p.delta, cfg.epsilon, x);
    p.loss_trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);

    const double alpha = cfg.step_size();
    for (int t = 0; t < cfg.steps; ++t) {
        const VectorXd x_adv = x + p.delta;
        const auto trace = encode_image_traced(encoder, x_adv);
        const auto obj = attack_objective(target, trace.output());
        if (!std::isfinite(obj.value)) throw NonFiniteError("pgd_attack: objective is not finite");
        p.loss_trace.push_back(obj.value);
        const VectorXd grad = backprop(encoder, trace, obj.grad);
        const VectorXd stepped = p.delta + alpha * grad.unaryExpr([](double g) {
            return g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
        });
        p.delta = project_linf(stepped, cfg.epsilon, x);
    }
    const VectorXd x_adv = x + p.delta;
    p.loss_trace.push_back(attack_objective(target, encode_image(encoder, x_adv)).value);
    return p;
}

}  // namespace

Perturbation pgd_attack(const Encoder& encoder, const VectorXd& x, const AttackTarget& target, const AttackConfig& cfg,
                        std::uint64_t stream) {
    cfg.validate();
    if (x.size() != encoder.input_dim()) throw ShapeMismatchError("pgd_attack: image size does not match encoder");
    Perturbation best;
    for (int r = 0; r < cfg.restarts; ++r) {
        auto p = run_once(encoder, x, target, cfg, derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(r)));
        if (r == 0 || p.loss_trace.back() > best.loss_trace.back()) best = std::move(p);
    }
    return best;
}

}  // namespace saft
