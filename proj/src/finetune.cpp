#include "saft/finetune.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "saft/parallel.hpp"
#include "saft/rng.hpp"

namespace saft {

TrainMode parse_train_mode(const std::string& name) {
    if (name == "saft") return TrainMode::Saft;
    if (name == "template-baseline" || name == "template") return TrainMode::TemplateBaseline;
    throw ConfigError("unknown training mode '" + name + "' (expected saft or template-baseline)");
}

std::string to_string(TrainMode m) { return m == TrainMode::Saft ? "saft" : "template-baseline"; }

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
    attack.validate();
}

void sgd_step(Encoder& params, const Encoder& grads, SgdState& state, double lr, double momentum,
              double weight_decay) {
    if (!params.same_shape(grads) || !params.same_shape(state.velocity)) {
        throw ShapeMismatchError("sgd_step: parameter, gradient and momentum shapes differ");
    }
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& w = params.layers[i];
        auto& v = state.velocity.layers[i];
        const auto& g = grads.layers[i];
        v.weight = momentum * v.weight + g.weight;
        v.bias = momentum * v.bias + g.bias;
        if (weight_decay != 0.0) {
            v.weight += weight_decay * w.weight;
            v.bias += weight_decay * w.bias;
        }
        w.weight -= lr * v.weight;
        w.bias -= lr * v.bias;
    }
}

const EmbeddingSet<double>& TrainTargets::at(std::uint32_t label, const std::vector<std::string>& names) const {
    if (label >= per_label.size() || per_label[label].rows() == 0) {
        const std::string name = label < names.size() ? names[label] : std::to_string(label);
        throw DependencyError("no text targets for training class '" + name + "'");
    }
    return per_label[label];
}

AttackTarget TrainTargets::attack_target(std::uint32_t label, const std::vector<std::string>& names) const {
    const auto& set = at(label, names);
    if (loss == AttackLoss::TemplateDissimilarity) return AttackTarget::template_target(set.row(0).transpose());
    return AttackTarget::ensemble_target(set);
}

LossGrad<double> TrainTargets::loss_with_grad(std::uint32_t label, const VectorXd& img_emb,
                                              const std::vector<std::string>& names) const {
    const auto& set = at(label, names);
    if (loss == AttackLoss::TemplateDissimilarity) return template_loss_with_grad<double>(img_emb, set.row(0).transpose());
    return saft_loss_with_grad<double>(img_emb, set);
}

TrainTargets saft_targets(const DescriptionBank& bank, const std::vector<std::string>& class_names, bool use_filter) {
    TrainTargets t;
    t.loss = AttackLoss::EnsembleDissimilarity;
    for (const auto& name : class_names) {
        if (!bank.contains(name)) {
            t.per_label.emplace_back();
            continue;
        }
        const auto& c = bank.at(name);
        t.per_label.push_back(use_filter ? c.refined_embeddings() : c.all_embeddings());
    }
    return t;
}

TrainTargets template_targets(const TextEmbedder& embedder, const std::vector<std::string>& class_names,
                              const std::string& pattern) {
    TrainTargets t;
    t.loss = AttackLoss::TemplateDissimilarity;
    for (const auto& name : class_names) t.per_label.emplace_back(embedder.embed(fill_label(pattern, name)).transpose());
    return t;
}

Encoder outer_loss_grad(const Encoder& encoder, std::span<const ImageSample> batch, std::span<const VectorXd> deltas,
                        const std::vector<std::string>& class_names, const TrainTargets& targets, double* loss) {
    if (batch.size() != deltas.size()) throw ShapeMismatchError("outer_loss_grad: one delta per sample required");
    if (batch.empty()) throw ShapeMismatchError("outer_loss_grad: empty batch");
    Encoder grads = encoder.zeros_like();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const VectorXd x_adv = batch[j].pixels + deltas[j];
        const auto trace = encode_image_traced(encoder, x_adv);
        const auto lg = targets.loss_with_grad(batch[j].label, trace.output(), class_names);
        total += lg.value;
        backprop(encoder, trace, lg.grad, &grads, scale);
    }
    if (loss != nullptr) *loss = total * scale;
    return grads;
}

double outer_loss(const Encoder& encoder, std::span<const ImageSample> batch, std::span<const VectorXd> deltas,
                  const std::vector<std::string>& class_names, const TrainTargets& targets) {
    if (batch.size() != deltas.size() || batch.empty()) throw ShapeMismatchError("outer_loss: bad batch");
    double total = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const VectorXd x_adv = batch[j].pixels + deltas[j];
        total += targets.loss_with_grad(batch[j].label, encode_image(encoder, x_adv), class_names).value;
    }
    return total / static_cast<double>(batch.size());
}

BatchResult saft_batch_step(Encoder& encoder, SgdState& state, std::span<const ImageSample> batch,
                            const std::vector<std::string>& class_names, const TrainTargets& targets,
                            const TrainConfig& cfg, std::uint64_t attack_stream) {
    if (batch.empty()) throw ShapeMismatchError("saft_batch_step: empty batch");
    for (const auto& s : batch) targets.at(s.label, class_names);

    BatchResult out;
    out.deltas.resize(batch.size());
    std::vector<double> clean(batch.size());
    std::vector<double> adv(batch.size());
    // Inner maximization: theta is read-only here.
    const Encoder& frozen = encoder;
    parallel_for(batch.size(), cfg.threads, [&](std::size_t j) {
        const auto target = targets.attack_target(batch[j].label, class_names);
        auto p = pgd_attack(frozen, batch[j].pixels, target, cfg.attack, derive_seed(attack_stream, j));
        clean[j] = targets.loss_with_grad(batch[j].label, encode_image(frozen, batch[j].pixels), class_names).value;
        adv[j] = p.loss_trace.back();
        out.deltas[j] = std::move(p.delta);
    });

    double loss = 0;
    const Encoder grads = outer_loss_grad(encoder, batch, out.deltas, class_names, targets, &loss);
    if (!std::isfinite(loss)) throw NonFiniteError("saft_batch_step: outer loss is not finite");
    sgd_step(encoder, grads, state, cfg.lr, cfg.momentum, cfg.weight_decay);

    out.adv_loss = loss;
    const double n = static_cast<double>(batch.size());
    out.clean_loss = std::accumulate(clean.begin(), clean.end(), 0.0) / n;
    std::size_t succeeded = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) succeeded += adv[j] > clean[j] ? 1 : 0;
    out.attack_success = static_cast<double>(succeeded) / n;
    return out;
}

std::string TrainLog::to_csv(bool with_time) const {
    std::string out = "epoch,adv_loss,clean_loss,attack_success,seconds\n";
    char line[256];
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,", e.epoch, e.adv_loss, e.clean_loss, e.attack_success);
        out += line;
        if (with_time) {
            std::snprintf(line, sizeof line, "%.3f", e.seconds);
            out += line;
        }
        out += '\n';
    }
    return out;
}

TrainResult run_training(const Dataset& train, const Encoder& init, const TrainTargets& targets,
                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.samples.empty()) throw ConfigError("run_training: empty training set");
    if (train.pixel_count() != init.input_dim()) throw ShapeMismatchError("run_training: image size does not match encoder");
    for (const auto label : train.present_labels()) targets.at(label, train.class_names);

    TrainResult result{init, {}};
    SgdState state = SgdState::zeros_like(init);
    std::vector<std::size_t> order(train.samples.size());
    std::vector<ImageSample> batch;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0x73687566666c65ULL, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        EpochLog log;
        log.epoch = epoch;
        for (std::size_t begin = 0, b = 0; begin < order.size(); begin += bs, ++b) {
            const std::size_t end = std::min(order.size(), begin + bs);
            batch.clear();
            for (std::size_t k = begin; k < end; ++k) batch.push_back(train.samples[order[k]]);
            const auto r = saft_batch_step(result.encoder, state, batch, train.class_names, targets, cfg,
                                           derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), b));
            if (!std::isfinite(r.adv_loss) || !result.encoder.all_finite()) {
                throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b) + " (adv_loss " + std::to_string(r.adv_loss) + ")");
            }
            const double w = static_cast<double>(end - begin);
            log.adv_loss += r.adv_loss * w;
            log.clean_loss += r.clean_loss * w;
            log.attack_success += r.attack_success * w;
        }
        const double n = static_cast<double>(order.size());
        log.adv_loss /= n;
        log.clean_loss /= n;
        log.attack_success /= n;
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.epochs.push_back(log);
        if (on_epoch) on_epoch(epoch, result.encoder, log);
    }
    return result;
}

}  // namespace saft
