#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "saft/attack.hpp"
#include "saft/description_bank.hpp"
#include "saft/image_encoder.hpp"
#include "saft/synth_data.hpp"

namespace saft {

enum class TrainMode { Saft, TemplateBaseline };

TrainMode parse_train_mode(const std::string& name);
std::string to_string(TrainMode m);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 128;
    double lr = 1e-4;
    double momentum = 0.9;
    double weight_decay = 0.0;
    AttackConfig attack = AttackConfig::train_default();
    TrainMode mode = TrainMode::Saft;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

/// Momentum buffers, one per parameter tensor.
struct SgdState {
    Encoder velocity;

    static SgdState zeros_like(const Encoder& params) { return {params.zeros_like()}; }
};

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v
void sgd_step(Encoder& params, const Encoder& grads, SgdState& state, double lr, double momentum,
              double weight_decay = 0.0);

/// Per-label text targets for training: the refined description embeddings
/// (SAFT) or the single template embedding (baseline). Labels without an
/// entry have an empty set.
struct TrainTargets {
    AttackLoss loss = AttackLoss::EnsembleDissimilarity;
    std::vector<EmbeddingSet<double>> per_label;

    const EmbeddingSet<double>& at(std::uint32_t label, const std::vector<std::string>& names) const;
    AttackTarget attack_target(std::uint32_t label, const std::vector<std::string>& names) const;
    LossGrad<double> loss_with_grad(std::uint32_t label, const VectorXd& img_emb,
                                    const std::vector<std::string>& names) const;
};

/// `use_filter = false` trains on every candidate (no-filtering ablation).
TrainTargets saft_targets(const DescriptionBank& bank, const std::vector<std::string>& class_names,
                          bool use_filter = true);
TrainTargets template_targets(const TextEmbedder& embedder, const std::vector<std::string>& class_names,
                              const std::string& pattern);

struct BatchResult {
    double adv_loss = 0;    // batch mean at (theta_before, delta*)
    double clean_loss = 0;  // batch mean at (theta_before, 0)
    double attack_success = 0;
    std::vector<VectorXd> deltas;
};

/// One outer step: craft delta* per sample with theta frozen, then one SGD
/// step on the batch-mean loss at x + delta* with delta* held constant.
BatchResult saft_batch_step(Encoder& encoder, SgdState& state, std::span<const ImageSample> batch,
                            const std::vector<std::string>& class_names, const TrainTargets& targets,
                            const TrainConfig& cfg, std::uint64_t attack_stream = 0);

/// Gradient of the batch-mean outer loss with respect to the parameters at
/// fixed perturbations (exposed for gradient checks).
Encoder outer_loss_grad(const Encoder& encoder, std::span<const ImageSample> batch, std::span<const VectorXd> deltas,
                        const std::vector<std::string>& class_names, const TrainTargets& targets, double* loss = nullptr);

double outer_loss(const Encoder& encoder, std::span<const ImageSample> batch, std::span<const VectorXd> deltas,
                  const std::vector<std::string>& class_names, const TrainTargets& targets);

struct EpochLog {
    int epoch = 0;
    double adv_loss = 0;
    double clean_loss = 0;
    double attack_success = 0;
    double seconds = 0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;

    /// CSV with header epoch,adv_loss,clean_loss,attack_success,seconds.
    /// Wall time is nondeterministic, so the seconds column is left empty
    /// unless `with_time` is set.
    std::string to_csv(bool with_time = false) const;
};

struct TrainResult {
    Encoder encoder;
    TrainLog log;
};

using EpochCallback = std::function<void(int epoch, const Encoder&, const EpochLog&)>;

/// Seeded Fisher-Yates shuffle per epoch, last partial batch kept. Works on
/// a copy: on a non-finite loss it throws NonFiniteError and the caller's
/// encoder is untouched.
TrainResult run_training(const Dataset& train, const Encoder& init, const TrainTargets& targets,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace saft
