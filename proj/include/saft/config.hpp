#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saft/attack.hpp"
#include "saft/description_bank.hpp"
#include "saft/eval.hpp"
#include "saft/finetune.hpp"
#include "saft/image_encoder.hpp"
#include "saft/synth_data.hpp"

namespace saft {

enum class ClassScope { Heldout, Seen, All };

ClassScope parse_class_scope(const std::string& name);
std::string to_string(ClassScope s);

struct DataSection {
    DatasetSpec spec;
    // Optional SAFTDS01 files replacing the generated corpus.
    std::string external_train;
    std::string external_test;
};

struct TextSection {
    int embed_dim = 128;
    int ngram_size = 3;
    std::string template_pattern = "a photo of a {label}";
};

struct EncoderSection {
    std::vector<Eigen::Index> hidden{128, 64};
    Activation activation = Activation::Tanh;
};

/// Clean template alignment run before adversarial fine-tuning; stands in
/// for a pretrained model. Disabled when epochs = 0.
struct PretrainSection {
    int epochs = 0;
    int batch_size = 32;
    double lr = 0.2;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

struct TrainSection {
    TrainConfig cfg;
    bool filter = true;     // false trains on every candidate description
    bool log_time = false;  // wall time in log.csv (breaks byte-identical reruns)
};

struct AttackSection {
    AttackConfig attack = AttackConfig::eval_default();
    MetricKind metric = MetricKind::EnsembleMean;
    ClassScope classes = ClassScope::All;
};

struct EvalSection {
    AttackConfig attack = AttackConfig::eval_default();
    bool robust = true;
    MetricKind metric = MetricKind::EnsembleMean;
    std::vector<ClassScope> classes{ClassScope::Heldout, ClassScope::Seen};
    std::vector<int> retrieval_k{1, 5};
};

struct DiagonalSection {
    AttackConfig attack = default_attack();
    std::vector<MetricKind> metrics{MetricKind::Template, MetricKind::EnsembleMean};
    ClassScope classes = ClassScope::Seen;

    static AttackConfig default_attack();
};

/// Everything a run needs. Precedence: command-line flags, then the config
/// file, then these defaults.
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out = "runs/default";

    DataSection data;
    TextSection text;
    EncoderSection encoder;
    GenerationConfig generation;
    PretrainSection pretrain;
    TrainSection train;
    AttackSection attack;
    EvalSection eval;
    DiagonalSection diagonal;

    /// Copies the global seed and thread count into every section.
    void finalize();
    /// Throws ConfigError.
    void validate() const;
};

/// Parses TOML text. Unknown keys, wrong types and invalid values raise
/// ConfigError naming the offending key.
RunConfig parse_config(std::string_view toml_text, std::string_view source = "config");
RunConfig load_config(const std::string& path);

/// "1/255", "0.5" or a plain number.
double parse_fraction(const std::string& text);

/// First 16 hex digits of the SHA-256 of `text`.
std::string short_hash(std::string_view text);
/// Same, over a file's bytes.
std::string file_hash(const std::string& path);

}  // namespace saft
