#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "saft/numerics.hpp"

namespace saft {

inline constexpr std::array<const char*, 4> kShapes{"square", "circle", "triangle", "cross"};
inline constexpr std::array<const char*, 4> kColors{"red", "green", "blue", "yellow"};

struct ImageSample {
    VectorXd pixels;  // H*W*C, row-major HWC, values in [0, 1]
    std::uint32_t label = 0;

    bool operator==(const ImageSample& o) const {
        return label == o.label && pixels.size() == o.pixels.size() && pixels == o.pixels;
    }
};

/// A labeled image set. Class names are indexed by label.
struct Dataset {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::string> class_names;
    std::vector<ImageSample> samples;

    Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(height) * width * channels; }
    const std::string& class_name(const ImageSample& s) const { return class_names.at(s.label); }

    /// Labels that occur in `samples`, ascending.
    std::vector<std::uint32_t> present_labels() const;

    bool operator==(const Dataset&) const = default;
};

/// Train/test split over a shared class table. Held-out classes appear only in
/// `test` and never in `train`.
struct SplitDataset {
    Dataset train;
    Dataset test;
    std::vector<std::uint32_t> heldout;  // labels reserved for zero-shot evaluation

    bool operator==(const SplitDataset&) const = default;
};

/// Seeded description of the procedural "shape-world" corpus.
struct DatasetSpec {
    std::vector<std::string> classes = default_classes();
    std::vector<std::string> heldout;  // subset of classes never used for training
    int image_size = 16;
    int samples_per_class = 100;
    double position_jitter = 2.0;  // pixels, uniform in [-j, j]
    double scale_jitter = 0.2;     // relative, uniform in [-s, s]
    double noise = 0.05;           // additive uniform noise in [-n, n]
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    static std::vector<std::string> default_classes();
    /// All sixteen colour/shape combinations.
    static std::vector<std::string> all_classes();

    void validate() const;
};

/// Splits "red square" into {"red", "square"}; throws ConfigError on names
/// outside the shape-world vocabulary.
std::pair<std::string, std::string> parse_class_name(const std::string& name);

/// Renders one sample (anti-aliased via 4x4 supersampling). Pixel values are
/// rounded to float32 so that persisted datasets round-trip exactly.
VectorXd render_shape(const std::string& class_name, int image_size, double cx, double cy, double radius,
                      double noise, std::uint64_t noise_seed);

SplitDataset generate(const DatasetSpec& spec);

/// Little-endian binary: "SAFTDS01", u32 height, u32 width, u32 channels,
/// u32 class count, u64 sample count, class names (u32 length + UTF-8),
/// then per sample u32 label and H*W*C f32 pixels.
void save_dataset(const std::string& path, const Dataset& ds);

/// Loads and validates a dataset file. Pixels outside [0, 1] are rejected
/// with the offending sample and pixel index, never clamped.
Dataset load_external(const std::string& path);

}  // namespace saft
