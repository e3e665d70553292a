#include "saft/synth_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "saft/rng.hpp"

namespace saft {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'T', 'D', 'S', '0', '1'};

std::array<double, 3> color_rgb(const std::string& color) {
    if (color == "red") return {0.9, 0.1, 0.1};
    if (color == "green") return {0.1, 0.8, 0.15};
    if (color == "blue") return {0.15, 0.2, 0.95};
    return {0.9, 0.85, 0.1};  // yellow
}

bool inside(const std::string& shape, double dx, double dy, double r) {
    if (shape == "square") return std::max(std::abs(dx), std::abs(dy)) <= 0.85 * r;
    if (shape == "circle") return dx * dx + dy * dy <= r * r;
    if (shape == "triangle") return dy >= -r && dy <= 0.8 * r && std::abs(dx) <= 0.6 * (dy + r);
    // cross
    const double arm = 0.3 * r;
    return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
}

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

}  // namespace

std::vector<std::uint32_t> Dataset::present_labels() const {
    std::set<std::uint32_t> s;
    for (const auto& x : samples) s.insert(x.label);
    return {s.begin(), s.end()};
}

std::vector<std::string> DatasetSpec::default_classes() {
    // Every colour appears with two shapes and every shape with two colours,
    // so the complementary eight combinations can serve as held-out classes.
    return {"red square",    "green square",     "green circle", "blue circle",
            "blue triangle", "yellow triangle", "yellow cross", "red cross"};
}

std::vector<std::string> DatasetSpec::all_classes() {
    std::vector<std::string> out;
    for (const char* shape : kShapes) {
        for (const char* color : kColors) out.push_back(std::string(color) + " " + shape);
    }
    return out;
}

void DatasetSpec::validate() const {
    if (classes.size() < 2) throw ConfigError("dataset: need at least two classes");
    std::set<std::string> names;
    for (const auto& c : classes) {
        parse_class_name(c);
        if (!names.insert(c).second) throw ConfigError("dataset: duplicate class '" + c + "'");
    }
    for (const auto& h : heldout) {
        if (!names.count(h)) throw ConfigError("dataset: held-out class '" + h + "' is not in classes");
    }
    if (heldout.size() >= classes.size()) throw ConfigError("dataset: at least one class must be trainable");
    if (image_size < 4) throw ConfigError("dataset: image_size must be >= 4");
    if (samples_per_class < 1) throw ConfigError("dataset: samples_per_class must be >= 1");
    if (position_jitter < 0 || scale_jitter < 0 || scale_jitter >= 1 || noise < 0) {
        throw ConfigError("dataset: jitter/noise ranges must be non-negative (scale_jitter < 1)");
    }
    if (!(test_fraction >= 0 && test_fraction < 1)) throw ConfigError("dataset: test_fraction must be in [0, 1)");
}

std::pair<std::string, std::string> parse_class_name(const std::string& name) {
    const auto space = name.find(' ');
    if (space == std::string::npos) throw ConfigError("class name '" + name + "' is not '<color> <shape>'");
    std::string color = name.substr(0, space);
    std::string shape = name.substr(space + 1);
    const bool color_ok = std::find_if(kColors.begin(), kColors.end(), [&](const char* c) { return color == c; }) !=
                          kColors.end();
    const bool shape_ok = std::find_if(kShapes.begin(), kShapes.end(), [&](const char* s) { return shape == s; }) !=
                          kShapes.end();
    if (!color_ok || !shape_ok) throw ConfigError("class name '" + name + "' is outside the shape-world vocabulary");
    return {color, shape};
}

VectorXd render_shape(const std::string& class_name, int image_size, double cx, double cy, double radius,
                      double noise, std::uint64_t noise_seed) {
    const auto [color, shape] = parse_class_name(class_name);
    const auto rgb = color_rgb(color);
    constexpr int kSub = 4;
    Rng rng(noise_seed);
    VectorXd px(static_cast<Eigen::Index>(image_size) * image_size * 3);
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    const double dx = x + (sx + 0.5) / kSub - cx;
                    const double dy = y + (sy + 0.5) / kSub - cy;
                    hits += inside(shape, dx, dy, radius) ? 1 : 0;
                }
            }
            const double coverage = static_cast<double>(hits) / (kSub * kSub);
            for (int c = 0; c < 3; ++c) {
                double v = coverage * rgb[c];
                if (noise > 0) v += rng.uniform(-noise, noise);
                v = std::clamp(v, 0.0, 1.0);
                px[(static_cast<Eigen::Index>(y) * image_size + x) * 3 + c] = static_cast<double>(static_cast<float>(v));
            }
        }
    }
    return px;
}

SplitDataset generate(const DatasetSpec& spec) {
    spec.validate();
    SplitDataset out;
    for (Dataset* d : {&out.train, &out.test}) {
        d->height = d->width = spec.image_size;
        d->channels = 3;
        d->class_names = spec.classes;
    }
    const std::set<std::string> heldout(spec.heldout.begin(), spec.heldout.end());
    const double centre = spec.image_size / 2.0;
    const double base_radius = 0.3 * spec.image_size;
    const auto n_train = static_cast<int>(std::lround(spec.samples_per_class * (1.0 - spec.test_fraction)));

    for (std::uint32_t label = 0; label < spec.classes.size(); ++label) {
        const bool is_heldout = heldout.count(spec.classes[label]) > 0;
        if (is_heldout) out.heldout.push_back(label);
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Rng rng(derive_seed(spec.seed, 0x7368617065ULL + label, static_cast<std::uint64_t>(i)));
            const double cx = centre + rng.uniform(-spec.position_jitter, spec.position_jitter);
            const double cy = centre + rng.uniform(-spec.position_jitter, spec.position_jitter);
            const double r = base_radius * (1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter));
            ImageSample s{render_shape(spec.classes[label], spec.image_size, cx, cy, r, spec.noise, rng.next()), label};
            (is_heldout || i >= n_train ? out.test : out.train).samples.push_back(std::move(s));
        }
    }
    return out;
}

void save_dataset(const std::string& path, const Dataset& ds) {
    std::string buf(kMagic, sizeof kMagic);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.height));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.width));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.channels));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.class_names.size()));
    put<std::uint64_t>(buf, ds.samples.size());
    for (const auto& name : ds.class_names) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
    }
    for (const auto& s : ds.samples) {
        if (s.pixels.size() != ds.pixel_count()) throw ShapeMismatchError("save_dataset: sample size mismatch");
        put<std::uint32_t>(buf, s.label);
        for (Eigen::Index i = 0; i < s.pixels.size(); ++i) put<float>(buf, static_cast<float>(s.pixels[i]));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed: " + path);
}

Dataset load_external(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset file " + path);
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (data.size() - pos < n) throw FormatError(path + ": truncated dataset file");
    };
    auto get = [&]<typename T>(T) {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    };

    need(sizeof kMagic);
    if (std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) throw FormatError(path + ": bad magic, expected SAFTDS01");
    pos = sizeof kMagic;

    Dataset ds;
    ds.height = static_cast<int>(get(std::uint32_t{}));
    ds.width = static_cast<int>(get(std::uint32_t{}));
    ds.channels = static_cast<int>(get(std::uint32_t{}));
    const auto n_classes = get(std::uint32_t{});
    const auto n_samples = get(std::uint64_t{});
    if (ds.height < 1 || ds.width < 1 || ds.channels < 1 || ds.height > 4096 || ds.width > 4096 || ds.channels > 64) {
        throw FormatError(path + ": implausible image shape in header");
    }
    if (n_classes < 1) throw FormatError(path + ": header declares no classes");
    for (std::uint32_t c = 0; c < n_classes; ++c) {
        const auto len = get(std::uint32_t{});
        need(len);
        ds.class_names.emplace_back(data.data() + pos, len);
        pos += len;
    }
    const auto px = static_cast<std::size_t>(ds.pixel_count());
    if (n_samples > (data.size() - pos) / (4 + 4 * px)) throw FormatError(path + ": sample count exceeds file size");
    ds.samples.reserve(n_samples);
    for (std::uint64_t i = 0; i < n_samples; ++i) {
        ImageSample s;
        s.label = get(std::uint32_t{});
        if (s.label >= n_classes) {
            throw FormatError(path + ": sample " + std::to_string(i) + " has label " + std::to_string(s.label) +
                              " outside the class table");
        }
        s.pixels.resize(static_cast<Eigen::Index>(px));
        for (std::size_t j = 0; j < px; ++j) {
            const float v = get(float{});
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw FormatError(path + ": sample " + std::to_string(i) + " pixel " + std::to_string(j) + " = " +
                                  std::to_string(v) + " is outside [0, 1]");
            }
            s.pixels[static_cast<Eigen::Index>(j)] = v;
        }
        ds.samples.push_back(std::move(s));
    }
    if (pos != data.size()) throw FormatError(path + ": trailing bytes after last sample");
    return ds;
}

}  // namespace saft
