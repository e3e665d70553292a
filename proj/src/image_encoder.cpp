#include "saft/image_encoder.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace saft {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'T', 'E', 'N', 'C', '1'};

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

    template <typename T>
    T get() {
        if (data_.size() - pos_ < sizeof(T)) throw FormatError(path_ + ": truncated parameter file");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "linear") return Activation::Linear;
    throw ConfigError("unknown activation '" + name + "' (expected tanh or linear)");
}

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

void save_params(const std::string& path, const Encoder& params) {
    params.validate();
    std::string buf(kMagic, sizeof kMagic);
    put<std::uint64_t>(buf, params.layers.size());
    for (const auto& l : params.layers) {
        put<std::uint64_t>(buf, static_cast<std::uint64_t>(l.weight.rows()));
        put<std::uint64_t>(buf, static_cast<std::uint64_t>(l.weight.cols()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<double>(buf, l.weight(r, c));
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(buf, l.bias[r]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed: " + path);
}

Encoder load_params(const std::string& path, Activation activation) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open parameter file " + path);
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (data.size() < sizeof kMagic || std::memcmp(data.data(), kMagic, 7) != 0) {
        throw FormatError(path + ": not a SAFTENC parameter file");
    }
    if (data[7] != kMagic[7]) throw FormatError(path + ": unsupported parameter file version '" + data[7] + "'");

    Reader rd(data, path);
    for (std::size_t i = 0; i < sizeof kMagic; ++i) rd.get<char>();
    const auto count = rd.get<std::uint64_t>();
    if (count == 0 || count > 1024) throw FormatError(path + ": implausible layer count");

    Encoder p;
    p.activation = activation;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto rows = rd.get<std::uint64_t>();
        const auto cols = rd.get<std::uint64_t>();
        if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24) ||
            rows * (cols + 1) * sizeof(double) > rd.remaining()) {
            throw FormatError(path + ": truncated or corrupt layer header");
        }
        DenseLayer<double> l{MatrixXd(rows, cols), VectorXd(rows)};
        for (std::uint64_t r = 0; r < rows; ++r) {
            for (std::uint64_t c = 0; c < cols; ++c) l.weight(r, c) = rd.get<double>();
        }
        for (std::uint64_t r = 0; r < rows; ++r) l.bias[r] = rd.get<double>();
        p.layers.push_back(std::move(l));
    }
    if (!rd.done()) throw FormatError(path + ": trailing bytes after last layer");
    try {
        p.validate();
    } catch (const Error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return p;
}

}  // namespace saft
