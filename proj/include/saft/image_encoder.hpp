#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "saft/numerics.hpp"
#include "saft/rng.hpp"

namespace saft {

enum class Activation { Linear, Tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

template <typename Scalar>
struct DenseLayer {
    Mat<Scalar> weight;  // out x in
    Vec<Scalar> bias;    // out
};

/// Trainable image encoder: a multilayer perceptron over flattened HWC
/// pixels. Hidden layers apply `activation`; the last layer is affine, and
/// its output is the unnormalized image embedding.
template <typename Scalar>
struct EncoderParams {
    std::vector<DenseLayer<Scalar>> layers;
    Activation activation = Activation::Tanh;

    Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
    Eigen::Index embed_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

    Eigen::Index parameter_count() const {
        Eigen::Index n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Throws ShapeMismatchError if consecutive layers do not chain or a bias
    /// length disagrees with its weight, NonFiniteError on NaN/Inf.
    void validate() const {
        if (layers.empty()) throw ShapeMismatchError("encoder has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.bias.size() != l.weight.rows()) {
                throw ShapeMismatchError("layer " + std::to_string(i) + ": bias length != weight rows");
            }
            if (i > 0 && layers[i - 1].weight.rows() != l.weight.cols()) {
                throw ShapeMismatchError("layer " + std::to_string(i) + ": input dim does not chain");
            }
            if (!l.weight.allFinite() || !l.bias.allFinite()) {
                throw NonFiniteError("layer " + std::to_string(i) + " has non-finite parameters");
            }
        }
    }

    EncoderParams zeros_like() const {
        EncoderParams z;
        z.activation = activation;
        z.layers.reserve(layers.size());
        for (const auto& l : layers) {
            z.layers.push_back({Mat<Scalar>::Zero(l.weight.rows(), l.weight.cols()), Vec<Scalar>::Zero(l.bias.size())});
        }
        return z;
    }

    bool same_shape(const EncoderParams& o) const {
        if (o.layers.size() != layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (o.layers[i].weight.rows() != layers[i].weight.rows() ||
                o.layers[i].weight.cols() != layers[i].weight.cols() ||
                o.layers[i].bias.size() != layers[i].bias.size()) {
                return false;
            }
        }
        return true;
    }

    /// this += scale * other
    void add_scaled(const EncoderParams& other, Scalar scale) {
        if (!same_shape(other)) throw ShapeMismatchError("add_scaled: parameter shapes differ");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weight.noalias() += scale * other.layers[i].weight;
            layers[i].bias.noalias() += scale * other.layers[i].bias;
        }
    }

    bool operator==(const EncoderParams& o) const {
        if (activation != o.activation || !same_shape(o)) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].weight != o.layers[i].weight || layers[i].bias != o.layers[i].bias) return false;
        }
        return true;
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        }
        return true;
    }
};

/// Flattens parameters layer by layer (weights column-major, then bias).
template <typename Scalar>
Vec<Scalar> flatten(const EncoderParams<Scalar>& p) {
    Vec<Scalar> out(p.parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : p.layers) {
        out.segment(k, l.weight.size()) = l.weight.reshaped();
        k += l.weight.size();
        out.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return out;
}

/// Inverse of flatten, using `shape` for layer dimensions.
template <typename Scalar>
EncoderParams<Scalar> unflatten(const EncoderParams<Scalar>& shape, const Vec<Scalar>& flat) {
    if (flat.size() != shape.parameter_count()) throw ShapeMismatchError("unflatten: wrong length");
    EncoderParams<Scalar> p = shape.zeros_like();
    Eigen::Index k = 0;
    for (auto& l : p.layers) {
        l.weight.reshaped() = flat.segment(k, l.weight.size());
        k += l.weight.size();
        l.bias = flat.segment(k, l.bias.size());
        k += l.bias.size();
    }
    return p;
}

/// Kaiming-style uniform initialization: weights ~ U(-sqrt(3/fan_in),
/// sqrt(3/fan_in)), biases zero. Bit-reproducible for a given seed.
template <typename Scalar>
EncoderParams<Scalar> init_encoder(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                                   Eigen::Index embed_dim, Activation activation, std::uint64_t seed) {
    if (input_dim < 1 || embed_dim < 1) throw ConfigError("init_encoder: dimensions must be positive");
    Rng rng(derive_seed(seed, 0x656e636f646572ULL));
    EncoderParams<Scalar> p;
    p.activation = activation;
    std::vector<Eigen::Index> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(embed_dim);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        if (dims[i + 1] < 1) throw ConfigError("init_encoder: hidden widths must be positive");
        const Scalar bound = std::sqrt(Scalar(3) / static_cast<Scalar>(dims[i]));
        DenseLayer<Scalar> layer{Mat<Scalar>(dims[i + 1], dims[i]), Vec<Scalar>::Zero(dims[i + 1])};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-1.0, 1.0)) * bound;
            }
        }
        p.layers.push_back(std::move(layer));
    }
    return p;
}

/// Per-layer activations recorded by a forward pass; `activations[0]` is the
/// input and `activations.back()` the embedding.
template <typename Scalar>
struct ForwardTrace {
    std::vector<Vec<Scalar>> activations;

    const Vec<Scalar>& output() const { return activations.back(); }
};

template <typename Scalar>
ForwardTrace<Scalar> encode_image_traced(const EncoderParams<Scalar>& p, const Vec<Scalar>& x) {
    if (p.layers.empty() || x.size() != p.input_dim()) {
        throw ShapeMismatchError("encode_image: input has " + std::to_string(x.size()) + " values, encoder expects " +
                                 std::to_string(p.input_dim()));
    }
    ForwardTrace<Scalar> t;
    t.activations.reserve(p.layers.size() + 1);
    t.activations.push_back(x);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        Vec<Scalar> z = l.bias;
        z.noalias() += l.weight * t.activations.back();
        if (i + 1 < p.layers.size() && p.activation == Activation::Tanh) z = z.array().tanh();
        t.activations.push_back(std::move(z));
    }
    return t;
}

/// Raw (unnormalized) image embedding.
template <typename Scalar>
Vec<Scalar> encode_image(const EncoderParams<Scalar>& p, const Vec<Scalar>& x) {
    return encode_image_traced(p, x).output();
}

/// Backpropagates `upstream` (dL/d embedding) through a recorded forward
/// pass. Returns dL/dx; when `grad_params` is non-null, adds
/// `param_scale * dL/dtheta` into it.
template <typename Scalar>
Vec<Scalar> backprop(const EncoderParams<Scalar>& p, const ForwardTrace<Scalar>& trace, const Vec<Scalar>& upstream,
                     EncoderParams<Scalar>* grad_params = nullptr, Scalar param_scale = Scalar(1)) {
    if (upstream.size() != p.embed_dim()) throw ShapeMismatchError("encode_image_vjp: upstream length mismatch");
    Vec<Scalar> g = upstream;
    for (std::size_t i = p.layers.size(); i-- > 0;) {
        const bool hidden = i + 1 < p.layers.size();
        if (hidden && p.activation == Activation::Tanh) {
            g.array() *= Scalar(1) - trace.activations[i + 1].array().square();
        }
        if (grad_params != nullptr) {
            auto& gl = grad_params->layers[i];
            gl.weight.noalias() += (param_scale * g) * trace.activations[i].transpose();
            gl.bias.noalias() += param_scale * g;
        }
        g = p.layers[i].weight.transpose() * g;
    }
    return g;
}

template <typename Scalar>
struct EncoderVjp {
    Vec<Scalar> grad_x;
    EncoderParams<Scalar> grad_params;
};

/// Vector-Jacobian products of x -> encode_image(p, x) with respect to the
/// input pixels and every parameter.
template <typename Scalar>
EncoderVjp<Scalar> encode_image_vjp(const EncoderParams<Scalar>& p, const Vec<Scalar>& x, const Vec<Scalar>& upstream) {
    const auto trace = encode_image_traced(p, x);
    EncoderVjp<Scalar> out{Vec<Scalar>(), p.zeros_like()};
    out.grad_x = backprop(p, trace, upstream, &out.grad_params);
    return out;
}

using Encoder = EncoderParams<double>;

/// Little-endian binary: "SAFTENC1", u64 layer count, then per layer u64
/// rows, u64 cols, row-major f64 weights, f64 biases.
void save_params(const std::string& path, const Encoder& params);

/// The file format does not record the hidden activation; it is supplied by
/// the caller (tanh unless stated otherwise).
Encoder load_params(const std::string& path, Activation activation = Activation::Tanh);

}  // namespace saft
