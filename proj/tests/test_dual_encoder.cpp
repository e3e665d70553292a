#include <doctest.h>

#include <cmath>
#include <fstream>

#include "saft/image_encoder.hpp"
#include "saft/text_embedder.hpp"
#include "support.hpp"

using namespace saft;
using testing::random_vec;

namespace {

// Straight-line forward pass with plain loops, kept apart from the Eigen code.
std::vector<double> naive_forward(const Encoder& p, const std::vector<double>& x) {
    std::vector<double> a = x;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& w = p.layers[l].weight;
        std::vector<double> z(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            double s = p.layers[l].bias[r];
            for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * a[static_cast<std::size_t>(c)];
            z[static_cast<std::size_t>(r)] = (l + 1 < p.layers.size()) ? std::tanh(s) : s;
        }
        a = z;
    }
    return a;
}

Encoder linear_layer(const MatrixXd& w, const VectorXd& b) {
    Encoder p;
    p.activation = Activation::Linear;
    p.layers.push_back({w, b});
    return p;
}

}  // namespace

TEST_SUITE("text embedder") {

TEST_CASE("fnv1a64 matches the published test vectors") {
    const auto basis = TextEmbedder::kDefaultSeedIndex;
    CHECK(fnv1a64(basis, "") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64(basis, "a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64(basis, "foobar") == 0x85944171f73967e8ULL);
    CHECK(fnv1a64(7, "red") == 0xf4f755023d9c520eULL);
}

TEST_CASE("embedding matches the reference hashing") {
    const std::vector<double> expected{0.0, 0.0, 0.0, 0.22360679774997896, -0.6708203932499369, 0.0,
                                       0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                                       -0.4472135954999579, 0.22360679774997896, -0.4472135954999579,
                                       0.22360679774997896};
    const VectorXd e = TextEmbedder(16).embed("Red Square");
    REQUIRE(e.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(e[i] == doctest::Approx(expected[static_cast<std::size_t>(i)]).epsilon(1e-15));
}

TEST_CASE("reference cosines between class names") {
    const TextEmbedder emb;
    CHECK(cosine_similarity(emb.embed("red square"), emb.embed("red circle")) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cosine_similarity(emb.embed("red square"), emb.embed("blue circle")) ==
          doctest::Approx(0.08703882797784893).epsilon(1e-12));
}

TEST_CASE("embedding is deterministic, unit norm and case-insensitive") {
    const TextEmbedder emb;
    for (const char* t : {"red square", "a", "What does a blue circle look like?", "x y z"}) {
        const VectorXd a = emb.embed(t), b = emb.embed(t);
        CHECK(a == b);
        CHECK(std::abs(a.norm() - 1.0) <= 1e-12);
    }
    CHECK(emb.embed("RED Square") == emb.embed("red square"));
}

TEST_CASE("lexical overlap raises similarity") {
    const TextEmbedder emb;
    const VectorXd base = emb.embed("red square");
    CHECK(cosine_similarity(base, emb.embed("red square photo")) > cosine_similarity(base, emb.embed("blue circle")));
}

TEST_CASE("short texts still embed through the sentinels") {
    const TextEmbedder emb;
    CHECK(emb.embed("a").norm() == doctest::Approx(1.0));
    CHECK_THROWS_AS(emb.embed(""), DegenerateInputError);
    CHECK_THROWS_AS(TextEmbedder(0), ConfigError);
    CHECK_THROWS_AS(TextEmbedder(16, 0), ConfigError);
}

TEST_CASE("config hash distinguishes embedders") {
    CHECK(TextEmbedder(16).config_hash() == "1ac8cad642207299");
    CHECK(TextEmbedder(16).config_hash() != TextEmbedder(32).config_hash());
    CHECK(TextEmbedder(16, 3).config_hash() != TextEmbedder(16, 4).config_hash());
}

TEST_CASE("embedding a string never changes the embedder") {
    const TextEmbedder emb;
    const VectorXd before = emb.embed("green triangle");
    for (int i = 0; i < 100; ++i) (void)emb.embed("noise " + std::to_string(i));
    CHECK(emb.embed("green triangle") == before);
}

}

TEST_SUITE("image encoder") {

TEST_CASE("identity layer passes the input through") {
    Rng rng(1);
    const VectorXd x = random_vec(rng, 6, 0, 1);
    const auto p = linear_layer(MatrixXd::Identity(6, 6), VectorXd::Zero(6));
    CHECK(encode_image(p, x) == x);
}

TEST_CASE("zero weights output the bias") {
    VectorXd b(3);
    b << 0.5, -1, 2;
    const auto p = linear_layer(MatrixXd::Zero(3, 5), b);
    Rng rng(2);
    for (int t = 0; t < 5; ++t) CHECK(encode_image(p, random_vec(rng, 5, 0, 1)) == b);
}

TEST_CASE("forward pass matches a naive reimplementation") {
    const auto p = init_encoder<double>(12, {8}, 5, Activation::Tanh, 7);
    Rng rng(7);
    const VectorXd x = random_vec(rng, 12, 0, 1);
    const auto ref = naive_forward(p, std::vector<double>(x.data(), x.data() + x.size()));
    const VectorXd y = encode_image(p, x);
    for (int i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("default architecture and init") {
    const auto p = init_encoder<double>(768, {128, 64}, 128, Activation::Tanh, 3);
    CHECK(p.layers.size() == 3);
    CHECK(p.input_dim() == 768);
    CHECK(p.embed_dim() == 128);
    CHECK(p.parameter_count() == 768 * 128 + 128 + 128 * 64 + 64 + 64 * 128 + 128);
    CHECK_NOTHROW(p.validate());
    CHECK(p == init_encoder<double>(768, {128, 64}, 128, Activation::Tanh, 3));
    CHECK_FALSE(p == init_encoder<double>(768, {128, 64}, 128, Activation::Tanh, 4));
    const double bound = std::sqrt(3.0 / 768.0);
    CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(p.layers[0].bias.isZero(0.0));
}

TEST_CASE("shape errors") {
    const auto p = init_encoder<double>(4, {3}, 2, Activation::Tanh, 1);
    CHECK_THROWS_AS(encode_image(p, VectorXd(VectorXd::Zero(5))), ShapeMismatchError);
    CHECK_THROWS_AS(encode_image_vjp(p, VectorXd(VectorXd::Zero(4)), VectorXd(VectorXd::Zero(3))), ShapeMismatchError);
    auto bad = p;
    bad.layers[1].weight = MatrixXd::Zero(2, 4);
    CHECK_THROWS_AS(bad.validate(), ShapeMismatchError);
    bad = p;
    bad.layers[0].bias[0] = std::nan("");
    CHECK_THROWS(bad.validate());
}

TEST_CASE("linear layer input gradient is W^T upstream") {
    Rng rng(3);
    const MatrixXd w = testing::random_mat(rng, 4, 6);
    const auto p = linear_layer(w, random_vec(rng, 4));
    const VectorXd up = random_vec(rng, 4);
    const auto vjp = encode_image_vjp(p, random_vec(rng, 6, 0, 1), up);
    CHECK((vjp.grad_x - w.transpose() * up).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vjp matches central differences for pixels and parameters") {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        const auto p = init_encoder<double>(10, {7, 5}, 4, Activation::Tanh, rng.next());
        const VectorXd x = random_vec(rng, 10, 0, 1);
        const VectorXd up = random_vec(rng, 4);
        const auto vjp = encode_image_vjp(p, x, up);

        const std::function<double(const VectorXd&)> fx = [&](const VectorXd& v) { return up.dot(encode_image(p, v)); };
        CHECK(max_relative_error(vjp.grad_x, finite_diff_grad(fx, x, 1e-6)) < 1e-4);

        const std::function<double(const VectorXd&)> ft = [&](const VectorXd& theta) {
            return up.dot(encode_image(unflatten(p, theta), x));
        };
        CHECK(max_relative_error(flatten(vjp.grad_params), finite_diff_grad(ft, flatten(p), 1e-6)) < 1e-4);
    }
}

TEST_CASE("zero upstream gives zero gradients") {
    const auto p = init_encoder<double>(6, {4}, 3, Activation::Tanh, 5);
    Rng rng(5);
    const auto vjp = encode_image_vjp(p, random_vec(rng, 6, 0, 1), VectorXd(VectorXd::Zero(3)));
    CHECK(vjp.grad_x.isZero(0.0));
    CHECK(flatten(vjp.grad_params).isZero(0.0));
}

TEST_CASE("vjp is linear in the upstream vector") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const auto p = init_encoder<double>(8, {6}, 3, Activation::Tanh, rng.next());
        const VectorXd x = random_vec(rng, 8, 0, 1), a = random_vec(rng, 3), b = random_vec(rng, 3);
        const auto va = encode_image_vjp(p, x, a), vb = encode_image_vjp(p, x, b);
        const auto vab = encode_image_vjp(p, x, VectorXd(a + b));
        CHECK((vab.grad_x - va.grad_x - vb.grad_x).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((flatten(vab.grad_params) - flatten(va.grad_params) - flatten(vb.grad_params)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("float instantiation agrees with double") {
    const auto pd = init_encoder<double>(6, {4}, 3, Activation::Tanh, 8);
    const auto pf = init_encoder<float>(6, {4}, 3, Activation::Tanh, 8);
    Rng rng(8);
    const VectorXd x = random_vec(rng, 6, 0, 1);
    const Eigen::VectorXf yf = encode_image(pf, Eigen::VectorXf(x.cast<float>()));
    CHECK((yf.cast<double>() - encode_image(pd, x)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("parameter file round trip is bit-exact") {
    testing::TempDir dir("enc");
    const auto p = init_encoder<double>(9, {5, 4}, 3, Activation::Tanh, 12);
    save_params(dir / "p.saftenc", p);
    CHECK(load_params(dir / "p.saftenc") == p);
}

TEST_CASE("fixture written by an independent tool loads") {
    const auto p = load_params(testing::fixture("tiny.saftenc"));
    REQUIRE(p.layers.size() == 2);
    CHECK(p.input_dim() == 4);
    CHECK(p.embed_dim() == 2);
    CHECK(p.layers[0].weight(1, 0) == -1.5);
    CHECK(p.layers[1].bias[1] == 0.3);
    VectorXd x(4);
    x << 0.2, 0.4, 0.6, 0.8;
    const VectorXd y = encode_image(p, x);
    CHECK(y[0] == doctest::Approx(0.47313115596295907).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(1.857229960580108).epsilon(1e-14));
}

TEST_CASE("corrupt parameter files are rejected") {
    testing::TempDir dir("enc-bad");
    const std::string good = testing::slurp(testing::fixture("tiny.saftenc"));
    auto write = [&](const std::string& name, const std::string& bytes) {
        std::ofstream(dir / name, std::ios::binary) << bytes;
        return dir / name;
    };
    CHECK_THROWS_AS(load_params(write("trunc", good.substr(0, good.size() - 3))), FormatError);
    CHECK_THROWS_AS(load_params(write("header", good.substr(0, 12))), FormatError);
    std::string version = good;
    version[7] = '2';
    CHECK_THROWS_AS(load_params(write("version", version)), FormatError);
    std::string magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(load_params(write("magic", magic)), FormatError);
    CHECK_THROWS_AS(load_params(write("trailing", good + "x")), FormatError);
    std::string chain = good;
    chain[8 + 8 + 8 + 8 + 8 * 12 + 8 * 3 + 8] = 4;  // second layer claims 4 inputs
    CHECK_THROWS_AS(load_params(write("chain", chain)), FormatError);
    CHECK_THROWS_AS(load_params(dir / "missing"), FormatError);
}

}
