#include "saft/text_embedder.hpp"

#include <cstdio>

namespace saft {

std::uint64_t fnv1a64(std::uint64_t seed, std::string_view bytes) {
    std::uint64_t h = seed;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

TextEmbedder::TextEmbedder(int dim, int ngram_size, std::uint64_t seed_index, std::uint64_t seed_sign)
    : dim_(dim), ngram_size_(ngram_size), seed_index_(seed_index), seed_sign_(seed_sign) {
    if (dim_ < 1) throw ConfigError("text embedder: embed_dim must be >= 1");
    if (ngram_size_ < 1) throw ConfigError("text embedder: ngram_size must be >= 1");
}

VectorXd TextEmbedder::embed(std::string_view text) const {
    if (text.empty()) throw DegenerateInputError("embed_text: empty text");

    std::string padded;
    padded.reserve(text.size() + 2);
    padded.push_back('^');
    for (const char c : text) {
        // ASCII-only lowercasing keeps the result locale independent.
        padded.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
    padded.push_back('$');

    VectorXd acc = VectorXd::Zero(dim_);
    const auto n = static_cast<std::size_t>(ngram_size_);
    if (padded.size() >= n) {
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
            const std::string_view gram(padded.data() + i, n);
            const auto bucket = static_cast<Eigen::Index>(fnv1a64(seed_index_, gram) % static_cast<std::uint64_t>(dim_));
            const double sign = (fnv1a64(seed_sign_, gram) % 2 == 0) ? 1.0 : -1.0;
            acc[bucket] += sign;
        }
    }
    if (acc.isZero(0.0)) {
        throw DegenerateInputError("embed_text: n-gram features cancel to zero for \"" + std::string(text) + "\"");
    }
    return l2_normalize(acc);
}

std::string TextEmbedder::config_hash() const {
    const std::string key = "hashed-ngram/v1;dim=" + std::to_string(dim_) + ";n=" + std::to_string(ngram_size_) +
                            ";a=" + std::to_string(seed_index_) + ";b=" + std::to_string(seed_sign_);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(kDefaultSeedIndex, key)));
    return buf;
}

}  // namespace saft
