#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "saft/numerics.hpp"

namespace saft {

/// 64-bit FNV-1a with the seed used as the offset basis.
std::uint64_t fnv1a64(std::uint64_t seed, std::string_view bytes);

/// Frozen text encoder: signed feature hashing of character n-grams.
///
/// The text is lowercased and wrapped in '^' / '$' sentinels. Each n-gram
/// contributes +-1 at bucket `fnv1a64(seed_index, gram) % dim`, the sign
/// taken from the parity of `fnv1a64(seed_sign, gram)` (even is +1). The
/// accumulated vector is l2-normalized. Lexically overlapping strings land
/// close together, which is the notion of semantic relatedness this
/// project works with.
///
/// Embeddings depend only on (dim, ngram_size, seeds, text), byte for byte.
class TextEmbedder {
public:
    static constexpr std::uint64_t kDefaultSeedIndex = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kDefaultSeedSign = 0x84222325cbf29ce4ULL;

    explicit TextEmbedder(int dim = 128, int ngram_size = 3, std::uint64_t seed_index = kDefaultSeedIndex,
                          std::uint64_t seed_sign = kDefaultSeedSign);

    int dim() const noexcept { return dim_; }
    int ngram_size() const noexcept { return ngram_size_; }
    std::uint64_t seed_index() const noexcept { return seed_index_; }
    std::uint64_t seed_sign() const noexcept { return seed_sign_; }

    VectorXd embed(std::string_view text) const;

    /// Identifies the embedding function; stored alongside persisted banks so
    /// stale embeddings are detected on load.
    std::string config_hash() const;

private:
    int dim_;
    int ngram_size_;
    std::uint64_t seed_index_;
    std::uint64_t seed_sign_;
};

}  // namespace saft
