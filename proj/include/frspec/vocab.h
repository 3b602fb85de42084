#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "frspec/matrix.h"

namespace frspec {

// Per-token occurrence counts over a token-id corpus.
struct FrequencyTable {
    int vocab_size = 0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    // Elementwise addition; merge order never affects the result.
    void merge(const FrequencyTable & other);
};

FrequencyTable count_frequencies(std::span<const Token> stream, int vocab_size);

// Frequency-ranked token subset with both directions of the id mapping.
struct RankedSubset {
    int vocab_size = 0;
    std::vector<Token> ordered_ids;                  // restricted index -> full id, count-descending
    std::vector<std::int32_t> full_to_restricted;    // -1 where absent

    int size() const { return static_cast<int>(ordered_ids.size()); }
    Token full_id(int restricted) const { return ordered_ids[restricted]; }
    std::int32_t restricted_index(Token full) const { return full_to_restricted[full]; }
    bool contains(Token full) const { return full_to_restricted[full] >= 0; }
};

// Top `size` ids by count (ties by ascending id); `forced` ids are always included.
RankedSubset build_subset(const FrequencyTable & table, int size, std::span<const Token> forced = {});

// Builds a subset from an already frequency-descending ranking (e.g. a ranked-id file):
// the first `size` ids, with missing forced ids replacing the lowest-ranked picks.
RankedSubset subset_from_ranking(std::span<const Token> ranked_desc, int size, int vocab_size,
                                 std::span<const Token> forced = {});

// Fraction of corpus occurrences covered by the subset. Throws on total == 0.
double coverage(const FrequencyTable & table, const RankedSubset & subset);

// Row-gathered LM head slice over a subset; rows are bitwise copies.
struct RestrictedHead {
    Matrix matrix;  // [subset.size() x d]
    std::shared_ptr<const RankedSubset> subset;
};

RestrictedHead restrict_lm_head(const Matrix & lm_head, std::shared_ptr<const RankedSubset> subset);

// restricted_size / full_size: the head-projection work left after restriction.
double flops_ratio(int full_size, int restricted_size);

// Zipf(s) token stream over ids 0..vocab_size-1, id 0 most likely.
TokenSequence zipf_tokens(int vocab_size, double exponent, std::size_t count, std::uint64_t seed);

// Token-stream file: magic "FRTK", version u32, vocab_size u32, count u64,
// then count little-endian u32 token ids.
struct TokenStreamData {
    int vocab_size = 0;
    TokenSequence tokens;
};

void write_token_stream(const std::string & path, int vocab_size, std::span<const Token> tokens);
TokenStreamData read_token_stream(const std::string & path);

// Plain-text stream: ASCII decimal ids separated by whitespace.
TokenStreamData read_token_stream_text(const std::string & path, int vocab_size);

// Ranked-subset file: one decimal token id per line, frequency-descending.
void write_ranked_file(const std::string & path, std::span<const Token> ordered_ids);
std::vector<Token> read_ranked_file(const std::string & path);

}  // namespace frspec
