#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "frspec/drafting.h"
#include "frspec/matrix.h"

namespace frspec {

// Per-draft-token ancestor sets packed into 64-bit words: bit j of words[i] is
// set iff draft token j is an ancestor of (or equal to) token i. Visibility of
// the cached prefix is implicit; only the draft-token block is materialized.
struct TreeMask {
    int num_draft = 0;
    std::vector<std::uint64_t> words;
};

// words[i] = words[parent(i)] | (1 << i); children of the root get only their
// own bit. Throws CapacityError beyond 64 nodes.
TreeMask build_tree_mask(const DraftTree & tree);

struct VerifyOutcome {
    std::vector<int> accepted_path;  // accepted node indices, root child first
    TokenSequence emitted;           // accepted tokens plus exactly one bonus token

    int accepted_length() const { return static_cast<int>(emitted.size()); }
};

// Greedy walk: at each accepted position the target argmax (ties to the lowest
// token id) is matched against the node's children; the first mismatch stops the
// walk and the argmax itself is emitted as the bonus token.
// node_logits has one full-vocabulary row per tree node; root_logits belongs to
// the root position.
VerifyOutcome verify_greedy(std::span<const float> root_logits, const Matrix & node_logits,
                            const DraftTree & tree);

// Rejection sampling over the tree: children are tried in their stored order
// (the draft's draw order); child t is accepted with probability
// min(1, p(t)/q(t)); a rejection replaces p with norm(max(0, p - q)) and
// renormalizes q over the untried tokens; when every child is rejected the
// bonus token is sampled from the remaining residual. q comes from the draft
// distributions in `draft` (restricted to `subset` when non-null, exact zero
// outside it); p is softmax(logits / temperature).
// Emitted tokens are marginally distributed exactly as the target's.
VerifyOutcome verify_stochastic(std::span<const float> root_logits, const Matrix & node_logits,
                                const DraftResult & draft, const RankedSubset * subset,
                                float temperature, std::mt19937_64 & rng);

struct AcceptanceStats {
    std::int64_t iterations = 0;
    std::int64_t emitted = 0;
    double mean_accepted_length = 0.0;
    std::vector<std::int64_t> histogram;  // histogram[len] = iterations of that accepted length

    void add(int accepted_length);
    void merge(const AcceptanceStats & other);
};

AcceptanceStats accepted_length_stats(std::span<const VerifyOutcome> outcomes);

}  // namespace frspec
