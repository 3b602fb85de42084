#pragma once

#include <random>
#include <span>
#include <vector>

#include "frspec/matrix.h"
#include "frspec/model.h"
#include "frspec/vocab.h"

namespace frspec {

struct DraftParams {
    int beam_width = 10;
    int search_depth = 6;
    int total_draft_tokens = 60;  // <= 64 so ancestor sets pack into one 64-bit word
};

void validate_params(const DraftParams & params);

struct DraftTree {
    struct Node {
        Token token_id;    // full-vocabulary id
        int parent;        // node index, -1 for children of the root anchor
        int depth;         // root children have depth 1
        double log_joint;  // cumulative log draft probability along the path
    };
    std::vector<Node> nodes;  // topological order: parent index < child index
};

// Tree plus the per-node draft distributions stochastic verification needs.
// Distributions are over the drafting head's vocabulary (restricted or full) and
// are only recorded for nodes that were expanded; others stay empty.
struct DraftResult {
    DraftTree tree;
    std::vector<float> root_probs;
    std::vector<std::vector<float>> node_probs;
};

// Beam-search drafting. `pending` holds the verified tokens not yet in `cache`,
// ending with the tree's root anchor; it is forwarded first (one of the
// search_depth draft forwards) to obtain the root distribution. Per level, the
// beam expands by beam_width children per node and keeps the global top
// beam_width by cumulative log probability; the final tree is the top
// total_draft_tokens of the whole search history (ancestors always qualify).
//
// With rng == nullptr children are the per-node top-width tokens. With an rng,
// children are drawn without replacement from the node distribution and kept in
// draw order, which is the order stochastic verification must follow; the final
// selection then never splits a sibling draw prefix.
//
// Token ids in the tree are always full-vocabulary ids; with a restricted head
// the drafted ids are mapped through the subset before insertion.
// On return the cache is truncated back to the verified context.
DraftResult build_draft_tree(const DraftModel & draft, KVCache & cache,
                             std::span<const Token> pending, const DraftParams & params,
                             const RestrictedHead * head, std::mt19937_64 * rng,
                             bool keep_probs);

struct LinearTree {
    TokenSequence tokens;
    std::vector<int> parents;
    std::vector<int> depths;
};

// Parallel arrays in node order (index 0 is the first draft node).
LinearTree linearize(const DraftTree & tree);

}  // namespace frspec
