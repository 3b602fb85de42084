#include "frspec/drafting.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "frspec/errors.h"
#include "frspec/kernels.h"
#include "frspec/profiling.h"

namespace frspec {

void validate_params(const DraftParams & params) {
    if (params.beam_width < 1) throw std::invalid_argument("draft params: beam_width must be >= 1");
    if (params.search_depth < 1) throw std::invalid_argument("draft params: search_depth must be >= 1");
    if (params.total_draft_tokens < params.beam_width || params.total_draft_tokens > 64) {
        throw std::invalid_argument("draft params: total_draft_tokens must lie in [beam_width, 64]");
    }
}

namespace {

struct Candidate {
    Token token;          // full-vocabulary id
    int head_index;       // index into the drafting head's vocabulary
    int parent;           // candidate index, -1 for the root anchor
    int depth;
    int sibling_rank;     // creation rank among siblings (top-k rank or draw order)
    double log_joint;
    int cache_row = -1;   // draft-cache row once forwarded, else -1
    std::vector<float> probs;  // node distribution once expanded
};

// Children of one node: (head_index, prob) pairs. Deterministic mode takes the
// top-width tokens; sampled mode draws without replacement, in draw order.
std::vector<std::pair<int, float>> pick_children(std::span<const float> probs, int width,
                                                 std::mt19937_64 * rng) {
    const int n = static_cast<int>(probs.size());
    const int w = std::min(width, n);
    if (rng == nullptr) {
        return topk(probs, w);
    }
    std::vector<std::pair<int, float>> out;
    out.reserve(w);
    std::vector<double> work(probs.begin(), probs.end());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int draw = 0; draw < w; ++draw) {
        double total = 0.0;
        for (double p : work) total += p;
        if (total <= 0.0) break;
        const double u = uni(*rng) * total;
        double acc = 0.0;
        int picked = -1;
        for (int i = 0; i < n; ++i) {
            acc += work[i];
            if (u < acc) {
                picked = i;
                break;
            }
        }
        if (picked < 0) {  // guard against rounding at the upper edge
            for (int i = n - 1; i >= 0; --i) {
                if (work[i] > 0.0) {
                    picked = i;
                    break;
                }
            }
            if (picked < 0) break;
        }
        out.emplace_back(picked, probs[picked]);
        work[picked] = 0.0;
    }
    return out;
}

// Ranks candidate indices by cumulative probability; creation order breaks ties,
// so a parent always precedes its children.
std::vector<int> ranked_candidates(const std::vector<Candidate> & cands, int first) {
    std::vector<int> order;
    order.reserve(cands.size() - first);
    for (int i = first; i < static_cast<int>(cands.size()); ++i) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (cands[a].log_joint != cands[b].log_joint) return cands[a].log_joint > cands[b].log_joint;
        return a < b;
    });
    return order;
}

// Top-K selection over the search history. In sampled mode a child may only be
// kept together with all of its earlier-drawn siblings, so that the children
// present in the tree always form a prefix of the draw order.
std::vector<char> select_top_k(const std::vector<Candidate> & cands, int first, int k,
                               bool prefix_closed) {
    std::vector<char> selected(cands.size(), 0);
    int count = 0;
    for (int c : ranked_candidates(cands, first)) {
        if (selected[c]) continue;
        if (cands[c].parent >= 0 && !selected[cands[c].parent]) continue;  // ancestor was skipped
        if (!prefix_closed) {
            if (count + 1 > k) continue;
            selected[c] = 1;
            ++count;
            continue;
        }
        std::vector<int> group;
        for (int s = first; s < static_cast<int>(cands.size()); ++s) {
            if (!selected[s] && cands[s].parent == cands[c].parent &&
                cands[s].sibling_rank <= cands[c].sibling_rank) {
                group.push_back(s);
            }
        }
        if (count + static_cast<int>(group.size()) > k) continue;
        for (int s : group) selected[s] = 1;
        count += static_cast<int>(group.size());
    }
    return selected;
}

}  // namespace

DraftResult build_draft_tree(const DraftModel & draft, KVCache & cache,
                             std::span<const Token> pending, const DraftParams & params,
                             const RestrictedHead * head, std::mt19937_64 * rng,
                             bool keep_probs) {
    validate_params(params);
    if (pending.empty()) {
        throw std::invalid_argument("build_draft_tree: pending must end with the root token");
    }
    const RankedSubset * subset = head != nullptr ? head->subset.get() : nullptr;

    // Forward 1 of search_depth: the pending context, root last.
    ForwardResult fwd = draft_forward(draft, pending, cache, head);
    const int base_len = cache.len;
    const int anchor_pos = cache.positions[base_len - 1];

    DraftResult result;
    {
        prof::Scope scope(prof::Component::softmax);
        result.root_probs = softmax(fwd.logits.row_span(fwd.logits.rows - 1), 1.0f).probs;
    }

    std::vector<Candidate> cands;
    std::vector<int> beam;  // candidate indices forwarded at the next level

    {
        prof::Scope scope(prof::Component::tree_ops);
        int rank = 0;
        for (auto [idx, prob] : pick_children(result.root_probs, params.beam_width, rng)) {
            Candidate c;
            c.token = subset != nullptr ? subset->full_id(idx) : static_cast<Token>(idx);
            c.head_index = idx;
            c.parent = -1;
            c.depth = 1;
            c.sibling_rank = rank++;
            c.log_joint = std::log(static_cast<double>(prob));
            beam.push_back(static_cast<int>(cands.size()));
            cands.push_back(std::move(c));
        }
    }

    for (int level = 1; level < params.search_depth && !beam.empty(); ++level) {
        // Keep the global top-width of this level as the beam, then forward it.
        {
            prof::Scope scope(prof::Component::tree_ops);
            if (static_cast<int>(beam.size()) > params.beam_width) {
                std::sort(beam.begin(), beam.end(), [&](int a, int b) {
                    if (cands[a].log_joint != cands[b].log_joint) {
                        return cands[a].log_joint > cands[b].log_joint;
                    }
                    return a < b;
                });
                beam.resize(params.beam_width);
                std::sort(beam.begin(), beam.end());
            }
        }

        // Beam tokens see the verified context plus their own ancestor rows; the
        // cache keeps growing level by level, pruned entries are simply never visible.
        const int batch = static_cast<int>(beam.size());
        TokenSequence beam_tokens;
        std::vector<int> beam_positions;
        BitMask visible(batch, cache.len + batch);
        for (int i = 0; i < batch; ++i) {
            Candidate & c = cands[beam[i]];
            c.cache_row = cache.len + i;
            beam_tokens.push_back(c.token);
            beam_positions.push_back(anchor_pos + c.depth);
            visible.set_range(i, 0, base_len);
            for (int a = c.parent; a >= 0; a = cands[a].parent) {
                visible.set(i, cands[a].cache_row);
            }
            visible.set(i, c.cache_row);
        }
        fwd = forward_raw(*draft.shared, {&draft.layer, 1}, beam_tokens, beam_positions, visible,
                          cache, head != nullptr ? head->matrix : draft.shared->lm_head);

        std::vector<int> next_beam;
        for (int i = 0; i < static_cast<int>(beam.size()); ++i) {
            Candidate & parent = cands[beam[i]];
            std::vector<float> probs;
            {
                prof::Scope scope(prof::Component::softmax);
                probs = softmax(fwd.logits.row_span(i), 1.0f).probs;
            }
            prof::Scope scope(prof::Component::tree_ops);
            int rank = 0;
            for (auto [idx, prob] : pick_children(probs, params.beam_width, rng)) {
                Candidate c;
                c.token = subset != nullptr ? subset->full_id(idx) : static_cast<Token>(idx);
                c.head_index = idx;
                c.parent = beam[i];
                c.depth = parent.depth + 1;
                c.sibling_rank = rank++;
                c.log_joint = parent.log_joint + std::log(static_cast<double>(prob));
                next_beam.push_back(static_cast<int>(cands.size()));
                cands.push_back(std::move(c));
            }
            parent.probs = std::move(probs);
        }
        beam = std::move(next_beam);
    }

    cache.truncate(base_len);

    prof::Scope scope(prof::Component::tree_ops);
    const std::vector<char> selected =
        select_top_k(cands, 0, params.total_draft_tokens, /*prefix_closed=*/rng != nullptr);

    std::vector<int> remap(cands.size(), -1);
    for (int i = 0; i < static_cast<int>(cands.size()); ++i) {
        if (!selected[i]) continue;
        Candidate & c = cands[i];
        remap[i] = static_cast<int>(result.tree.nodes.size());
        result.tree.nodes.push_back({c.token, c.parent >= 0 ? remap[c.parent] : -1, c.depth,
                                     c.log_joint});
        if (keep_probs) {
            result.node_probs.push_back(std::move(c.probs));
        }
    }
    if (!keep_probs) {
        result.root_probs.clear();
    }
    return result;
}

LinearTree linearize(const DraftTree & tree) {
    LinearTree out;
    out.tokens.reserve(tree.nodes.size());
    out.parents.reserve(tree.nodes.size());
    out.depths.reserve(tree.nodes.size());
    for (const auto & node : tree.nodes) {
        out.tokens.push_back(node.token_id);
        out.parents.push_back(node.parent);
        out.depths.push_back(node.depth);
    }
    return out;
}

}  // namespace frspec
