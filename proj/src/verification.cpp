#include "frspec/verification.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "frspec/errors.h"
#include "frspec/kernels.h"
#include "frspec/profiling.h"

namespace frspec {

TreeMask build_tree_mask(const DraftTree & tree) {
    const int n = static_cast<int>(tree.nodes.size());
    if (n > 64) {
        throw CapacityError("build_tree_mask: " + std::to_string(n) + " nodes exceed the 64-bit mask");
    }
    TreeMask mask;
    mask.num_draft = n;
    mask.words.resize(n);
    for (int i = 0; i < n; ++i) {
        const int parent = tree.nodes[i].parent;
        if (parent >= i) throw std::invalid_argument("build_tree_mask: tree is not topological");
        mask.words[i] = (parent >= 0 ? mask.words[parent] : 0) | (std::uint64_t{1} << i);
    }
    return mask;
}

namespace {

std::vector<std::vector<int>> children_by_node(const DraftTree & tree) {
    std::vector<std::vector<int>> children(tree.nodes.size() + 1);
    for (int i = 0; i < static_cast<int>(tree.nodes.size()); ++i) {
        const int parent = tree.nodes[i].parent;
        children[parent >= 0 ? parent + 1 : 0].push_back(i);
    }
    return children;  // children[0] is the root's list; node i's list is children[i + 1]
}

}  // namespace

VerifyOutcome verify_greedy(std::span<const float> root_logits, const Matrix & node_logits,
                            const DraftTree & tree) {
    if (node_logits.rows != static_cast<int>(tree.nodes.size())) {
        throw std::invalid_argument("verify_greedy: one logits row per tree node required");
    }
    const auto children = children_by_node(tree);

    VerifyOutcome outcome;
    std::span<const float> logits = root_logits;
    int node = -1;
    for (;;) {
        const Token best = static_cast<Token>(argmax(logits));
        int match = -1;
        for (int child : children[node + 1]) {
            if (tree.nodes[child].token_id == best) {
                match = child;
                break;
            }
        }
        if (match < 0) {
            outcome.emitted.push_back(best);  // bonus token
            break;
        }
        outcome.accepted_path.push_back(match);
        outcome.emitted.push_back(best);
        node = match;
        logits = node_logits.row_span(match);
    }
    return outcome;
}

namespace {

// Dense residual distribution in doubles, renormalized after every rejection.
struct Residual {
    std::vector<double> p;
    double total = 1.0;

    void init(std::span<const float> logits, float temperature) {
        prof::Scope scope(prof::Component::softmax);
        ProbVector probs = softmax(logits, temperature);
        p.assign(probs.probs.begin(), probs.probs.end());
        total = 0.0;
        for (double x : p) total += x;
    }

    double prob(Token t) const { return p[t] / total; }

    // p <- norm(max(0, p - q)) with q given over the drafting head's ids.
    void subtract(const std::vector<double> & q, double q_total, const RankedSubset * subset) {
        for (int j = 0; j < static_cast<int>(q.size()); ++j) {
            if (q[j] <= 0.0) continue;
            const Token t = subset != nullptr ? subset->full_id(j) : static_cast<Token>(j);
            p[t] = std::max(0.0, p[t] - (q[j] / q_total) * total);
        }
        double sum = 0.0;
        for (double x : p) sum += x;
        if (sum <= 0.0) {
            // Unreachable unless p == q to the last bit and the acceptance draw
            // still rejected; fall back to the untouched entries being uniform.
            p.assign(p.size(), 1.0);
            sum = static_cast<double>(p.size());
        }
        for (double & x : p) x /= sum;
        total = 1.0;
    }

    Token sample(std::mt19937_64 & rng) const {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double u = uni(rng) * total;
        double acc = 0.0;
        Token last_positive = 0;
        for (std::size_t t = 0; t < p.size(); ++t) {
            if (p[t] <= 0.0) continue;
            acc += p[t];
            last_positive = static_cast<Token>(t);
            if (u < acc) return last_positive;
        }
        return last_positive;
    }
};

}  // namespace

VerifyOutcome verify_stochastic(std::span<const float> root_logits, const Matrix & node_logits,
                                const DraftResult & draft, const RankedSubset * subset,
                                float temperature, std::mt19937_64 & rng) {
    const DraftTree & tree = draft.tree;
    if (node_logits.rows != static_cast<int>(tree.nodes.size())) {
        throw std::invalid_argument("verify_stochastic: one logits row per tree node required");
    }
    const auto children = children_by_node(tree);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    VerifyOutcome outcome;
    Residual residual;
    residual.init(root_logits, temperature);
    int node = -1;
    for (;;) {
        const auto & kids = children[node + 1];
        const std::vector<float> & q_src = node < 0 ? draft.root_probs : draft.node_probs[node];
        int accepted = -1;
        if (!kids.empty()) {
            if (q_src.empty()) {
                throw std::logic_error("verify_stochastic: expanded node is missing its draft distribution");
            }
            std::vector<double> q(q_src.begin(), q_src.end());
            double q_total = 0.0;
            for (double x : q) q_total += x;
            for (int child : kids) {
                const Token t = tree.nodes[child].token_id;
                const int j = subset != nullptr ? subset->restricted_index(t) : static_cast<int>(t);
                if (j < 0 || q[j] <= 0.0 || q_total <= 0.0) {
                    throw std::logic_error("verify_stochastic: drafted token has zero draft probability");
                }
                const double q_t = q[j] / q_total;
                const double ratio = residual.prob(t) / q_t;
                if (uni(rng) < std::min(1.0, ratio)) {
                    accepted = child;
                    break;
                }
                residual.subtract(q, q_total, subset);  // p <- norm(max(0, p - q))
                q_total -= q[j];                        // q renormalized over untried mass
                q[j] = 0.0;
            }
        }
        if (accepted < 0) {
            outcome.emitted.push_back(residual.sample(rng));  // bonus token
            break;
        }
        outcome.accepted_path.push_back(accepted);
        outcome.emitted.push_back(tree.nodes[accepted].token_id);
        node = accepted;
        residual.init(node_logits.row_span(accepted), temperature);
    }
    return outcome;
}

void AcceptanceStats::add(int accepted_length) {
    iterations += 1;
    emitted += accepted_length;
    if (static_cast<int>(histogram.size()) <= accepted_length) {
        histogram.resize(accepted_length + 1, 0);
    }
    histogram[accepted_length] += 1;
    mean_accepted_length = static_cast<double>(emitted) / static_cast<double>(iterations);
}

void AcceptanceStats::merge(const AcceptanceStats & other) {
    iterations += other.iterations;
    emitted += other.emitted;
    if (histogram.size() < other.histogram.size()) histogram.resize(other.histogram.size(), 0);
    for (std::size_t i = 0; i < other.histogram.size(); ++i) histogram[i] += other.histogram[i];
    mean_accepted_length =
        iterations > 0 ? static_cast<double>(emitted) / static_cast<double>(iterations) : 0.0;
}

AcceptanceStats accepted_length_stats(std::span<const VerifyOutcome> outcomes) {
    if (outcomes.empty()) {
        throw std::invalid_argument("accepted_length_stats: empty outcome list");
    }
    AcceptanceStats stats;
    for (const auto & o : outcomes) stats.add(o.accepted_length());
    return stats;
}

}  // namespace frspec
