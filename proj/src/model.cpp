#include "frspec/model.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

#include "frspec/errors.h"
#include "frspec/kernels.h"
#include "frspec/profiling.h"
#include "frspec/verification.h"
#include "frspec/vocab.h"

namespace frspec {

namespace {

constexpr float kRmsEps = 1e-5f;
constexpr float kInitStd = 0.02f;
constexpr float kRopeBase = 10000.0f;

void fill_gaussian(Matrix & m, std::mt19937_64 & rng, float std_dev) {
    std::normal_distribution<float> dist(0.0f, std_dev);
    for (auto & x : m.data) x = dist(rng);
}

Matrix rmsnorm_rows(const Matrix & x, const std::vector<float> & gain) {
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const float * src = x.row(i);
        double ms = 0.0;
        for (int j = 0; j < x.cols; ++j) ms += static_cast<double>(src[j]) * src[j];
        const float scale = static_cast<float>(1.0 / std::sqrt(ms / x.cols + kRmsEps));
        float * dst = out.row(i);
        for (int j = 0; j < x.cols; ++j) dst[j] = src[j] * scale * gain[j];
    }
    return out;
}

// Rotates (2i, 2i+1) pairs within each head by pos * base^(-2i/dh).
void apply_rope(Matrix & x, std::span<const int> positions, int num_heads) {
    const int d = x.cols;
    const int dh = d / num_heads;
    for (int r = 0; r < x.rows; ++r) {
        const float pos = static_cast<float>(positions[r]);
        float * row = x.row(r);
        for (int h = 0; h < num_heads; ++h) {
            float * hr = row + h * dh;
            for (int i = 0; i + 1 < dh; i += 2) {
                const float freq = std::pow(kRopeBase, -static_cast<float>(i) / dh);
                const float angle = pos * freq;
                const float c = std::cos(angle);
                const float s = std::sin(angle);
                const float x0 = hr[i];
                const float x1 = hr[i + 1];
                hr[i] = x0 * c - x1 * s;
                hr[i + 1] = x0 * s + x1 * c;
            }
        }
    }
}

void add_rows(Matrix & x, const Matrix & delta) {
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += delta.data[i];
}

Matrix cols_slice(const Matrix & src, int row_count, int col_begin, int width) {
    Matrix out(row_count, width);
    for (int i = 0; i < row_count; ++i) {
        std::memcpy(out.row(i), src.row(i) + col_begin, sizeof(float) * width);
    }
    return out;
}

}  // namespace

void validate_config(const ModelConfig & config) {
    if (config.vocab_size < 2) throw std::invalid_argument("config: vocab_size must be >= 2");
    if (config.hidden_dim < 2) throw std::invalid_argument("config: hidden_dim must be >= 2");
    if (config.num_layers < 1) throw std::invalid_argument("config: num_layers must be >= 1");
    if (config.num_heads < 1) throw std::invalid_argument("config: num_heads must be >= 1");
    if (config.hidden_dim % config.num_heads != 0) {
        throw std::invalid_argument("config: hidden_dim must be divisible by num_heads");
    }
    if ((config.hidden_dim / config.num_heads) % 2 != 0) {
        throw std::invalid_argument("config: per-head dim must be even for rotary pairs");
    }
    if (config.max_seq_len < 1) throw std::invalid_argument("config: max_seq_len must be >= 1");
}

TargetModel build_target(const ModelConfig & config) {
    validate_config(config);
    const int d = config.hidden_dim;

    auto shared = std::make_shared<SharedParams>();
    shared->config = config;
    shared->embedding = Matrix(config.vocab_size, d);
    shared->lm_head = Matrix(config.vocab_size, d);
    shared->final_norm.assign(d, 1.0f);

    TargetModel model;
    model.layers.resize(config.num_layers);

    std::mt19937_64 rng(config.seed);
    fill_gaussian(shared->embedding, rng, kInitStd);
    for (auto & layer : model.layers) {
        layer.attn_norm.assign(d, 1.0f);
        layer.mlp_norm.assign(d, 1.0f);
        layer.wq = Matrix(d, d);
        layer.wk = Matrix(d, d);
        layer.wv = Matrix(d, d);
        layer.wo = Matrix(d, d);
        layer.w_up = Matrix(4 * d, d);
        layer.w_down = Matrix(d, 4 * d);
        fill_gaussian(layer.wq, rng, kInitStd);
        fill_gaussian(layer.wk, rng, kInitStd);
        fill_gaussian(layer.wv, rng, kInitStd);
        fill_gaussian(layer.wo, rng, kInitStd);
        fill_gaussian(layer.w_up, rng, kInitStd);
        fill_gaussian(layer.w_down, rng, kInitStd);
    }
    fill_gaussian(shared->lm_head, rng, kInitStd);

    model.shared = std::move(shared);
    return model;
}

DraftModel build_draft(const TargetModel & target, DraftMode mode, float noise_scale, std::uint64_t seed) {
    if (noise_scale < 0.0f || !std::isfinite(noise_scale)) {
        throw std::invalid_argument("build_draft: noise_scale must be >= 0");
    }
    DraftModel draft;
    draft.shared = target.shared;  // embedding, LM head and final norm stay shared
    draft.layer = target.layers.front();
    if (mode == DraftMode::perturbed && noise_scale > 0.0f) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> dist(0.0f, noise_scale);
        for (Matrix * w : {&draft.layer.wq, &draft.layer.wk, &draft.layer.wv, &draft.layer.wo,
                           &draft.layer.w_up, &draft.layer.w_down}) {
            for (auto & x : w->data) x += dist(rng);
        }
    }
    return draft;
}

KVCache::KVCache(int num_layers, int max_seq_len, int hidden_dim) : max_seq(max_seq_len) {
    k.reserve(num_layers);
    v.reserve(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        k.emplace_back(max_seq_len, hidden_dim);
        v.emplace_back(max_seq_len, hidden_dim);
    }
    positions.assign(max_seq_len, 0);
}

void KVCache::truncate(int new_len) {
    if (new_len < 0 || new_len > len) {
        throw std::invalid_argument("KVCache::truncate: bad length " + std::to_string(new_len));
    }
    len = new_len;
}

void KVCache::compact(int keep_from, std::span<const int> kept_offsets) {
    if (keep_from < 0 || keep_from > len) {
        throw std::invalid_argument("KVCache::compact: bad keep_from");
    }
    int prev = -1;
    for (int off : kept_offsets) {
        if (off <= prev || keep_from + off >= len) {
            throw std::invalid_argument("KVCache::compact: offsets must be ascending and in range");
        }
        prev = off;
    }
    const int d = k.empty() ? 0 : k.front().cols;
    for (std::size_t l = 0; l < k.size(); ++l) {
        for (int i = 0; i < static_cast<int>(kept_offsets.size()); ++i) {
            const int src = keep_from + kept_offsets[i];
            const int dst = keep_from + i;
            if (src != dst) {
                std::memcpy(k[l].row(dst), k[l].row(src), sizeof(float) * d);
                std::memcpy(v[l].row(dst), v[l].row(src), sizeof(float) * d);
            }
        }
    }
    for (int i = 0; i < static_cast<int>(kept_offsets.size()); ++i) {
        positions[keep_from + i] = positions[keep_from + kept_offsets[i]];
    }
    len = keep_from + static_cast<int>(kept_offsets.size());
    for (int r = 1; r < len; ++r) {
        if (positions[r] != positions[r - 1] + 1) {
            throw std::logic_error("KVCache::compact: kept positions are not contiguous");
        }
    }
}

KVCache make_cache(const TargetModel & model) {
    const auto & c = model.config();
    return KVCache(c.num_layers, c.max_seq_len, c.hidden_dim);
}

KVCache make_cache(const DraftModel & draft) {
    const auto & c = draft.config();
    return KVCache(1, c.max_seq_len, c.hidden_dim);
}

ForwardResult forward_raw(const SharedParams & shared, std::span<const LayerWeights> layers,
                          std::span<const Token> tokens, std::span<const int> positions,
                          const BitMask & visible, KVCache & cache, const Matrix & head) {
    const auto & cfg = shared.config;
    const int n = static_cast<int>(tokens.size());
    const int d = cfg.hidden_dim;
    const int dh = d / cfg.num_heads;
    const int len0 = cache.len;

    if (n < 1) throw std::invalid_argument("forward: empty token batch");
    if (static_cast<int>(positions.size()) != n) throw std::invalid_argument("forward: positions size mismatch");
    if (len0 + n > cache.max_seq) {
        throw CapacityError("forward: sequence of " + std::to_string(len0 + n) +
                            " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    if (visible.rows() != n || visible.cols() != len0 + n) {
        throw std::invalid_argument("forward: visibility mask shape mismatch");
    }
    for (Token t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(t) + " out of range");
        }
    }

    Matrix x(n, d);
    {
        prof::Scope scope(prof::Component::embedding);
        for (int i = 0; i < n; ++i) {
            std::memcpy(x.row(i), shared.embedding.row(tokens[i]), sizeof(float) * d);
        }
    }

    const int m = len0 + n;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        prof::Scope scope(prof::Component::transformer_layer);
        const LayerWeights & w = layers[l];

        Matrix normed = rmsnorm_rows(x, w.attn_norm);
        Matrix q = matmul(normed, w.wq);
        Matrix kk = matmul(normed, w.wk);
        Matrix vv = matmul(normed, w.wv);
        apply_rope(q, positions, cfg.num_heads);
        apply_rope(kk, positions, cfg.num_heads);

        for (int i = 0; i < n; ++i) {
            std::memcpy(cache.k[l].row(len0 + i), kk.row(i), sizeof(float) * d);
            std::memcpy(cache.v[l].row(len0 + i), vv.row(i), sizeof(float) * d);
        }

        Matrix attn(n, d);
        for (int h = 0; h < cfg.num_heads; ++h) {
            Matrix qh = cols_slice(q, n, h * dh, dh);
            Matrix kh = cols_slice(cache.k[l], m, h * dh, dh);
            Matrix vh = cols_slice(cache.v[l], m, h * dh, dh);
            Matrix ah = masked_attention(qh, kh, vh, visible);
            for (int i = 0; i < n; ++i) {
                std::memcpy(attn.row(i) + h * dh, ah.row(i), sizeof(float) * dh);
            }
        }
        add_rows(x, matmul(attn, w.wo));

        Matrix up = matmul(rmsnorm_rows(x, w.mlp_norm), w.w_up);
        for (auto & z : up.data) z = z / (1.0f + std::exp(-z));
        add_rows(x, matmul(up, w.w_down));
    }

    ForwardResult out;
    out.hidden = rmsnorm_rows(x, shared.final_norm);
    {
        prof::Scope scope(prof::Component::lm_head);
        out.logits = matmul(out.hidden, head);
    }

    for (int i = 0; i < n; ++i) cache.positions[len0 + i] = positions[i];
    cache.len = len0 + n;
    return out;
}

namespace {

// Causal continuation: token i follows the cache and sees it plus batch tokens <= i.
void causal_layout(const KVCache & cache, int n, std::vector<int> & positions, BitMask & visible) {
    const int len0 = cache.len;
    const int start = len0 > 0 ? cache.positions[len0 - 1] + 1 : 0;
    positions.resize(n);
    visible = BitMask(n, len0 + n);
    for (int i = 0; i < n; ++i) {
        positions[i] = start + i;
        visible.set_range(i, 0, len0 + i + 1);
    }
}

// Tree batch: token i sees the whole cached prefix plus its ancestors (and itself)
// among the batch; its position is the anchor position plus its depth.
void tree_layout(const KVCache & cache, const TreeMask & mask, std::vector<int> & positions,
                 BitMask & visible) {
    const int len0 = cache.len;
    const int n = mask.num_draft;
    if (len0 < 1) throw std::invalid_argument("forward: tree batch requires a cached anchor token");
    const int anchor_pos = cache.positions[len0 - 1];
    positions.resize(n);
    visible = BitMask(n, len0 + n);
    for (int i = 0; i < n; ++i) {
        positions[i] = anchor_pos + std::popcount(mask.words[i]);
        visible.set_range(i, 0, len0);
        std::uint64_t bits = mask.words[i];
        while (bits != 0) {
            const int j = std::countr_zero(bits);
            visible.set(i, len0 + j);
            bits &= bits - 1;
        }
    }
}

}  // namespace

ForwardResult target_forward(const TargetModel & model, std::span<const Token> tokens,
                             KVCache & cache, const TreeMask * tree_mask) {
    std::vector<int> positions;
    BitMask visible;
    if (tree_mask == nullptr) {
        causal_layout(cache, static_cast<int>(tokens.size()), positions, visible);
    } else {
        if (tree_mask->num_draft != static_cast<int>(tokens.size())) {
            throw std::invalid_argument("target_forward: tree mask size mismatch");
        }
        tree_layout(cache, *tree_mask, positions, visible);
    }
    return forward_raw(*model.shared, model.layers, tokens, positions, visible, cache,
                       model.shared->lm_head);
}

ForwardResult draft_forward(const DraftModel & draft, std::span<const Token> tokens,
                            KVCache & cache, const RestrictedHead * head, const TreeMask * tree_mask) {
    std::vector<int> positions;
    BitMask visible;
    if (tree_mask == nullptr) {
        causal_layout(cache, static_cast<int>(tokens.size()), positions, visible);
    } else {
        if (tree_mask->num_draft != static_cast<int>(tokens.size())) {
            throw std::invalid_argument("draft_forward: tree mask size mismatch");
        }
        tree_layout(cache, *tree_mask, positions, visible);
    }
    const Matrix * head_matrix = &draft.shared->lm_head;
    if (head != nullptr) {
        if (head->subset == nullptr || head->subset->vocab_size != draft.config().vocab_size) {
            throw std::invalid_argument("draft_forward: restricted head does not match the vocabulary");
        }
        head_matrix = &head->matrix;
    }
    return forward_raw(*draft.shared, {&draft.layer, 1}, tokens, positions, visible, cache,
                       *head_matrix);
}

}  // namespace frspec
