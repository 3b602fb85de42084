#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "frspec/matrix.h"

namespace frspec {

struct TreeMask;       // verification.h
struct RestrictedHead; // vocab.h

struct ModelConfig {
    int vocab_size = 0;
    int hidden_dim = 0;
    int num_layers = 0;
    int num_heads = 0;
    int max_seq_len = 0;
    std::uint64_t seed = 0;
};

// Throws std::invalid_argument on vocab_size < 2, num_layers < 1, head mismatch, etc.
void validate_config(const ModelConfig & config);

// One pre-norm transformer block: RMSNorm -> attention (rotary q/k) -> residual,
// RMSNorm -> SiLU MLP with 4x expansion -> residual.
struct LayerWeights {
    std::vector<float> attn_norm;  // d gains
    Matrix wq, wk, wv, wo;         // [d x d] each, applied as x * W^T
    std::vector<float> mlp_norm;   // d gains
    Matrix w_up;                   // [4d x d]
    Matrix w_down;                 // [d x 4d]
};

// Embedding, LM head and final norm. A draft model references the same object
// as its target, so these tensors are shared, never copied.
struct SharedParams {
    ModelConfig config;
    Matrix embedding;               // [V x d]
    Matrix lm_head;                 // [V x d]
    std::vector<float> final_norm;  // d gains
};

struct TargetModel {
    std::shared_ptr<const SharedParams> shared;
    std::vector<LayerWeights> layers;

    const ModelConfig & config() const { return shared->config; }
};

enum class DraftMode { truncated, perturbed };

// Single-layer draft model over the target's embedding and LM head.
struct DraftModel {
    std::shared_ptr<const SharedParams> shared;  // same object as the target's
    LayerWeights layer;

    const ModelConfig & config() const { return shared->config; }
};

// Weights drawn from a seeded Gaussian(0, 0.02); norm gains set to 1.
// The same config and seed always produce a bit-identical model.
TargetModel build_target(const ModelConfig & config);

// truncated: copy of the target's first layer. perturbed: that copy plus seeded
// Gaussian(0, noise_scale) on the linear weights. Shared tensors are untouched.
DraftModel build_draft(const TargetModel & target, DraftMode mode, float noise_scale, std::uint64_t seed);

// Pre-allocated per-layer KV store with explicit position ids per row.
struct KVCache {
    KVCache(int num_layers, int max_seq_len, int hidden_dim);

    int length() const { return len; }
    int max_len() const { return max_seq; }
    int position(int row) const { return positions[row]; }

    // Drops rows at and beyond new_len.
    void truncate(int new_len);

    // Keeps rows [0, keep_from) plus keep_from+offset for each offset (strictly
    // ascending), repacked contiguously. Positions of the kept rows must form a
    // strictly increasing contiguous sequence.
    void compact(int keep_from, std::span<const int> kept_offsets);

    int len = 0;
    int max_seq = 0;
    std::vector<Matrix> k;  // per layer [max_seq x d]
    std::vector<Matrix> v;
    std::vector<int> positions;
};

KVCache make_cache(const TargetModel & model);
KVCache make_cache(const DraftModel & draft);

struct ForwardResult {
    Matrix hidden;  // [n x d], post final norm
    Matrix logits;  // [n x head_rows]
};

// Appends n tokens to the cache and returns hidden states and logits.
// Without a tree mask the batch is causal (each token sees the cache and earlier
// batch tokens). With a tree mask, token i sees the cached prefix plus the batch
// tokens flagged in mask.words[i]; its position id is prefix position + depth.
ForwardResult target_forward(const TargetModel & model, std::span<const Token> tokens,
                             KVCache & cache, const TreeMask * tree_mask = nullptr);

// Same contract; logits are over the full vocabulary or over head's subset.
ForwardResult draft_forward(const DraftModel & draft, std::span<const Token> tokens,
                            KVCache & cache, const RestrictedHead * head = nullptr,
                            const TreeMask * tree_mask = nullptr);

// Low-level forward with explicit position ids and per-token visible cache rows.
// `visible` has one row per token and covers cache rows [0, cache.length() + n).
ForwardResult forward_raw(const SharedParams & shared, std::span<const LayerWeights> layers,
                          std::span<const Token> tokens, std::span<const int> positions,
                          const BitMask & visible, KVCache & cache, const Matrix & head);

}  // namespace frspec
