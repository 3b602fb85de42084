#include "frspec/kernels.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "frspec/errors.h"

namespace frspec {

float dot_f32(const float * a, const float * b, int n) {
    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
    float s4 = 0.0f, s5 = 0.0f, s6 = 0.0f, s7 = 0.0f;
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 += a[i + 0] * b[i + 0];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    float s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
    for (; i < n; ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Matrix matmul(const Matrix & a, const Matrix & b_transposed) {
    if (a.cols != b_transposed.cols) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b_transposed.cols) + ")");
    }
    const int m = a.rows;
    const int n = b_transposed.rows;
    const int k = a.cols;
    Matrix out(m, n);
    if (m <= 64) {
        // few queries against a possibly tall right-hand side: stream b once
        for (int j = 0; j < n; ++j) {
            const float * bj = b_transposed.row(j);
            for (int i = 0; i < m; ++i) {
                out.at(i, j) = dot_f32(a.row(i), bj, k);
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            const float * ai = a.row(i);
            for (int j = 0; j < n; ++j) {
                out.at(i, j) = dot_f32(ai, b_transposed.row(j), k);
            }
        }
    }
    return out;
}

ProbVector softmax(std::span<const float> logits, float temperature) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    if (!std::isfinite(temperature) || temperature <= 0.0f) {
        throw std::invalid_argument("softmax: temperature must be positive and finite");
    }
    const int n = static_cast<int>(logits.size());
    float mx = -std::numeric_limits<float>::infinity();
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(logits[i])) {
            throw std::invalid_argument("softmax: non-finite logit at index " + std::to_string(i));
        }
        mx = std::max(mx, logits[i] / temperature);
    }
    ProbVector out;
    out.dim = n;
    out.probs.resize(n);
    double total = 0.0;  // double accumulator keeps the sum accurate for wide vocabularies
    for (int i = 0; i < n; ++i) {
        const float e = std::exp(logits[i] / temperature - mx);
        out.probs[i] = e;
        total += e;
    }
    const float inv = static_cast<float>(1.0 / total);
    for (int i = 0; i < n; ++i) {
        out.probs[i] *= inv;
    }
    return out;
}

std::vector<std::pair<int, float>> topk(std::span<const float> values, int k) {
    const int n = static_cast<int>(values.size());
    if (k < 1 || k > n) {
        throw std::invalid_argument("topk: k=" + std::to_string(k) + " out of range for size " +
                                    std::to_string(n));
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    });
    std::vector<std::pair<int, float>> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        out.emplace_back(idx[i], values[idx[i]]);
    }
    return out;
}

int argmax(std::span<const float> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmax: empty input");
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

Matrix masked_attention(const Matrix & q, const Matrix & k, const Matrix & v, const BitMask & allowed) {
    if (q.cols != k.cols) {
        throw std::invalid_argument("masked_attention: q/k width mismatch");
    }
    if (k.rows != v.rows) {
        throw std::invalid_argument("masked_attention: k/v row mismatch");
    }
    if (allowed.rows() != q.rows || allowed.cols() != k.rows) {
        throw std::invalid_argument("masked_attention: mask shape mismatch");
    }
    const int n = q.rows;
    const int m = k.rows;
    const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols));

    Matrix out(n, v.cols);
    std::vector<float> scores(m);
    for (int r = 0; r < n; ++r) {
        float mx = -std::numeric_limits<float>::infinity();
        bool any = false;
        for (int j = 0; j < m; ++j) {
            if (!allowed.test(r, j)) continue;
            scores[j] = dot_f32(q.row(r), k.row(j), q.cols) * scale;
            mx = std::max(mx, scores[j]);
            any = true;
        }
        if (!any) {
            throw std::invalid_argument("masked_attention: query row " + std::to_string(r) +
                                        " permits no keys");
        }
        double total = 0.0;
        for (int j = 0; j < m; ++j) {
            if (!allowed.test(r, j)) continue;
            scores[j] = std::exp(scores[j] - mx);
            total += scores[j];
        }
        const float inv = static_cast<float>(1.0 / total);
        float * dst = out.row(r);
        for (int j = 0; j < m; ++j) {
            if (!allowed.test(r, j)) continue;
            const float w = scores[j] * inv;
            const float * vr = v.row(j);
            for (int c = 0; c < v.cols; ++c) {
                dst[c] += w * vr[c];
            }
        }
    }
    return out;
}

}  // namespace frspec
