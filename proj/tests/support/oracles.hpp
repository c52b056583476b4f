#pragma once

// Straightforward re-implementations used as independent references. They
// use nested vectors and plain loops, and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace multitrans::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t p = 0; p < b.size(); ++p) out[i][j] += a[i][p] * b[p][j];
    return out;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix out(a[0].size(), std::vector<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
    return out;
}

inline std::vector<double> naive_softmax(const std::vector<double>& z) {
    const double hi = *std::max_element(z.begin(), z.end());
    std::vector<double> e(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) total += (e[i] = std::exp(z[i] - hi));
    for (auto& v : e) v /= total;
    return e;
}

struct NaiveMhsa {
    Matrix output;
    std::vector<Matrix> attention;
};

/// Concat(head_1..head_h) W_O with head_i = softmax(X Wq_i (X Wk_i)^T / sqrt(d_k)) X Wv_i.
inline NaiveMhsa naive_mhsa(const Matrix& x, const std::vector<Matrix>& wq, const std::vector<Matrix>& wk,
                            const std::vector<Matrix>& wv, const Matrix& wo) {
    const std::size_t s = x.size();
    NaiveMhsa r;
    Matrix joined(s);
    for (std::size_t h = 0; h < wq.size(); ++h) {
        const Matrix q = naive_matmul(x, wq[h]);
        const Matrix k = naive_matmul(x, wk[h]);
        const Matrix v = naive_matmul(x, wv[h]);
        const double dk = static_cast<double>(wq[h][0].size());
        Matrix scores = naive_matmul(q, naive_transpose(k));
        for (auto& row : scores) {
            for (auto& z : row) z /= std::sqrt(dk);
            row = naive_softmax(row);
        }
        const Matrix head = naive_matmul(scores, v);
        for (std::size_t i = 0; i < s; ++i) joined[i].insert(joined[i].end(), head[i].begin(), head[i].end());
        r.attention.push_back(scores);
    }
    r.output = naive_matmul(joined, wo);
    return r;
}

/// Average precision by explicit accumulation: walk the ranked list keeping
/// running true-positive counts and add precision each time recall grows.
inline std::optional<double> brute_force_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // insertion sort, descending score, stable on index
    for (std::size_t i = 1; i < order.size(); ++i) {
        for (std::size_t j = i; j > 0 && scores[order[j]] > scores[order[j - 1]]; --j) std::swap(order[j], order[j - 1]);
    }
    double positives = 0;
    for (int l : labels) positives += l;
    if (positives == 0) return std::nullopt;
    double tp = 0, fp = 0, ap = 0, prev_recall = 0;
    for (std::size_t idx : order) {
        if (labels[idx]) tp += 1; else fp += 1;
        const double recall = tp / positives;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

}  // namespace multitrans::testing
