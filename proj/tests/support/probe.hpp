#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "multitrans/clip.hpp"
#include "multitrans/metrics.hpp"
#include "multitrans/random.hpp"

namespace multitrans::testing {

/// Per-frame design matrix: every sensor's features of one frame, flattened.
struct FrameTable {
    std::size_t width = 0;
    std::vector<double> x;          // rows x width
    std::vector<std::uint8_t> y;    // rows, labels of one class
    std::size_t rows() const { return y.size(); }
};

inline FrameTable frame_table(const std::vector<FeatureClip>& clips, std::size_t cls) {
    FrameTable t;
    for (const auto& c : clips) {
        t.width = c.sensors * c.input_dim;
        t.x.insert(t.x.end(), c.features.begin(), c.features.end());
        for (std::size_t f = 0; f < c.frames; ++f) t.y.push_back(c.strong_label->at(f, cls));
    }
    return t;
}

/// Overwrites one sensor's columns with fresh N(0, sd) noise.
inline void mask_sensor(FrameTable& t, std::size_t sensor, std::size_t input_dim, double sd, Rng& rng) {
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t j = 0; j < input_dim; ++j) t.x[r * t.width + sensor * input_dim + j] = sd * rng.normal();
}

/// Logistic regression fitted by full-batch gradient descent.
struct LinearProbe {
    std::vector<double> w;
    double b = 0.0;

    static LinearProbe fit(const FrameTable& t, std::size_t iterations = 400, double lr = 0.5) {
        LinearProbe p;
        p.w.assign(t.width, 0.0);
        const double n = static_cast<double>(t.rows());
        std::vector<double> gw(t.width);
        for (std::size_t it = 0; it < iterations; ++it) {
            std::fill(gw.begin(), gw.end(), 0.0);
            double gb = 0.0;
            for (std::size_t r = 0; r < t.rows(); ++r) {
                const double* row = &t.x[r * t.width];
                const double err = 1.0 / (1.0 + std::exp(-p.score(row))) - t.y[r];
                for (std::size_t j = 0; j < t.width; ++j) gw[j] += err * row[j];
                gb += err;
            }
            for (std::size_t j = 0; j < t.width; ++j) p.w[j] -= lr * gw[j] / n;
            p.b -= lr * gb / n;
        }
        return p;
    }

    double score(const double* row) const {
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * row[j];
        return z;
    }

    double ap(const FrameTable& t) const {
        std::vector<double> s(t.rows());
        for (std::size_t r = 0; r < t.rows(); ++r) s[r] = score(&t.x[r * t.width]);
        return average_precision(s, t.y).value();
    }
};

inline double prevalence(const FrameTable& t) {
    double pos = 0.0;
    for (auto v : t.y) pos += v;
    return pos / static_cast<double>(t.rows());
}

}  // namespace multitrans::testing
