#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace multitrans {

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Scores are ranked descending with ties
/// broken by index ascending. Returns nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace multitrans
