#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace protoeval {

enum class ScoreMode { logprob, sampling };

std::string_view to_string(ScoreMode mode) noexcept;

/// Probability of each score 1..5; probs[0] is p(1).
struct ScoreDistribution {
  std::array<double, 5> probs{};
  ScoreMode mode = ScoreMode::sampling;
  std::size_t n_observations = 0;

  bool operator==(const ScoreDistribution&) const = default;
};

}  // namespace protoeval
