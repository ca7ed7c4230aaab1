#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "envforge/core/native_envs.hpp"
#include "envforge/core/rng.hpp"

namespace envforge {

std::int64_t grid_min_cost(const Grid& grid) {
  const std::size_t n = grid.size();
  if (n == 0) throw std::invalid_argument("grid_min_cost: empty grid");
  for (const auto& row : grid) {
    if (row.size() != n) throw std::invalid_argument("grid_min_cost: grid is not square");
    for (auto cell : row) {
      if (cell < 1) throw std::invalid_argument("grid_min_cost: entries must be >= 1");
    }
  }
  constexpr auto kInf = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> best(n, kInf);  // rolling row of the DP table
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::int64_t from = kInf;
      if (i == 0 && j == 0) from = 0;
      if (i > 0) from = std::min(from, best[j]);
      if (j > 0) from = std::min(from, best[j - 1]);
      best[j] = from + grid[i][j];
    }
  }
  return best[n - 1];
}

Grid grid_from_document(const Document& doc) {
  try {
    return doc.at("grid").get<Grid>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("payload has no integer grid: ") + e.what());
  }
}

GridPathEnvironment::GridPathEnvironment(std::string env_id, NativeOptions options)
    : id_(std::move(env_id)), options_(std::move(options)) {}

Document GridPathEnvironment::generate_payload(DifficultyLevel difficulty,
                                               std::uint64_t instance_seed) {
  Rng rng(instance_seed);
  const int size = difficulty.value() + 2;
  Grid grid(size, std::vector<std::int64_t>(size));
  for (auto& row : grid) {
    for (auto& cell : row) cell = rng.uniform_int(1, 9);
  }
  return Document{{"grid", grid}, {"size", size}};
}

std::vector<InstanceParams> GridPathEnvironment::sample(DifficultyLevel difficulty,
                                                        std::size_t count,
                                                        std::uint64_t seed) const {
  std::vector<InstanceParams> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto instance = make_instance(id_, difficulty, i, seed, {});
    instance.payload = generate_payload(difficulty, instance.seed);
    out.push_back(std::move(instance));
  }
  return out;
}

Observation GridPathEnvironment::observe(const InstanceParams& instance) const {
  const Grid grid = grid_from_document(instance.payload);
  std::ostringstream q;
  q << "Find minimum cost path from top-left to bottom-right (only right/down moves):\n\n";
  for (const auto& row : grid) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) q << ' ';
      q << row[j];
    }
    q << '\n';
  }
  const std::string hint = options_.pattern.open_tag + "NUMBER" + options_.pattern.close_tag;
  q << "\nAnswer: " << hint;
  return {q.str(), hint};
}

Verdict GridPathEnvironment::verify(const InstanceParams& instance,
                                    const Response& response) const {
  const auto expected = grid_min_cost(grid_from_document(instance.payload));
  return verify_integer_answer(response, expected, options_.pattern, options_.selection);
}

std::optional<std::string> GridPathEnvironment::reference_answer(
    const InstanceParams& instance) const {
  return std::to_string(grid_min_cost(grid_from_document(instance.payload)));
}

}  // namespace envforge
