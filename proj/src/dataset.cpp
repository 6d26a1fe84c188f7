#include "opl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "opl/errors.hpp"

namespace opl {

void LoggedDataset::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!(r.propensity > 0.0)) {
      throw PreconditionError("row " + std::to_string(i) + " has non-positive logging propensity");
    }
    if (r.action >= space->size()) throw PreconditionError("row " + std::to_string(i) + " action out of range");
    if (partition && partition->is_new[r.action]) {
      throw PreconditionError("row " + std::to_string(i) + " logs a new action");
    }
  }
}

LoggedDataset LoggedDataset::subset(const std::vector<std::size_t>& idx) const {
  LoggedDataset out{{}, space, partition};
  out.rows.reserve(idx.size());
  for (std::size_t i : idx) out.rows.push_back(rows.at(i));
  return out;
}

LoggedDataset generate_log(const EnvOracle& env, std::size_t n, std::uint64_t seed, std::size_t cap) {
  if (n < 1) throw InvalidInput("generate_log needs n >= 1");
  if (n > cap) throw CapacityError("requested " + std::to_string(n) + " rows, cap is " + std::to_string(cap));
  Rng rng(derive_seed(seed, 0x106));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const ActionSpace& space = env.space();
  const FeatureScheme& scheme = space.scheme();
  const int ml = scheme.marginal_length();
  LoggedDataset data{{}, env.space_ptr(), env.partition_ptr()};
  data.rows.reserve(n);
  std::vector<double> probs(space.size());
  for (std::size_t i = 0; i < n; ++i) {
    LoggedRow row;
    row.context = env.sample_context(rng);
    env.logging_probs(row.context, probs);
    // inverse-CDF draw over existing actions
    const double u = unif(rng);
    double acc = 0.0;
    std::size_t pick = env.partition().existing.back();
    for (std::size_t a : env.partition().existing) {
      acc += probs[a];
      if (u < acc) {
        pick = a;
        break;
      }
    }
    row.action = pick;
    row.propensity = probs[pick];
    const double eps = noise(rng);
    row.reward = env.q_true(row.context, pick) + env.noise_sigma() * eps;

    const auto fm = feature_marginals(space, probs);
    const auto bits = space.active(pick, IndicatorMode::kLCPI);
    row.marginals.reserve(bits.size());
    for (int l = 0; l < scheme.dims(); ++l) row.marginals.push_back(fm.marginal[static_cast<std::size_t>(bits[static_cast<std::size_t>(l)])]);
    row.marginals.push_back(fm.interaction[static_cast<std::size_t>(bits.back() - ml)]);
    data.rows.push_back(std::move(row));
  }
  return data;
}

std::pair<LoggedDataset, LoggedDataset> split_dataset(const LoggedDataset& data,
                                                      double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidInput("validation_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x5B1));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_valid = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(data.size())));
  n_valid = std::clamp<std::size_t>(n_valid, data.size() > 1 ? 1 : 0, data.size() > 1 ? data.size() - 1 : 0);
  std::vector<std::size_t> valid(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_valid), idx.end());
  std::sort(valid.begin(), valid.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(valid)};
}

}  // namespace opl
