#include "opl/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "opl/errors.hpp"

namespace opl {

namespace {

struct CsvTable {
  std::string file;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;  // 1-based source line per row
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::string& file, std::size_t line, const std::string& msg) {
  throw ParseError(file + ":" + std::to_string(line) + ": " + msg);
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  CsvTable t;
  t.file = path.string();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(t.file, lineno, "expected " + std::to_string(t.header.size()) + " columns, found " +
                               std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line.push_back(lineno);
  }
  if (!have_header) fail(t.file, 1, "missing header row");
  return t;
}

double parse_double(const CsvTable& t, std::size_t r, std::size_t c) {
  const std::string& s = t.rows[r][c];
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(t.file, t.line[r], "column '" + t.header[c] + "': not a finite number: '" + s + "'");
  }
  return v;
}

long long parse_int(const CsvTable& t, std::size_t r, std::size_t c) {
  const std::string& s = t.rows[r][c];
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(t.file, t.line[r], "column '" + t.header[c] + "': not an integer: '" + s + "'");
  }
  return v;
}

void expect_header(const CsvTable& t, const std::string& first, const std::string& prefix, std::size_t min_extra) {
  if (t.header.empty() || t.header[0] != first) fail(t.file, 1, "first column must be '" + first + "'");
  if (t.header.size() < 1 + min_extra) fail(t.file, 1, "expected at least " + std::to_string(min_extra) + " '" + prefix + "*' columns");
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] != prefix + std::to_string(c - 1)) {
      fail(t.file, 1, "column " + std::to_string(c) + " must be '" + prefix + std::to_string(c - 1) + "'");
    }
  }
}

// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void write_number(std::ostream& os, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  os.write(buf, res.ptr - buf);
}

}  // namespace

RealDatasetSpec load_real(const RealDataPaths& paths, const RealDataOptions& options) {
  if (!(options.clip_quantile > 0.0 && options.clip_quantile <= 1.0)) {
    throw InvalidInput("clip_quantile must lie in (0, 1]");
  }
  RealDatasetSpec spec;
  spec.interaction_width = options.interaction_width;
  spec.interaction_order = options.interaction_order;

  const CsvTable users = read_csv(paths.users);
  expect_header(users, "user_id", "x_", 1);
  const auto dx = static_cast<Eigen::Index>(users.header.size() - 1);
  spec.user_features.resize(static_cast<Eigen::Index>(users.rows.size()), dx);
  std::unordered_map<std::string, int> user_index;
  for (std::size_t r = 0; r < users.rows.size(); ++r) {
    const auto& id = users.rows[r][0];
    if (id.empty()) fail(users.file, users.line[r], "empty user_id");
    if (!user_index.emplace(id, static_cast<int>(r)).second) fail(users.file, users.line[r], "duplicate user_id '" + id + "'");
    spec.user_ids.push_back(id);
    for (Eigen::Index j = 0; j < dx; ++j) {
      spec.user_features(static_cast<Eigen::Index>(r), j) = parse_double(users, r, static_cast<std::size_t>(j) + 1);
    }
  }
  if (users.rows.empty()) fail(users.file, 1, "no users");

  const CsvTable items = read_csv(paths.items);
  expect_header(items, "item_id", "f_", 1);
  const std::size_t d = items.header.size() - 1;
  std::unordered_map<std::string, int> item_index;
  std::vector<int> max_index(d, 0);
  for (std::size_t r = 0; r < items.rows.size(); ++r) {
    const auto& id = items.rows[r][0];
    if (id.empty()) fail(items.file, items.line[r], "empty item_id");
    if (!item_index.emplace(id, static_cast<int>(r)).second) fail(items.file, items.line[r], "duplicate item_id '" + id + "'");
    spec.item_ids.push_back(id);
    ActionFeatures f(d);
    for (std::size_t l = 0; l < d; ++l) {
      const long long v = parse_int(items, r, l + 1);
      if (v < 0 || v > 1'000'000) fail(items.file, items.line[r], "feature index out of range in column '" + items.header[l + 1] + "'");
      f[l] = static_cast<int>(v);
      max_index[l] = std::max(max_index[l], f[l]);
    }
    spec.item_features.push_back(std::move(f));
  }
  if (items.rows.empty()) fail(items.file, 1, "no items");
  spec.cards.resize(d);
  for (std::size_t l = 0; l < d; ++l) spec.cards[l] = std::max(2, max_index[l] + 1);
  if (!options.interaction_order.empty() || options.interaction_width > static_cast<int>(d) ||
      options.interaction_width < 1) {
    try {
      (void)spec.scheme();
    } catch (const InvalidInput& e) {
      throw ParseError(items.file + ": scheme inferred from items is incompatible with options: " + e.what());
    }
  }

  const CsvTable rewards = read_csv(paths.rewards);
  if (rewards.header != std::vector<std::string>{"user_id", "item_id", "reward"}) {
    fail(rewards.file, 1, "header must be 'user_id,item_id,reward'");
  }
  const auto nu = static_cast<Eigen::Index>(spec.user_ids.size());
  const auto ni = static_cast<Eigen::Index>(spec.item_ids.size());
  spec.rewards = DenseMatrix::Constant(nu, ni, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < rewards.rows.size(); ++r) {
    const auto u = user_index.find(rewards.rows[r][0]);
    if (u == user_index.end()) fail(rewards.file, rewards.line[r], "unknown user_id '" + rewards.rows[r][0] + "'");
    const auto it = item_index.find(rewards.rows[r][1]);
    if (it == item_index.end()) fail(rewards.file, rewards.line[r], "unknown item_id '" + rewards.rows[r][1] + "'");
    const double v = parse_double(rewards, r, 2);
    if (v < 0.0) fail(rewards.file, rewards.line[r], "reward must be non-negative");
    double& cell = spec.rewards(u->second, it->second);
    if (!std::isnan(cell)) fail(rewards.file, rewards.line[r], "duplicate (user_id, item_id) pair");
    cell = v;
  }
  for (Eigen::Index u = 0; u < nu; ++u) {
    for (Eigen::Index i = 0; i < ni; ++i) {
      if (std::isnan(spec.rewards(u, i))) {
        throw ParseError(rewards.file + ": missing reward for user '" + spec.user_ids[static_cast<std::size_t>(u)] +
                         "', item '" + spec.item_ids[static_cast<std::size_t>(i)] + "'");
      }
    }
  }

  std::vector<double> all(spec.rewards.data(), spec.rewards.data() + spec.rewards.size());
  spec.clip_value = quantile(std::move(all), options.clip_quantile);
  if (!(spec.clip_value > 0.0)) throw ParseError(rewards.file + ": clip value is not positive (all rewards zero?)");
  spec.rewards = spec.rewards.cwiseMin(spec.clip_value) / spec.clip_value;
  return spec;
}

void write_real(const std::filesystem::path& dir, const std::vector<std::string>& user_ids,
                const DenseMatrix& user_features, const std::vector<std::string>& item_ids,
                const std::vector<ActionFeatures>& item_features, const DenseMatrix& rewards) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "users.csv");
    os << "user_id";
    for (Eigen::Index j = 0; j < user_features.cols(); ++j) os << ",x_" << j;
    os << '\n';
    for (std::size_t u = 0; u < user_ids.size(); ++u) {
      os << user_ids[u];
      for (Eigen::Index j = 0; j < user_features.cols(); ++j) {
        os << ',';
        write_number(os, user_features(static_cast<Eigen::Index>(u), j));
      }
      os << '\n';
    }
  }
  {
    std::ofstream os(dir / "items.csv");
    os << "item_id";
    const std::size_t d = item_features.empty() ? 0 : item_features.front().size();
    for (std::size_t l = 0; l < d; ++l) os << ",f_" << l;
    os << '\n';
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
      os << item_ids[i];
      for (int v : item_features[i]) os << ',' << v;
      os << '\n';
    }
  }
  {
    std::ofstream os(dir / "rewards.csv");
    os << "user_id,item_id,reward\n";
    for (std::size_t u = 0; u < user_ids.size(); ++u) {
      for (std::size_t i = 0; i < item_ids.size(); ++i) {
        os << user_ids[u] << ',' << item_ids[i] << ',';
        write_number(os, rewards(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)));
        os << '\n';
      }
    }
  }
}

void gen_fixture(const std::filesystem::path& dir, std::uint64_t seed) {
  constexpr int kUsers = 20, kItems = 30, kDx = 4;
  const std::vector<int> cards{3, 4};
  Rng rng(derive_seed(seed, 0xF1C));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick0(0, cards[0] - 1), pick1(0, cards[1] - 1);

  std::vector<std::string> users, items;
  DenseMatrix x(kUsers, kDx);
  for (int u = 0; u < kUsers; ++u) {
    users.push_back("u" + std::to_string(u));
    // 6 decimals, like a PCA export
    for (int j = 0; j < kDx; ++j) x(u, j) = std::round(normal(rng) * 1e6) / 1e6;
  }
  std::vector<ActionFeatures> feats;
  for (int i = 0; i < kItems; ++i) {
    items.push_back("v" + std::to_string(100 + i));
    // the first 12 items enumerate every feature combination
    if (i < cards[0] * cards[1]) {
      feats.push_back({i / cards[1], i % cards[1]});
    } else {
      feats.push_back({pick0(rng), pick1(rng)});
    }
  }
  DenseMatrix w0(kDx, cards[0]), w1(kDx, cards[1]), w01(kDx, cards[0] * cards[1]);
  for (auto* m : {&w0, &w1, &w01}) {
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = 0.5 * normal(rng);
  }
  DenseMatrix r(kUsers, kItems);
  for (int u = 0; u < kUsers; ++u) {
    const Vector xu = x.row(u).transpose();
    for (int i = 0; i < kItems; ++i) {
      const auto& f = feats[static_cast<std::size_t>(i)];
      const double s = xu.dot(w0.col(f[0])) + xu.dot(w1.col(f[1])) + xu.dot(w01.col(f[0] * cards[1] + f[1]));
      // watch ratio: play duration / video duration, occasionally far above 1
      double ratio = std::exp(0.4 * s + 0.2 * normal(rng));
      if (normal(rng) > 2.0) ratio *= 4.0;
      r(u, i) = std::round(ratio * 1e6) / 1e6;
    }
  }
  write_real(dir, users, x, items, feats, r);
}

EnvOracle build_semi_synth_env(const RealDatasetSpec& spec, double beta, double new_action_fraction,
                               std::uint64_t seed, double noise_sigma) {
  if (!(new_action_fraction >= 0.0 && new_action_fraction < 1.0)) {
    throw ConfigError("new_action_fraction must lie in [0, 1)");
  }
  auto space = std::make_shared<const ActionSpace>(spec.scheme(), spec.item_features);
  const FeatureScheme& scheme = space->scheme();
  const std::size_t total = space->size();
  const auto inter = scheme.interaction_dims();
  Rng rng(derive_seed(seed, 0x5E41));

  std::map<int, std::vector<std::size_t>> by_combo;
  for (std::size_t a = 0; a < total; ++a) by_combo[scheme.interaction_index(space->features(a))].push_back(a);

  // greedy cover: one item per combination, preferring items that add
  // uncovered values on the remaining dimensions
  std::vector<char> chosen(total, 0);
  std::set<std::pair<int, int>> covered;
  auto gain = [&](std::size_t a) {
    int g = 0;
    for (int l = 0; l < scheme.dims(); ++l) {
      if (std::find(inter.begin(), inter.end(), l) != inter.end()) continue;
      g += covered.count({l, space->features(a)[static_cast<std::size_t>(l)]}) ? 0 : 1;
    }
    return g;
  };
  std::size_t cover = 0;
  for (auto& [code, cands] : by_combo) {
    std::shuffle(cands.begin(), cands.end(), rng);
    std::size_t best = cands.front();
    for (std::size_t a : cands) {
      if (gain(a) > gain(best)) best = a;
    }
    chosen[best] = 1;
    ++cover;
    for (int l = 0; l < scheme.dims(); ++l) covered.emplace(l, space->features(best)[static_cast<std::size_t>(l)]);
  }
  const auto target = static_cast<std::size_t>(
      std::llround((1.0 - new_action_fraction) * static_cast<double>(total)));
  if (target < cover) {
    const double max_frac = 1.0 - static_cast<double>(cover) / static_cast<double>(total);
    throw ConfigError("existing-set size " + std::to_string(target) + " is below the interaction cover size " +
                      std::to_string(cover) + " (achievable minimum; new_action_fraction <= " +
                      std::to_string(max_frac) + ")");
  }
  std::vector<std::size_t> pool;
  for (std::size_t a = 0; a < total; ++a) {
    if (!chosen[a]) pool.push_back(a);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t k = 0; k < target - cover; ++k) chosen[pool[k]] = 1;

  std::vector<char> is_new(total);
  for (std::size_t a = 0; a < total; ++a) is_new[a] = chosen[a] ? 0 : 1;
  TabularRewards table{spec.user_features, spec.rewards, {}};
  return EnvOracle(std::move(space), ActionPartition::from_mask(std::move(is_new)), std::move(table), beta,
                   noise_sigma);
}

void write_logged_csv(const LoggedDataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  const int k = data.empty() ? (data.space ? 0 : 0) : data.context_dim();
  for (int j = 0; j < k; ++j) os << "context_" << j << ',';
  os << "action_id,reward,propensity\n";
  for (const auto& row : data.rows) {
    for (Eigen::Index j = 0; j < row.context.x.size(); ++j) {
      write_number(os, row.context.x[j]);
      os << ',';
    }
    os << row.action << ',';
    write_number(os, row.reward);
    os << ',';
    write_number(os, row.propensity);
    os << '\n';
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

LoggedDataset read_logged_csv(const std::filesystem::path& path, std::shared_ptr<const ActionSpace> space,
                              std::shared_ptr<const ActionPartition> partition) {
  const CsvTable t = read_csv(path);
  const std::size_t nc = t.header.size();
  if (nc < 3 || t.header[nc - 3] != "action_id" || t.header[nc - 2] != "reward" || t.header[nc - 1] != "propensity") {
    fail(t.file, 1, "header must end with 'action_id,reward,propensity'");
  }
  const std::size_t k = nc - 3;
  for (std::size_t j = 0; j < k; ++j) {
    if (t.header[j] != "context_" + std::to_string(j)) fail(t.file, 1, "column " + std::to_string(j) + " must be 'context_" + std::to_string(j) + "'");
  }
  LoggedDataset data{{}, std::move(space), std::move(partition)};
  data.rows.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    LoggedRow row;
    row.context.x.resize(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) row.context.x[static_cast<Eigen::Index>(j)] = parse_double(t, r, j);
    const long long a = parse_int(t, r, k);
    if (a < 0 || static_cast<std::size_t>(a) >= data.space->size()) fail(t.file, t.line[r], "action_id out of range");
    row.action = static_cast<std::size_t>(a);
    row.reward = parse_double(t, r, k + 1);
    row.propensity = parse_double(t, r, k + 2);
    data.rows.push_back(std::move(row));
  }
  return data;
}

}  // namespace opl
