#include "rulforge/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "rulforge/error.hpp"

namespace rulforge {

namespace {

constexpr std::array<SensorInfo, kNumSensors> kSensors{{
    {"T2", "Total temperature at fan inlet"},
    {"T24", "Total temperature at LPC outlet"},
    {"T30", "Total temperature at HPC outlet"},
    {"T50", "Total temperature at LPT outlet"},
    {"P2", "Pressure at fan inlet"},
    {"P15", "Total pressure in bypass-duct"},
    {"P30", "Total pressure at HPC outlet"},
    {"Nf", "Physical fan speed"},
    {"Nc", "Physical core speed"},
    {"Epr", "Engine pressure ratio (P50/P2)"},
    {"Ps30", "Static pressure at HPC outlet"},
    {"phi", "Ratio of fuel flow to Ps30"},
    {"NRf", "Corrected fan speed"},
    {"NRc", "Corrected core speed"},
    {"BPR", "Bypass ratio"},
    {"farB", "Burner fuel-air ratio"},
    {"htBleed", "Bleed enthalpy"},
    {"Nf_dmd", "Demanded fan speed"},
    {"PCNfR_dmd", "Demanded corrected fan speed"},
    {"W31", "HPT coolant bleed"},
    {"W32", "LPT coolant bleed"},
}};

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> split_fields(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    tokens.push_back({line.substr(start, i - start), start + 1});
  }
  return tokens;
}

template <typename T>
T parse_number(const Token& tok, std::size_t line_no) {
  T value{};
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  // from_chars rejects a leading '+', which some exporters emit.
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError("line " + std::to_string(line_no) + ", column " +
                         std::to_string(tok.column) + ": cannot parse '" +
                         std::string(tok.text) + "' as a number",
                     line_no, tok.column);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ParseError("line " + std::to_string(line_no) + ", column " +
                           std::to_string(tok.column) + ": non-finite value",
                       line_no, tok.column);
    }
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

const std::array<SensorInfo, kNumSensors>& sensor_table() { return kSensors; }

std::string_view to_string(SubsetId id) {
  switch (id) {
    case SubsetId::FD001: return "FD001";
    case SubsetId::FD002: return "FD002";
    case SubsetId::FD003: return "FD003";
    case SubsetId::FD004: return "FD004";
    case SubsetId::SYNTH: return "SYNTH";
  }
  return "?";
}

SubsetId parse_subset_id(std::string_view text) {
  for (auto id : {SubsetId::FD001, SubsetId::FD002, SubsetId::FD003,
                  SubsetId::FD004, SubsetId::SYNTH}) {
    if (text == to_string(id)) return id;
  }
  throw ValidationError("unknown subset '" + std::string(text) +
                        "' (expected FD001..FD004 or SYNTH)");
}

std::optional<SubsetCounts> expected_counts(SubsetId id) {
  switch (id) {
    case SubsetId::FD001: return SubsetCounts{100, 100};
    case SubsetId::FD002: return SubsetCounts{260, 259};
    case SubsetId::FD003: return SubsetCounts{100, 100};
    case SubsetId::FD004: return SubsetCounts{249, 248};
    case SubsetId::SYNTH: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<EngineTrajectory> parse_trajectory_file(std::istream& in) {
  std::vector<EngineTrajectory> out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> seen_units;

  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_fields(line);
    if (tokens.empty()) continue;
    if (tokens.size() != kNumColumns) {
      throw MalformedRowError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(kNumColumns) + " fields, found " +
                                  std::to_string(tokens.size()),
                              line_no);
    }
    const int unit = parse_number<int>(tokens[0], line_no);
    const int cycle = parse_number<int>(tokens[1], line_no);
    if (unit <= 0 || cycle <= 0) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": unit id and cycle must be positive",
                       line_no, unit <= 0 ? tokens[0].column : tokens[1].column);
    }

    Frame frame;
    frame.cycle = cycle;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
      frame.values[i] = parse_number<double>(tokens[2 + i], line_no);
    }

    if (out.empty() || out.back().unit_id != unit) {
      if (std::find(seen_units.begin(), seen_units.end(), unit) != seen_units.end()) {
        throw IntegrityError("line " + std::to_string(line_no) + ": rows of unit " +
                             std::to_string(unit) + " are not contiguous");
      }
      seen_units.push_back(unit);
      out.push_back(EngineTrajectory{unit, {}});
    }
    auto& traj = out.back();
    const int expected = static_cast<int>(traj.frames.size()) + 1;
    if (cycle != expected) {
      throw IntegrityError("line " + std::to_string(line_no) + ": unit " +
                           std::to_string(unit) + " has cycle " +
                           std::to_string(cycle) + ", expected " +
                           std::to_string(expected));
    }
    traj.frames.push_back(frame);
  }
  return out;
}

std::vector<int> parse_rul_file(std::istream& in) {
  std::vector<int> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_fields(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 1) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": expected a single integer",
                       line_no, tokens[1].column);
    }
    const int v = parse_number<int>(tokens[0], line_no);
    if (v < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": negative RUL " +
                           std::to_string(v),
                       line_no, tokens[0].column);
    }
    out.push_back(v);
  }
  return out;
}

DatasetBundle load_subset(const std::filesystem::path& root, SubsetId id) {
  const std::string name(to_string(id));
  auto open = [&](const std::string& file) {
    auto path = root / file;
    std::ifstream f(path);
    if (!f) throw NotFoundError("cannot open " + path.string());
    return f;
  };
  // Open all three first so a missing file is reported before any parsing.
  auto train_in = open("train_" + name + ".txt");
  auto test_in = open("test_" + name + ".txt");
  auto rul_in = open("RUL_" + name + ".txt");

  DatasetBundle bundle;
  bundle.subset = id;
  bundle.train = parse_trajectory_file(train_in);
  bundle.test = parse_trajectory_file(test_in);
  bundle.test_rul = parse_rul_file(rul_in);

  if (bundle.test_rul.size() != bundle.test.size()) {
    throw IntegrityError("RUL_" + name + ".txt has " +
                         std::to_string(bundle.test_rul.size()) +
                         " entries for " + std::to_string(bundle.test.size()) +
                         " test engines");
  }
  if (auto counts = expected_counts(id)) {
    if (bundle.train.size() != counts->train || bundle.test.size() != counts->test) {
      std::ostringstream msg;
      msg << name << ": found " << bundle.train.size() << " train / "
          << bundle.test.size() << " test engines, expected " << counts->train
          << " / " << counts->test;
      bundle.warnings.push_back(msg.str());
    }
  }
  return bundle;
}

void write_trajectory_file(std::ostream& out,
                           const std::vector<EngineTrajectory>& trajectories) {
  for (const auto& traj : trajectories) {
    for (const auto& frame : traj.frames) {
      out << traj.unit_id << ' ' << frame.cycle;
      for (double v : frame.values) out << ' ' << format_double(v);
      out << '\n';
    }
  }
}

void write_rul_file(std::ostream& out, const std::vector<int>& rul) {
  for (int v : rul) out << v << '\n';
}

void save_subset(const std::filesystem::path& root, const DatasetBundle& bundle) {
  std::filesystem::create_directories(root);
  const std::string name(to_string(bundle.subset));
  auto create = [&](const std::string& file) {
    std::ofstream f(root / file, std::ios::binary);
    if (!f) throw NotFoundError("cannot write " + (root / file).string());
    return f;
  };
  auto train = create("train_" + name + ".txt");
  write_trajectory_file(train, bundle.train);
  auto test = create("test_" + name + ".txt");
  write_trajectory_file(test, bundle.test);
  auto rul = create("RUL_" + name + ".txt");
  write_rul_file(rul, bundle.test_rul);
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("synth config: " + m); };
  if (n_train < 1) fail("n_train must be positive");
  if (n_test < 1) fail("n_test must be positive");
  if (min_len < 40) fail("min_len must be at least 40");
  if (max_len < min_len) fail("max_len must be >= min_len");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std must be >= 0");
  if (n_informative_sensors < 1 || n_informative_sensors > static_cast<int>(kNumSensors)) {
    fail("n_informative_sensors must be in [1, 21]");
  }
}

namespace {

// Sensors that are flat in the single-condition subsets; used as the constant
// channels of the generator once the informative ones have been assigned.
constexpr std::array<std::size_t, 6> kFlatSensors{0, 4, 9, 15, 17, 18};

struct SensorModel {
  enum class Kind { Informative, Constant, Noise } kind;
  double base;
  double amplitude;
};

struct Generator {
  const SynthConfig& cfg;
  std::mt19937_64 rng;
  std::array<SensorModel, kNumSensors> sensors{};

  explicit Generator(const SynthConfig& c) : cfg(c), rng(c.seed) {
    // Informative sensors are taken from the non-flat columns first.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < kNumSensors; ++i) {
      if (std::find(kFlatSensors.begin(), kFlatSensors.end(), i) == kFlatSensors.end()) {
        order.push_back(i);
      }
    }
    order.insert(order.end(), kFlatSensors.begin(), kFlatSensors.end());

    std::uniform_real_distribution<double> base_dist(10.0, 600.0);
    std::uniform_real_distribution<double> amp_dist(0.5, 1.5);
    std::bernoulli_distribution sign_dist(0.5);
    for (std::size_t rank = 0; rank < kNumSensors; ++rank) {
      const std::size_t s = order[rank];
      SensorModel m{};
      m.base = base_dist(rng);
      m.amplitude = amp_dist(rng) * (sign_dist(rng) ? 1.0 : -1.0);
      if (rank < static_cast<std::size_t>(cfg.n_informative_sensors)) {
        m.kind = SensorModel::Kind::Informative;
      } else if (std::find(kFlatSensors.begin(), kFlatSensors.end(), s) !=
                 kFlatSensors.end()) {
        m.kind = SensorModel::Kind::Constant;
      } else {
        m.kind = SensorModel::Kind::Noise;
      }
      sensors[s] = m;
    }
  }

  EngineTrajectory run_to_failure(int unit_id) {
    std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
    std::uniform_real_distribution<double> onset_dist(120.0, 150.0);
    std::normal_distribution<double> wear_dist(0.0, 0.05);
    std::normal_distribution<double> noise(0.0, 1.0);

    const int T = len_dist(rng);
    const double onset = onset_dist(rng);
    std::array<double, kNumSensors> wear{};
    for (auto& w : wear) w = wear_dist(rng);

    EngineTrajectory traj{unit_id, {}};
    traj.frames.resize(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
      Frame& f = traj.frames[static_cast<std::size_t>(t - 1)];
      f.cycle = t;
      f.values[0] = 0.002 * noise(rng);
      f.values[1] = 0.0002 * noise(rng);
      f.values[2] = 100.0;
      const double health = std::clamp(1.0 - (T - t) / onset, 0.0, 1.0);
      for (std::size_t s = 0; s < kNumSensors; ++s) {
        const auto& m = sensors[s];
        double v = m.base;
        switch (m.kind) {
          case SensorModel::Kind::Informative:
            v += m.amplitude * (health + wear[s]) + cfg.noise_std * noise(rng);
            break;
          case SensorModel::Kind::Noise:
            v += cfg.noise_std * noise(rng);
            break;
          case SensorModel::Kind::Constant:
            break;
        }
        f.values[kNumSettings + s] = v;
      }
    }
    return traj;
  }
};

}  // namespace

SyntheticData generate_synthetic_with_truth(const SynthConfig& cfg) {
  cfg.validate();
  Generator gen(cfg);
  SyntheticData data;
  DatasetBundle& bundle = data.bundle;
  bundle.subset = SubsetId::SYNTH;
  for (int u = 1; u <= cfg.n_train; ++u) bundle.train.push_back(gen.run_to_failure(u));
  for (int u = 1; u <= cfg.n_test; ++u) {
    auto full = gen.run_to_failure(u);
    const int T = static_cast<int>(full.length());
    std::uniform_int_distribution<int> keep_dist(30, T - 1);
    const int keep = keep_dist(gen.rng);
    data.full_test.push_back(full);
    full.frames.resize(static_cast<std::size_t>(keep));
    bundle.test.push_back(std::move(full));
    bundle.test_rul.push_back(T - keep);
  }
  return data;
}

DatasetBundle generate_synthetic(const SynthConfig& cfg) {
  return generate_synthetic_with_truth(cfg).bundle;
}

}  // namespace rulforge
