#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "rulforge/error.hpp"
#include "rulforge/preprocess.hpp"

using namespace rulforge;
using rulforge::testing::cmapss_row;
using rulforge::testing::TempDir;

namespace {

std::vector<EngineTrajectory> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_trajectory_file(in);
}

std::string write(const std::vector<EngineTrajectory>& trajs) {
  std::ostringstream out;
  write_trajectory_file(out, trajs);
  return out.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_SUITE("parse_trajectory_file") {
  TEST_CASE("two rows make one trajectory") {
    const auto t = parse(cmapss_row(1, 1) + "\n" + cmapss_row(1, 2) + "\n");
    REQUIRE(t.size() == 1);
    CHECK(t[0].unit_id == 1);
    CHECK(t[0].length() == 2);
    CHECK(t[0].frames[1].cycle == 2);
    CHECK(t[0].frames[0].setting(0) == 0.0);
    CHECK(t[0].frames[0].sensor(20) == 0.5 * 23);
  }

  TEST_CASE("irregular whitespace and blank lines are tolerated") {
    std::string row = cmapss_row(3, 1);
    std::string spaced;
    for (char c : row) spaced += (c == ' ') ? std::string("  \t") : std::string(1, c);
    const auto t = parse("\n" + spaced + "   \r\n\n" + cmapss_row(3, 2) + "  \n\n");
    REQUIRE(t.size() == 1);
    CHECK(t[0].length() == 2);
    CHECK(t[0].frames[0] == parse(row)[0].frames[0]);
  }

  TEST_CASE("units are grouped and rows are a partition") {
    std::string text;
    std::size_t rows = 0;
    for (int u = 1; u <= 4; ++u) {
      for (int c = 1; c <= u + 2; ++c, ++rows) text += cmapss_row(u, c, u) + "\n";
    }
    const auto t = parse(text);
    REQUIRE(t.size() == 4);
    std::size_t frames = 0;
    for (const auto& tr : t) frames += tr.length();
    CHECK(frames == rows);
    CHECK(t[3].unit_id == 4);
    CHECK(t[3].length() == 6);
  }

  TEST_CASE("a short row reports its line number") {
    std::string text;
    for (int c = 1; c <= 6; ++c) text += cmapss_row(1, c) + "\n";
    std::string bad = cmapss_row(1, 7);
    bad = bad.substr(0, bad.rfind(' '));
    text += bad + "\n";
    try {
      parse(text);
      FAIL("expected MalformedRowError");
    } catch (const MalformedRowError& e) {
      CHECK(e.line() == 7);
    }
  }

  TEST_CASE("a non-numeric token reports line and column") {
    std::string row = cmapss_row(1, 2);
    const auto pos = row.find(' ', row.find(' ') + 1);
    row.insert(pos + 1, "x");
    try {
      parse(cmapss_row(1, 1) + "\n" + row + "\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 5);
    }
  }

  TEST_CASE("cycle gaps and split units are integrity errors") {
    CHECK_THROWS_AS(parse(cmapss_row(1, 1) + "\n" + cmapss_row(1, 3) + "\n"), IntegrityError);
    CHECK_THROWS_AS(parse(cmapss_row(1, 2) + "\n"), IntegrityError);
    CHECK_THROWS_AS(parse(cmapss_row(1, 1) + "\n" + cmapss_row(2, 1) + "\n" + cmapss_row(1, 2)),
                    IntegrityError);
  }

  TEST_CASE("round trip keeps full precision") {
    SynthConfig cfg;
    cfg.n_train = 3;
    cfg.n_test = 2;
    cfg.seed = 5;
    const auto bundle = generate_synthetic(cfg);
    const std::string text = write(bundle.train);
    const auto back = parse(text);
    CHECK(back == bundle.train);
    CHECK(write(back) == text);
  }
}

TEST_SUITE("parse_rul_file") {
  TEST_CASE("one value per line") {
    std::istringstream in("112\n98\n");
    CHECK(parse_rul_file(in) == std::vector<int>{112, 98});
  }

  TEST_CASE("negative and fractional values are parse errors") {
    for (const char* text : {"-3\n", "7\n1.5\n"}) {
      std::istringstream in(text);
      try {
        parse_rul_file(in);
        FAIL("expected ParseError");
      } catch (const ParseError& e) {
        CHECK(e.line() == (text[0] == '-' ? 1u : 2u));
      }
    }
  }
}

TEST_SUITE("load_subset") {
  TEST_CASE("engine counts of the real subsets") {
    CHECK(expected_counts(SubsetId::FD001)->train == 100);
    CHECK(expected_counts(SubsetId::FD001)->test == 100);
    CHECK(expected_counts(SubsetId::FD002)->train == 260);
    CHECK(expected_counts(SubsetId::FD002)->test == 259);
    CHECK(expected_counts(SubsetId::FD003)->train == 100);
    CHECK(expected_counts(SubsetId::FD003)->test == 100);
    CHECK(expected_counts(SubsetId::FD004)->train == 249);
    CHECK(expected_counts(SubsetId::FD004)->test == 248);
    CHECK_FALSE(expected_counts(SubsetId::SYNTH).has_value());
  }

  TEST_CASE("subset ids") {
    for (auto id : {SubsetId::FD001, SubsetId::FD002, SubsetId::FD003, SubsetId::FD004,
                    SubsetId::SYNTH}) {
      CHECK(parse_subset_id(to_string(id)) == id);
    }
    CHECK_THROWS_AS(parse_subset_id("FD005"), ValidationError);
  }

  TEST_CASE("saved synthetic bundle loads back") {
    TempDir dir("load");
    SynthConfig cfg;
    cfg.n_train = 4;
    cfg.n_test = 3;
    const auto bundle = generate_synthetic(cfg);
    save_subset(dir.path(), bundle);
    const auto back = load_subset(dir.path(), SubsetId::SYNTH);
    CHECK(back == bundle);
    CHECK(back.warnings.empty());
  }

  TEST_CASE("missing file names the file") {
    TempDir dir("missing");
    write_file(dir / "train_FD001.txt", cmapss_row(1, 1) + "\n");
    write_file(dir / "test_FD001.txt", cmapss_row(1, 1) + "\n");
    try {
      load_subset(dir.path(), SubsetId::FD001);
      FAIL("expected NotFoundError");
    } catch (const NotFoundError& e) {
      CHECK(std::string(e.what()).find("RUL_FD001.txt") != std::string::npos);
    }
  }

  TEST_CASE("unexpected engine counts are a warning") {
    TempDir dir("counts");
    write_file(dir / "train_FD003.txt", cmapss_row(1, 1) + "\n" + cmapss_row(2, 1) + "\n");
    write_file(dir / "test_FD003.txt", cmapss_row(1, 1) + "\n");
    write_file(dir / "RUL_FD003.txt", "40\n");
    const auto b = load_subset(dir.path(), SubsetId::FD003);
    CHECK(b.train.size() == 2);
    REQUIRE(b.warnings.size() == 1);
    CHECK(b.warnings[0].find("expected 100 / 100") != std::string::npos);
  }

  TEST_CASE("RUL and test lengths must agree") {
    TempDir dir("rul");
    write_file(dir / "train_SYNTH.txt", cmapss_row(1, 1) + "\n");
    write_file(dir / "test_SYNTH.txt", cmapss_row(1, 1) + "\n");
    write_file(dir / "RUL_SYNTH.txt", "4\n5\n");
    CHECK_THROWS_AS(load_subset(dir.path(), SubsetId::SYNTH), IntegrityError);
  }
}

TEST_SUITE("generate_synthetic") {
  TEST_CASE("same config gives byte-identical bundles") {
    SynthConfig cfg;
    cfg.n_train = 4;
    cfg.n_test = 2;
    cfg.seed = 7;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(write(a.train) == write(b.train));
    CHECK(write(a.test) == write(b.test));
    CHECK(a.test_rul == b.test_rul);
    cfg.seed = 8;
    CHECK(write(generate_synthetic(cfg).train) != write(a.train));
  }

  TEST_CASE("counts and lengths follow the config") {
    SynthConfig cfg;
    cfg.n_train = 9;
    cfg.n_test = 5;
    cfg.min_len = 50;
    cfg.max_len = 80;
    const auto b = generate_synthetic(cfg);
    CHECK(b.subset == SubsetId::SYNTH);
    CHECK(b.train.size() == 9);
    CHECK(b.test.size() == 5);
    CHECK(b.test_rul.size() == 5);
    for (const auto& t : b.train) {
      CHECK(t.length() >= 50);
      CHECK(t.length() <= 80);
      CHECK(label_rul(static_cast<int>(t.length())).back() == 0.0);
    }
  }

  TEST_CASE("test RUL equals the withheld tail of the full run") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SynthConfig cfg;
      cfg.n_test = 12;
      cfg.seed = seed;
      const auto s = generate_synthetic_with_truth(cfg);
      REQUIRE(s.full_test.size() == s.bundle.test.size());
      for (std::size_t i = 0; i < s.bundle.test.size(); ++i) {
        const auto& kept = s.bundle.test[i];
        const auto& full = s.full_test[i];
        CHECK(kept.unit_id == full.unit_id);
        CHECK(static_cast<int>(full.length() - kept.length()) == s.bundle.test_rul[i]);
        CHECK(s.bundle.test_rul[i] >= 1);
        CHECK(kept.length() >= 30);
        for (std::size_t t = 0; t < kept.length(); ++t) CHECK(kept.frames[t] == full.frames[t]);
      }
      CHECK(generate_synthetic(cfg) == s.bundle);
    }
  }

  TEST_CASE("noise-free informative sensors are monotone and flat sensors constant") {
    SynthConfig cfg;
    cfg.n_train = 3;
    cfg.noise_std = 0.0;
    cfg.n_informative_sensors = 4;
    const auto b = generate_synthetic(cfg);
    std::size_t monotone = 0, constant = 0;
    for (std::size_t s = 0; s < kNumSensors; ++s) {
      bool up = true, down = true, flat = true;
      for (const auto& t : b.train) {
        for (std::size_t i = 1; i < t.length(); ++i) {
          const double d = t.frames[i].sensor(s) - t.frames[i - 1].sensor(s);
          up = up && d >= 0.0;
          down = down && d <= 0.0;
          flat = flat && d == 0.0;
        }
      }
      if (flat) {
        ++constant;
      } else if (up || down) {
        ++monotone;
      }
    }
    CHECK(monotone == 4);
    CHECK(constant == kNumSensors - 4);
  }

  TEST_CASE("constant sensors are present for the exclusion path") {
    const auto b = generate_synthetic(SynthConfig{});
    const auto stats = fit_normalizer(b.train);
    CHECK(stats.retained_count() < kNumRawFeatures);
  }

  TEST_CASE("invalid configs are rejected") {
    auto bad = [](auto mutate) {
      SynthConfig c;
      mutate(c);
      CHECK_THROWS_AS(generate_synthetic(c), ValidationError);
    };
    bad([](SynthConfig& c) { c.min_len = 39; });
    bad([](SynthConfig& c) { c.max_len = c.min_len - 1; });
    bad([](SynthConfig& c) { c.n_train = 0; });
    bad([](SynthConfig& c) { c.n_test = 0; });
    bad([](SynthConfig& c) { c.noise_std = -1.0; });
    bad([](SynthConfig& c) { c.n_informative_sensors = 0; });
    bad([](SynthConfig& c) { c.n_informative_sensors = 22; });
  }
}

TEST_CASE("sensor table") {
  CHECK(sensor_table().size() == 21);
  CHECK(sensor_table()[0].symbol == "T2");
  CHECK(sensor_table()[0].description == "Total temperature at fan inlet");
}
