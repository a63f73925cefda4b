#include <gtest/gtest.h>

#include <filesystem>

#include "whmc/config.hpp"
#include "whmc/io.hpp"
#include "whmc/pmf.hpp"
#include "whmc/random.hpp"

using namespace whmc;
namespace fs = std::filesystem;

namespace {

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, CaseStudyParses) {
  const auto c = parse_config(case_study_json());
  EXPECT_EQ(c.harq.scheme, HarqScheme::IR);
  EXPECT_EQ(c.harq.max_attempts, 3);
  EXPECT_EQ(c.chain.states, (std::vector<int>{3, 7}));
  ASSERT_TRUE(c.gains.has_value());
  EXPECT_EQ(c.gains->alpha_hm, 0.5271);
  EXPECT_NEAR(c.sc.carrier_freq_hz, 915e6, 1e-3);
  EXPECT_NEAR(c.sc.tx_power_mw, dbm_to_mw(23.0), 1e-12);
  EXPECT_EQ(c.plant.params.inertia, 18.0);
  const auto s = c.scenario();
  EXPECT_EQ(s.horizon, 1000u);
  EXPECT_EQ(c.theta_options().mc_budget, 1000000u);
}

TEST(Config, UnknownKeyRejectedWithPath) {
  auto j = case_study_json();
  j["links"]["sh"]["distnce_m"] = 45.0;
  EXPECT_NE(error_of(j).find("links.sh.distnce_m"), std::string::npos) << error_of(j);
  j = case_study_json();
  j["extra"] = 1;
  EXPECT_NE(error_of(j).find("extra: unknown key"), std::string::npos);
}

TEST(Config, MissingKeyRejected) {
  auto j = case_study_json();
  j["links"].erase("ha");
  EXPECT_NE(error_of(j).find("links.ha: missing"), std::string::npos);
  j = case_study_json();
  j["code"].erase("payload_bits");
  EXPECT_NE(error_of(j).find("code.payload_bits"), std::string::npos);
}

TEST(Config, TypeAndRangeErrors) {
  auto j = case_study_json();
  j["harq"]["max_attempts"] = 0;
  EXPECT_FALSE(error_of(j).empty());
  j = case_study_json();
  j["harq"]["scheme"] = "XX";
  EXPECT_NE(error_of(j).find("harq.scheme"), std::string::npos);
  j = case_study_json();
  j["human"]["transition"] = {{0.5, 0.4}, {0.5, 0.5}};
  EXPECT_NE(error_of(j).find("human"), std::string::npos);
  j = case_study_json();
  j["gains"]["alpha"] = "big";
  EXPECT_NE(error_of(j).find("gains.alpha"), std::string::npos);
  j = case_study_json();
  j["analysis"]["tail_eps"] = 0.5;
  EXPECT_FALSE(error_of(j).empty());
  j = case_study_json();
  j["plant"]["penalty"] = {0, 0, 0, 0, 0};
  EXPECT_NE(error_of(j).find("penalty"), std::string::npos);
  j = case_study_json();
  j["simulation"]["seed"] = -3;
  EXPECT_NE(error_of(j).find("simulation.seed"), std::string::npos);
}

TEST(Config, GainsOptionalAndPerfectLinks) {
  auto j = case_study_json();
  j.erase("gains");
  j["links"]["sc"] = {{"perfect", true}};
  const auto c = parse_config(j);
  EXPECT_FALSE(c.gains.has_value());
  EXPECT_TRUE(c.sc.perfect);
}

TEST(Config, HashTracksContent) {
  auto a = parse_config(case_study_json());
  auto b = parse_config(case_study_json());
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(a.hash.size(), 16u);
  auto j = case_study_json();
  j["simulation"]["seed"] = 2;
  EXPECT_NE(parse_config(j).hash, a.hash);
}

TEST(Config, LoadFromFile) {
  const auto dir = fs::temp_directory_path() / "whmc_cfg_test";
  fs::create_directories(dir);
  io::atomic_write(dir / "c.json", case_study_json().dump(2));
  EXPECT_EQ(load_config((dir / "c.json").string()).chain.states.size(), 2u);
  io::atomic_write(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_config((dir / "none.json").string()), ConfigError);
  fs::remove_all(dir);
}

TEST(Io, CsvQuoting) {
  EXPECT_EQ(io::csv_field("plain"), "plain");
  EXPECT_EQ(io::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(io::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(io::csv_field("two\nlines"), "\"two\nlines\"");
  io::CsvWriter w({"x", "note"});
  w.row({"1", "a,b"});
  EXPECT_EQ(w.str(), "x,note\r\n1,\"a,b\"\r\n");
  EXPECT_THROW(w.row({"1"}), DomainError);
}

TEST(Io, AtomicWriteReplacesWholeFile) {
  const auto dir = fs::temp_directory_path() / "whmc_io_test";
  fs::remove_all(dir);
  const auto p = dir / "sub" / "f.txt";
  io::atomic_write(p, "first version, longer");
  io::atomic_write(p, "second");
  EXPECT_EQ(io::read_file(p), "second");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(p.parent_path())) ++n;
  EXPECT_EQ(n, 1u);  // no temporaries left behind
  fs::remove_all(dir);
  EXPECT_THROW(io::read_file(p), DataError);
}

TEST(Io, FormattingAndLines) {
  EXPECT_EQ(io::fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(io::fmt(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(io::hex64(255), "00000000000000ff");
  EXPECT_EQ(io::lines("a\r\nb\n\nc"), (std::vector<std::string>{"a", "b", "", "c"}));
}

TEST(Random, StreamsAreIndependentAndStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_NE(derive_seed(1, "sc"), derive_seed(1, "ca"));
  EXPECT_NE(derive_seed(1, "sc", 0), derive_seed(1, "sc", 1));
  EXPECT_EQ(derive_seed(7, "x", 3), derive_seed(7, "x", 3));
  Rng a = make_stream(1, "sc"), b = make_stream(1, "sc");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(draw_unit(a), draw_unit(b));
  for (int i = 0; i < 1000; ++i) {
    const double u = draw_unit(a);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Pmf, MeanMassAndSupport) {
  Pmf p;
  p.probs = {0.0, 0.0, 0.5, 0.25, 0.25};
  EXPECT_DOUBLE_EQ(p.mass(), 1.0);
  EXPECT_DOUBLE_EQ(p.mean(), 2.75);
  EXPECT_EQ(p.min_support(), 2u);
  const std::vector<std::size_t> counts{0, 2, 6};
  const auto e = empirical_pmf(std::span<const std::size_t>(counts));
  EXPECT_DOUBLE_EQ(e.probs[1], 0.25);
  EXPECT_DOUBLE_EQ(e.probs[2], 0.75);
}

TEST(Pmf, ConvolutionOfPointMasses) {
  const std::vector<double> a{0.0, 1.0}, b{0.0, 0.0, 0.5, 0.5};
  const auto c = convolve(std::span<const double>(a), std::span<const double>(b), 10);
  EXPECT_DOUBLE_EQ(c[3], 0.5);
  EXPECT_DOUBLE_EQ(c[4], 0.5);
}
