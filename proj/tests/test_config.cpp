/*
 Copyright 2026 The lmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "lmpc/experiment.hpp"

#include <gtest/gtest.h>

#include <clocale>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lmpc;

namespace {

std::string read_file(const std::string& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lmpc_test_" + name)).string();
}

}  // namespace

TEST(ConfigText, ParsesSectionsCommentsListsAndQuotes) {
  const auto es = parse_config_text(
      "# header\n"
      "[mpc]\n"
      "N = 12   # trailing\n"
      "q = [1, 2, 3, 4]\n"
      "\n"
      "[experiment]\n"
      "name = \"run # one\"\n");
  ASSERT_EQ(es.size(), 3u);
  EXPECT_EQ(es[0].key, "mpc.N");
  EXPECT_EQ(es[0].value, "12");
  EXPECT_EQ(es[0].line, 3);
  EXPECT_EQ(es[1].value, "[1, 2, 3, 4]");
  EXPECT_EQ(es[2].key, "experiment.name");
  EXPECT_EQ(es[2].value, "run # one");
}

TEST(ConfigText, RejectsMalformedInput) {
  EXPECT_THROW(parse_config_text("N = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[mpc\nN = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[mpc]\nN 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[mpc]\nN = 1\nN = 2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[m pc]\nN = 1\n"), ConfigError);
}

TEST(ConfigText, OverridesNeedSectionAndKey) {
  const auto e = parse_override("disturbance.eta=0.5");
  EXPECT_EQ(e.key, "disturbance.eta");
  EXPECT_EQ(e.value, "0.5");
  EXPECT_THROW(parse_override("eta=0.5"), ConfigError);
  EXPECT_THROW(parse_override("disturbance.eta"), ConfigError);
}

TEST(ConfigValues, TypedParsers) {
  EXPECT_DOUBLE_EQ(parse_double("k", " 1.5e-3 "), 1.5e-3);
  EXPECT_TRUE(std::isinf(parse_double("k", "inf")));
  EXPECT_THROW(parse_double("k", "1.5x"), ConfigError);
  EXPECT_THROW(parse_double("k", ""), ConfigError);
  EXPECT_EQ(parse_int("k", "-3"), -3);
  EXPECT_THROW(parse_int("k", "2.5"), ConfigError);
  EXPECT_THROW(parse_uint("k", "-1"), ConfigError);
  EXPECT_TRUE(parse_bool("k", "on"));
  EXPECT_FALSE(parse_bool("k", "false"));
  EXPECT_THROW(parse_bool("k", "maybe"), ConfigError);
  EXPECT_EQ(parse_list("k", "[1, 2.5]"), (std::vector<double>{1.0, 2.5}));
  EXPECT_EQ(parse_list("k", "1,2"), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(parse_list("k", "[1, 2"), ConfigError);
}

TEST(RunConfigRegistry, UnknownKeyIsAnError) {
  ball::RunConfig c;
  EXPECT_THROW(ball::run_config_registry().apply(c, parse_override("mpc.horizon=3")), ConfigError);
  EXPECT_THROW(ball::run_config_registry().apply(c, parse_override("nosuch.N=3")), ConfigError);
}

TEST(RunConfigRegistry, ListLengthAndEnumsAreChecked) {
  ball::RunConfig c;
  const auto& reg = ball::run_config_registry();
  EXPECT_THROW(reg.apply(c, parse_override("experiment.x0=[1,2,3]")), ConfigError);
  EXPECT_THROW(reg.apply(c, parse_override("rates.hybrid_policy=sometimes")), ConfigError);
  reg.apply(c, parse_override("rates.hybrid_policy=on_contact"));
  EXPECT_EQ(c.policy, HybridPolicy::OnContact);
  reg.apply(c, parse_override("hybrid.strategy=cem"));
  EXPECT_EQ(c.strategy, HybridStrategy::Cem);
}

TEST(RunConfigRegistry, DumpRoundTrips) {
  ball::RunConfig a;
  a.eta = 0.3;
  a.q = {1.0 / 3.0, 2, 3, 4};
  a.policy = HybridPolicy::EveryK;
  const auto es = parse_config_text([&] {
    // Dump lines are "section.key = value"; regroup them into sections.
    std::string text, section;
    std::istringstream in(ball::canonical_dump(a));
    std::string line;
    while (std::getline(in, line)) {
      const auto dot = line.find('.');
      const std::string s = line.substr(0, dot);
      if (s != section) text += "[" + s + "]\n", section = s;
      text += line.substr(dot + 1) + "\n";
    }
    return text;
  }());
  ball::RunConfig b;
  ball::run_config_registry().apply(b, es);
  EXPECT_EQ(ball::canonical_dump(a), ball::canonical_dump(b));
  EXPECT_EQ(ball::config_hash(a), ball::config_hash(b));
}

TEST(RunConfigHash, ChangesIffAnEffectiveValueChanges) {
  const ball::RunConfig base;
  const std::string h0 = ball::config_hash(base);
  const auto& reg = ball::run_config_registry();
  // Setting any key to its current value keeps the hash.
  for (const auto& f : reg.fields()) {
    ball::RunConfig c = base;
    reg.apply(c, ConfigEntry{f.key, f.get(base), 0});
    EXPECT_EQ(ball::config_hash(c), h0) << f.key;
  }
  // Changing any single key changes it.
  ball::RunConfig c = base;
  c.eta = 1e-12;
  EXPECT_NE(ball::config_hash(c), h0);
  c = base;
  c.seed = 2;
  EXPECT_NE(ball::config_hash(c), h0);
  c = base;
  c.ball.circle_radius += 1e-15;
  EXPECT_NE(ball::config_hash(c), h0);
  c = base;
  c.pd = true;
  EXPECT_NE(ball::config_hash(c), h0);
  c = base;
  c.name = "other";
  EXPECT_NE(ball::config_hash(c), h0);
}

TEST(RunConfigHash, OverrideIdempotence) {
  // pd defaults to off, so setting it off again is a no-op.
  const auto a = ball::load_run_config("", {parse_override("disturbance.eta=0"), parse_override("pd.enabled=off")});
  const auto b = ball::load_run_config("", {parse_override("disturbance.eta=0")});
  EXPECT_EQ(ball::config_hash(a), ball::config_hash(b));
}

TEST(RunConfigFile, LoadsAndOverridesInOrder) {
  const std::string p = temp_path("cfg.toml");
  std::ofstream(p) << "[disturbance]\neta = 0.5\n[mpc]\nN = 10\n";
  const auto c = ball::load_run_config(p, {parse_override("disturbance.eta=0.25")});
  EXPECT_EQ(c.N, 10);
  EXPECT_DOUBLE_EQ(c.eta, 0.25);
  std::remove(p.c_str());
  EXPECT_THROW(ball::load_run_config(temp_path("missing.toml"), {}), ConfigError);
}

TEST(RunConfigValidate, RejectsInconsistentValues) {
  ball::RunConfig c;
  EXPECT_NO_THROW(ball::validate(c));
  c.mpc_period = 0.03;  // 0.1 / 0.03 is not an integer
  EXPECT_THROW(ball::validate(c), ConfigError);
  c = ball::RunConfig{};
  c.eta = -1;
  EXPECT_THROW(ball::validate(c), ConfigError);
  c = ball::RunConfig{};
  c.dwell_max = 1;
  EXPECT_THROW(ball::validate(c), ConfigError);
  c = ball::RunConfig{};
  c.eiss = true;  // k-constants fine but sigma/roa zero is allowed; bad k1 is not
  c.k1 = -1;
  EXPECT_THROW(ball::validate(c), ConfigError);
}

TEST(Figure3Preset, ThreeConfigsDifferOnlyInRatesAndPolicy) {
  const auto cs = ball::figure3_configs(ball::figure3_base());
  ASSERT_EQ(cs.size(), 3u);
  EXPECT_EQ(cs[0].name, "A");
  EXPECT_EQ(cs[1].name, "B");
  EXPECT_EQ(cs[2].name, "C");
  EXPECT_DOUBLE_EQ(cs[1].mpc_period, cs[0].mpc_period / 2);
  EXPECT_EQ(cs[2].policy, HybridPolicy::OnContact);
  EXPECT_GT(cs[0].eta, 0.0);
  for (const auto& c : cs) {
    EXPECT_EQ(c.eta, cs[0].eta);
    EXPECT_EQ(c.hold, cs[0].hold);
    EXPECT_EQ(c.x0, cs[0].x0);
    EXPECT_NO_THROW(ball::validate(c));
  }
}

TEST(CsvFormat, SeventeenSignificantDigitsAndRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5e-300), "-2.5e-300");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
  for (double v : {1.0 / 3.0, M_PI, 6.02214076e23, -1e-7}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(CsvFormat, IndependentOfGlobalLocale) {
  const char* old = std::setlocale(LC_ALL, nullptr);
  const std::string saved = old ? old : "C";
  if (std::setlocale(LC_ALL, "de_DE.UTF-8") || std::setlocale(LC_ALL, "fr_FR.UTF-8")) {
    EXPECT_EQ(format_double(1.5), "1.5");
  }
  std::setlocale(LC_ALL, saved.c_str());
  EXPECT_EQ(format_double(1.5), "1.5");
}

TEST(CsvWriter, HeaderFirstAndRowWidthChecked) {
  const std::string p = temp_path("w.csv");
  {
    CsvWriter w(p, {"a", "b"});
    w.field(1.0).field(std::string("x"));
    w.end_row();
    w.field(2);
    EXPECT_THROW(w.end_row(), std::logic_error);
  }
  const std::string s = read_file(p);
  EXPECT_EQ(s.substr(0, 4), "a,b\n");
  EXPECT_NE(s.find("1,x\n"), std::string::npos);
  std::remove(p.c_str());
}

TEST(TubeCsv, FirstRowZeroAndEissColumnsEmptyWithoutCertificate) {
  ball::RunConfig c;
  c.eta = 1.0;
  c.n_points = 5;
  const std::string p = temp_path("tube.csv");
  ball::write_tube_csv(p, c);
  std::istringstream in(read_file(p));
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "t,trivial_diam,eiss_diam,combined_diam,tau");
  EXPECT_EQ(row0, "0,0,,0,");
  EXPECT_NE(row1.find(",,"), std::string::npos);
  std::remove(p.c_str());
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
