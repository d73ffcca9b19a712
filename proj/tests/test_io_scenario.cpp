#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "support.hpp"

using namespace swarmchain;
namespace ts = testing_support;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "nodes": [
      {"id": 1, "hash_rate": 1000, "position": [0, 0]},
      {"id": 2, "hash_rate": 2000, "position": [5, 5]}
    ],
    "links": [{"a": 1, "b": 2, "bandwidth": 1e6}]
  })");
}

/// The ParseError message for a document, or "" when it parses.
std::string parse_error(const json& doc) {
  try {
    parse_scenario(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    return e.what();
  }
  return {};
}

bool mentions(const std::string& msg, const std::string& key) { return msg.find(key) != std::string::npos; }

}  // namespace

TEST(Num, RoundTripsShortest) {
  for (double v : {0.1, 1.0 / 3.0, 391.6, 1e-300, 123456789.0, -2.5, 0.0}) EXPECT_EQ(std::strtod(io::num(v).c_str(), nullptr), v);
  EXPECT_EQ(io::num(0.1), "0.1");
  EXPECT_EQ(io::num(21680), "21680");
}

TEST(Csv, CommentsHeaderAndLineNumbers) {
  std::istringstream in("# a comment\n\nx,y\n1, 2\n# more\n3,4\n");
  const auto t = io::parse_csv(in, "t.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "2");
  EXPECT_EQ(t.line_numbers, (std::vector<std::size_t>{4, 6}));
}

TEST(Csv, RaggedRowNamesFileAndLine) {
  std::istringstream in("x,y\n1,2\n3\n");
  try {
    io::parse_csv(in, "t.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_TRUE(mentions(e.what(), "t.csv:3"));
  }
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(io::parse_csv(empty, "e.csv"), Error);
}

TEST(Csv, CalibrationColumnsAndValues) {
  std::istringstream in("feature_class,channels,x,points\nplanar,32,2.6,278\nrevolute,32,8,395\n");
  const auto pts = io::calibration_from_csv(io::parse_csv(in, "c.csv"), "c.csv");
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1].feature_class, FeatureClass::Revolute);
  EXPECT_DOUBLE_EQ(pts[1].points, 395.0);

  std::istringstream bad("feature_class,channels,x,points\nplanar,32,abc,278\n");
  try {
    io::calibration_from_csv(io::parse_csv(bad, "c.csv"), "c.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(mentions(e.what(), "c.csv:2"));
  }
  std::istringstream missing("feature_class,x,points\nplanar,2.6,278\n");
  try {
    io::calibration_from_csv(io::parse_csv(missing, "c.csv"), "c.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(mentions(e.what(), "channels"));
  }
}

TEST(Csv, BundledCalibrationReproducesDefaults) {
  std::vector<CalibrationPoint> pts;
  for (const char* f : {"planar_corner.csv", "revolute_tree.csv", "composite_car.csv"})
    for (const auto& p : io::read_calibration_csv(ts::source_dir() / "data" / "calibration" / f)) pts.push_back(p);
  const auto m = fit_density_models(pts);
  const auto& d = default_density_model();
  EXPECT_NEAR(m.planar->slope, d.planar->slope, 1e-9);
  EXPECT_NEAR(m.revolute->intercept, d.revolute->intercept, 1e-9);
  EXPECT_EQ(m.composite, d.composite);
}

TEST(Csv, LatencyOptionalStd) {
  std::istringstream in("node_id,hash_rate,task,latency,latency_std\na,100,t,0.5,\nb,200,t,0.25,0.01\n");
  const auto rows = io::latency_from_csv(io::parse_csv(in, "l.csv"), "l.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].latency_std);
  EXPECT_DOUBLE_EQ(*rows[1].latency_std, 0.01);
}

TEST(Writers, FeeTableRows) {
  std::ostringstream out;
  io::write_fee_table(out, {20, 8640}, ChainConfig{});
  EXPECT_EQ(out.str(), "# fee_table v1\npayload_bytes,fee\n20,21680\n8640,314760\n");
}

TEST(Scenario, MinimalDocument) {
  const auto sc = parse_scenario(minimal());
  ASSERT_EQ(sc.nodes.size(), 2u);
  EXPECT_EQ(sc.nodes[1].hash_rate, 2000.0);
  EXPECT_EQ(sc.nodes[0].behavior, Behavior::Honest);
  ASSERT_EQ(sc.links.size(), 1u);
  EXPECT_DOUBLE_EQ(sc.links[0].latency, 0.0);
}

TEST(Scenario, ErrorsNameTheOffendingKey) {
  auto doc = minimal();
  doc["nodes"][1]["hash_rate"] = -5;
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[1].hash_rate"));

  doc = minimal();
  doc["nodes"][0]["colour"] = "red";
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[0].colour"));

  doc = minimal();
  doc["nodes"][0]["behavior"] = "sneaky";
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[0].behavior"));

  doc = minimal();
  doc["nodes"][1]["id"] = 1;
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[1].id"));

  doc = minimal();
  doc["nodes"][0]["id"] = 0;
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[0].id"));

  doc = minimal();
  doc["links"][0]["b"] = 9;
  EXPECT_TRUE(mentions(parse_error(doc), "links[0].b"));

  doc = minimal();
  doc["config"] = {{"pow_difficulty_bits", "many"}};
  EXPECT_TRUE(mentions(parse_error(doc), "config.pow_difficulty_bits"));

  doc = minimal();
  doc["world"] = {{"grid_sise", 10}};
  EXPECT_TRUE(mentions(parse_error(doc), "world.grid_sise"));

  doc = minimal();
  doc["features"] = json::array({{{"class", "planar"}, {"position", {1, 2}}}});
  EXPECT_TRUE(mentions(parse_error(doc), "features[0].extent_m"));

  doc = minimal();
  doc["nodes"][0]["online"] = json::array({json::array({5, 2})});
  EXPECT_TRUE(mentions(parse_error(doc), "nodes[0].online[0]"));

  doc = minimal();
  doc.erase("nodes");
  EXPECT_TRUE(mentions(parse_error(doc), "nodes"));
}

TEST(Scenario, LoadReportsPathAndSyntax) {
  try {
    load_scenario("/nonexistent/x.scenario");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_TRUE(mentions(e.what(), "/nonexistent/x.scenario"));
  }
}

TEST(Scenario, EveryBundledScenarioLoads) {
  for (const auto& entry : std::filesystem::directory_iterator(ts::source_dir() / "data" / "scenarios")) {
    if (entry.path().extension() != ".scenario") continue;
    const auto sc = load_scenario(entry.path());
    EXPECT_FALSE(sc.nodes.empty()) << entry.path();
    EXPECT_EQ(sc.name, entry.path().stem().string());
  }
}

TEST(Scenario, TablesFeeTableMatchesSchedule) {
  const auto sc = load_scenario(ts::scenario("tables"));
  const std::vector<Tokens> fees{21680, 57720, 94440, 167880, 314760};
  ASSERT_EQ(sc.fee_table.size(), fees.size());
  for (std::size_t i = 0; i < fees.size(); ++i) EXPECT_EQ(fee_for_payload(sc.fee_table[i], sc.chain), fees[i]);
}

TEST(WriteRun, ProducesEveryArtifactWithHeaders) {
  const auto sc = load_scenario(ts::scenario("single_node"));
  World w(sc, sc.seed);
  const auto traces = w.run(3);
  const auto dir = std::filesystem::temp_directory_path() / "swarmchain_write_run_test";
  std::filesystem::remove_all(dir);
  const auto files = io::write_run(dir, w, traces);
  EXPECT_EQ(files.size(), 7u);
  for (const auto& f : files) {
    const auto text = ts::slurp(f);
    if (f.extension() == ".csv") EXPECT_EQ(text.rfind("# ", 0), 0u) << f;
  }
  const auto chain = ts::slurp(dir / "chain.jsonl");
  EXPECT_EQ(std::count(chain.begin(), chain.end(), '\n'), 4);  // genesis + 3
  std::filesystem::remove_all(dir);
}
