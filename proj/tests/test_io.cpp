#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/errors.hpp"
#include "cnsc/hash.hpp"
#include "cnsc/io.hpp"
#include "cnsc/rng.hpp"

using namespace cnsc;

namespace {

std::string tmp(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("base64 round-trips doubles bit for bit, including edge values") {
  std::vector<double> v{0.0,
                        -0.0,
                        1.0 / 3.0,
                        -1e300,
                        5e-324,
                        std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::quiet_NaN(),
                        3.141592653589793};
  const std::string enc = encode_doubles(v);
  const std::vector<double> back = decode_doubles(enc);
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i]))
      CHECK(std::isnan(back[i]));
    else
      CHECK(back[i] == v[i]);
    CHECK(std::signbit(back[i]) == std::signbit(v[i]));
  }
  CHECK(decode_doubles(encode_doubles({})).empty());
}

TEST_CASE("base64 decoder rejects malformed input") {
  CHECK_THROWS_AS(decode_doubles("????"), UserError);
  CHECK_THROWS_AS(decode_doubles("AAAA="), UserError);   // bad length
  CHECK_THROWS_AS(decode_doubles("AA==AA=="), UserError);  // padding inside
  // valid base64 but not a multiple of 8 bytes
  CHECK_THROWS_AS(decode_doubles("AAAA"), UserError);
}

TEST_CASE("fnv1a64 matches its published reference values") {
  // reference vectors for 64-bit FNV-1a
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex16(0xcbf29ce484222325ULL) == "cbf29ce484222325");
  CHECK(hex8(0xcbf29ce484222325ULL) == "cbf29ce4");
}

TEST_CASE("cohort csv round-trips values exactly") {
  GeneratorConfig gc;
  gc.n = 120;
  gc.seed = 3;
  gc.scenario = Scenario::Observational;
  auto [cohort, gt] = generate(gc);

  const std::string path = tmp("cnsc_cohort_roundtrip.csv");
  write_cohort_csv(path, cohort, &gt.z);
  const Cohort back = read_cohort_csv(path);
  REQUIRE(back.records.size() == cohort.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    const auto& a = cohort.records[i];
    const auto& b = back.records[i];
    CHECK(a.t == b.t);
    CHECK(a.a == b.a);
    CHECK(a.d == b.d);
    for (std::size_t j = 0; j < a.x.size(); ++j) CHECK(a.x[j] == b.x[j]);
  }
  // writing the read-back cohort reproduces the file byte for byte
  const std::string path2 = tmp("cnsc_cohort_roundtrip2.csv");
  write_cohort_csv(path2, back, &gt.z);
  CHECK(read_text_file(path) == read_text_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("cohort csv validation points at the offending line") {
  const std::string path = tmp("cnsc_cohort_bad.csv");

  write_text_file(path, "x0,x1,a,t,d\n0.5,1.0,1,2.0,0\n0.1,0.2,2,1.0,1\n");
  try {
    read_cohort_csv(path);
    FAIL("expected a UserError");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  write_text_file(path, "x0,x1,a,t,d\n0.5,1.0,1,-2.0,0\n");
  CHECK_THROWS_AS(read_cohort_csv(path), UserError);

  write_text_file(path, "x0,x1,a,t,d\n0.5,nope,1,2.0,0\n");
  CHECK_THROWS_AS(read_cohort_csv(path), UserError);

  write_text_file(path, "x0,x1,t,d\n0.5,1.0,2.0,0\n");
  CHECK_THROWS_AS(read_cohort_csv(path), UserError);  // treatment col missing

  write_text_file(path, "x0,x1,a,t,d\n0.5,1.0,1,2.0,0,9\n");
  CHECK_THROWS_AS(read_cohort_csv(path), UserError);  // extra field

  std::remove(path.c_str());
}

TEST_CASE("ground truth json round-trips the generator state") {
  GeneratorConfig gc;
  gc.n = 60;
  gc.seed = 11;
  gc.scenario = Scenario::Randomised;
  auto [cohort, gt] = generate(gc);

  const std::string path = tmp("cnsc_truth_roundtrip.json");
  save_ground_truth(path, gt);
  const GroundTruth back = load_ground_truth(path);
  CHECK(back.k == gt.k);
  CHECK(back.scenario == gt.scenario);
  CHECK(back.seed == gt.seed);
  CHECK(back.z == gt.z);
  REQUIRE(back.centres.size() == gt.centres.size());
  for (std::size_t g = 0; g < gt.k; ++g) {
    CHECK(back.centres[g][0] == gt.centres[g][0]);
    CHECK(back.centres[g][1] == gt.centres[g][1]);
    CHECK(back.b0[g] == gt.b0[g]);
    CHECK(back.g0[g] == gt.g0[g]);
    CHECK(back.b1[g] == gt.b1[g]);
    CHECK(back.g1[g] == gt.g1[g]);
  }
  CHECK(back.bc == gt.bc);
  CHECK(back.p == gt.p);
  CHECK(back.t0 == gt.t0);
  CHECK(back.t1 == gt.t1);
  CHECK(back.censor == gt.censor);
  std::remove(path.c_str());

  const std::string bad = tmp("cnsc_truth_bad.json");
  write_text_file(bad, "{\"format\":\"cnsc-ground-truth\",\"version\":99}");
  CHECK_THROWS_AS(load_ground_truth(bad), UserError);
  std::remove(bad.c_str());
}

TEST_CASE("ksweep csv lists one row per k with its fold values") {
  std::vector<KSweepEntry> entries(2);
  entries[0].k = 1;
  entries[0].fold_nll = {1.5, 1.4, 1.6};
  entries[0].mean_nll = 1.5;
  entries[0].std_nll = 0.1;
  entries[1].k = 2;
  entries[1].fold_nll = {1.2, 1.1, 1.3};
  entries[1].mean_nll = 1.2;
  entries[1].std_nll = 0.1;
  const std::string path = tmp("cnsc_ksweep.csv");
  write_ksweep_csv(path, entries);
  const std::string text = read_text_file(path);
  CHECK(text.find("k,mean_nll,std_nll") == 0);
  CHECK(text.find("\n1,") != std::string::npos);
  CHECK(text.find("\n2,") != std::string::npos);
  std::remove(path.c_str());

  const std::string js = ksweep_json(entries, 2);
  CHECK(js.find("\"selected_k\": 2") != std::string::npos);
}

TEST_CASE("effect curve csv carries truth columns only when given") {
  std::vector<double> grid{0.0, 1.0, 2.0};
  std::vector<EffectCurve> est{{grid, {0.0, 0.1, 0.2}},
                               {grid, {0.0, -0.1, -0.2}}};
  const std::string path = tmp("cnsc_curves.csv");
  write_effect_curves_csv(path, est, {});
  std::string text = read_text_file(path);
  CHECK(text.find("t,est_g0,est_g1\n") == 0);
  CHECK(text.find("true_g0") == std::string::npos);

  std::vector<EffectCurve> truth{{grid, {0.0, 0.2, 0.3}},
                                 {grid, {0.0, -0.3, -0.4}}};
  write_effect_curves_csv(path, est, truth);
  text = read_text_file(path);
  CHECK(text.find("t,est_g0,est_g1,true_g0,true_g1\n") == 0);

  std::vector<EffectCurve> short_truth{{std::vector<double>{0.0}, {0.0}},
                                       {grid, {0.0, 1.0, 2.0}}};
  CHECK_THROWS_AS(write_effect_curves_csv(path, est, short_truth), ShapeError);
  std::remove(path.c_str());
}

TEST_CASE("text file io reports failures as io errors") {
  CHECK_THROWS_AS(read_text_file("/nonexistent/dir/file.txt"), IoError);
  CHECK_THROWS_AS(write_text_file("/nonexistent/dir/file.txt", "x"), IoError);
}
