#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "volcal/batch.hpp"
#include "volcal/io.hpp"
#include "volcal/mc.hpp"

using namespace volcal;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_CASE("quote CSV round-trip accepts everything it wrote") {
  std::string path = temp_path("volcal_quotes.csv");
  std::vector<OptionQuote> quotes{{530.123456789012, 500.0, 0.3},
                                  {12.5, 2900.0, 1.5},
                                  {0.0078125, 3000.0, 0.43}};
  write_quotes(path, quotes);
  QuoteFile file = read_quotes(path);
  CHECK(file.accepted.size() == 3);
  CHECK(file.rejected.empty());
  for (std::size_t i = 0; i < quotes.size(); ++i) {
    CHECK(file.accepted[i].price == quotes[i].price);
    CHECK(file.accepted[i].strike == quotes[i].strike);
    CHECK(file.accepted[i].maturity == quotes[i].maturity);
  }
  std::remove(path.c_str());
}

TEST_CASE("quote ingestion is total: bad rows are logged, not fatal") {
  std::string path = temp_path("volcal_bad_quotes.csv");
  write_file(path,
             "# volcal-format v1\n"
             "price,strike,maturity\n"
             "100,1000,0.5\n"
             "not_a_number,1000,0.5\n"
             "5,-3,0.5\n"
             "5,1000,-0.25\n"
             "-4,1000,0.5\n"
             "1,2\n"
             "90,900,1.0\n");
  QuoteFile file = read_quotes(path);
  CHECK(file.accepted.size() == 2);
  CHECK(file.rejected.size() == 5);

  MarketFrame frame = finalize_frame(file, 1000.0, 0.04, OptionKind::Call);
  CHECK(frame.k_max == 1000.0);  // max strike default
  CHECK(frame.t_max == 1.0);     // max maturity default
  CHECK(file.accepted.size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("finalize_frame rejects bound violations and domain breaches") {
  std::string path = temp_path("volcal_bounds.csv");
  write_file(path,
             "price,strike,maturity\n"
             "1100,1000,0.5\n"   // call above spot
             "100,1000,0.5\n"
             "90,2000,2.0\n");   // beyond t_max once pinned
  QuoteFile file = read_quotes(path);
  CHECK(file.accepted.size() == 3);
  MarketFrame frame =
      finalize_frame(file, 1000.0, 0.04, OptionKind::Call, 3000.0, 1.5);
  CHECK(file.accepted.size() == 1);
  CHECK(file.accepted[0].price == 100.0);
  CHECK(file.rejected.size() == 2);
  (void)frame;

  // Nothing survives: EmptyAfterValidation.
  write_file(path,
             "price,strike,maturity\n"
             "1100,1000,0.5\n");
  QuoteFile bad = read_quotes(path);
  CHECK_THROWS_AS(finalize_frame(bad, 1000.0, 0.04, OptionKind::Call), Error);
  std::remove(path.c_str());
}

TEST_CASE("header and file errors") {
  std::string path = temp_path("volcal_header.csv");
  write_file(path, "strike,price,maturity\n1,2,3\n");
  CHECK_THROWS_AS(read_quotes(path), Error);
  write_file(path, "price,strike,maturity\n# only comments\n");
  CHECK_THROWS_AS(read_quotes(path), Error);
  CHECK_THROWS_AS(read_quotes(temp_path("volcal_missing_file.csv")), Error);
  std::remove(path.c_str());
}

TEST_CASE("surface export round-trips exactly") {
  std::string path = temp_path("volcal_surface.csv");
  SurfaceGridExport s;
  s.col_axis = Eigen::ArrayXd::LinSpaced(6, 500.0, 3000.0);
  s.row_axis = Eigen::ArrayXd::LinSpaced(4, 0.3, 1.5);
  s.values.resize(4, 6);
  rng::CounterStream rs(3, rng::StreamTag::Test);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 6; ++c)
      s.values(r, c) = rs.next_uniform(0.0, 600.0);
  s.metadata = {{"surface", "vol"}, {"coords", "original"}};

  export_surface(s, path);
  SurfaceGridExport back = read_surface(path);
  CHECK((back.col_axis == s.col_axis).all());
  CHECK((back.row_axis == s.row_axis).all());
  CHECK((back.values == s.values).all());
  REQUIRE(back.metadata.size() == 2);
  CHECK(back.metadata[0].second == "vol");
  std::remove(path.c_str());
  std::remove((path + ".meta").c_str());
}

TEST_CASE("exported call price surface vanishes along k = 1") {
  MarketFrame frame{1000.0, 0.04, 3000.0, 1.5, OptionKind::Call};
  PriceSurfaceModel model = make_price_model(init_params(NetConfig{2, 8}, 5), frame);

  // Scaled-coordinate export: columns at k in [0,1], rows at t in [0,1].
  Eigen::ArrayXd k = Eigen::ArrayXd::LinSpaced(11, 0.0, 1.0);
  Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(5, 0.0, 1.0);
  SurfaceGridExport s;
  s.col_axis = k;
  s.row_axis = t;
  s.values.resize(t.size(), k.size());
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    batch::NetWorkspace ws;
    Eigen::ArrayXd row = batch::price_values(
        model, k, Eigen::ArrayXd::Constant(k.size(), t[r]));
    s.values.row(r) = row.transpose();
  }
  std::string path = temp_path("volcal_price_surface.csv");
  export_surface(s, path);
  SurfaceGridExport back = read_surface(path);
  for (Eigen::Index r = 0; r < back.values.rows(); ++r)
    CHECK(back.values(r, back.values.cols() - 1) == 0.0);
  std::remove(path.c_str());
  std::remove((path + ".meta").c_str());
}

TEST_CASE("trace CSV carries the documented columns") {
  std::string path = temp_path("volcal_trace.csv");
  TrainTrace trace;
  trace.rows.push_back({0, 1e-3, 5.0, 4.0, 3.0, 2.0, 14.0, 0.5});
  trace.rows.push_back({1, 1e-3, 4.0, 3.0, 2.0, 1.0, 10.0, 0.4});
  write_trace(path, trace);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == std::string(kFormatTag));
  std::getline(in, line);
  CHECK(line == "iter,lr,fit,ini,arb,dup,total");
  std::getline(in, line);
  CHECK(line.substr(0, 2) == "0,");
  std::remove(path.c_str());
}

TEST_CASE("report writer: aggregation, schema enforcement, determinism") {
  CalibrationReport report;
  report.config_hash = 1234567890123456789ull;
  report.runs = {{0.0, 7, 10.0, 0.40, 60.0, 100, false},
                 {0.0, 8, 12.0, 0.50, 62.0, 100, false},
                 {1.0, 7, 1.0, 0.04, 1.5, 100, false},
                 {1.0, 8, 1.2, 0.02, 1.7, 100, false}};
  std::string path = temp_path("volcal_report.csv");
  write_report(report, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // format tag
  std::getline(in, line);  // header
  int rows = 0;
  std::vector<std::string> data_rows;
  while (std::getline(in, line))
    if (!line.empty()) {
      ++rows;
      data_rows.push_back(line);
    }
  CHECK(rows == 2);  // one aggregated row per lambda
  CHECK(data_rows[0].find("7;8") != std::string::npos);

  // Bitwise-identical rewrite.
  std::string path2 = temp_path("volcal_report2.csv");
  write_report(report, path2);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  // Missing RMSE -> schema violation.
  CalibrationReport incomplete = report;
  incomplete.runs[1].vol_rmse = std::nan("");
  CHECK_THROWS_AS(write_report(incomplete, path), Error);

  // Runs detail round-trip.
  std::string runs_path = temp_path("volcal_runs.csv");
  write_runs_detail(report, runs_path);
  CalibrationReport back = read_runs_detail(runs_path);
  REQUIRE(back.runs.size() == 4);
  CHECK(back.runs[2].reprice_rmse == 1.5);
  CHECK(back.config_hash == report.config_hash);

  std::remove(path.c_str());
  std::remove(path2.c_str());
  std::remove(runs_path.c_str());
}

TEST_CASE("key-value sidecar round-trip") {
  std::string path = temp_path("volcal_kv.txt");
  KeyValues kv{{"seed", "7"}, {"n_paths", "100000"}, {"scheme", "log_euler"}};
  write_keyvalues(path, kv);
  KeyValues back = read_keyvalues(path);
  CHECK(back == kv);
  std::remove(path.c_str());
}
