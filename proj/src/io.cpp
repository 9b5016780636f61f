#include "volcal/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace volcal {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return in;
}

}  // namespace

std::string format_sig(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

QuoteFile read_quotes(const std::string& path) {
  std::ifstream in = open_in(path);
  QuoteFile file;
  file.path = path;

  std::string line;
  // Skip format/comment lines before the header.
  do {
    if (!std::getline(in, line))
      fail(ErrorCode::MalformedHeader, path + ": missing header");
  } while (!trim(line).empty() && trim(line)[0] == '#');

  std::vector<std::string> header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  if (header.size() < 3 || header[0] != "price" || header[1] != "strike" ||
      header[2] != "maturity")
    fail(ErrorCode::MalformedHeader,
         path + ": expected header price,strike,maturity");

  int row = 0;
  while (std::getline(in, line)) {
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    ++row;
    std::vector<std::string> cells = split(body, ',');
    if (cells.size() < 3) {
      file.rejected.push_back({row, "InvalidField: fewer than 3 columns"});
      continue;
    }
    OptionQuote q;
    if (!parse_double(cells[0], q.price) || !parse_double(cells[1], q.strike) ||
        !parse_double(cells[2], q.maturity)) {
      file.rejected.push_back({row, "InvalidField: unparseable number"});
      continue;
    }
    if (!std::isfinite(q.price) || !std::isfinite(q.strike) ||
        !std::isfinite(q.maturity)) {
      file.rejected.push_back({row, "InvalidField: non-finite entry"});
      continue;
    }
    if (!(q.strike > 0.0)) {
      file.rejected.push_back({row, "InvalidField: strike must be positive"});
      continue;
    }
    if (q.maturity < 0.0) {
      file.rejected.push_back({row, "InvalidField: negative maturity"});
      continue;
    }
    if (q.price < 0.0) {
      file.rejected.push_back({row, "BoundViolation: negative price"});
      continue;
    }
    file.accepted.push_back(q);
  }
  if (file.accepted.empty())
    fail(ErrorCode::EmptyAfterValidation, path + ": no valid quotes");
  return file;
}

MarketFrame finalize_frame(QuoteFile& quotes, double spot, double rate,
                           OptionKind kind, double k_max, double t_max) {
  MarketFrame frame;
  frame.spot = spot;
  frame.rate = rate;
  frame.kind = kind;
  double max_strike = 0.0, max_maturity = 0.0;
  for (const OptionQuote& q : quotes.accepted) {
    max_strike = std::max(max_strike, q.strike);
    max_maturity = std::max(max_maturity, q.maturity);
  }
  frame.k_max = k_max > 0.0 ? k_max : max_strike;
  frame.t_max = t_max > 0.0 ? t_max : max_maturity;
  frame.validate();

  std::vector<OptionQuote> kept;
  kept.reserve(quotes.accepted.size());
  for (std::size_t i = 0; i < quotes.accepted.size(); ++i) {
    const OptionQuote& q = quotes.accepted[i];
    if (auto reason = quote_rejection_reason(q, frame)) {
      quotes.rejected.push_back({static_cast<int>(i + 1), *reason});
    } else {
      kept.push_back(q);
    }
  }
  quotes.accepted = std::move(kept);
  if (quotes.accepted.empty())
    fail(ErrorCode::EmptyAfterValidation,
         quotes.path + ": every quote violates the price bounds");
  return frame;
}

void write_quotes(const std::string& path,
                  const std::vector<OptionQuote>& quotes) {
  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  out << "price,strike,maturity\n";
  for (const OptionQuote& q : quotes)
    out << format_sig(q.price) << ',' << format_sig(q.strike) << ','
        << format_sig(q.maturity) << "\n";
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

void write_keyvalues(const std::string& path, const KeyValues& entries) {
  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  for (const auto& [key, value] : entries) out << key << '=' << value << "\n";
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

KeyValues read_keyvalues(const std::string& path) {
  std::ifstream in = open_in(path);
  KeyValues out;
  std::string line;
  while (std::getline(in, line)) {
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    std::size_t eq = body.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return out;
}

void export_surface(const SurfaceGridExport& surface, const std::string& path) {
  if (surface.values.rows() != surface.row_axis.size() ||
      surface.values.cols() != surface.col_axis.size())
    fail(ErrorCode::DomainError, "surface export: axis/matrix shape mismatch");

  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  out << "0";
  for (Eigen::Index c = 0; c < surface.col_axis.size(); ++c)
    out << ',' << format_sig(surface.col_axis[c]);
  out << "\n";
  for (Eigen::Index r = 0; r < surface.row_axis.size(); ++r) {
    out << format_sig(surface.row_axis[r]);
    for (Eigen::Index c = 0; c < surface.col_axis.size(); ++c)
      out << ',' << format_sig(surface.values(r, c));
    out << "\n";
  }
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
  write_keyvalues(path + ".meta", surface.metadata);
}

SurfaceGridExport read_surface(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    std::vector<std::string> cells = split(body, ',');
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) {
      double v;
      if (!parse_double(cell, v))
        fail(ErrorCode::Io, path + ": unparseable surface cell");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2 || rows[0].size() < 2)
    fail(ErrorCode::Io, path + ": not a surface matrix");

  SurfaceGridExport s;
  const std::size_t nc = rows[0].size() - 1;
  s.col_axis.resize(static_cast<Eigen::Index>(nc));
  for (std::size_t c = 0; c < nc; ++c)
    s.col_axis[static_cast<Eigen::Index>(c)] = rows[0][c + 1];
  const std::size_t nr = rows.size() - 1;
  s.row_axis.resize(static_cast<Eigen::Index>(nr));
  s.values.resize(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  for (std::size_t r = 0; r < nr; ++r) {
    if (rows[r + 1].size() != nc + 1)
      fail(ErrorCode::Io, path + ": ragged surface matrix");
    s.row_axis[static_cast<Eigen::Index>(r)] = rows[r + 1][0];
    for (std::size_t c = 0; c < nc; ++c)
      s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r + 1][c + 1];
  }
  std::ifstream meta(path + ".meta");
  if (meta) s.metadata = read_keyvalues(path + ".meta");
  return s;
}

void write_trace(const std::string& path, const TrainTrace& trace) {
  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  out << "iter,lr,fit,ini,arb,dup,total\n";
  for (const TraceRow& row : trace.rows)
    out << row.iter << ',' << format_sig(row.lr) << ',' << format_sig(row.fit)
        << ',' << format_sig(row.ini) << ',' << format_sig(row.arb) << ','
        << format_sig(row.dup) << ',' << format_sig(row.total) << "\n";
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

namespace {

void require_complete(const CalibrationReport& report) {
  if (report.runs.empty())
    fail(ErrorCode::DomainError, "report: no runs to write");
  for (const RunResult& run : report.runs)
    if (!std::isfinite(run.price_rmse) || !std::isfinite(run.vol_rmse) ||
        !std::isfinite(run.reprice_rmse))
      fail(ErrorCode::DomainError,
           "report: missing RMSE field (schema violation)");
}

}  // namespace

void write_report(const CalibrationReport& report, const std::string& path) {
  require_complete(report);

  // Group by lambda, preserving first-seen order.
  std::vector<double> lambdas;
  for (const RunResult& run : report.runs)
    if (std::find(lambdas.begin(), lambdas.end(), run.lambda_dup) ==
        lambdas.end())
      lambdas.push_back(run.lambda_dup);

  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  out << "lambda_dup,runs,seeds,price_rmse_mean,price_rmse_spread,"
         "vol_rmse_mean,vol_rmse_spread,reprice_rmse_mean,reprice_rmse_spread,"
         "config_hash\n";
  for (double lambda : lambdas) {
    std::vector<const RunResult*> group;
    for (const RunResult& run : report.runs)
      if (run.lambda_dup == lambda) group.push_back(&run);

    auto stats = [&group](double RunResult::* field) {
      double lo = (*group.front()).*field, hi = lo, sum = 0.0;
      for (const RunResult* r : group) {
        double v = r->*field;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      return std::pair<double, double>{sum / static_cast<double>(group.size()),
                                       hi - lo};
    };
    auto [pm, ps] = stats(&RunResult::price_rmse);
    auto [vm, vs] = stats(&RunResult::vol_rmse);
    auto [rm, rs] = stats(&RunResult::reprice_rmse);

    std::string seeds;
    for (const RunResult* r : group) {
      if (!seeds.empty()) seeds += ';';
      seeds += std::to_string(r->seed);
    }
    out << format_sig(lambda) << ',' << group.size() << ',' << seeds << ','
        << format_sig(pm) << ',' << format_sig(ps) << ',' << format_sig(vm)
        << ',' << format_sig(vs) << ',' << format_sig(rm) << ','
        << format_sig(rs) << ',' << report.config_hash << "\n";
  }
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

void write_runs_detail(const CalibrationReport& report,
                       const std::string& path) {
  require_complete(report);
  std::ofstream out = open_out(path);
  out << kFormatTag << "\n";
  out << "lambda_dup,seed,price_rmse,vol_rmse,reprice_rmse,iterations,"
         "early_stopped,config_hash\n";
  for (const RunResult& run : report.runs)
    out << format_sig(run.lambda_dup) << ',' << run.seed << ','
        << format_sig(run.price_rmse) << ',' << format_sig(run.vol_rmse) << ','
        << format_sig(run.reprice_rmse) << ',' << run.iterations << ','
        << (run.early_stopped ? 1 : 0) << ',' << report.config_hash << "\n";
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

CalibrationReport read_runs_detail(const std::string& path) {
  std::ifstream in = open_in(path);
  CalibrationReport report;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells = split(body, ',');
    if (cells.size() < 8) fail(ErrorCode::Io, path + ": short report row");
    RunResult run;
    double seed_d, iters_d, stopped_d;
    if (!parse_double(cells[0], run.lambda_dup) ||
        !parse_double(cells[1], seed_d) ||
        !parse_double(cells[2], run.price_rmse) ||
        !parse_double(cells[3], run.vol_rmse) ||
        !parse_double(cells[4], run.reprice_rmse) ||
        !parse_double(cells[5], iters_d) || !parse_double(cells[6], stopped_d))
      fail(ErrorCode::Io, path + ": unparseable report row");
    run.seed = static_cast<std::int64_t>(seed_d);
    run.iterations = static_cast<std::int64_t>(iters_d);
    run.early_stopped = stopped_d != 0.0;
    report.config_hash = std::strtoull(trim(cells[7]).c_str(), nullptr, 10);
    report.runs.push_back(run);
  }
  return report;
}

}  // namespace volcal
