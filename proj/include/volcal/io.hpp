#pragma once

// Quote ingestion with per-row rejection logging, surface/trace/report CSV
// export, and key-value provenance sidecars. All formats carry a leading
// `# volcal-format v1` line and at least 12 significant digits so Monte Carlo
// noise, not formatting, dominates round-trip error.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "volcal/core.hpp"
#include "volcal/trainer.hpp"

namespace volcal {

inline constexpr const char* kFormatTag = "# volcal-format v1";

struct QuoteFile {
  std::string path;
  std::vector<OptionQuote> accepted;
  struct Rejection {
    int row = 0;  // 1-based data row
    std::string reason;
  };
  std::vector<Rejection> rejected;
};

/// Parses `price,strike,maturity` CSV (optional bid/ask columns ignored).
/// Malformed rows and basic-invariant violations land in the rejection log;
/// throws Io / MalformedHeader / EmptyAfterValidation only.
QuoteFile read_quotes(const std::string& path);

/// Completes the frame (K_max = max K, T_max = max T when not provided) and
/// moves quotes violating the price bounds or the scaled domain into the
/// rejection log. Throws EmptyAfterValidation when nothing survives.
MarketFrame finalize_frame(QuoteFile& quotes, double spot, double rate,
                           OptionKind kind, double k_max = 0.0,
                           double t_max = 0.0);

void write_quotes(const std::string& path,
                  const std::vector<OptionQuote>& quotes);

/// Key-value sidecars (provenance, surface metadata).
using KeyValues = std::vector<std::pair<std::string, std::string>>;
void write_keyvalues(const std::string& path, const KeyValues& entries);
KeyValues read_keyvalues(const std::string& path);

enum class SurfaceCoords { Original, Scaled };

struct SurfaceGridExport {
  Eigen::ArrayXd col_axis;   // strikes (or k)
  Eigen::ArrayXd row_axis;   // maturities (or t)
  Eigen::ArrayXXd values;    // rows = row_axis entries
  KeyValues metadata;
};

/// Axis-headed CSV matrix plus a `<path>.meta` sidecar.
void export_surface(const SurfaceGridExport& surface, const std::string& path);
SurfaceGridExport read_surface(const std::string& path);

void write_trace(const std::string& path, const TrainTrace& trace);

struct RunResult {
  double lambda_dup = 0.0;
  std::int64_t seed = 0;
  double price_rmse = std::numeric_limits<double>::quiet_NaN();
  double vol_rmse = std::numeric_limits<double>::quiet_NaN();
  double reprice_rmse = std::numeric_limits<double>::quiet_NaN();
  std::int64_t iterations = 0;
  bool early_stopped = false;
};

struct CalibrationReport {
  std::uint64_t config_hash = 0;
  std::vector<RunResult> runs;
};

/// Aggregated report: one row per lambda with mean and spread (max - min)
/// of the three RMSEs, seeds and run count. Refuses to write when any RMSE
/// is missing (non-finite).
void write_report(const CalibrationReport& report, const std::string& path);

/// Per-run rows backing the aggregate.
void write_runs_detail(const CalibrationReport& report, const std::string& path);

CalibrationReport read_runs_detail(const std::string& path);

std::string format_sig(double v);  // %.17g

}  // namespace volcal
