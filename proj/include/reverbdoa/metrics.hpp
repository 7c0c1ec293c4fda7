#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/room.hpp"

namespace reverbdoa {

inline void require_same_length(std::size_t a, std::size_t b,
                                const char* where) {
  if (a != b) {
    throw dimension_error(std::string(where) + ": length mismatch " +
                          std::to_string(a) + " vs " + std::to_string(b));
  }
}

// Mean absolute error between estimated and true grid directions, in degrees.
inline double mae_degrees(const std::vector<int>& est,
                          const std::vector<int>& truth, const DoaGrid& grid) {
  require_same_length(est.size(), truth.size(), "mae_degrees");
  if (est.empty()) throw degenerate_input_error("mae_degrees: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    acc += std::abs(grid.angle_deg(est[i]) - grid.angle_deg(truth[i]));
  }
  return acc / static_cast<double>(est.size());
}

// Fraction of windows whose estimated grid index matches the truth.
inline double accuracy_fraction(const std::vector<int>& est,
                                const std::vector<int>& truth) {
  require_same_length(est.size(), truth.size(), "accuracy_fraction");
  if (est.empty()) {
    throw degenerate_input_error("accuracy_fraction: empty input");
  }
  long long hits = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(est.size());
}

// Row-normalized confusion counts: rows index the true direction, columns the
// estimate; each row with any mass sums to one.
struct DoaHistogram {
  DoaGrid grid;
  std::vector<long long> counts;     // T x T, row-major
  std::vector<double> fractions;     // T x T, row-major

  long long count_at(int t, int e) const {
    return counts[static_cast<std::size_t>(t) * grid.size() + e];
  }
  double fraction_at(int t, int e) const {
    return fractions[static_cast<std::size_t>(t) * grid.size() + e];
  }
};

inline DoaHistogram estimate_histogram(const std::vector<int>& est,
                                       const std::vector<int>& truth,
                                       const DoaGrid& grid) {
  require_same_length(est.size(), truth.size(), "estimate_histogram");
  const int T = grid.size();
  DoaHistogram h;
  h.grid = grid;
  h.counts.assign(static_cast<std::size_t>(T) * T, 0);
  h.fractions.assign(static_cast<std::size_t>(T) * T, 0.0);
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= T || est[i] < 0 || est[i] >= T) {
      throw dimension_error("estimate_histogram: index outside grid");
    }
    ++h.counts[static_cast<std::size_t>(truth[i]) * T + est[i]];
  }
  for (int t = 0; t < T; ++t) {
    long long row = 0;
    for (int e = 0; e < T; ++e) row += h.count_at(t, e);
    if (row == 0) continue;
    for (int e = 0; e < T; ++e) {
      h.fractions[static_cast<std::size_t>(t) * T + e] =
          static_cast<double>(h.count_at(t, e)) / static_cast<double>(row);
    }
  }
  return h;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One evaluated (method, preset, labeled-budget) cell of the results table.
struct EvalRecord {
  std::string method;
  std::string preset;
  int J = 0;
  double alpha = 0.0;
  long long windows = 0;
  double mae_deg = 0.0;
  double accuracy = 0.0;
};

// The results table mirrors the usual reporting layout: one row per labeled
// budget J with (MAE, accuracy%) column pairs for the learned methods, and a
// final row for SRP-PHAT, which has no labeled budget. Cells a method never
// produced stay empty.
namespace detail {

struct ResultsGrid {
  std::vector<int> js;
  // per J: {vae-ssl, cnn} cell pointers, then one srp cell.
  std::vector<std::array<const EvalRecord*, 2>> learned;
  const EvalRecord* srp = nullptr;

  explicit ResultsGrid(const std::vector<EvalRecord>& rows) {
    for (const EvalRecord& r : rows) {
      if (r.method == "srp-phat") {
        srp = &r;
        continue;
      }
      const int col = r.method == "vae-ssl" ? 0 : r.method == "cnn" ? 1 : -1;
      if (col < 0) {
        throw contract_error("results table: unknown method " + r.method);
      }
      std::size_t row = 0;
      while (row < js.size() && js[row] != r.J) ++row;
      if (row == js.size()) {
        js.push_back(r.J);
        learned.push_back({nullptr, nullptr});
      }
      learned[row][static_cast<std::size_t>(col)] = &r;
    }
    // Sort rows by J, keeping the parallel cell array aligned.
    for (std::size_t i = 1; i < js.size(); ++i) {
      for (std::size_t k = i; k > 0 && js[k - 1] > js[k]; --k) {
        std::swap(js[k - 1], js[k]);
        std::swap(learned[k - 1], learned[k]);
      }
    }
  }
};

}  // namespace detail

inline std::string results_csv(const std::vector<EvalRecord>& rows) {
  detail::ResultsGrid grid(rows);
  std::string out =
      "J,vae-ssl_mae_deg,vae-ssl_accuracy_pct,cnn_mae_deg,cnn_accuracy_pct,"
      "srp-phat_mae_deg,srp-phat_accuracy_pct\n";
  auto cell = [](const EvalRecord* r) {
    if (r == nullptr) return std::string(",");
    return ',' + format_g17(r->mae_deg) + ',' + format_g17(100.0 * r->accuracy);
  };
  for (std::size_t i = 0; i < grid.js.size(); ++i) {
    out += std::to_string(grid.js[i]) + cell(grid.learned[i][0]) +
           cell(grid.learned[i][1]) + ",,\n";
  }
  if (grid.srp != nullptr) {
    out += "srp-phat,,,," + cell(grid.srp) + '\n';
  }
  return out;
}

// Histogram matrix: one row per true direction, one fraction column per
// estimated direction, plus the number of scored windows behind the row.
inline std::string histogram_csv(const DoaHistogram& h) {
  const int T = h.grid.size();
  std::string out = "true_deg,windows";
  for (int e = 0; e < T; ++e) {
    out += ",est_" + format_g17(h.grid.angle_deg(e));
  }
  out += '\n';
  for (int t = 0; t < T; ++t) {
    long long row = 0;
    for (int e = 0; e < T; ++e) row += h.count_at(t, e);
    out += format_g17(h.grid.angle_deg(t)) + ',' + std::to_string(row);
    for (int e = 0; e < T; ++e) {
      out += ',' + format_g17(h.fraction_at(t, e));
    }
    out += '\n';
  }
  return out;
}

// Fixed-width console rendering of the same table.
inline std::string results_text(const std::vector<EvalRecord>& rows) {
  detail::ResultsGrid grid(rows);
  char line[200];
  std::string out;
  std::snprintf(line, sizeof(line), "%-10s %12s %12s %12s %12s\n", "J",
                "vae mae", "vae acc%", "cnn mae", "cnn acc%");
  out += line;
  auto cell = [&](const EvalRecord* r, double EvalRecord::*field,
                  double scale) {
    char buf[16];
    if (r == nullptr) {
      std::snprintf(buf, sizeof(buf), "%12s", "-");
    } else {
      std::snprintf(buf, sizeof(buf), "%12.3f", (r->*field) * scale);
    }
    return std::string(buf);
  };
  for (std::size_t i = 0; i < grid.js.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-10d", grid.js[i]);
    out += line;
    out += cell(grid.learned[i][0], &EvalRecord::mae_deg, 1.0) + ' ' +
           cell(grid.learned[i][0], &EvalRecord::accuracy, 100.0) + ' ' +
           cell(grid.learned[i][1], &EvalRecord::mae_deg, 1.0) + ' ' +
           cell(grid.learned[i][1], &EvalRecord::accuracy, 100.0) + '\n';
  }
  if (grid.srp != nullptr) {
    std::snprintf(line, sizeof(line), "%-10s %12.3f %12.3f\n", "srp-phat",
                  grid.srp->mae_deg, 100.0 * grid.srp->accuracy);
    out += line;
  }
  return out;
}

}  // namespace reverbdoa
