#pragma once
//
// Result serialization: solution fields as CSV (shortest round-trip
// decimals, so re-parsing reproduces every double bit-exactly) and run
// manifests as JSON lines carrying everything needed to replay a run.
//

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidemc/expression.hpp"  // detail::format_double
#include "sidemc/solver.hpp"

namespace sidemc {

/// Write a solution field as CSV with LF line endings. Columns:
/// x1..x_{d1}, u1..u_{d2}, stderr1..stderr_{d2}, segment_index.
inline void write_solution_csv(std::ostream& out, const SolutionField& sol) {
  if (sol.grid.empty()) throw ConfigurationError("write_solution_csv: empty field");
  const int d1 = static_cast<int>(sol.grid.front().size());
  const int d2 = static_cast<int>(sol.estimate.front().size());
  for (int i = 1; i <= d1; ++i) out << "x" << i << ",";
  for (int i = 1; i <= d2; ++i) out << "u" << i << ",";
  for (int i = 1; i <= d2; ++i) out << "stderr" << i << ",";
  out << "segment_index\n";
  const int segment_index =
      sol.segment_weights.empty() ? 0 : sol.segment_weights.back().first;
  for (std::size_t r = 0; r < sol.grid.size(); ++r) {
    for (int i = 0; i < d1; ++i) {
      out << detail::format_double(sol.grid[r][i]) << ",";
    }
    for (int i = 0; i < d2; ++i) {
      out << detail::format_double(sol.estimate[r][i]) << ",";
    }
    for (int i = 0; i < d2; ++i) {
      out << detail::format_double(sol.std_error[r][i]) << ",";
    }
    out << segment_index << "\n";
  }
}

inline std::string solution_csv_string(const SolutionField& sol) {
  std::ostringstream ss;
  write_solution_csv(ss, sol);
  return ss.str();
}

/// Parse a CSV produced by write_solution_csv back into a field (grid,
/// estimates, standard errors; run metadata lives in the manifest).
inline SolutionField read_solution_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) {
    throw ConfigurationError("read_solution_csv: empty input");
  }
  int d1 = 0, d2 = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("x", 0) == 0 && col != "x") ++d1;
      if (col.rfind("u", 0) == 0) ++d2;
    }
  }
  if (d1 < 1 || d2 < 1) {
    throw ConfigurationError("read_solution_csv: malformed header '" +
                             header + "'");
  }
  SolutionField sol;
  std::string row;
  while (std::getline(in, row)) {
    if (row.empty()) continue;
    std::stringstream rs(row);
    std::string cell;
    const auto next = [&]() {
      if (!std::getline(rs, cell, ',')) {
        throw ConfigurationError("read_solution_csv: short row '" + row + "'");
      }
      return std::stod(cell);
    };
    Vec x(d1), u(d2), se(d2);
    for (int i = 0; i < d1; ++i) x[i] = next();
    for (int i = 0; i < d2; ++i) u[i] = next();
    for (int i = 0; i < d2; ++i) se[i] = next();
    const int seg = static_cast<int>(next());
    if (sol.segment_weights.empty()) {
      sol.segment_weights.push_back({seg, 0.0});
    }
    sol.grid.push_back(std::move(x));
    sol.estimate.push_back(std::move(u));
    sol.std_error.push_back(std::move(se));
  }
  return sol;
}

/// One manifest record per JSON line; `kind` distinguishes run metadata,
/// outputs, and errors.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& path)
      : out_(path, std::ios::binary) {
    if (!out_.good()) {
      throw ConfigurationError("ManifestWriter: cannot open " + path);
    }
  }

  void record(const nlohmann::json& object) {
    out_ << object.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Metadata shared by every run manifest.
inline nlohmann::json manifest_run_record(
    const std::string& command, const std::string& config_text,
    std::uint64_t seed, std::size_t inner, int n_steps, int threads) {
  return nlohmann::json{{"kind", "run"},
                        {"command", command},
                        {"config", config_text},
                        {"seed", seed},
                        {"inner", inner},
                        {"steps", n_steps},
                        {"threads", threads}};
}

inline nlohmann::json manifest_solution_record(const SolutionField& sol,
                                               const std::string& csv_name) {
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& [idx, lam] : sol.segment_weights) {
    weights.push_back({{"segment", idx}, {"lambda", lam}});
  }
  return nlohmann::json{
      {"kind", "solution"},
      {"csv", csv_name},
      {"t", sol.t},
      {"inner_samples", sol.inner_samples},
      {"observed_noise_seed", sol.observed_noise_seed},
      {"discarded", sol.discarded},
      {"segment_weights", weights},
      {"segment_weights_interpreted", sol.segment_weights_interpreted}};
}

/// Read all JSON-lines records of a manifest.
inline std::vector<nlohmann::json> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) {
    throw ConfigurationError("read_manifest: cannot open " + path);
  }
  std::vector<nlohmann::json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(nlohmann::json::parse(line));
  }
  return records;
}

}  // namespace sidemc
