#ifndef CORRIDOR_IO_HPP
#define CORRIDOR_IO_HPP

#include "corridor/bilevel.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace corridor {

/// Numbers at 12 significant digits ("inf"/"-inf"/"nan" for non-finite).
std::string format_number(double v);

/// "hh:mm:ss" for a clock time in seconds since midnight.
std::string format_clock(double seconds);

/// RFC 4180 CSV built row by row; header first, fields quoted when needed.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header);

  Csv& operator<<(double v);
  Csv& operator<<(int v);
  Csv& operator<<(const std::string& v);
  Csv& operator<<(const char* v) { return *this << std::string(v); }
  Csv& operator<<(std::string_view v) { return *this << std::string(v); }
  void end_row();

  std::size_t columns() const { return header_.size(); }
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::string> current_;
};

struct RunManifest {
  std::string command;
  std::string scenario_path;
  std::vector<std::string> overrides;
  std::vector<std::string> arguments;  // remaining command options, as given
  std::filesystem::path output_dir;
  std::vector<std::pair<std::string, double>> timings;  // seconds
};

inline constexpr const char* kToolVersion = "1.0.0";

void write_manifest(const RunManifest& m);

/// "k=50,tau=64,xi=5" with unspecified keys taken from `base`.
PolicyParams parse_policy(const std::string& text, const PolicyParams& base);

struct GridSpec {
  std::vector<int> k_values;
  std::vector<int> tau_values;
  std::vector<int> xi_values;
};

/// "k=50:58:2,tau=64:72:2,xi=4:10:1"; missing axes come from `base`.
GridSpec parse_grid(const std::string& text, const GridSpec& base);

/// "tt=1,em=1,as=0.5,cp=0.05".
ObjectiveWeights parse_weights(const std::string& text, const ObjectiveWeights& base);

/// All run-equilibrium outputs: equilibrium.json, shares.csv, network.csv,
/// waiting.csv, market.csv, trace.csv, timelines.csv, curves.csv, costs.csv.
void write_equilibrium_outputs(const std::filesystem::path& dir, const Scenario& s, const EquilibriumResult& r);

nlohmann::json equilibrium_json(const Scenario& s, const EquilibriumResult& r);

Csv shares_table(const Scenario& s, const ForwardPass<double>& f);
Csv network_table(const Scenario& s, const ForwardPass<double>& f);
Csv waiting_table(const Scenario& s, const ForwardPass<double>& f);
Csv market_table(const Scenario& s, const EquilibriumResult& r, const ForwardPass<double>& f);
Csv trace_table(const EquilibriumResult& r);
Csv timelines_table(const Scenario& s, const TransitSupply& supply);
Csv curves_table(const Scenario& s, const ForwardPass<double>& f);
Csv costs_table(const Scenario& s, const ForwardPass<double>& f);

Csv sweep_table(const GridResult& g);
nlohmann::json sweep_summary(const GridResult& g);
Csv comparison_table(const std::vector<ComparisonRow>& rows);

/// Fixed-width table for the terminal.
std::string format_comparison(const std::vector<ComparisonRow>& rows);

}  // namespace corridor

#endif  // CORRIDOR_IO_HPP
