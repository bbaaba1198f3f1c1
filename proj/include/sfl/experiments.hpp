#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sfl/config.hpp"
#include "sfl/protocol.hpp"

namespace sfl {

// Percent scale, both inputs in [0, 100]. Negative drops are kept.
double accuracy_drop(double acc, double acc_attack);

// Mean test accuracy (percent) over the last `window` evaluation points.
double final_accuracy(const std::vector<RoundRecord>& records, std::size_t window = 10);

// Each empty axis means "use the base config's value".
struct SweepAxes {
  std::vector<Mode> modes;
  std::vector<std::string> cuts;
  std::vector<Defense> defenses;
  std::vector<AttackSpec> attacks;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
};

// Parses "name=v1,v2,..." (name: mode|cut|defense|attack|frac|seed) into `axes`.
void add_axis(SweepAxes& axes, const std::string& spec);

struct SweepRow {
  std::string fingerprint;  // of the attacked run
  std::string mode;
  std::string model;
  std::string cut;  // "-" for FL
  std::string defense;
  std::string attack;
  double frac_malicious = 0.0;
  std::uint64_t seed = 0;
  double acc = 0.0;
  double acc_attack = 0.0;
  double acc_drop = 0.0;
  double gamma_last = 0.0;
};

struct SkippedCell {
  std::string fingerprint;
  std::string reason;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SkippedCell> skipped;
};

// Every cell is a paired run: a no-attack reference and the attacked run,
// identical in every other field. Cells run on up to `jobs` threads; the
// output does not depend on `jobs`.
SweepResult run_sweep(const ExperimentConfig& base, const SweepAxes& axes, std::size_t jobs = 1);

inline constexpr const char* kResultsHeader =
    "mode,model,cut,defense,attack,frac_malicious,seed,acc,acc_attack,acc_drop,gamma_last";
inline constexpr const char* kHistoryHeader = "round,test_accuracy,loss,gamma,deviation";

std::string format_results(const SweepResult& sr);
void write_results(const SweepResult& sr, const std::string& path);
std::vector<SweepRow> parse_results(const std::string& csv);

// Per-round training history. Wall-clock time is left out so the file is
// reproducible.
std::string format_history(const std::vector<RoundRecord>& records);

// Line chart of acc_drop against whichever of frac/cut/mode varies.
std::string render_svg(const std::vector<SweepRow>& rows);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace sfl
