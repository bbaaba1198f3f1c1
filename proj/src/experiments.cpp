#include "sfl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "sfl/error.hpp"
#include "sfl/parallel.hpp"

namespace sfl {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.0000" -> "0.0000"
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// Splits on commas outside parentheses.
std::vector<std::string> split_top_level(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

auto row_key(const SweepRow& r) {
  return std::tie(r.mode, r.cut, r.defense, r.frac_malicious, r.attack, r.seed);
}

}  // namespace

double accuracy_drop(double acc, double acc_attack) {
  auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
  if (!in_range(acc) || !in_range(acc_attack))
    throw ValidationError("accuracy_drop: accuracies must be percentages in [0, 100]");
  return acc - acc_attack;
}

double final_accuracy(const std::vector<RoundRecord>& records, std::size_t window) {
  std::vector<double> evals;
  for (const auto& r : records)
    if (r.test_accuracy) evals.push_back(*r.test_accuracy);
  if (evals.empty()) throw ValidationError("final_accuracy: no evaluation points");
  const std::size_t n = std::min(window, evals.size());
  double acc = 0.0;
  for (std::size_t i = evals.size() - n; i < evals.size(); ++i) acc += evals[i];
  return 100.0 * acc / double(n);
}

void add_axis(SweepAxes& axes, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ValidationError("axis '" + spec + "': expected name=v1,v2,...");
  const std::string name = spec.substr(0, eq);
  const auto values = split_top_level(spec.substr(eq + 1));
  for (const auto& v : values) {
    if (v.empty()) throw ValidationError("axis '" + name + "': empty value");
    if (name == "mode") {
      axes.modes.push_back(parse_mode(v));
    } else if (name == "cut") {
      if (v != "v1" && v != "v2" && v != "v3") throw ValidationError("axis 'cut': expected v1|v2|v3, got " + v);
      axes.cuts.push_back(v);
    } else if (name == "defense") {
      axes.defenses.push_back(parse_defense(v));
    } else if (name == "attack") {
      axes.attacks.push_back(parse_attack(v));
    } else if (name == "frac") {
      ExperimentConfig probe;
      set_config_field(probe, "malicious_fraction", v);
      axes.fractions.push_back(probe.malicious_fraction);
    } else if (name == "seed") {
      ExperimentConfig probe;
      set_config_field(probe, "seed", v);
      axes.seeds.push_back(probe.seed);
    } else {
      throw ValidationError("unknown axis '" + name + "' (expected mode|cut|defense|attack|frac|seed)");
    }
  }
}

SweepResult run_sweep(const ExperimentConfig& base, const SweepAxes& axes, std::size_t jobs) {
  auto or_base = [](const auto& axis, auto value) {
    using T = std::decay_t<decltype(value)>;
    return axis.empty() ? std::vector<T>{value} : std::vector<T>(axis.begin(), axis.end());
  };
  const auto modes = or_base(axes.modes, base.mode);
  const auto cuts = or_base(axes.cuts, base.cut);
  const auto defenses = or_base(axes.defenses, base.defense);
  const auto attacks = or_base(axes.attacks, base.attack);
  const auto fractions = or_base(axes.fractions, base.malicious_fraction);
  const auto seeds = or_base(axes.seeds, base.seed);

  struct Cell {
    ExperimentConfig attacked;
    ExperimentConfig reference;
    std::string cut_label;
  };
  SweepResult result;
  std::vector<Cell> cells;
  std::set<std::string> seen;
  for (Mode mode : modes)
    for (const auto& cut : mode == Mode::FL ? std::vector<std::string>{base.cut} : cuts)
      for (Defense defense : defenses)
        for (const auto& attack : attacks)
          for (double frac : fractions)
            for (std::uint64_t seed : seeds) {
              Cell cell;
              cell.attacked = base;
              cell.attacked.mode = mode;
              cell.attacked.cut = cut;
              cell.attacked.defense = defense;
              cell.attacked.attack = attack;
              cell.attacked.malicious_fraction = frac;
              cell.attacked.seed = seed;
              cell.reference = cell.attacked;
              cell.reference.attack = AttackSpec{NoAttack{}, 0};
              cell.cut_label = mode == Mode::FL ? "-" : cut;
              const std::string fp = fingerprint(cell.attacked);
              if (!seen.insert(fp).second) continue;
              try {
                validate(cell.attacked);
                validate(cell.reference);
              } catch (const ValidationError& e) {
                result.skipped.push_back({fp, e.what()});
                continue;
              }
              cells.push_back(std::move(cell));
            }

  // Unique runs; a reference shared by several cells runs once.
  std::map<std::string, std::size_t> run_index;
  std::vector<ExperimentConfig> runs;
  for (const auto& c : cells)
    for (const auto* cfg : {&c.reference, &c.attacked})
      if (run_index.emplace(fingerprint(*cfg), runs.size()).second) runs.push_back(*cfg);

  std::vector<TrainResult> outcomes(runs.size());
  parallel_for(runs.size(), jobs, [&](std::size_t i) { outcomes[i] = train(runs[i], 1); });

  for (const auto& c : cells) {
    const auto& ref = outcomes[run_index.at(fingerprint(c.reference))];
    const auto& att = outcomes[run_index.at(fingerprint(c.attacked))];
    SweepRow row;
    row.fingerprint = fingerprint(c.attacked);
    row.mode = to_string(c.attacked.mode);
    row.model = to_string(c.attacked.model);
    row.cut = c.cut_label;
    row.defense = to_string(c.attacked.defense);
    row.attack = to_string(c.attacked.attack);
    row.frac_malicious = c.attacked.malicious_fraction;
    row.seed = c.attacked.seed;
    if (c.attacked.rounds == 0) {
      result.skipped.push_back({row.fingerprint, "rounds=0 produces no evaluation points"});
      continue;
    }
    row.acc = final_accuracy(ref.records);
    row.acc_attack = final_accuracy(att.records);
    row.acc_drop = accuracy_drop(row.acc, row.acc_attack);
    for (const auto& r : att.records)
      if (r.gamma) row.gamma_last = *r.gamma;
    result.rows.push_back(std::move(row));
  }
  std::sort(result.rows.begin(), result.rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return row_key(a) < row_key(b); });
  return result;
}

std::string format_results(const SweepResult& sr) {
  std::ostringstream os;
  os << kResultsHeader << "\n";
  for (const auto& r : sr.rows) {
    os << csv_field(r.mode) << ',' << csv_field(r.model) << ',' << csv_field(r.cut) << ',' << csv_field(r.defense)
       << ',' << csv_field(r.attack) << ',' << fixed(r.frac_malicious, 4) << ',' << r.seed << ',' << fixed(r.acc, 4)
       << ',' << fixed(r.acc_attack, 4) << ',' << fixed(r.acc_drop, 4) << ',' << fixed(r.gamma_last, 4) << "\n";
  }
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write to " + path + " failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_results(const SweepResult& sr, const std::string& path) { write_text(path, format_results(sr)); }

std::vector<SweepRow> parse_results(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    throw ValidationError("results CSV: missing or unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw ValidationError("results CSV: expected 11 fields, got " + std::to_string(f.size()));
    SweepRow r;
    try {
      r.mode = f[0];
      r.model = f[1];
      r.cut = f[2];
      r.defense = f[3];
      r.attack = f[4];
      r.frac_malicious = std::stod(f[5]);
      r.seed = std::stoull(f[6]);
      r.acc = std::stod(f[7]);
      r.acc_attack = std::stod(f[8]);
      r.acc_drop = std::stod(f[9]);
      r.gamma_last = std::stod(f[10]);
    } catch (const std::logic_error&) {
      throw ValidationError("results CSV: malformed number in line '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_history(const std::vector<RoundRecord>& records) {
  std::ostringstream os;
  os << kHistoryHeader << "\n";
  for (const auto& r : records) {
    os << r.round << ',' << (r.test_accuracy ? fixed(100.0 * *r.test_accuracy, 4) : "") << ',' << fixed(r.loss, 6)
       << ',' << (r.gamma ? fixed(*r.gamma, 6) : "") << ',' << (r.deviation ? fixed(*r.deviation, 6) : "") << "\n";
  }
  return os.str();
}

std::string render_svg(const std::vector<SweepRow>& rows) {
  // Pick the x axis: malicious fraction if it varies, else cut, else mode.
  std::set<double> fracs;
  std::set<std::string> cuts, modes;
  for (const auto& r : rows) {
    fracs.insert(r.frac_malicious);
    cuts.insert(r.cut);
    modes.insert(r.mode);
  }
  const bool by_frac = fracs.size() > 1;
  const bool by_cut = !by_frac && cuts.size() > 1;
  auto x_label = [&](const SweepRow& r) {
    if (by_frac) return fixed(r.frac_malicious, 2);
    return by_cut ? r.cut : r.mode;
  };
  auto series_label = [&](const SweepRow& r) {
    std::string s = r.defense + " " + r.attack;
    if (by_frac) s = r.mode + " " + r.cut + " " + s;
    return s;
  };

  std::vector<std::string> xs;
  std::map<std::string, std::map<std::string, std::pair<double, int>>> series;
  for (const auto& r : rows) {
    const std::string x = x_label(r);
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
    auto& cell = series[series_label(r)][x];
    cell.first += r.acc_drop;
    cell.second += 1;
  }
  if (by_frac) std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) { return std::stod(a) < std::stod(b); });

  double lo = 0.0, hi = 1.0;
  for (const auto& [name, pts] : series)
    for (const auto& [x, acc] : pts) {
      lo = std::min(lo, acc.first / acc.second);
      hi = std::max(hi, acc.first / acc.second);
    }

  const double width = 640, height = 400, left = 60, right = 200, top = 30, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](std::size_t i) { return left + (xs.size() <= 1 ? pw / 2 : pw * double(i) / double(xs.size() - 1)); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << (by_frac ? "fraction of malicious clients" : by_cut ? "cut layer" : "mode") << "</text>\n"
     << "<text x=\"15\" y=\"" << top + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << top + ph / 2
     << ")\" text-anchor=\"middle\">accuracy drop (%)</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    os << "<text x=\"" << left - 5 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
       << fixed(v, 1) << "</text>\n";
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    os << "<text x=\"" << px(i) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << escape_xml(xs[i]) << "</text>\n";
  std::size_t s = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kColors[s % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto it = pts.find(xs[i]);
      if (it == pts.end()) continue;
      os << px(i) << "," << py(it->second.first / it->second.second) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 15 * double(s + 1) << "\" font-size=\"10\" fill=\""
       << color << "\">" << escape_xml(name) << "</text>\n";
    ++s;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sfl
