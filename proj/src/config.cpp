#include "sfl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "sfl/error.hpp"

namespace sfl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ValidationError("config key '" + key + "': invalid value '" + value + "' (" + why + ")");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) bad(key, v, "expected a number");
    return d;
  } catch (const std::logic_error&) {
    bad(key, v, "expected a number");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad(key, v, "expected a non-negative integer");
  return out;
}

// "name(a,b,c)" -> {"name", {"a","b","c"}}; plain "name" -> {"name", {}}.
std::pair<std::string, std::vector<std::string>> split_call(const std::string& key, const std::string& text) {
  const auto open = text.find('(');
  if (open == std::string::npos) return {trim(text), {}};
  if (text.back() != ')') bad(key, text, "unbalanced parentheses");
  std::vector<std::string> args;
  std::stringstream ss(text.substr(open + 1, text.size() - open - 2));
  for (std::string a; std::getline(ss, a, ',');) args.push_back(trim(a));
  return {trim(text.substr(0, open)), args};
}

// Shortest representation that round-trips.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

PerturbKind parse_perturb(const std::string& key, const std::string& v) {
  if (v == "std") return PerturbKind::StdDev;
  if (v == "unit") return PerturbKind::UnitVec;
  if (v == "sign") return PerturbKind::InverseSign;
  bad(key, v, "perturbation must be std|unit|sign");
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::FL ? "fl" : "splitfed"; }
std::string to_string(ModelPreset model) { return model == ModelPreset::Mlp ? "mlp" : "cnn"; }
std::string to_string(Defense d) {
  switch (d) {
    case Defense::FedAvg: return "fedavg";
    case Defense::TrMean: return "trmean";
    case Defense::Median: return "median";
  }
  return "?";
}

std::string to_string(const AttackSpec& attack) {
  if (const auto* l = std::get_if<LieAttack>(&attack.kind)) return "lie(" + fmt_double(l->z) + ")";
  if (const auto* a = std::get_if<AgrOptAttack>(&attack.kind))
    return "agropt(" + perturb_name(a->perturbation) + "," + fmt_double(a->gamma_init) + "," + fmt_double(a->tau) +
           ")";
  return "none";
}

std::string to_string(const PartitionScheme& p) {
  return p.dirichlet ? "dirichlet(" + fmt_double(p.alpha) + ")" : "iid";
}

Mode parse_mode(const std::string& v) {
  if (v == "fl") return Mode::FL;
  if (v == "splitfed") return Mode::SplitFed;
  bad("mode", v, "expected fl|splitfed");
}

Defense parse_defense(const std::string& v) {
  if (v == "fedavg") return Defense::FedAvg;
  if (v == "trmean") return Defense::TrMean;
  if (v == "median") return Defense::Median;
  bad("defense", v, "expected fedavg|trmean|median");
}

AttackSpec parse_attack(const std::string& v) {
  const auto [name, args] = split_call("attack", v);
  AttackSpec spec;
  if (name == "none" && args.empty()) {
    spec.kind = NoAttack{};
  } else if (name == "lie") {
    if (args.size() > 1) bad("attack", v, "lie takes one argument z");
    spec.kind = LieAttack{args.empty() ? 1.0 : to_double("attack", args[0])};
  } else if (name == "agropt") {
    if (args.size() > 3) bad("attack", v, "agropt takes (perturb, gamma_init, tau)");
    AgrOptAttack a;
    if (args.size() > 0) a.perturbation = parse_perturb("attack", args[0]);
    if (args.size() > 1) a.gamma_init = to_double("attack", args[1]);
    if (args.size() > 2) a.tau = to_double("attack", args[2]);
    spec.kind = a;
  } else {
    bad("attack", v, "expected none|lie(z)|agropt(perturb,gamma_init,tau)");
  }
  try {
    validate(spec);
  } catch (const ValidationError& e) {
    bad("attack", v, e.what());
  }
  return spec;
}

std::size_t malicious_count(double fraction, std::size_t n) {
  // The epsilon absorbs representation error such as 0.3 * 20 = 6.0000000000000009.
  return std::size_t(std::ceil(fraction * double(n) - 1e-9));
}

std::size_t resolved_attack_start(const ExperimentConfig& cfg) {
  if (cfg.attack_start_round) return *cfg.attack_start_round;
  return cfg.partition.dirichlet ? cfg.rounds / 4 : 0;
}

AggregationRule round_rule(Defense defense, std::size_t m) {
  switch (defense) {
    case Defense::FedAvg: return AggregationRule::fed_avg();
    case Defense::TrMean: return AggregationRule::trimmed_mean(m);
    case Defense::Median: return AggregationRule::median();
  }
  return AggregationRule::fed_avg();
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("config key '" + key + "': " + why);
  };
  if (cfg.n_clients == 0) fail("n_clients", "must be >= 1");
  if (cfg.clients_per_round == 0 || cfg.clients_per_round > cfg.n_clients)
    fail("clients_per_round", "must be in [1, n_clients]");
  if (!(cfg.malicious_fraction >= 0.0 && cfg.malicious_fraction < 1.0))
    fail("malicious_fraction", "must be in [0, 1)");
  if (!(cfg.lr > 0.0)) fail("lr", "must be > 0");
  if (cfg.batch_size == 0) fail("batch_size", "must be >= 1");
  if (cfg.eval_every == 0) fail("eval_every", "must be >= 1");
  if (cfg.partition.dirichlet && !(cfg.partition.alpha > 0.0)) fail("partition", "dirichlet alpha must be > 0");
  if (cfg.mode == Mode::SplitFed && cfg.cut != "v1" && cfg.cut != "v2" && cfg.cut != "v3")
    fail("cut", "must be v1|v2|v3");
  if (const auto* b = std::get_if<BlobsConfig>(&cfg.dataset)) {
    if (b->num_classes < 2 || b->dims < 2 || b->samples_per_class < 2 || !(b->spread > 0.0))
      fail("dataset", "blobs needs classes >= 2, dims >= 2, per-class >= 2, spread > 0");
    const std::size_t n_train = b->num_classes * (b->samples_per_class * 4 / 5);
    if (cfg.n_clients > n_train) fail("n_clients", "exceeds the number of training samples");
  }
  validate(cfg.attack);
  // Worst case: every malicious client is selected in the same round.
  const std::size_t m = std::min(malicious_count(cfg.malicious_fraction, cfg.n_clients), cfg.clients_per_round);
  if (cfg.defense == Defense::TrMean && cfg.clients_per_round <= 2 * m)
    fail("defense", "trmean needs clients_per_round > 2 * malicious per round (" + std::to_string(2 * m) + ")");
  if (cfg.attack.active() && m == cfg.clients_per_round && cfg.malicious_fraction > 0.0)
    fail("malicious_fraction", "an attack needs at least one benign client per round");
}

void set_config_field(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") {
    cfg.seed = to_uint(key, v);
  } else if (key == "mode") {
    cfg.mode = parse_mode(v);
  } else if (key == "model") {
    if (v == "mlp") cfg.model = ModelPreset::Mlp;
    else if (v == "cnn") cfg.model = ModelPreset::Cnn;
    else bad(key, v, "expected mlp|cnn");
  } else if (key == "cut") {
    if (v != "v1" && v != "v2" && v != "v3") bad(key, v, "expected v1|v2|v3");
    cfg.cut = v;
  } else if (key == "dataset") {
    const auto [name, args] = split_call(key, v);
    if (name == "blobs") {
      BlobsConfig b;
      if (!args.empty() && args.size() != 4) bad(key, v, "blobs(classes,dims,per_class,spread)");
      if (args.size() == 4) {
        b.num_classes = to_uint(key, args[0]);
        b.dims = to_uint(key, args[1]);
        b.samples_per_class = to_uint(key, args[2]);
        b.spread = to_double(key, args[3]);
      }
      cfg.dataset = b;
    } else if (name == "idx") {
      if (args.size() != 4) bad(key, v, "idx(train_images,train_labels,test_images,test_labels)");
      cfg.dataset = IdxSource{args[0], args[1], args[2], args[3]};
    } else {
      bad(key, v, "expected blobs[(...)] or idx(...)");
    }
  } else if (key == "partition") {
    const auto [name, args] = split_call(key, v);
    if (name == "iid" && args.empty()) {
      cfg.partition = {false, 0.5};
    } else if (name == "dirichlet" && args.size() <= 1) {
      cfg.partition = {true, args.empty() ? 0.5 : to_double(key, args[0])};
      if (!(cfg.partition.alpha > 0.0)) bad(key, v, "alpha must be > 0");
    } else {
      bad(key, v, "expected iid|dirichlet(alpha)");
    }
  } else if (key == "n_clients") {
    cfg.n_clients = to_uint(key, v);
  } else if (key == "clients_per_round") {
    cfg.clients_per_round = to_uint(key, v);
  } else if (key == "malicious_fraction") {
    cfg.malicious_fraction = to_double(key, v);
  } else if (key == "rounds") {
    cfg.rounds = to_uint(key, v);
  } else if (key == "lr") {
    cfg.lr = to_double(key, v);
  } else if (key == "batch_size") {
    cfg.batch_size = to_uint(key, v);
  } else if (key == "defense") {
    cfg.defense = parse_defense(v);
  } else if (key == "attack") {
    const auto start = cfg.attack.attack_start_round;
    cfg.attack = parse_attack(v);
    cfg.attack.attack_start_round = start;
  } else if (key == "attack_start_round") {
    cfg.attack_start_round = to_uint(key, v);
  } else if (key == "eval_every") {
    cfg.eval_every = to_uint(key, v);
  } else {
    throw ValidationError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    set_config_field(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string dataset;
  if (const auto* b = std::get_if<BlobsConfig>(&cfg.dataset)) {
    dataset = "blobs(" + std::to_string(b->num_classes) + "," + std::to_string(b->dims) + "," +
              std::to_string(b->samples_per_class) + "," + fmt_double(b->spread) + ")";
  } else {
    const auto& i = std::get<IdxSource>(cfg.dataset);
    dataset = "idx(" + i.train_images + "," + i.train_labels + "," + i.test_images + "," + i.test_labels + ")";
  }
  os << "seed=" << cfg.seed << "\n"
     << "mode=" << to_string(cfg.mode) << "\n"
     << "model=" << to_string(cfg.model) << "\n"
     << "cut=" << cfg.cut << "\n"
     << "dataset=" << dataset << "\n"
     << "partition=" << to_string(cfg.partition) << "\n"
     << "n_clients=" << cfg.n_clients << "\n"
     << "clients_per_round=" << cfg.clients_per_round << "\n"
     << "malicious_fraction=" << fmt_double(cfg.malicious_fraction) << "\n"
     << "rounds=" << cfg.rounds << "\n"
     << "lr=" << fmt_double(cfg.lr) << "\n"
     << "batch_size=" << cfg.batch_size << "\n"
     << "defense=" << to_string(cfg.defense) << "\n"
     << "attack=" << to_string(cfg.attack) << "\n";
  if (cfg.attack_start_round) os << "attack_start_round=" << *cfg.attack_start_round << "\n";
  os << "eval_every=" << cfg.eval_every << "\n";
  return os.str();
}

std::string fingerprint(const ExperimentConfig& cfg) {
  std::string s = format_config(cfg);
  for (char& c : s)
    if (c == '\n') c = ';';
  if (!s.empty() && s.back() == ';') s.pop_back();
  return s;
}

}  // namespace sfl
