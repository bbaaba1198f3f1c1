#include "sfl/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sfl/error.hpp"
#include "sfl/models.hpp"
#include "sfl/parallel.hpp"
#include "sfl/rng.hpp"

namespace sfl {

namespace {

struct SubmittedRows {
  UpdateMatrix matrix;
  bool attacked = false;
  std::optional<GammaSearchResult> search;
};

// Honest rows in, submitted rows out: malicious clients' rows are replaced by
// the crafted update, built from this round's benign rows only.
SubmittedRows apply_adversary(const RoundContext& ctx, const std::vector<std::vector<double>>& honest,
                              const RoundInputs& in, const AggregationRule& rule) {
  SubmittedRows out;
  const bool attack_now = in.attack.active() && ctx.round >= in.attack.attack_start_round && ctx.m_round > 0 &&
                          ctx.m_round < ctx.selected.size();
  std::vector<double> crafted;
  if (attack_now) {
    UpdateMatrix benign;
    for (std::size_t k = 0; k < ctx.selected.size(); ++k)
      if (!ctx.is_malicious(ctx.selected[k])) benign.append_row(honest[k], int(ctx.selected[k]));
    CraftedUpdate c = craft_round_update(in.attack, benign, ctx.m_round, rule);
    crafted = std::move(c.values);
    out.search = c.search;
    out.attacked = true;
  }
  for (std::size_t k = 0; k < ctx.selected.size(); ++k) {
    const bool replace = attack_now && ctx.is_malicious(ctx.selected[k]);
    out.matrix.append_row(replace ? crafted : honest[k], int(ctx.selected[k]));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / double(v.size());
}

void broadcast(std::vector<ClientState>& clients, const ParamVector& global) {
  for (auto& c : clients) c.params = global;
}

}  // namespace

bool RoundContext::is_malicious(std::size_t client) const {
  return std::binary_search(malicious_set.begin(), malicious_set.end(), client);
}

RoundContext make_round_context(std::size_t round, std::vector<std::size_t> selected,
                                std::vector<std::size_t> malicious_set, std::size_t n_clients, double lr,
                                std::size_t batch_size, std::uint64_t seed, std::size_t workers) {
  RoundContext ctx;
  ctx.round = round;
  ctx.selected = std::move(selected);
  ctx.malicious_set = std::move(malicious_set);
  std::sort(ctx.selected.begin(), ctx.selected.end());
  std::sort(ctx.malicious_set.begin(), ctx.malicious_set.end());
  ctx.n_clients = n_clients;
  ctx.lr = lr;
  ctx.batch_size = batch_size;
  ctx.seed = seed;
  ctx.workers = workers;
  ctx.m_round = std::size_t(std::count_if(ctx.selected.begin(), ctx.selected.end(),
                                          [&](std::size_t c) { return ctx.is_malicious(c); }));
  return ctx;
}

std::vector<std::size_t> choose_malicious(std::size_t n_clients, std::size_t count, std::uint64_t seed) {
  if (count > n_clients) throw ValidationError("more malicious clients than clients");
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  Engine eng = make_engine(seed, {stream::kMalicious});
  std::shuffle(ids.begin(), ids.end(), eng);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::vector<std::size_t>> client_batches(const std::vector<std::size_t>& shard, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t round, std::size_t client) {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order = shard;
  Engine eng = make_engine(seed, {stream::kBatches, round, client});
  std::shuffle(order.begin(), order.end(), eng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t end = std::min(order.size(), at + batch_size);
    batches.emplace_back(order.begin() + std::ptrdiff_t(at), order.begin() + std::ptrdiff_t(end));
  }
  return batches;
}

double local_epoch(const ModelSpec& spec, ParamVector& params, const Dataset& train,
                   const std::vector<std::vector<std::size_t>>& batches, double lr) {
  std::vector<double> losses;
  for (const auto& rows : batches) {
    const TensorF x = gather_rows(train.features, rows);
    const auto y = gather_labels(train.labels, rows);
    const ForwardCache cache = forward(spec, params, x);
    const BackwardResult b = backward(spec, params, cache, y);
    sgd_step_inplace(params, b.grad, lr);
    losses.push_back(b.loss);
  }
  return mean_of(losses);
}

RoundOutcome run_fl_round(const RoundContext& ctx, std::vector<ClientState>& clients, const ParamVector& global,
                          const RoundInputs& in) {
  const auto rule = round_rule(in.defense, ctx.m_round);
  check_rule(rule, ctx.selected.size());

  const std::size_t k = ctx.selected.size();
  std::vector<std::vector<double>> honest(k);
  std::vector<double> losses(k);
  parallel_for(k, ctx.workers, [&](std::size_t i) {
    const ClientState& client = clients.at(ctx.selected[i]);
    ParamVector local = global;
    const auto batches = client_batches(client.shard, ctx.batch_size, ctx.seed, ctx.round, client.client_id);
    losses[i] = local_epoch(*in.spec, local, *in.train, batches, ctx.lr);
    honest[i] = std::move(local.values);
  });

  SubmittedRows rows = apply_adversary(ctx, honest, in, rule);
  RoundOutcome out;
  out.global = ParamVector{global.layout, aggregate(rule, rows.matrix)};
  out.loss = mean_of(losses);
  out.attack_dim = global.size();
  out.attacked = rows.attacked;
  out.search = rows.search;
  broadcast(clients, out.global);
  return out;
}

RoundOutcome run_splitfed_round(const RoundContext& ctx, std::vector<ClientState>& clients, ServerState& server,
                                const ParamVector& client_global, const RoundInputs& in) {
  const auto rule = round_rule(in.defense, ctx.m_round);
  check_rule(rule, ctx.selected.size());
  const CutPoint cut{in.spec->layers.size() - server.half.spec.layers.size()};
  const ModelSpec client_spec = client_fragment(*in.spec, cut);

  const std::size_t k = ctx.selected.size();
  std::vector<ClientHalf> halves(k, ClientHalf{client_spec, client_global});
  std::vector<std::vector<std::vector<std::size_t>>> batches(k);
  std::vector<std::optional<SmashedBatch>> first(k);

  // Phase 1: clients compute their first smashed batch concurrently.
  parallel_for(k, ctx.workers, [&](std::size_t i) {
    const ClientState& client = clients.at(ctx.selected[i]);
    batches[i] = client_batches(client.shard, ctx.batch_size, ctx.seed, ctx.round, client.client_id);
    if (batches[i].empty()) return;
    const auto& rows = batches[i].front();
    first[i] = client_forward(halves[i], gather_rows(in.train->features, rows), gather_labels(in.train->labels, rows));
  });

  // Phase 2: the server serves clients one at a time in ascending id order.
  // Later batches are forwarded against the client's freshly updated half.
  std::vector<double> losses;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> client_losses;
    for (std::size_t b = 0; b < batches[i].size(); ++b) {
      const auto& rows = batches[i][b];
      SmashedBatch smashed = b == 0 ? std::move(*first[i])
                                    : client_forward(halves[i], gather_rows(in.train->features, rows),
                                                     gather_labels(in.train->labels, rows));
      const ServerStepResult s = server_step(server.half, smashed, ctx.lr);
      client_backward(halves[i], smashed, s.cut_grad, ctx.lr);
      client_losses.push_back(s.loss);
    }
    losses.push_back(mean_of(client_losses));
  }

  // Phase 3/4: client halves go to the Fed Server.
  std::vector<std::vector<double>> honest(k);
  for (std::size_t i = 0; i < k; ++i) honest[i] = std::move(halves[i].params.values);
  SubmittedRows rows = apply_adversary(ctx, honest, in, rule);

  RoundOutcome out;
  out.global = ParamVector{client_global.layout, aggregate(rule, rows.matrix)};
  out.loss = mean_of(losses);
  out.attack_dim = client_global.size();
  out.attacked = rows.attacked;
  out.search = rows.search;
  broadcast(clients, out.global);
  return out;
}

double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test) {
  if (test.size() == 0) throw ValidationError("evaluate: empty test set");
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t at = 0; at < test.size(); at += kChunk) {
    rows.resize(std::min(kChunk, test.size() - at));
    std::iota(rows.begin(), rows.end(), at);
    const ForwardCache cache = forward(spec, params, gather_rows(test.features, rows));
    const TensorF& logits = cache.output();
    const std::size_t classes = logits.shape[1];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto first = logits.values.begin() + std::ptrdiff_t(r * classes);
      const auto pred = std::size_t(std::max_element(first, first + std::ptrdiff_t(classes)) - first);
      if (int(pred) == test.labels[rows[r]]) ++correct;
    }
  }
  return double(correct) / double(test.size());
}

Setup build_setup(const ExperimentConfig& cfg) {
  Setup s;
  if (const auto* b = std::get_if<BlobsConfig>(&cfg.dataset)) {
    s.data = gen_blobs(cfg.seed, *b);
  } else {
    const auto& idx = std::get<IdxSource>(cfg.dataset);
    s.data.train = load_idx(idx.train_images, idx.train_labels);
    s.data.test = load_idx(idx.test_images, idx.test_labels);
    const std::size_t classes = std::max(s.data.train.num_classes, s.data.test.num_classes);
    s.data.train.num_classes = s.data.test.num_classes = classes;
  }
  const std::size_t classes = s.data.train.num_classes;
  const std::size_t width = shape_size(s.data.train.features.sample_shape());
  if (cfg.model == ModelPreset::Mlp) {
    s.spec = desk_mlp(width, classes);
  } else {
    const Shape sample = s.data.train.features.sample_shape();
    const std::size_t channels = sample.size() == 3 ? sample[0] : 1;
    const auto side = std::size_t(std::llround(std::sqrt(double(width / channels))));
    if (side * side * channels != width)
      throw ValidationError("config key 'model': cnn needs square inputs, samples have shape " + shape_str(sample));
    s.spec = desk_cnn(channels, side, classes);
  }
  s.data.train = reshape_samples(std::move(s.data.train), s.spec.input_shape);
  s.data.test = reshape_samples(std::move(s.data.test), s.spec.input_shape);
  return s;
}

TrainResult train(const ExperimentConfig& cfg, std::size_t workers) {
  validate(cfg);
  TrainResult result;
  if (cfg.rounds == 0) return result;

  const Setup setup = build_setup(cfg);
  const ModelSpec& spec = setup.spec;
  const Dataset& train_set = setup.data.train;
  if (cfg.n_clients > train_set.size())
    throw ValidationError("config key 'n_clients': more clients than training samples");

  const Partition part = cfg.partition.dirichlet
                             ? partition_dirichlet(train_set.labels, train_set.num_classes, cfg.n_clients,
                                                   cfg.partition.alpha, cfg.seed)
                             : partition_iid(train_set.size(), cfg.n_clients, cfg.seed);
  const auto malicious = choose_malicious(cfg.n_clients, malicious_count(cfg.malicious_fraction, cfg.n_clients), cfg.seed);

  RoundInputs in;
  in.spec = &spec;
  in.train = &train_set;
  in.attack = cfg.attack;
  in.attack.attack_start_round = resolved_attack_start(cfg);
  in.defense = cfg.defense;

  const ParamVector init = init_params(spec, cfg.seed);
  std::vector<ClientState> clients(cfg.n_clients);
  for (std::size_t c = 0; c < cfg.n_clients; ++c) clients[c] = {c, part.assignments[c], {}};

  ParamVector global;  // full model (FL) or client half
  ServerState server;
  if (cfg.mode == Mode::FL) {
    global = init;
  } else {
    SplitModel sm = split_at(spec, init, preset_cut(spec, cfg.cut));
    global = std::move(sm.client.params);
    server.half = std::move(sm.server);
  }
  for (auto& c : clients) c.params = global;

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const RoundContext ctx =
        make_round_context(r, sample_clients(cfg.n_clients, cfg.clients_per_round, r, cfg.seed), malicious,
                           cfg.n_clients, cfg.lr, cfg.batch_size, cfg.seed, workers);
    RoundOutcome out = cfg.mode == Mode::FL ? run_fl_round(ctx, clients, global, in)
                                            : run_splitfed_round(ctx, clients, server, global, in);
    global = std::move(out.global);
    result.attack_dim = out.attack_dim;

    RoundRecord rec;
    rec.round = r;
    rec.loss = out.loss;
    if (out.search) {
      rec.gamma = out.search->gamma;
      rec.deviation = out.search->deviation;
    }
    if ((r + 1) % cfg.eval_every == 0 || r + 1 == cfg.rounds) {
      const ParamVector full = cfg.mode == Mode::FL ? global : join_params(spec, global, server.half.params);
      rec.test_accuracy = evaluate(spec, full, setup.data.test);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
  }
  result.final_params = cfg.mode == Mode::FL ? global : join_params(spec, global, server.half.params);
  return result;
}

}  // namespace sfl
