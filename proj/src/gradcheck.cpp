#include "sfl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/models.hpp"
#include "sfl/rng.hpp"

namespace sfl {

namespace {

bool near_kink(const ModelSpec& spec, const ForwardCache& cache, double margin) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const TensorF& x = cache.activations[i];
    if (std::holds_alternative<ReLU>(spec.layers[i])) {
      for (double v : x.values)
        if (std::abs(v) < margin) return true;
    } else if (const auto* p = std::get_if<MaxPool2d>(&spec.layers[i])) {
      const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
      for (std::size_t b = 0; b < n * c; ++b)
        for (std::size_t oy = 0; oy + p->window <= h; oy += p->window)
          for (std::size_t ox = 0; ox + p->window <= w; ox += p->window) {
            std::vector<double> win;
            for (std::size_t dy = 0; dy < p->window; ++dy)
              for (std::size_t dx = 0; dx < p->window; ++dx) win.push_back(x.values[(b * h + oy + dy) * w + ox + dx]);
            std::sort(win.rbegin(), win.rend());
            // Exact zeros come from a ReLU whose inputs were already checked.
            if (win[0] == 0.0 && win[1] == 0.0) continue;
            if (win[0] - win[1] < margin) return true;
          }
    }
  }
  return false;
}

}  // namespace

double grad_relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::vector<GradcheckCase> gradcheck_cases() {
  std::vector<GradcheckCase> cases;
  auto add = [&](std::string name, Shape in, std::vector<LayerSpec> layers, std::size_t classes) {
    ModelSpec s;
    s.input_shape = std::move(in);
    s.layers = std::move(layers);
    s.num_classes = classes;
    validate(s);
    cases.push_back({std::move(name), std::move(s)});
  };
  add("dense", {5}, {Dense{5, 3}}, 3);
  add("dense+relu", {4}, {Dense{4, 6}, ReLU{}, Dense{6, 3}}, 3);
  add("conv-pad1+relu+flatten", {2, 5, 5}, {Conv2d{2, 3, 3, 1, 1}, ReLU{}, Flatten{}, Dense{75, 3}}, 3);
  add("conv-stride2", {1, 7, 7}, {Conv2d{1, 2, 3, 2, 0}, Flatten{}, Dense{18, 4}}, 4);
  add("conv+maxpool", {1, 6, 6}, {Conv2d{1, 2, 3, 1, 0}, ReLU{}, MaxPool2d{2}, Flatten{}, Dense{8, 3}}, 3);
  add("desk-mlp", {8}, desk_mlp(8, 4).layers, 4);
  add("desk-cnn", {1, 8, 8}, desk_cnn(1, 8, 4).layers, 4);
  return cases;
}

GradcheckInstance random_instance(const ModelSpec& spec, std::uint64_t seed, std::size_t batch, double kink_margin) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Engine eng = make_engine(seed, {0x6772616463686bULL, attempt});
    std::normal_distribution<double> normal(0.0, 1.0);
    GradcheckInstance inst;
    inst.params = init_params(spec, derive_seed(seed, {attempt}));
    for (const auto& slot : inst.params.layout.slots)
      for (std::size_t k = 0; k < slot.bias_count; ++k)
        inst.params.values[slot.offset + slot.weight_count + k] = 0.1 * normal(eng);
    Shape shape{batch};
    shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
    inst.batch = TensorF(shape);
    for (double& v : inst.batch.values) v = normal(eng);
    std::uniform_int_distribution<int> label(0, int(spec.num_classes) - 1);
    for (std::size_t i = 0; i < batch; ++i) inst.labels.push_back(label(eng));
    if (!near_kink(spec, forward(spec, inst.params, inst.batch), kink_margin)) return inst;
  }
}

std::vector<GradcheckReport> run_gradcheck(std::size_t instances_per_case, std::uint64_t seed, double h) {
  std::vector<GradcheckReport> reports;
  for (const auto& c : gradcheck_cases()) {
    GradcheckReport rep{c.name, instances_per_case, 0.0};
    for (std::size_t i = 0; i < instances_per_case; ++i) {
      const auto inst = random_instance(c.spec, derive_seed(seed, {i}));
      const auto cache = forward(c.spec, inst.params, inst.batch);
      const auto analytic = backward(c.spec, inst.params, cache, inst.labels).grad;
      const auto numeric = finite_diff_grad(c.spec, inst.params, inst.batch, inst.labels, h);
      for (std::size_t k = 0; k < analytic.size(); ++k)
        rep.max_rel_error = std::max(rep.max_rel_error, grad_relative_error(analytic.values[k], numeric.values[k]));
    }
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace sfl
