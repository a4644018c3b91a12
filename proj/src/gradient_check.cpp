#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "folkgen/gru.hpp"

namespace folkgen::gru {

namespace {

using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

long double sigmoid_l(long double v) { return 1.0L / (1.0L + std::exp(-v)); }
long double tanh_l(long double v) { return std::tanh(v); }

}  // namespace

long double extended_sequence_nll(const NetworkParams& params, std::span<const Vector> inputs,
                                  std::span<const int> targets) {
  if (inputs.size() != targets.size() || inputs.empty()) throw std::invalid_argument("bad sequence");
  const auto& dims = params.dims();
  const std::size_t depth = params.layers().size();
  std::vector<VectorL> h;
  for (const auto& layer : params.layers()) h.push_back(layer.h0.cast<long double>());
  const MatrixL w_yo = params.output().w_yo.cast<long double>();
  const VectorL b_o = params.output().b_o.cast<long double>();

  long double total = 0.0L;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    VectorL y(dims.output_input());
    y.head(dims.input) = inputs[n].cast<long double>();
    Eigen::Index filled = dims.input;
    for (std::size_t i = 0; i < depth; ++i) {
      const auto& p = params.layers()[i];
      const VectorL yi = y.head(dims.layer_input(i));
      const VectorL z = (p.w_yz.cast<long double>() * yi + p.w_hz.cast<long double>() * h[i] +
                         p.b_z.cast<long double>()).unaryExpr(&sigmoid_l);
      const VectorL r = (p.w_yr.cast<long double>() * yi + p.w_hr.cast<long double>() * h[i] +
                         p.b_r.cast<long double>()).unaryExpr(&sigmoid_l);
      const VectorL a = p.w_hh.cast<long double>() * h[i];
      const VectorL c = (p.w_yh.cast<long double>() * yi + r.cwiseProduct(a)).unaryExpr(&tanh_l);
      h[i] = z.cwiseProduct(h[i]) + (VectorL::Ones(z.size()) - z).cwiseProduct(c);
      y.segment(filled, h[i].size()) = h[i];
      filled += h[i].size();
    }
    const VectorL logits = w_yo * y + b_o;
    const long double max = logits.maxCoeff();
    long double sum = 0.0L;
    for (Eigen::Index k = 0; k < logits.size(); ++k) sum += std::exp(logits(k) - max);
    total -= logits(targets[n]) - max - std::log(sum);
  }
  return total / static_cast<long double>(inputs.size());
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradientCheckReport gradient_check(const NetworkParams& params, std::span<const Vector> inputs,
                                   std::span<const int> targets, const GradientCheckOptions& options,
                                   const NetworkParams* analytic) {
  GradientCheckReport report;
  for (int h : params.dims().hidden) {
    if (h > options.max_hidden) {
      report.refused = true;
      return report;
    }
  }

  NetworkParams computed;
  if (analytic == nullptr) {
    const auto forward = forward_sequence(params, inputs);
    computed = backward_sequence(params, forward.tape, targets);
    analytic = &computed;
  }

  NetworkParams probe = params;
  auto probe_blocks = probe.blocks();
  const auto grad_blocks = analytic->blocks();
  std::mt19937_64 rng(options.seed);

  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    auto& block = probe_blocks[b];
    BlockCheck check;
    check.name = block.name;

    std::vector<Eigen::Index> coords(static_cast<std::size_t>(block.size()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (coords.size() > options.coords_per_block) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coords_per_block);
      std::sort(coords.begin(), coords.end());
    }

    for (const auto k : coords) {
      const double original = block.data[k];
      // Divide by the step actually taken after rounding of original +- epsilon.
      const double up = original + options.epsilon;
      const double down = original - options.epsilon;
      double numeric = 0.0;
      if (options.extended_reference) {
        block.data[k] = up;
        const long double plus = extended_sequence_nll(probe, inputs, targets);
        block.data[k] = down;
        const long double minus = extended_sequence_nll(probe, inputs, targets);
        numeric = static_cast<double>((plus - minus) / (static_cast<long double>(up) - down));
      } else {
        block.data[k] = up;
        const double plus = sequence_nll(probe, inputs, targets);
        block.data[k] = down;
        const double minus = sequence_nll(probe, inputs, targets);
        numeric = (plus - minus) / (up - down);
      }
      block.data[k] = original;

      const double a = grad_blocks[b].data[k];
      const double rel = relative_error(a, numeric);
      if (rel > check.worst_relative || check.worst_index < 0) {
        check.worst_relative = rel;
        check.worst_index = k;
      }
      check.worst_absolute = std::max(check.worst_absolute, std::abs(a - numeric));
      ++check.checked;
    }
    report.max_relative = std::max(report.max_relative, check.worst_relative);
    report.blocks.push_back(std::move(check));
  }
  report.passed = report.max_relative < options.tolerance || std::isinf(options.tolerance);
  return report;
}

}  // namespace folkgen::gru
