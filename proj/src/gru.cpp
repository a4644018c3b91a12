#include "folkgen/gru.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace folkgen::gru {

int NetworkDims::layer_input(std::size_t layer) const {
  int width = input;
  for (std::size_t j = 0; j < layer; ++j) width += hidden.at(j);
  return width;
}

int NetworkDims::output_input() const { return layer_input(hidden.size()); }

NetworkParams::NetworkParams(NetworkDims dims) : dims_(std::move(dims)) {
  if (dims_.input <= 0 || dims_.output <= 0 || dims_.hidden.empty()) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  for (std::size_t i = 0; i < dims_.hidden.size(); ++i) {
    const int h = dims_.hidden[i];
    const int f = dims_.layer_input(i);
    if (h <= 0) throw std::invalid_argument("hidden sizes must be positive");
    LayerParams layer;
    layer.w_yh = Matrix::Zero(h, f);
    layer.w_hh = Matrix::Zero(h, h);
    layer.w_yz = Matrix::Zero(h, f);
    layer.w_hz = Matrix::Zero(h, h);
    layer.b_z = Vector::Zero(h);
    layer.w_yr = Matrix::Zero(h, f);
    layer.w_hr = Matrix::Zero(h, h);
    layer.b_r = Vector::Zero(h);
    layer.h0 = Vector::Zero(h);
    layers_.push_back(std::move(layer));
  }
  output_.w_yo = Matrix::Zero(dims_.output, dims_.output_input());
  output_.b_o = Vector::Zero(dims_.output);
}

NetworkParams NetworkParams::zeros(const NetworkDims& dims) { return NetworkParams(dims); }

NetworkParams NetworkParams::random(const NetworkDims& dims, std::uint64_t seed) {
  NetworkParams params(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m) {
    const double a = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
  };
  for (auto& layer : params.layers_) {
    fill(layer.w_yh);
    fill(layer.w_hh);
    fill(layer.w_yz);
    fill(layer.w_hz);
    fill(layer.w_yr);
    fill(layer.w_hr);
  }
  fill(params.output_.w_yo);
  return params;
}

namespace {

template <class T, class Params>
std::vector<BlockView<T>> collect_blocks(Params& params) {
  std::vector<BlockView<T>> out;
  auto add = [&out](std::string name, auto& m) {
    out.push_back(BlockView<T>{std::move(name), m.data(), m.rows(), m.cols()});
  };
  for (std::size_t i = 0; i < params.layers().size(); ++i) {
    auto& layer = params.layers()[i];
    const std::string prefix = "layer" + std::to_string(i + 1) + ".";
    add(prefix + "w_yh", layer.w_yh);
    add(prefix + "w_hh", layer.w_hh);
    add(prefix + "w_yz", layer.w_yz);
    add(prefix + "w_hz", layer.w_hz);
    add(prefix + "b_z", layer.b_z);
    add(prefix + "w_yr", layer.w_yr);
    add(prefix + "w_hr", layer.w_hr);
    add(prefix + "b_r", layer.b_r);
    add(prefix + "h0", layer.h0);
  }
  add("output.w_yo", params.output().w_yo);
  add("output.b_o", params.output().b_o);
  return out;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

std::vector<BlockView<double>> NetworkParams::blocks() { return collect_blocks<double>(*this); }

std::vector<BlockView<const double>> NetworkParams::blocks() const {
  return collect_blocks<const double>(*this);
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& block : blocks()) total += static_cast<std::size_t>(block.size());
  return total;
}

bool NetworkParams::all_finite() const {
  for (const auto& block : blocks()) {
    for (Eigen::Index k = 0; k < block.size(); ++k) {
      if (!std::isfinite(block.data[k])) return false;
    }
  }
  return true;
}

NetworkState initial_state(const NetworkParams& params) {
  NetworkState state;
  for (const auto& layer : params.layers()) state.h.push_back(layer.h0);
  return state;
}

Vector softmax(const Vector& logits) {
  const double max = logits.maxCoeff();
  Vector e = (logits.array() - max).exp().matrix();
  return e / e.sum();
}

StepOutput gru_step(const NetworkParams& params, NetworkState& state, const Vector& x, StepCache* cache,
                    std::size_t step_index) {
  const auto& dims = params.dims();
  if (x.size() != dims.input) throw std::invalid_argument("input width mismatch");
  if (!x.allFinite()) throw NumericError("non-finite input", step_index);
  const std::size_t depth = params.layers().size();
  if (cache != nullptr) cache->layers.resize(depth);

  // Feed-forward input grows as each layer's fresh output is appended.
  Vector y(dims.output_input());
  y.head(dims.input) = x;
  Eigen::Index filled = dims.input;

  for (std::size_t i = 0; i < depth; ++i) {
    const auto& p = params.layers()[i];
    const Eigen::Index width = dims.layer_input(i);
    const auto yi = y.head(width);
    const Vector& h_prev = state.h[i];

    Vector z = p.w_yz * yi + p.w_hz * h_prev + p.b_z;
    z = z.unaryExpr(&sigmoid);
    Vector r = p.w_yr * yi + p.w_hr * h_prev + p.b_r;
    r = r.unaryExpr(&sigmoid);
    Vector a = p.w_hh * h_prev;
    Vector h_cand = (p.w_yh * yi + r.cwiseProduct(a)).array().tanh().matrix();
    Vector h = z.cwiseProduct(h_prev) + (Vector::Ones(z.size()) - z).cwiseProduct(h_cand);

    if (!h.allFinite()) throw NumericError("non-finite hidden state in layer " + std::to_string(i + 1), step_index);
    y.segment(filled, h.size()) = h;
    filled += h.size();

    if (cache != nullptr) {
      auto& lc = cache->layers[i];
      lc.y = yi;
      lc.h_prev = h_prev;
      lc.z = std::move(z);
      lc.r = std::move(r);
      lc.a = std::move(a);
      lc.h_cand = std::move(h_cand);
      lc.h = h;
    }
    state.h[i] = std::move(h);
  }

  StepOutput out;
  out.logits = params.output().w_yo * y + params.output().b_o;
  if (!out.logits.allFinite()) throw NumericError("non-finite output", step_index);
  out.probs = softmax(out.logits);
  if (cache != nullptr) {
    cache->y_out = std::move(y);
    cache->logits = out.logits;
    cache->probs = out.probs;
  }
  return out;
}

ForwardResult forward_sequence(const NetworkParams& params, std::span<const Vector> inputs) {
  if (inputs.empty()) throw std::invalid_argument("forward_sequence needs at least one input");
  ForwardResult result;
  result.tape.resize(inputs.size());
  result.probs.reserve(inputs.size());
  NetworkState state = initial_state(params);
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    result.probs.push_back(gru_step(params, state, inputs[n], &result.tape[n], n).probs);
  }
  return result;
}

double tape_nll(const Tape& tape, std::span<const int> targets) {
  if (tape.size() != targets.size()) throw std::invalid_argument("tape and targets differ in length");
  if (tape.empty()) throw std::invalid_argument("empty sequence");
  double total = 0.0;
  for (std::size_t n = 0; n < tape.size(); ++n) {
    const auto& logits = tape[n].logits;
    if (targets[n] < 0 || targets[n] >= logits.size()) throw std::out_of_range("target index out of range");
    const double max = logits.maxCoeff();
    const double log_sum = max + std::log((logits.array() - max).exp().sum());
    total -= logits(targets[n]) - log_sum;
  }
  return total / static_cast<double>(tape.size());
}

double sequence_nll(const NetworkParams& params, std::span<const Vector> inputs, std::span<const int> targets) {
  if (inputs.size() != targets.size()) throw std::invalid_argument("inputs and targets differ in length");
  return tape_nll(forward_sequence(params, inputs).tape, targets);
}

NetworkParams backward_sequence(const NetworkParams& params, const Tape& tape, std::span<const int> targets) {
  if (tape.size() != targets.size()) throw std::invalid_argument("tape and targets differ in length");
  const auto& dims = params.dims();
  NetworkParams grad = NetworkParams::zeros(dims);
  const std::size_t depth = params.layers().size();
  const double scale = 1.0 / static_cast<double>(tape.size());

  std::vector<Eigen::Index> offsets(depth);
  for (std::size_t i = 0; i < depth; ++i) offsets[i] = dims.layer_input(i);

  std::vector<Vector> dh_next(depth);
  for (std::size_t i = 0; i < depth; ++i) dh_next[i] = Vector::Zero(dims.hidden[i]);
  std::vector<Vector> dh(depth);

  for (std::size_t n = tape.size(); n-- > 0;) {
    const auto& step = tape[n];
    if (targets[n] < 0 || targets[n] >= step.probs.size()) throw std::out_of_range("target index out of range");
    Vector dlogits = step.probs;
    dlogits(targets[n]) -= 1.0;
    dlogits *= scale;

    grad.output().w_yo.noalias() += dlogits * step.y_out.transpose();
    grad.output().b_o += dlogits;
    const Vector dy_out = params.output().w_yo.transpose() * dlogits;
    for (std::size_t i = 0; i < depth; ++i) dh[i] = dh_next[i] + dy_out.segment(offsets[i], dims.hidden[i]);

    for (std::size_t i = depth; i-- > 0;) {
      const auto& p = params.layers()[i];
      auto& g = grad.layers()[i];
      const auto& c = step.layers[i];

      const Vector dz = dh[i].cwiseProduct(c.h_prev - c.h_cand);
      const Vector dh_cand = dh[i].cwiseProduct(Vector::Ones(c.z.size()) - c.z);
      Vector dh_prev = dh[i].cwiseProduct(c.z);

      const Vector dpre_c = dh_cand.array() * (1.0 - c.h_cand.array().square());
      g.w_yh.noalias() += dpre_c * c.y.transpose();
      Vector dy = p.w_yh.transpose() * dpre_c;

      const Vector dr = dpre_c.cwiseProduct(c.a);
      const Vector da = dpre_c.cwiseProduct(c.r);
      g.w_hh.noalias() += da * c.h_prev.transpose();
      dh_prev.noalias() += p.w_hh.transpose() * da;

      const Vector dpre_z = dz.array() * c.z.array() * (1.0 - c.z.array());
      g.w_yz.noalias() += dpre_z * c.y.transpose();
      g.w_hz.noalias() += dpre_z * c.h_prev.transpose();
      g.b_z += dpre_z;
      dy.noalias() += p.w_yz.transpose() * dpre_z;
      dh_prev.noalias() += p.w_hz.transpose() * dpre_z;

      const Vector dpre_r = dr.array() * c.r.array() * (1.0 - c.r.array());
      g.w_yr.noalias() += dpre_r * c.y.transpose();
      g.w_hr.noalias() += dpre_r * c.h_prev.transpose();
      g.b_r += dpre_r;
      dy.noalias() += p.w_yr.transpose() * dpre_r;
      dh_prev.noalias() += p.w_hr.transpose() * dpre_r;

      for (std::size_t j = 0; j < i; ++j) dh[j] += dy.segment(offsets[j], dims.hidden[j]);
      dh_next[i] = std::move(dh_prev);
    }
  }
  for (std::size_t i = 0; i < depth; ++i) grad.layers()[i].h0 = dh_next[i];
  return grad;
}

}  // namespace folkgen::gru
