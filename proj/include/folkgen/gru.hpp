#pragma once

// Deep gated-recurrent network with skip connections.
//
// Layer i receives y^i = [x, h^1[n], ..., h^{i-1}[n]] (the current step's
// outputs of every lower layer) and updates
//
//   z  = sigmoid(W_yz y + W_hz h[n-1] + b_z)
//   r  = sigmoid(W_yr y + W_hr h[n-1] + b_r)
//   h~ = tanh(W_yh y + r * (W_hh h[n-1]))
//   h  = z * h[n-1] + (1 - z) * h~
//
// The output layer sees [x, h^1[n], ..., h^L[n]] and applies a softmax.
// The candidate has no bias term. All computation is in double precision.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace folkgen::gru {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& message, std::size_t step)
      : std::runtime_error(message + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct NetworkDims {
  int input = 0;
  std::vector<int> hidden{128, 128, 128};
  int output = 0;

  int layer_input(std::size_t layer) const;
  int output_input() const;
  friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

struct LayerParams {
  Matrix w_yh, w_hh;
  Matrix w_yz, w_hz;
  Vector b_z;
  Matrix w_yr, w_hr;
  Vector b_r;
  Vector h0;
};

struct OutputParams {
  Matrix w_yo;
  Vector b_o;
};

/// Named view of one parameter block (a matrix or a vector).
template <class T>
struct BlockView {
  std::string name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

class NetworkParams {
 public:
  NetworkParams() = default;

  static NetworkParams zeros(const NetworkDims& dims);
  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases and h0 zero.
  static NetworkParams random(const NetworkDims& dims, std::uint64_t seed);

  const NetworkDims& dims() const { return dims_; }
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  OutputParams& output() { return output_; }
  const OutputParams& output() const { return output_; }

  /// Every trainable block in a fixed order ("layer1.w_yh", ..., "output.b_o").
  std::vector<BlockView<double>> blocks();
  std::vector<BlockView<const double>> blocks() const;

  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  explicit NetworkParams(NetworkDims dims);

  NetworkDims dims_;
  std::vector<LayerParams> layers_;
  OutputParams output_;
};

struct NetworkState {
  std::vector<Vector> h;
};

NetworkState initial_state(const NetworkParams& params);

struct LayerCache {
  Vector y;
  Vector h_prev;
  Vector z;
  Vector r;
  Vector a;  // W_hh h_prev
  Vector h_cand;
  Vector h;
};

/// Activations of one step, kept for backpropagation through time.
struct StepCache {
  std::vector<LayerCache> layers;
  Vector y_out;
  Vector logits;
  Vector probs;
};

using Tape = std::vector<StepCache>;

struct StepOutput {
  Vector logits;
  Vector probs;
};

/// Advances `state` by one input and returns the output distribution.
/// Fills `cache` when given. Throws NumericError on non-finite values.
StepOutput gru_step(const NetworkParams& params, NetworkState& state, const Vector& x,
                    StepCache* cache = nullptr, std::size_t step_index = 0);

struct ForwardResult {
  std::vector<Vector> probs;
  Tape tape;
};

ForwardResult forward_sequence(const NetworkParams& params, std::span<const Vector> inputs);

/// -(1/N) sum_n log softmax(logits[n])[target[n]], computed from the logits.
double tape_nll(const Tape& tape, std::span<const int> targets);

double sequence_nll(const NetworkParams& params, std::span<const Vector> inputs, std::span<const int> targets);

/// Gradient of the mean sequence NLL with respect to every parameter,
/// including the initial states h0.
NetworkParams backward_sequence(const NetworkParams& params, const Tape& tape, std::span<const int> targets);

/// Numerically stable softmax (max subtraction).
Vector softmax(const Vector& logits);

// --- gradient checking ----------------------------------------------------

struct GradientCheckOptions {
  std::size_t coords_per_block = 200;
  double epsilon = 1e-5;
  double tolerance = 1e-6;
  std::uint64_t seed = 1;
  int max_hidden = 32;
  /// Evaluate the perturbed losses in long double. The plain double loss
  /// carries rounding noise near 1e-11, which swamps small gradients.
  bool extended_reference = true;
};

struct BlockCheck {
  std::string name;
  std::size_t checked = 0;
  double worst_relative = 0.0;
  double worst_absolute = 0.0;
  Eigen::Index worst_index = -1;
};

struct GradientCheckReport {
  bool refused = false;
  bool passed = false;
  double max_relative = 0.0;
  std::vector<BlockCheck> blocks;
};

/// sequence_nll recomputed in long double from the same (double) parameters.
long double extended_sequence_nll(const NetworkParams& params, std::span<const Vector> inputs,
                                  std::span<const int> targets);

/// |a - n| / max(|a|, |n|); zero when both are zero.
double relative_error(double analytic, double numeric);

/// Compares the analytic gradient against central differences block by
/// block. Blocks with at most `coords_per_block` entries are checked
/// exhaustively. `analytic` overrides backward_sequence (used to verify that
/// the checker catches corrupted gradients). Networks with a hidden layer
/// wider than `max_hidden` are refused.
GradientCheckReport gradient_check(const NetworkParams& params, std::span<const Vector> inputs,
                                   std::span<const int> targets, const GradientCheckOptions& options = {},
                                   const NetworkParams* analytic = nullptr);

}  // namespace folkgen::gru
