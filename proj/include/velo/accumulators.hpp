#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "velo/tensor.hpp"

namespace velo {

// EMA timescales shared by momentum and the factored second-moment stats.
inline constexpr std::array<double, 3> kAccumDecays{0.9, 0.99, 0.999};
// Decay of the single (unfactored) second-moment EMA.
inline constexpr double kSecondMomentDecay = 0.999;
inline constexpr int kLossTimescales = 10;

// Per-parameter-tensor gradient statistics. All EMAs start at zero and use
// the rule a <- beta*a + (1-beta)*x, computed as a += (1-beta)*(x - a) so a
// constant input is an exact fixed point. No bias correction.
struct TensorAccumulators {
  std::array<DenseTensor, 3> momentum;  // EMA of g
  DenseTensor second_moment;            // EMA of g^2 at 0.999

  // Tensors of rank >= 2 keep factored row/column EMAs of g^2 over the
  // trailing two axes (leading axes flattened into rows); rank <= 1 keeps
  // full EMAs of g^2 instead, one per timescale.
  bool factored = false;
  std::size_t rows = 0, cols = 0;
  std::array<std::vector<double>, 3> adafactor_rows;
  std::array<std::vector<double>, 3> adafactor_cols;
  std::array<DenseTensor, 3> adafactor_full;

  std::size_t tensor_rank = 0;
};

enum class TimescaleSpacing { kLog, kLinear };

// Loss EMAs at 10 timescales. Decays are exp(-1/x) for 10 x values spaced
// (log by default) over [1, log(num_steps)]; each timescale also tracks the
// running minimum of its own EMA. The first observed loss initialises every
// EMA, so there is no transient from a zero start.
struct LossAccumulators {
  std::array<double, kLossTimescales> ema{};
  std::array<double, kLossTimescales> decay{};
  std::array<double, kLossTimescales> running_min{};
  bool initialized = false;
  // Set once a non-finite loss is observed; the feature layer turns this
  // into an unambiguous divergence signal.
  bool poisoned = false;
};

std::array<double, kLossTimescales> loss_decays(std::uint64_t num_steps,
                                                TimescaleSpacing spacing = TimescaleSpacing::kLog);

// Full cross-step state of one optimizer run: gradient/loss accumulators,
// the step counters, and the recurrent carry of the per-tensor network
// (owned here so continuation snapshots capture everything).
struct OptimizerState {
  std::vector<TensorAccumulators> per_tensor;
  LossAccumulators loss_acc;
  std::uint64_t t = 0;  // completed accumulator updates
  std::uint64_t T = 1;  // declared total training steps
  std::vector<std::vector<double>> lstm_h;  // one carry pair per tensor;
  std::vector<std::vector<double>> lstm_c;  // empty until the network runs
};

OptimizerState init_state(const std::vector<std::vector<std::size_t>>& param_shapes,
                          std::uint64_t T,
                          TimescaleSpacing spacing = TimescaleSpacing::kLog);

// One accumulator step: EMAs of g and g^2 (full and factored), loss EMAs and
// running minima, then t <- t+1. A non-finite loss sets the poisoned flag and
// leaves the loss EMAs untouched.
void update_accumulators(OptimizerState& state, const std::vector<DenseTensor>& grads,
                         double loss);

// Versioned binary snapshot (header + raw little-endian double blobs), used
// by the training-continuation experiments to hand state across runs.
void save_state(const OptimizerState& state, const std::string& path);
OptimizerState load_state(const std::string& path);

}  // namespace velo
