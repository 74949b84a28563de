#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "velo/accumulators.hpp"
#include "velo/tensor.hpp"

namespace velo {

inline constexpr int kProgressFeatures = 9;
inline constexpr int kLossFeatures = kLossTimescales * (kLossTimescales - 1) / 2;  // 45
inline constexpr int kMomentFeatures = 5;
inline constexpr int kRankFeatures = 5;
inline constexpr int kPerTensorFeatures =
    kProgressFeatures + kLossFeatures + kMomentFeatures + kRankFeatures;  // 64
inline constexpr int kPerParamFeatures = 12;

// tanh(10*(t/T - s)) at nine thresholds s. Saturates to ~+-1 away from the
// current training fraction, so the network sees a soft progress ruler.
std::array<double, kProgressFeatures> progress_features(std::uint64_t t, std::uint64_t T);

// Magnitude-invariant loss-trend features over ordered timescale pairs
// (i < j): clip((ema_i - ema_j) / (ema_j - min_j + 1e-8*|ema_j|), -1, 1),
// with 0/0 -> 0. Constant loss streams map to 0, steadily decreasing ones
// toward -1, diverging ones saturate at +1. Uninitialized accumulators give
// all zeros; a poisoned stream (non-finite loss seen) gives all +1.
std::vector<double> loss_features(const LossAccumulators& acc);

// {var(m) for the 3 momentum timescales, mean(v), var(v)} passed through
// clip(log(1e-8 + |10x|), -5, 5).
std::vector<double> moment_features(const TensorAccumulators& acc);

std::array<double, kRankFeatures> rank_onehot(std::size_t rank);

// Concatenated per-tensor vector: progress, loss, moment, rank one-hot.
std::vector<double> per_tensor_features(const OptimizerState& state, std::size_t tensor_idx);

// [n, 12] matrix of per-parameter columns:
//   0 gradient, 1 parameter, 2-4 momenta, 5-7 momentum/(sqrt(v)+1e-8),
//   8-10 Adafactor-normalized gradient per timescale, 11 1/(sqrt(v)+1e-8).
// Each column is then divided by its RMS over the tensor (columns with RMS
// below 1e-12 are left as-is, so identically zero columns stay zero).
DenseTensor per_param_features(const DenseTensor& params, const DenseTensor& grads,
                               const TensorAccumulators& acc);

}  // namespace velo
