#include "velo/features.hpp"

#include <algorithm>
#include <cmath>

namespace velo {

namespace {

constexpr std::array<double, kProgressFeatures> kProgressThresholds{
    0.03, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0, 1.1};

double clip(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

// clip(log(1e-8 + |10x|), -5, 5)
double clip_log(double x) { return clip(std::log(1e-8 + std::fabs(10.0 * x)), -5.0, 5.0); }

void mean_var(const DenseTensor& t, double& m, double& v) {
  m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) m += t[i];
  m /= static_cast<double>(t.size());
  v = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - m;
    v += d * d;
  }
  v /= static_cast<double>(t.size());
}

}  // namespace

std::array<double, kProgressFeatures> progress_features(std::uint64_t t, std::uint64_t T) {
  std::array<double, kProgressFeatures> out{};
  const double frac = static_cast<double>(t) / static_cast<double>(T);
  for (int i = 0; i < kProgressFeatures; ++i)
    out[i] = std::tanh(10.0 * (frac - kProgressThresholds[i]));
  return out;
}

std::vector<double> loss_features(const LossAccumulators& acc) {
  std::vector<double> out(kLossFeatures, 0.0);
  if (acc.poisoned) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  if (!acc.initialized) return out;
  std::size_t k = 0;
  for (int i = 0; i < kLossTimescales; ++i) {
    for (int j = i + 1; j < kLossTimescales; ++j) {
      const double num = acc.ema[i] - acc.ema[j];
      const double den = acc.ema[j] - acc.running_min[j] + 1e-8 * std::fabs(acc.ema[j]);
      out[k++] = den == 0.0 ? 0.0 : clip(num / den, -1.0, 1.0);
    }
  }
  return out;
}

std::vector<double> moment_features(const TensorAccumulators& acc) {
  std::vector<double> out;
  out.reserve(kMomentFeatures);
  for (int k = 0; k < 3; ++k) {
    double m, v;
    mean_var(acc.momentum[k], m, v);
    out.push_back(clip_log(v));
  }
  double m, v;
  mean_var(acc.second_moment, m, v);
  out.push_back(clip_log(m));
  out.push_back(clip_log(v));
  return out;
}

std::array<double, kRankFeatures> rank_onehot(std::size_t rank) {
  std::array<double, kRankFeatures> out{};
  out[std::min<std::size_t>(rank, kRankFeatures - 1)] = 1.0;
  return out;
}

std::vector<double> per_tensor_features(const OptimizerState& state, std::size_t tensor_idx) {
  std::vector<double> out;
  out.reserve(kPerTensorFeatures);
  const auto prog = progress_features(state.t, state.T);
  out.insert(out.end(), prog.begin(), prog.end());
  const auto lf = loss_features(state.loss_acc);
  out.insert(out.end(), lf.begin(), lf.end());
  const auto mf = moment_features(state.per_tensor[tensor_idx]);
  out.insert(out.end(), mf.begin(), mf.end());
  const auto rk = rank_onehot(state.per_tensor[tensor_idx].tensor_rank);
  out.insert(out.end(), rk.begin(), rk.end());
  return out;
}

DenseTensor per_param_features(const DenseTensor& params, const DenseTensor& grads,
                               const TensorAccumulators& acc) {
  const std::size_t n = params.size();
  if (grads.size() != n || acc.second_moment.size() != n)
    throw ShapeError("per_param_features: shape mismatch");
  DenseTensor feats{{n, static_cast<std::size_t>(kPerParamFeatures)}};
  double* out = feats.data();
  const double* g = grads.data();
  const double* p = params.data();
  const double* v = acc.second_moment.data();

  // Factored denominator needs the row-EMA mean once per timescale.
  std::array<double, 3> row_mean{};
  if (acc.factored) {
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (double r : acc.adafactor_rows[k]) s += r;
      row_mean[k] = s / static_cast<double>(acc.rows);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    double* row = out + i * kPerParamFeatures;
    const double rsqrt_v = 1.0 / (std::sqrt(v[i]) + 1e-8);
    row[0] = g[i];
    row[1] = p[i];
    for (int k = 0; k < 3; ++k) {
      const double m = acc.momentum[k][i];
      row[2 + k] = m;
      row[5 + k] = m * rsqrt_v;
      double denom_sq;
      if (acc.factored) {
        const std::size_t r = i / acc.cols, c = i % acc.cols;
        denom_sq = row_mean[k] > 0.0
                       ? acc.adafactor_rows[k][r] * acc.adafactor_cols[k][c] / row_mean[k]
                       : 0.0;
      } else {
        denom_sq = acc.adafactor_full[k][i];
      }
      row[8 + k] = denom_sq > 0.0 ? g[i] / std::sqrt(denom_sq) : 0.0;
    }
    row[11] = rsqrt_v;
  }

  // Per-column RMS normalization over the whole tensor.
  for (int c = 0; c < kPerParamFeatures; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = out[i * kPerParamFeatures + c];
      s += x * x;
    }
    const double rms = std::sqrt(s / static_cast<double>(n));
    if (rms > 1e-12) {
      const double inv = 1.0 / rms;
      for (std::size_t i = 0; i < n; ++i) out[i * kPerParamFeatures + c] *= inv;
    }
  }
  return feats;
}

}  // namespace velo
