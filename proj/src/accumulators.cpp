#include "velo/accumulators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "velo/binio.hpp"

namespace velo {

std::array<double, kLossTimescales> loss_decays(std::uint64_t num_steps,
                                                TimescaleSpacing spacing) {
  if (num_steps < 1) throw std::range_error("loss_decays: num_steps < 1");
  // x values span [1, log(num_steps)]; tiny horizons get a degenerate upper
  // bound nudged above 1 so the decays stay strictly increasing.
  const double hi = std::max(std::log(static_cast<double>(num_steps)), 1.0 + 1e-6);
  std::array<double, kLossTimescales> out{};
  for (int i = 0; i < kLossTimescales; ++i) {
    const double f = static_cast<double>(i) / (kLossTimescales - 1);
    const double x = spacing == TimescaleSpacing::kLog ? std::exp(f * std::log(hi))
                                                       : 1.0 + f * (hi - 1.0);
    out[i] = std::exp(-1.0 / x);
  }
  return out;
}

namespace {

TensorAccumulators make_accumulators(const std::vector<std::size_t>& shape) {
  TensorAccumulators acc;
  acc.tensor_rank = shape.size();
  for (auto& m : acc.momentum) m = DenseTensor(shape);
  acc.second_moment = DenseTensor(shape);
  acc.factored = shape.size() >= 2;
  if (acc.factored) {
    acc.cols = shape.back();
    acc.rows = shape_numel(shape) / acc.cols;
    for (auto& r : acc.adafactor_rows) r.assign(acc.rows, 0.0);
    for (auto& c : acc.adafactor_cols) c.assign(acc.cols, 0.0);
  } else {
    for (auto& f : acc.adafactor_full) f = DenseTensor(shape);
  }
  return acc;
}

void update_tensor(TensorAccumulators& acc, const DenseTensor& g) {
  const std::size_t n = g.size();
  if (acc.second_moment.size() != n)
    throw ShapeError("update_accumulators: gradient shape mismatch");
  for (int k = 0; k < 3; ++k) {
    const double b = kAccumDecays[k];
    double* m = acc.momentum[k].data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < n; ++i) m[i] += (1.0 - b) * (pg[i] - m[i]);
  }
  {
    const double b = kSecondMomentDecay;
    double* v = acc.second_moment.data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < n; ++i) v[i] += (1.0 - b) * (pg[i] * pg[i] - v[i]);
  }
  if (acc.factored) {
    const std::size_t R = acc.rows, C = acc.cols;
    std::vector<double> row_mean(R, 0.0), col_mean(C, 0.0);
    const double* pg = g.data();
    for (std::size_t r = 0; r < R; ++r) {
      const double* row = pg + r * C;
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double sq = row[c] * row[c];
        s += sq;
        col_mean[c] += sq;
      }
      row_mean[r] = s / static_cast<double>(C);
    }
    for (std::size_t c = 0; c < C; ++c) col_mean[c] /= static_cast<double>(R);
    for (int k = 0; k < 3; ++k) {
      const double b = kAccumDecays[k];
      for (std::size_t r = 0; r < R; ++r)
        acc.adafactor_rows[k][r] += (1.0 - b) * (row_mean[r] - acc.adafactor_rows[k][r]);
      for (std::size_t c = 0; c < C; ++c)
        acc.adafactor_cols[k][c] += (1.0 - b) * (col_mean[c] - acc.adafactor_cols[k][c]);
    }
  } else {
    for (int k = 0; k < 3; ++k) {
      const double b = kAccumDecays[k];
      double* f = acc.adafactor_full[k].data();
      const double* pg = g.data();
      for (std::size_t i = 0; i < n; ++i) f[i] += (1.0 - b) * (pg[i] * pg[i] - f[i]);
    }
  }
}

}  // namespace

OptimizerState init_state(const std::vector<std::vector<std::size_t>>& param_shapes,
                          std::uint64_t T, TimescaleSpacing spacing) {
  if (T < 1) throw std::range_error("init_state: T < 1");
  OptimizerState s;
  s.T = T;
  s.per_tensor.reserve(param_shapes.size());
  for (const auto& shape : param_shapes) s.per_tensor.push_back(make_accumulators(shape));
  s.loss_acc.decay = loss_decays(T, spacing);
  s.lstm_h.resize(param_shapes.size());
  s.lstm_c.resize(param_shapes.size());
  return s;
}

void update_accumulators(OptimizerState& state, const std::vector<DenseTensor>& grads,
                         double loss) {
  if (grads.size() != state.per_tensor.size())
    throw ShapeError("update_accumulators: tensor count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) update_tensor(state.per_tensor[i], grads[i]);

  auto& la = state.loss_acc;
  if (!std::isfinite(loss)) {
    la.poisoned = true;
  } else if (!la.initialized) {
    la.ema.fill(loss);
    la.running_min.fill(loss);
    la.initialized = true;
  } else {
    for (int i = 0; i < kLossTimescales; ++i) {
      la.ema[i] += (1.0 - la.decay[i]) * (loss - la.ema[i]);
      la.running_min[i] = std::min(la.running_min[i], la.ema[i]);
    }
  }
  state.t += 1;
}

namespace {

constexpr std::uint32_t kStateMagic = 0x564f5054;  // "VOPT"
constexpr std::uint32_t kStateVersion = 1;

void put_tensor(std::ostream& os, const DenseTensor& t) {
  put_u64(os, t.rank());
  for (std::size_t d : t.shape()) put_u64(os, d);
  put_f64s(os, t.data(), t.size());
}

DenseTensor get_tensor(std::istream& is) {
  const std::uint64_t rank = get_u64(is);
  if (rank > 16) throw IoError("state snapshot: implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = get_u64(is);
  DenseTensor t{shape};
  get_f64s(is, t.data(), t.size());
  return t;
}

void put_dvec(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  put_f64s(os, v.data(), v.size());
}

std::vector<double> get_dvec(std::istream& is) {
  std::vector<double> v(get_u64(is));
  get_f64s(is, v.data(), v.size());
  return v;
}

}  // namespace

void save_state(const OptimizerState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_state: cannot open " + path);
  put_u32(os, kStateMagic);
  put_u32(os, kStateVersion);
  put_u64(os, state.t);
  put_u64(os, state.T);
  const auto& la = state.loss_acc;
  put_u8(os, la.initialized ? 1 : 0);
  put_u8(os, la.poisoned ? 1 : 0);
  put_f64s(os, la.ema.data(), la.ema.size());
  put_f64s(os, la.decay.data(), la.decay.size());
  put_f64s(os, la.running_min.data(), la.running_min.size());
  put_u64(os, state.per_tensor.size());
  for (const auto& acc : state.per_tensor) {
    put_u64(os, acc.tensor_rank);
    put_u8(os, acc.factored ? 1 : 0);
    put_u64(os, acc.rows);
    put_u64(os, acc.cols);
    for (const auto& m : acc.momentum) put_tensor(os, m);
    put_tensor(os, acc.second_moment);
    if (acc.factored) {
      for (const auto& r : acc.adafactor_rows) put_dvec(os, r);
      for (const auto& c : acc.adafactor_cols) put_dvec(os, c);
    } else {
      for (const auto& f : acc.adafactor_full) put_tensor(os, f);
    }
  }
  for (std::size_t i = 0; i < state.per_tensor.size(); ++i) {
    put_dvec(os, state.lstm_h[i]);
    put_dvec(os, state.lstm_c[i]);
  }
  if (!os) throw IoError("save_state: write failed for " + path);
}

OptimizerState load_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_state: cannot open " + path);
  if (get_u32(is) != kStateMagic) throw IoError("load_state: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kStateVersion)
    throw IoError("load_state: unsupported version " + std::to_string(version));
  OptimizerState s;
  s.t = get_u64(is);
  s.T = get_u64(is);
  s.loss_acc.initialized = get_u8(is) != 0;
  s.loss_acc.poisoned = get_u8(is) != 0;
  get_f64s(is, s.loss_acc.ema.data(), s.loss_acc.ema.size());
  get_f64s(is, s.loss_acc.decay.data(), s.loss_acc.decay.size());
  get_f64s(is, s.loss_acc.running_min.data(), s.loss_acc.running_min.size());
  const std::uint64_t n = get_u64(is);
  s.per_tensor.resize(n);
  for (auto& acc : s.per_tensor) {
    acc.tensor_rank = get_u64(is);
    acc.factored = get_u8(is) != 0;
    acc.rows = get_u64(is);
    acc.cols = get_u64(is);
    for (auto& m : acc.momentum) m = get_tensor(is);
    acc.second_moment = get_tensor(is);
    if (acc.factored) {
      for (auto& r : acc.adafactor_rows) r = get_dvec(is);
      for (auto& c : acc.adafactor_cols) c = get_dvec(is);
    } else {
      for (auto& f : acc.adafactor_full) f = get_tensor(is);
    }
  }
  s.lstm_h.resize(n);
  s.lstm_c.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    s.lstm_h[i] = get_dvec(is);
    s.lstm_c[i] = get_dvec(is);
  }
  return s;
}

}  // namespace velo
