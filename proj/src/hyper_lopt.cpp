#include "velo/hyper_lopt.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "velo/binio.hpp"

namespace velo {

std::size_t meta_param_count(int H, int B, int F) {
  MetaParams p;
  p.H = H;
  p.B = B;
  p.F = F;
  return p.expected_count();
}

MetaParams init_meta_params(RngKey key, int H, int B, int F) {
  if (H < 1 || B < 1 || F < 1) throw std::range_error("init_meta_params: H, B, F must be >= 1");
  MetaParams th;
  th.H = H;
  th.B = B;
  th.F = F;
  th.flat.assign(th.expected_count(), 0.0);
  const int D = MetaParams::D;

  RngStream lstm(key.fold_str("lstm"));
  RngStream mix(key.fold_str("mix"));
  RngStream bank(key.fold_str("bank"));

  auto fill_tn = [](RngStream& rs, double* p, std::size_t n, double scale) {
    for (std::size_t i = 0; i < n; ++i) p[i] = rs.next_trunc_normal() * scale;
  };

  fill_tn(lstm, th.flat.data() + th.off_lstm_wx(), 4ul * H * H, 1.0 / std::sqrt(double(H)));
  fill_tn(lstm, th.flat.data() + th.off_lstm_wh(), 4ul * H * H, 1.0 / std::sqrt(double(H)));
  // gate order i, f, g, o; forget bias starts at +1
  for (int i = 0; i < H; ++i) th.flat[th.off_lstm_b() + H + i] = 1.0;

  fill_tn(mix, th.flat.data() + th.off_f0_w(), std::size_t(H) * D, 1.0 / std::sqrt(double(D)));
  fill_tn(mix, th.flat.data() + th.off_f1_w(), std::size_t(H) * H, 1.0 / std::sqrt(double(H)));
  fill_tn(mix, th.flat.data() + th.off_f2_w(), std::size_t(H) * D, 1.0 / std::sqrt(double(D)));

  // Heads stay zero so the untrained rule ignores the LSTM; uniform hyper
  // bias makes the generated MLP the plain bank average.
  for (int b = 0; b < B; ++b) th.flat[th.off_hh_b() + b] = 1.0 / B;

  // Bank entries are scaled down so the 100x-amplified uniform average of B
  // of them lands near a conventional 1/sqrt(fan_in) init.
  const double s = 0.01;
  for (int b = 0; b < B; ++b) {
    double* e = th.flat.data() + th.off_bank(b);
    std::size_t o = 0;
    fill_tn(bank, e + o, std::size_t(kMlpHidden) * F, s / std::sqrt(double(F)));
    o += std::size_t(kMlpHidden) * F;
    fill_tn(bank, e + o, kMlpHidden, s);
    o += kMlpHidden;
    fill_tn(bank, e + o, kMlpHidden * kMlpHidden, s / 2.0);
    o += kMlpHidden * kMlpHidden;
    fill_tn(bank, e + o, kMlpHidden, s);
    o += kMlpHidden;
    fill_tn(bank, e + o, kMlpOutputs * kMlpHidden, s / 2.0);
    o += kMlpOutputs * kMlpHidden;
    fill_tn(bank, e + o, kMlpOutputs, s);
  }
  return th;
}

namespace {

// out[o] = b[o] + sum_i W[o,i] * x[i], W row-major [out_n, in_n]
inline void linear(const double* W, const double* b, const double* x, int in_n, int out_n,
                   double* out) {
  for (int o = 0; o < out_n; ++o) {
    double acc = b[o];
    const double* row = W + std::size_t(o) * in_n;
    for (int i = 0; i < in_n; ++i) acc += row[i] * x[i];
    out[o] = acc;
  }
}

}  // namespace

DenseTensor mix_tensors(const DenseTensor& features, const MetaParams& th) {
  if (features.rank() != 2 || features.dim(1) != static_cast<std::size_t>(MetaParams::D))
    throw ShapeError("mix_tensors: want [num_tensors, " + std::to_string(MetaParams::D) +
                     "], got " + features.shape_str());
  const std::size_t K = features.dim(0);
  const int H = th.H, D = MetaParams::D;
  const double* f = th.flat.data();

  DenseTensor out{{K, static_cast<std::size_t>(H)}};
  std::vector<double> pooled(H, -std::numeric_limits<double>::infinity());
  std::vector<double> t2(H), t1(H);
  for (std::size_t k = 0; k < K; ++k) {
    const double* x = features.data() + k * D;
    linear(f + th.off_f2_w(), f + th.off_f2_b(), x, D, H, t2.data());
    for (int h = 0; h < H; ++h) t2[h] = t2[h] > 0.0 ? t2[h] : 0.0;
    linear(f + th.off_f1_w(), f + th.off_f1_b(), t2.data(), H, H, t1.data());
    for (int h = 0; h < H; ++h) {
      const double v = t1[h] > 0.0 ? t1[h] : 0.0;
      if (v > pooled[h]) pooled[h] = v;
    }
    linear(f + th.off_f0_w(), f + th.off_f0_b(), x, D, H, out.data() + k * H);
  }
  for (std::size_t k = 0; k < K; ++k) {
    double* row = out.data() + k * H;
    for (int h = 0; h < H; ++h) row[h] += pooled[h];
  }
  return out;
}

TensorStepOut tensor_step(const double* mixed_row, std::vector<double>& h,
                          std::vector<double>& c, const MetaParams& th) {
  const int H = th.H;
  if (h.empty()) h.assign(H, 0.0);
  if (c.empty()) c.assign(H, 0.0);
  if (h.size() != static_cast<std::size_t>(H) || c.size() != static_cast<std::size_t>(H))
    throw ShapeError("tensor_step: carry size mismatch");
  const double* f = th.flat.data();

  std::vector<double> z(4ul * H);
  linear(f + th.off_lstm_wx(), f + th.off_lstm_b(), mixed_row, H, 4 * H, z.data());
  // add W_h * h (no second bias)
  const double* Wh = f + th.off_lstm_wh();
  for (int o = 0; o < 4 * H; ++o) {
    double acc = 0.0;
    const double* row = Wh + std::size_t(o) * H;
    for (int i = 0; i < H; ++i) acc += row[i] * h[i];
    z[o] += acc;
  }
  for (int i = 0; i < H; ++i) {
    const double ig = sigmoid_scalar(z[i]);
    const double fg = sigmoid_scalar(z[H + i]);
    const double gg = std::tanh(z[2 * H + i]);
    const double og = sigmoid_scalar(z[3 * H + i]);
    c[i] = fg * c[i] + ig * gg;
    h[i] = og * std::tanh(c[i]);
  }

  TensorStepOut out;
  out.c_hyper.resize(th.B);
  linear(f + th.off_hlr_w(), f + th.off_hlr_b(), h.data(), H, 1, &out.c_lr);
  linear(f + th.off_hh_w(), f + th.off_hh_b(), h.data(), H, th.B, out.c_hyper.data());
  return out;
}

std::vector<double> generate_mlp(const std::vector<double>& c_hyper, const MetaParams& th) {
  if (c_hyper.size() != static_cast<std::size_t>(th.B))
    throw ShapeError("generate_mlp: c_hyper size != B");
  const std::size_t n = mlp_entry_size(th.F);
  std::vector<double> w(n, 0.0);
  for (int b = 0; b < th.B; ++b) {
    const double cb = c_hyper[b];
    if (cb == 0.0) continue;
    const double* e = th.flat.data() + th.off_bank(b);
    for (std::size_t i = 0; i < n; ++i) w[i] += cb * e[i];
  }
  for (std::size_t i = 0; i < n; ++i) w[i] *= 100.0;
  return w;
}

void eval_generated_mlp(const std::vector<double>& w, int F, const double* x, double& d,
                        double& m) {
  const double* W1 = w.data();
  const double* b1 = W1 + std::size_t(kMlpHidden) * F;
  const double* W2 = b1 + kMlpHidden;
  const double* b2 = W2 + kMlpHidden * kMlpHidden;
  const double* W3 = b2 + kMlpHidden;
  const double* b3 = W3 + kMlpOutputs * kMlpHidden;

  double h1[kMlpHidden], h2[kMlpHidden];
  for (int o = 0; o < kMlpHidden; ++o) {
    double acc = b1[o];
    const double* row = W1 + std::size_t(o) * F;
    for (int i = 0; i < F; ++i) acc += row[i] * x[i];
    h1[o] = acc > 0.0 ? acc : 0.0;
  }
  for (int o = 0; o < kMlpHidden; ++o) {
    double acc = b2[o];
    const double* row = W2 + o * kMlpHidden;
    for (int i = 0; i < kMlpHidden; ++i) acc += row[i] * h1[i];
    h2[o] = acc > 0.0 ? acc : 0.0;
  }
  d = b3[0];
  m = b3[1];
  for (int i = 0; i < kMlpHidden; ++i) {
    d += W3[i] * h2[i];
    m += W3[kMlpHidden + i] * h2[i];
  }
}

void apply_update(const DenseTensor& params, const DenseTensor& feats, double c_lr,
                  const std::vector<double>& w, int F, DenseTensor& delta_out,
                  const std::string& tensor_label, UpdateScales scales) {
  const std::size_t n = params.size();
  if (feats.rank() != 2 || feats.dim(0) != n || feats.dim(1) != static_cast<std::size_t>(F) ||
      delta_out.size() != n)
    throw ShapeError("apply_update: shape mismatch for tensor " + tensor_label);
  const double norm = l2_norm(params);
  const double* fx = feats.data();
  double* out = delta_out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = fx + i * F;
    for (int j = 0; j < F; ++j)
      if (!std::isfinite(row[j]))
        throw std::runtime_error("apply_update: non-finite feature in tensor " + tensor_label);
    double d, m;
    eval_generated_mlp(w, F, row, d, m);
    out[i] = scales.step * d * std::exp(scales.log_lr * (m + c_lr)) * norm;
  }
}

UpdateOutput VeloOptimizer::step(std::vector<DenseTensor>& params,
                                 const std::vector<DenseTensor>& grads, double loss,
                                 OptimizerState& state) const {
  const std::size_t K = params.size();
  if (grads.size() != K || state.per_tensor.size() != K)
    throw ShapeError("velo step: tensor count mismatch");
  update_accumulators(state, grads, loss);

  DenseTensor tensor_feats{{K, static_cast<std::size_t>(kPerTensorFeatures)}};
  for (std::size_t k = 0; k < K; ++k) {
    const auto row = per_tensor_features(state, k);
    std::memcpy(tensor_feats.data() + k * kPerTensorFeatures, row.data(),
                kPerTensorFeatures * sizeof(double));
  }
  const DenseTensor mixed = mix_tensors(tensor_feats, *theta_);

  UpdateOutput out;
  out.delta.reserve(K);
  out.step_size_log.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto ts = tensor_step(mixed.data() + k * theta_->H, state.lstm_h[k], state.lstm_c[k],
                                *theta_);
    const auto w = generate_mlp(ts.c_hyper, *theta_);
    const DenseTensor feats = per_param_features(params[k], grads[k], state.per_tensor[k]);
    DenseTensor delta{params[k].shape()};
    apply_update(params[k], feats, ts.c_lr, w, theta_->F, delta, "tensor#" + std::to_string(k),
                 scales_);
    add_inplace(params[k], delta, -1.0);
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) mean_abs += std::fabs(delta[i]);
    mean_abs /= static_cast<double>(delta.size());
    out.step_size_log.push_back(mean_abs);
    out.delta.push_back(std::move(delta));
  }
  return out;
}

GuardedVelo::GuardedVelo(const MetaParams& theta, std::uint64_t T_requested, double weight_decay,
                         std::uint64_t max_T, UpdateScales scales)
    : opt_(theta, scales), wd_(weight_decay) {
  if (T_requested < 1) throw std::range_error("GuardedVelo: T_requested < 1");
  k_ = T_requested > max_T ? (T_requested + max_T - 1) / max_T : 1;
  declared_T_ = (T_requested + k_ - 1) / k_;
}

bool GuardedVelo::submit(std::vector<DenseTensor>& params, const std::vector<DenseTensor>& grads,
                         double loss, OptimizerState& state) {
  if (k_ == 1 && wd_ == 0.0) {
    opt_.step(params, grads, loss, state);
    return true;
  }
  if (grad_buf_.empty()) {
    grad_buf_ = grads;
    loss_buf_ = loss;
  } else {
    if (grad_buf_.size() != grads.size()) throw ShapeError("GuardedVelo: tensor count changed");
    for (std::size_t i = 0; i < grads.size(); ++i) add_inplace(grad_buf_[i], grads[i]);
    loss_buf_ += loss;
  }
  if (++buffered_ < k_) return false;

  const double inv = 1.0 / static_cast<double>(k_);
  for (auto& g : grad_buf_) scale_inplace(g, inv);
  if (wd_ != 0.0)
    for (std::size_t i = 0; i < grad_buf_.size(); ++i) add_inplace(grad_buf_[i], params[i], wd_);
  opt_.step(params, grad_buf_, loss_buf_ * inv, state);
  grad_buf_.clear();
  loss_buf_ = 0.0;
  buffered_ = 0;
  return true;
}

namespace {
constexpr std::uint32_t kThetaMagic = 0x564c4f54;  // "VLOT"
constexpr std::uint32_t kThetaVersion = 1;
constexpr std::uint8_t kLstmVariantStandard = 0;
}  // namespace

std::vector<std::uint8_t> theta_to_bytes(const MetaParams& th) {
  std::vector<std::uint8_t> b;
  b.reserve(33 + 8 * th.flat.size());
  buf_u32(b, kThetaMagic);
  buf_u32(b, kThetaVersion);
  buf_u32(b, static_cast<std::uint32_t>(th.H));
  buf_u32(b, static_cast<std::uint32_t>(th.B));
  buf_u32(b, static_cast<std::uint32_t>(th.F));
  buf_u32(b, static_cast<std::uint32_t>(MetaParams::D));
  buf_u8(b, kLstmVariantStandard);
  buf_u64(b, th.flat.size());
  for (double v : th.flat) buf_f64(b, v);
  return b;
}

MetaParams theta_from_bytes(const std::uint8_t* data, std::size_t len) {
  BufReader r(data, len);
  if (r.u32() != kThetaMagic) throw IoError("theta blob: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kThetaVersion)
    throw IoError("theta blob: unsupported version " + std::to_string(version));
  MetaParams th;
  th.H = static_cast<int>(r.u32());
  th.B = static_cast<int>(r.u32());
  th.F = static_cast<int>(r.u32());
  const std::uint32_t d = r.u32();
  if (d != MetaParams::D)
    throw IoError("theta blob: per-tensor feature width " + std::to_string(d) +
                  " != " + std::to_string(MetaParams::D));
  const std::uint8_t variant = r.u8();
  if (variant != kLstmVariantStandard)
    throw IoError("theta blob: unknown recurrent-cell variant tag");
  const std::uint64_t n = r.u64();
  if (th.H < 1 || th.B < 1 || th.F < 1 || n != th.expected_count())
    throw IoError("theta blob: inconsistent dimensions");
  th.flat.resize(n);
  for (auto& v : th.flat) v = r.f64();
  return th;
}

void save_theta(const MetaParams& th, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_theta: cannot open " + path);
  const auto bytes = theta_to_bytes(th);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("save_theta: write failed for " + path);
}

MetaParams load_theta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_theta: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return theta_from_bytes(bytes.data(), bytes.size());
}

}  // namespace velo
