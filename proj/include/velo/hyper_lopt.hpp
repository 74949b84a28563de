#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "velo/accumulators.hpp"
#include "velo/features.hpp"
#include "velo/rng.hpp"
#include "velo/tensor.hpp"

namespace velo {

// Learned update rule: a per-tensor LSTM consumes cross-tensor-mixed
// features and drives a hypernetwork head whose outputs (c_lr and bank
// weights c_hyper) assemble a tiny per-parameter MLP; that MLP maps each
// parameter's feature row to (d, m), and the parameter moves by
//   delta = 0.001 * d * exp(0.001*(m + c_lr)) * ||p||_2   (whole-tensor norm)
// applied as p <- p - delta.

// Width of the per-parameter MLP's two hidden layers.
inline constexpr int kMlpHidden = 4;
inline constexpr int kMlpOutputs = 2;  // (d, m)

// Flat size of one bank entry (one full per-parameter MLP) for F inputs.
constexpr std::size_t mlp_entry_size(int F) {
  return static_cast<std::size_t>(kMlpHidden) * F + kMlpHidden          // W1, b1
         + kMlpHidden * kMlpHidden + kMlpHidden                         // W2, b2
         + kMlpOutputs * kMlpHidden + kMlpOutputs;                      // W3, b3
}

// All learnable parameters, stored as one flat vector so evolution-strategy
// perturbation, checkpointing, and the wire format share a layout:
//   lstm W_x [4H,H] | lstm W_h [4H,H] | lstm b [4H]
//   | f0 W [H,D] | f0 b [H] | f1 W [H,H] | f1 b [H] | f2 W [H,D] | f2 b [H]
//   | head_lr W [H] | head_lr b | head_hyper W [B,H] | head_hyper b [B]
//   | bank[0..B) each mlp_entry_size(F)
// Gate order inside the 4H blocks is input, forget, cell, output.
struct MetaParams {
  int H = 64;
  int B = 8;
  int F = kPerParamFeatures;
  static constexpr int D = kPerTensorFeatures;
  std::vector<double> flat;

  std::size_t count() const { return flat.size(); }

  // Offsets into flat (computed from H, B, F).
  std::size_t off_lstm_wx() const { return 0; }
  std::size_t off_lstm_wh() const { return off_lstm_wx() + 4ul * H * H; }
  std::size_t off_lstm_b() const { return off_lstm_wh() + 4ul * H * H; }
  std::size_t off_f0_w() const { return off_lstm_b() + 4ul * H; }
  std::size_t off_f0_b() const { return off_f0_w() + static_cast<std::size_t>(H) * D; }
  std::size_t off_f1_w() const { return off_f0_b() + H; }
  std::size_t off_f1_b() const { return off_f1_w() + static_cast<std::size_t>(H) * H; }
  std::size_t off_f2_w() const { return off_f1_b() + H; }
  std::size_t off_f2_b() const { return off_f2_w() + static_cast<std::size_t>(H) * D; }
  std::size_t off_hlr_w() const { return off_f2_b() + H; }
  std::size_t off_hlr_b() const { return off_hlr_w() + H; }
  std::size_t off_hh_w() const { return off_hlr_b() + 1; }
  std::size_t off_hh_b() const { return off_hh_w() + static_cast<std::size_t>(B) * H; }
  std::size_t off_bank(int b) const { return off_hh_b() + B + b * mlp_entry_size(F); }
  std::size_t expected_count() const { return off_bank(B); }
};

std::size_t meta_param_count(int H, int B, int F);

// Random init: truncated-normal/sqrt(fan_in) LSTM and mixing layers, +1
// forget-gate bias, zero head weights (head_hyper bias 1/B so the initial
// MLP is the plain bank average), bank entries scaled small so the
// 100x-amplified average starts near a conventional init.
MetaParams init_meta_params(RngKey key, int H = 64, int B = 8, int F = kPerParamFeatures);

// Cross-tensor feature mixing: out = F0(x) + max_over_tensors(relu(F1(relu(F2(x))))).
// x is [num_tensors, D]; result is [num_tensors, H].
DenseTensor mix_tensors(const DenseTensor& features, const MetaParams& theta);

struct TensorStepOut {
  double c_lr = 0.0;
  std::vector<double> c_hyper;
};

// One LSTM step for one tensor (carry vectors h, c of size H, updated in
// place; empty vectors are treated as zero carry) followed by the two heads.
TensorStepOut tensor_step(const double* mixed_row, std::vector<double>& h,
                          std::vector<double>& c, const MetaParams& theta);

// weights = 100 * sum_b c_hyper[b] * bank[b]; no normalization.
std::vector<double> generate_mlp(const std::vector<double>& c_hyper, const MetaParams& theta);

// Evaluate the generated per-parameter MLP on one feature row.
void eval_generated_mlp(const std::vector<double>& w, int F, const double* feat_row,
                        double& d, double& m);

struct UpdateOutput {
  std::vector<DenseTensor> delta;       // subtracted from params by the caller
  std::vector<double> step_size_log;    // mean |delta| per tensor
};

// Scaling knobs for the update formula; both default to the reference 0.001.
struct UpdateScales {
  double step = 0.001;    // multiplies d * ||p||
  double log_lr = 0.001;  // multiplies (m + c_lr) in the exponent
};

// Per-tensor update assembly. Throws (naming the tensor) if a feature is
// non-finite. delta_out must already have the parameter tensor's shape.
void apply_update(const DenseTensor& params, const DenseTensor& feats, double c_lr,
                  const std::vector<double>& mlp_weights, int F, DenseTensor& delta_out,
                  const std::string& tensor_label, UpdateScales scales = {});

class VeloOptimizer {
 public:
  explicit VeloOptimizer(const MetaParams& theta, UpdateScales scales = {})
      : theta_(&theta), scales_(scales) {}

  // One full optimizer step: accumulator update, featurization, mixing,
  // per-tensor LSTM + hypernetwork, per-parameter MLP, parameter update.
  // params and state are mutated; the returned deltas are what was
  // subtracted.
  UpdateOutput step(std::vector<DenseTensor>& params, const std::vector<DenseTensor>& grads,
                    double loss, OptimizerState& state) const;

  const MetaParams& theta() const { return *theta_; }
  UpdateScales scales() const { return scales_; }

 private:
  const MetaParams* theta_;
  UpdateScales scales_;
};

// Long-horizon guard rails: above max_T requested steps, gradients are
// accumulated k = ceil(T_requested / max_T) at a time (mean of gradients and
// losses per applied step) and the declared horizon shrinks to
// ceil(T_requested / k). Optional decoupled L2: wd * p is added to each
// gradient before featurization.
class GuardedVelo {
 public:
  GuardedVelo(const MetaParams& theta, std::uint64_t T_requested, double weight_decay = 0.0,
              std::uint64_t max_T = 150000, UpdateScales scales = {});

  std::uint64_t accum_factor() const { return k_; }
  std::uint64_t declared_T() const { return declared_T_; }
  double weight_decay() const { return wd_; }

  // Feed one microbatch gradient. Applies an optimizer step once k gradients
  // are buffered; returns true when a step was applied.
  bool submit(std::vector<DenseTensor>& params, const std::vector<DenseTensor>& grads,
              double loss, OptimizerState& state);

 private:
  VeloOptimizer opt_;
  std::uint64_t k_ = 1;
  std::uint64_t declared_T_ = 1;
  double wd_ = 0.0;
  std::vector<DenseTensor> grad_buf_;
  double loss_buf_ = 0.0;
  std::uint64_t buffered_ = 0;
};

// Versioned binary checkpoint; round-trips bit-exactly. The byte layout is
// shared with the wire protocol's parameter transfer.
void save_theta(const MetaParams& theta, const std::string& path);
MetaParams load_theta(const std::string& path);
std::vector<std::uint8_t> theta_to_bytes(const MetaParams& theta);
MetaParams theta_from_bytes(const std::uint8_t* data, std::size_t len);

}  // namespace velo
