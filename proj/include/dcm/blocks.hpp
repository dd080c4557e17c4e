#pragma once

#include <torch/torch.h>

// Building blocks of the dehazing generator. Every block preserves (B, C, H, W).

namespace dcm::nn {

struct BlockConfig {
  int64_t channels = 64;
  int64_t rdb_growth = 32;
  int64_t rdb_layers = 4;
  bool use_gate_activation = true;

  void validate() const;
};

/// Same-padded convolution with replicate borders.
torch::nn::Conv2dOptions same_conv(int64_t in, int64_t out, int64_t kernel, int64_t groups = 1);

/// Dual depthwise separable convolution module:
///   gate = pw_out(dw7(dw5(pw_in(x))))   (optionally passed through a sigmoid)
///   y    = gate * x
class DDSCMImpl : public torch::nn::Module {
 public:
  DDSCMImpl(int64_t channels, bool use_gate_activation);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d pw_in{nullptr}, dw5{nullptr}, dw7{nullptr}, pw_out{nullptr};

 private:
  int64_t channels_;
  bool gate_;
};
TORCH_MODULE(DDSCM);

/// Residual dense block: each 3x3 conv sees the concatenation of the input and all earlier
/// layer outputs, a 1x1 local fusion maps back to `channels`, and the input is added.
class RDBImpl : public torch::nn::Module {
 public:
  RDBImpl(int64_t channels, int64_t growth, int64_t layers);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList dense{nullptr};
  torch::nn::Conv2d fusion{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(RDB);

/// Dense-flow residual enhancer: refine(RDB(RDB(x))) - x.
class DFREImpl : public torch::nn::Module {
 public:
  explicit DFREImpl(const BlockConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  RDB first{nullptr}, second{nullptr};
  torch::nn::Conv2d refine{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(DFRE);

/// Channel-attention fusion of the dehazing and contour feature streams.
/// cat -> GAP -> 1x1 -> ReLU -> 1x1 -> sigmoid weights -> rescale -> 1x1 projection.
class FFMImpl : public torch::nn::Module {
 public:
  FFMImpl(int64_t channels, int64_t reduction = 4);
  torch::Tensor forward(const torch::Tensor& dehaze_feat, const torch::Tensor& contour_feat);

  torch::nn::Conv2d squeeze{nullptr}, excite{nullptr}, project{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(FFM);

/// Residual stage of the generator trunk; with DDSCM enabled the residual branch is gated:
///   y = x + ddscm(body(x)), otherwise y = x + body(x).
class ResidualStageImpl : public torch::nn::Module {
 public:
  ResidualStageImpl(int64_t channels, bool with_ddscm, bool use_gate_activation);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential body{nullptr};
  DDSCM ddscm{nullptr};
};
TORCH_MODULE(ResidualStage);

/// Fills conv weights with N(0, std), conv biases with zero and norm affine params with identity.
void init_weights(torch::nn::Module& module, double std = 0.02);

}  // namespace dcm::nn
