#include "dcm/blocks.hpp"

#include <string>

#include "dcm/errors.hpp"

namespace dcm::nn {

namespace {

void check_channels(const torch::Tensor& x, int64_t expected, const char* block) {
  if (x.dim() != 4) throw ShapeError(std::string(block) + ": expected a [B, C, H, W] tensor");
  if (x.size(1) != expected) {
    throw ShapeError(std::string(block) + ": expected " + std::to_string(expected) +
                     " channels, got " + std::to_string(x.size(1)));
  }
}

}  // namespace

void BlockConfig::validate() const {
  if (channels < 1) throw ParameterError("block channels must be >= 1");
  if (rdb_growth < 1) throw ParameterError("rdb_growth must be >= 1");
  if (rdb_layers < 2) throw ParameterError("rdb_layers must be >= 2");
}

torch::nn::Conv2dOptions same_conv(int64_t in, int64_t out, int64_t kernel, int64_t groups) {
  return torch::nn::Conv2dOptions(in, out, kernel)
      .padding(kernel / 2)
      .padding_mode(torch::kReplicate)
      .groups(groups);
}

DDSCMImpl::DDSCMImpl(int64_t channels, bool use_gate_activation)
    : channels_(channels), gate_(use_gate_activation) {
  if (channels < 1) throw ParameterError("DDSCM channels must be >= 1");
  pw_in = register_module("pw_in", torch::nn::Conv2d(same_conv(channels, channels, 1)));
  dw5 = register_module("dw5", torch::nn::Conv2d(same_conv(channels, channels, 5, channels)));
  dw7 = register_module("dw7", torch::nn::Conv2d(same_conv(channels, channels, 7, channels)));
  pw_out = register_module("pw_out", torch::nn::Conv2d(same_conv(channels, channels, 1)));
}

torch::Tensor DDSCMImpl::forward(const torch::Tensor& x) {
  check_channels(x, channels_, "DDSCM");
  auto g = pw_out(dw7(dw5(pw_in(x))));
  if (gate_) g = torch::sigmoid(g);
  return g * x;
}

RDBImpl::RDBImpl(int64_t channels, int64_t growth, int64_t layers) : channels_(channels) {
  if (channels < 1 || growth < 1 || layers < 1) throw ParameterError("invalid RDB configuration");
  dense = register_module("dense", torch::nn::ModuleList());
  for (int64_t i = 0; i < layers; ++i) {
    dense->push_back(torch::nn::Conv2d(same_conv(channels + i * growth, growth, 3)));
  }
  fusion = register_module("fusion",
                           torch::nn::Conv2d(same_conv(channels + layers * growth, channels, 1)));
}

torch::Tensor RDBImpl::forward(const torch::Tensor& x) {
  check_channels(x, channels_, "RDB");
  std::vector<torch::Tensor> features{x};
  for (const auto& layer : *dense) {
    auto inp = features.size() == 1 ? x : torch::cat(features, 1);
    features.push_back(torch::relu(layer->as<torch::nn::Conv2d>()->forward(inp)));
  }
  return x + fusion(torch::cat(features, 1));
}

DFREImpl::DFREImpl(const BlockConfig& cfg) : channels_(cfg.channels) {
  cfg.validate();
  first = register_module("first", RDB(cfg.channels, cfg.rdb_growth, cfg.rdb_layers));
  second = register_module("second", RDB(cfg.channels, cfg.rdb_growth, cfg.rdb_layers));
  refine = register_module("refine", torch::nn::Conv2d(same_conv(cfg.channels, cfg.channels, 3)));
}

torch::Tensor DFREImpl::forward(const torch::Tensor& x) {
  check_channels(x, channels_, "DFRE");
  return refine(second(first(x))) - x;
}

FFMImpl::FFMImpl(int64_t channels, int64_t reduction) : channels_(channels) {
  if (channels < 1 || reduction < 1) throw ParameterError("invalid FFM configuration");
  const int64_t hidden = std::max<int64_t>(1, (2 * channels) / reduction);
  squeeze = register_module("squeeze", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * channels, hidden, 1)));
  excite = register_module("excite", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, 2 * channels, 1)));
  project = register_module("project", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * channels, channels, 1)));
}

torch::Tensor FFMImpl::forward(const torch::Tensor& dehaze_feat, const torch::Tensor& contour_feat) {
  check_channels(dehaze_feat, channels_, "FFM");
  if (contour_feat.sizes() != dehaze_feat.sizes()) {
    throw ShapeError("FFM: dehaze and contour features must share a shape");
  }
  auto joint = torch::cat({dehaze_feat, contour_feat}, 1);
  auto pooled = joint.mean({2, 3}, /*keepdim=*/true);
  auto weights = torch::sigmoid(excite(torch::relu(squeeze(pooled))));
  return project(joint * weights);
}

ResidualStageImpl::ResidualStageImpl(int64_t channels, bool with_ddscm, bool use_gate_activation) {
  body = register_module(
      "body", torch::nn::Sequential(
                  torch::nn::Conv2d(same_conv(channels, channels, 3)),
                  torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true)),
                  torch::nn::ReLU(),
                  torch::nn::Conv2d(same_conv(channels, channels, 3)),
                  torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true))));
  if (with_ddscm) ddscm = register_module("ddscm", DDSCM(channels, use_gate_activation));
}

torch::Tensor ResidualStageImpl::forward(const torch::Tensor& x) {
  auto r = body->forward(x);
  if (ddscm) r = ddscm(r);
  return x + r;
}

void init_weights(torch::nn::Module& module, double std) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, std);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* norm = m->as<torch::nn::InstanceNorm2d>()) {
      if (norm->weight.defined()) norm->weight.fill_(1.0);
      if (norm->bias.defined()) norm->bias.zero_();
    }
  }
}

}  // namespace dcm::nn
