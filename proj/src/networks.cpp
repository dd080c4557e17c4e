#include "dcm/networks.hpp"

#include "dcm/errors.hpp"
#include "dcm/losses.hpp"

namespace dcm::nn {

namespace F = torch::nn::functional;

void to_json(nlohmann::json& j, const GeneratorToggles& t) {
  j = nlohmann::json{{"ddscm", t.ddscm}, {"dfre", t.dfre}, {"ffm", t.ffm}};
}

void from_json(const nlohmann::json& j, GeneratorToggles& t) {
  j.at("ddscm").get_to(t.ddscm);
  j.at("dfre").get_to(t.dfre);
  j.at("ffm").get_to(t.ffm);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels},
                     {"res_stages", c.res_stages},
                     {"rdb_growth", c.rdb_growth},
                     {"rdb_layers", c.rdb_layers},
                     {"use_gate_activation", c.use_gate_activation},
                     {"pad_to_multiple", c.pad_to_multiple},
                     {"global_residual", c.global_residual},
                     {"toggles", c.toggles}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  j.at("base_channels").get_to(c.base_channels);
  j.at("res_stages").get_to(c.res_stages);
  j.at("rdb_growth").get_to(c.rdb_growth);
  j.at("rdb_layers").get_to(c.rdb_layers);
  j.at("use_gate_activation").get_to(c.use_gate_activation);
  j.at("pad_to_multiple").get_to(c.pad_to_multiple);
  j.at("global_residual").get_to(c.global_residual);
  j.at("toggles").get_to(c.toggles);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  j.at("base_channels").get_to(c.base_channels);
}

void GeneratorConfig::validate() const {
  if (base_channels < 1) throw ParameterError("generator base_channels must be >= 1");
  if (res_stages < 0) throw ParameterError("generator res_stages must be >= 0");
  BlockConfig{4 * base_channels, rdb_growth, rdb_layers, use_gate_activation}.validate();
}

void DiscriminatorConfig::validate() const {
  if (base_channels < 1) throw ParameterError("discriminator base_channels must be >= 1");
}

torch::Tensor contour_features(const torch::Tensor& images) {
  auto gray = F::pad(loss::to_grayscale(images),
                     F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  auto [gx, gy] = loss::sobel_gradients(gray);
  auto mag = torch::sqrt(gx.square() + gy.square() + loss::kMagnitudeEpsilon);
  return torch::cat({gx, gy, mag}, 1);
}

namespace {

torch::nn::InstanceNorm2d instance_norm(int64_t channels) {
  return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true));
}

}  // namespace

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t c = cfg_.base_channels;
  const int64_t deep = 4 * c;

  encoder = register_module(
      "encoder",
      torch::nn::Sequential(
          torch::nn::Conv2d(same_conv(3, c, 7)), instance_norm(c), torch::nn::ReLU(),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2 * c, 3).stride(2).padding(1)
                                .padding_mode(torch::kReplicate)),
          instance_norm(2 * c), torch::nn::ReLU(),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, deep, 3).stride(2).padding(1)
                                .padding_mode(torch::kReplicate)),
          instance_norm(deep), torch::nn::ReLU()));

  trunk = register_module("trunk", torch::nn::Sequential());
  for (int64_t i = 0; i < cfg_.res_stages; ++i) {
    trunk->push_back(ResidualStage(deep, cfg_.toggles.ddscm, cfg_.use_gate_activation));
  }

  if (cfg_.toggles.dfre) {
    dfre = register_module(
        "dfre", DFRE(BlockConfig{deep, cfg_.rdb_growth, cfg_.rdb_layers, cfg_.use_gate_activation}));
  }
  if (cfg_.toggles.ffm) {
    contour_encoder = register_module(
        "contour_encoder",
        torch::nn::Sequential(torch::nn::AvgPool2d(torch::nn::AvgPool2dOptions(4)),
                              torch::nn::Conv2d(same_conv(3, deep, 3)), torch::nn::ReLU()));
    ffm = register_module("ffm", FFM(deep));
  }

  decoder = register_module("decoder", torch::nn::Sequential());
  for (auto [in, out] : {std::pair<int64_t, int64_t>{deep, 2 * c}, {2 * c, c}}) {
    decoder->push_back(torch::nn::Upsample(
        torch::nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    decoder->push_back(torch::nn::Conv2d(same_conv(in, out, 3)));
    decoder->push_back(instance_norm(out));
    decoder->push_back(torch::nn::ReLU());
  }
  decoder->push_back(torch::nn::Conv2d(same_conv(c, 3, 7)));
}

torch::nn::Conv2d GeneratorImpl::output_layer() const {
  return torch::nn::Conv2d(std::dynamic_pointer_cast<torch::nn::Conv2dImpl>(decoder->ptr(decoder->size() - 1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("generator expects [B, 3, H, W]");
  const int64_t h = images.size(2);
  const int64_t w = images.size(3);
  if (h % 4 == 0 && w % 4 == 0) return forward_aligned(images);
  if (!cfg_.pad_to_multiple) {
    throw ShapeError("generator input " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by 4");
  }
  const int64_t ph = (4 - h % 4) % 4;
  const int64_t pw = (4 - w % 4) % 4;
  auto padded = F::pad(images, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  return forward_aligned(padded).narrow(2, 0, h).narrow(3, 0, w);
}

torch::Tensor GeneratorImpl::forward_aligned(const torch::Tensor& images) {
  auto x = images * 2.0 - 1.0;
  auto feat = trunk->forward(encoder->forward(x));
  if (dfre) feat = dfre(feat);
  if (ffm) feat = feat + ffm(feat, contour_encoder->forward(contour_features(images)));
  auto out = torch::tanh(decoder->forward(feat));
  // hardtanh keeps the gradient alive inside the range and cuts it only where the sum saturates
  if (cfg_.global_residual) out = torch::hardtanh(x + out);
  return (out + 1.0) * 0.5;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t c = cfg_.base_channels;
  auto stage = [](int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
  };
  auto leaky = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
  body = register_module(
      "body", torch::nn::Sequential(stage(3, c), leaky(),
                                    stage(c, 2 * c), instance_norm(2 * c), leaky(),
                                    stage(2 * c, 4 * c), instance_norm(4 * c), leaky(),
                                    stage(4 * c, 8 * c), instance_norm(8 * c), leaky(),
                                    torch::nn::Conv2d(torch::nn::Conv2dOptions(8 * c, 1, 1))));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("discriminator expects [B, 3, H, W]");
  if (images.size(2) < kReceptiveField || images.size(3) < kReceptiveField) {
    throw ShapeError("discriminator input " + std::to_string(images.size(2)) + "x" +
                     std::to_string(images.size(3)) + " is smaller than the " +
                     std::to_string(kReceptiveField) + "-pixel receptive field");
  }
  return body->forward(images * 2.0 - 1.0);
}

}  // namespace dcm::nn
