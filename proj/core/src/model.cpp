#include "brave/model.hpp"

#include <cmath>

#include "brave/error.hpp"
#include "brave/rng.hpp"

namespace brave::model {

BackboneConfig BackboneConfig::desk_visual() {
  BackboneConfig bb;
  bb.stages = {
      {16, {3, 3, 3}, {1, 2, 2}},
      {32, {3, 3, 3}, {2, 2, 2}},
      {64, {3, 3, 3}, {2, 2, 2}},
      {64, {3, 3, 3}, {1, 1, 1}},
  };
  return bb;
}

BackboneConfig BackboneConfig::desk_audio() {
  BackboneConfig bb;
  bb.stages = {
      {16, {1, 3, 3}, {1, 2, 2}},
      {32, {1, 3, 3}, {1, 2, 2}},
      {64, {1, 3, 3}, {1, 2, 2}},
      {64, {1, 3, 3}, {1, 2, 2}},
  };
  return bb;
}

ModelBundle::ModelBundle(ModelConfig config, Precision precision)
    : config_(std::move(config)), prec_(precision), store_(std::make_shared<ad::ParamStore>()) {}

Tensor ModelBundle::he_init(const Shape& shape, int64_t fan_in, const std::string& name) const {
  Rng rng(hash_str(config_.init_seed, name));
  Tensor t(shape, prec_);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, rng.normal(0.0, stddev));
  return t;
}

ad::NodeId ModelBundle::conv_backbone(ad::Graph& g, ad::NodeId input, const BackboneConfig& bb,
                                      const std::string& prefix, int input_channels) const {
  if (bb.stages.empty()) throw ConfigError("backbone '" + prefix + "' has no stages");
  ad::NodeId x = input;
  for (size_t i = 0; i < bb.stages.size(); ++i) {
    const ConvStage& st = bb.stages[i];
    const int cin = i == 0 ? input_channels : bb.stages[i - 1].channels;
    const std::string sp = prefix + ".block" + std::to_string(i);
    const Shape wshape{st.kernel[0], st.kernel[1], st.kernel[2], cin, st.channels};
    const int64_t fan_in = static_cast<int64_t>(st.kernel[0]) * st.kernel[1] * st.kernel[2] * cin;
    ad::NodeId w = g.param(sp + ".conv.weight", he_init(wshape, fan_in, sp + ".conv.weight"));
    x = g.conv3d(x, w, st.stride);
    ad::NodeId sc = g.param(sp + ".bn.bn_scale", Tensor::full({st.channels}, 1.0, prec_));
    ad::NodeId of = g.param(sp + ".bn.bn_offset", Tensor({st.channels}, prec_));
    x = g.batch_norm(x, sc, of, sp + ".bn", config_.bn_eps, config_.bn_decay);
    x = g.relu(x);
  }
  return g.global_mean_pool(x);
}

ad::NodeId ModelBundle::narrow_backbone(ad::Graph& g, ad::NodeId input) const {
  const std::string prefix = config_.sharing.share_backbone ? "backbone" : "narrow_backbone";
  return conv_backbone(g, input, config_.visual_backbone, prefix, 3);
}

int ModelBundle::broad_feature_dim(views::Modality modality) const {
  return modality == views::Modality::kAudio ? config_.audio_backbone.output_dim()
                                             : config_.visual_backbone.output_dim();
}

bool ModelBundle::adapter_present(views::Modality modality) const {
  return broad_feature_dim(modality) != narrow_feature_dim();
}

ad::NodeId ModelBundle::broad_backbone(ad::Graph& g, ad::NodeId input,
                                       views::Modality modality) const {
  const bool audio = modality == views::Modality::kAudio;
  const BackboneConfig& bb = audio ? config_.audio_backbone : config_.visual_backbone;
  std::string prefix;
  if (config_.sharing.share_backbone && !audio && modality != views::Modality::kFlow) {
    prefix = "backbone";
  } else {
    prefix = std::string("broad_backbone.") + views::modality_name(modality);
  }
  const int in_ch = audio ? 1 : (modality == views::Modality::kFlow ? 2 : 3);
  ad::NodeId feat = conv_backbone(g, input, bb, prefix, in_ch);
  if (adapter_present(modality)) {
    const std::string name = std::string("adapter.") + views::modality_name(modality) + ".weight";
    const int in = broad_feature_dim(modality);
    const int out = narrow_feature_dim();
    ad::NodeId w = g.param(name, he_init({in, out}, in, name));
    feat = g.matmul(feat, w);  // bias-free; the projector's batch norm absorbs any offset
  }
  return feat;
}

ad::NodeId ModelBundle::mlp_head(ad::Graph& g, ad::NodeId input, const std::string& prefix,
                                 int in_dim, bool final_bn, bool final_bias) const {
  const HeadConfig& h = config_.head;
  ad::NodeId w1 = g.param(prefix + ".fc1.weight",
                          he_init({in_dim, h.hidden}, in_dim, prefix + ".fc1.weight"));
  ad::NodeId x = g.matmul(input, w1);
  ad::NodeId sc1 = g.param(prefix + ".bn1.bn_scale", Tensor::full({h.hidden}, 1.0, prec_));
  ad::NodeId of1 = g.param(prefix + ".bn1.bn_offset", Tensor({h.hidden}, prec_));
  x = g.batch_norm(x, sc1, of1, prefix + ".bn1", config_.bn_eps, config_.bn_decay);
  x = g.relu(x);
  ad::NodeId w2 = g.param(prefix + ".fc2.weight",
                          he_init({h.hidden, h.output}, h.hidden, prefix + ".fc2.weight"));
  x = g.matmul(x, w2);
  if (final_bias) {
    ad::NodeId b = g.param(prefix + ".fc2.bias", Tensor({h.output}, prec_));
    x = g.add_bias(x, b);
  }
  if (final_bn) {
    ad::NodeId sc2 = g.param(prefix + ".bn2.bn_scale", Tensor::full({h.output}, 1.0, prec_));
    ad::NodeId of2 = g.param(prefix + ".bn2.bn_offset", Tensor({h.output}, prec_));
    x = g.batch_norm(x, sc2, of2, prefix + ".bn2", config_.bn_eps, config_.bn_decay);
  }
  return x;
}

ad::NodeId ModelBundle::projector(ad::Graph& g, ad::NodeId features, const std::string& side) const {
  const std::string prefix =
      config_.sharing.share_projector ? "projector" : "projector." + side;
  // batch norm after the hidden layer and after the last layer
  return mlp_head(g, features, prefix, narrow_feature_dim(), /*final_bn=*/true,
                  /*final_bias=*/false);
}

ad::NodeId ModelBundle::predictor(ad::Graph& g, ad::NodeId z, const std::string& side) const {
  const std::string prefix =
      config_.sharing.share_predictor ? "predictor" : "predictor." + side;
  // batch norm after the hidden layer only
  return mlp_head(g, z, prefix, config_.head.output, /*final_bn=*/false, /*final_bias=*/true);
}

int64_t ModelBundle::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, e] : store_->entries()) {
    (void)name;
    if (e.trainable) n += e.value.size();
  }
  return n;
}

int64_t backbone_parameter_count(const BackboneConfig& bb, int input_channels) {
  int64_t n = 0;
  int cin = input_channels;
  for (const ConvStage& st : bb.stages) {
    n += static_cast<int64_t>(st.kernel[0]) * st.kernel[1] * st.kernel[2] * cin * st.channels;
    n += 2 * st.channels;  // bn scale + offset
    cin = st.channels;
  }
  return n;
}

}  // namespace brave::model
