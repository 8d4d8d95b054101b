#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "brave/graph.hpp"
#include "brave/views.hpp"

namespace brave::model {

struct ConvStage {
  int channels = 16;
  std::array<int, 3> kernel{3, 3, 3};
  std::array<int, 3> stride{1, 2, 2};
};

struct BackboneConfig {
  std::vector<ConvStage> stages;

  int output_dim() const { return stages.empty() ? 0 : stages.back().channels; }

  // Small space-time network: 4 conv blocks, stride-2 spatial throughout and
  // stride-2 temporal in the middle blocks, global average pool.
  static BackboneConfig desk_visual();
  // Time-frequency variant for spectrogram inputs [B,1,T_s,D,1].
  static BackboneConfig desk_audio();
};

struct HeadConfig {
  int hidden = 256;
  int output = 128;
};

struct SharingConfig {
  bool share_projector = true;
  bool share_predictor = true;
  bool share_backbone = false;  // narrow/broad visual only, matching inputs
};

struct ModelConfig {
  BackboneConfig visual_backbone = BackboneConfig::desk_visual();
  BackboneConfig audio_backbone = BackboneConfig::desk_audio();
  HeadConfig head;
  SharingConfig sharing;
  uint64_t init_seed = 11;
  double bn_eps = 1e-5;
  double bn_decay = 0.9;
};

// Owns the parameter store and appends model stages to graphs. Parameters
// are He-initialized from hash(init_seed, name), so initialization does not
// depend on graph construction order. Backbones for the narrow and broad
// paths never share parameters unless sharing.share_backbone is set; the
// projector and predictor are single shared instances by default.
class ModelBundle {
 public:
  ModelBundle(ModelConfig config, Precision precision);

  const ModelConfig& config() const { return config_; }
  const std::shared_ptr<ad::ParamStore>& store() const { return store_; }
  Precision precision() const { return prec_; }

  // f_n(x): rank-5 visual input -> [B, F] features.
  ad::NodeId narrow_backbone(ad::Graph& g, ad::NodeId input) const;
  // f_b^k(x) for a broad modality, followed by the dimension adapter when the
  // broad feature width differs from the narrow one.
  ad::NodeId broad_backbone(ad::Graph& g, ad::NodeId input, views::Modality modality) const;
  // g(feat) -> z in R^output. `side` selects the instance when unshared
  // ("narrow" or "broad_<modality>").
  ad::NodeId projector(ad::Graph& g, ad::NodeId features, const std::string& side) const;
  // h(z) -> prediction in R^output.
  ad::NodeId predictor(ad::Graph& g, ad::NodeId z, const std::string& side) const;

  int narrow_feature_dim() const { return config_.visual_backbone.output_dim(); }
  int broad_feature_dim(views::Modality modality) const;
  bool adapter_present(views::Modality modality) const;

  // Trainable parameter count for the bundle as currently materialized.
  int64_t parameter_count() const;

 private:
  ad::NodeId conv_backbone(ad::Graph& g, ad::NodeId input, const BackboneConfig& bb,
                           const std::string& prefix, int input_channels) const;
  ad::NodeId mlp_head(ad::Graph& g, ad::NodeId input, const std::string& prefix, int in_dim,
                      bool final_bn, bool final_bias) const;
  Tensor he_init(const Shape& shape, int64_t fan_in, const std::string& name) const;

  ModelConfig config_;
  Precision prec_;
  std::shared_ptr<ad::ParamStore> store_;
};

// Parameter-count formula for one conv backbone + documentation of the
// counting scheme (conv weights + bn scale/offset per stage).
int64_t backbone_parameter_count(const BackboneConfig& bb, int input_channels);

}  // namespace brave::model
