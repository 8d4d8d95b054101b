#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support/testing.hpp"

#include <cmath>
#include <set>

#include "brave/error.hpp"
#include "brave/model.hpp"
#include "support/micro_model.hpp"

using namespace brave;
using namespace brave::model;
using brave::testing::micro_model_config;
using brave::testing::random_input;

namespace {

struct EmbedGraph {
  ad::Graph graph;
  explicit EmbedGraph(const ModelBundle& bundle) : graph(bundle.precision(), bundle.store()) {}
};

}  // namespace

TEST_CASE("narrow embedding has the configured output width per batch row") {
  ModelConfig cfg;  // desk defaults: 64-dim features, 128-dim embeddings
  ModelBundle bundle(cfg, Precision::f32);
  ad::Graph g(Precision::f32, bundle.store());
  ad::NodeId x = g.input("x");
  ad::NodeId z = bundle.projector(g, bundle.narrow_backbone(g, x), "narrow");
  g.mark_output("z", z);
  auto out = g.evaluate({{"x", random_input({4, 8, 16, 16, 3}, 1, Precision::f32)}});
  CHECK(out.outputs.at("z").shape() == Shape{4, 128});
}

TEST_CASE("inference-mode batch norm gives identical rows for identical inputs") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId x = g.input("x");
  ad::NodeId z = bundle.projector(g, bundle.narrow_backbone(g, x), "narrow");
  g.mark_output("z", z);
  Tensor one = random_input({1, 4, 6, 6, 3}, 2, Precision::f64);
  Tensor two({2, 4, 6, 6, 3}, Precision::f64);
  for (int64_t i = 0; i < one.size(); ++i) {
    two.set(i, one.at(i));
    two.set(one.size() + i, one.at(i));
  }
  auto z2 = g.evaluate({{"x", two}}, {.training = false}).outputs.at("z");
  const int64_t f = z2.dim(1);
  for (int64_t i = 0; i < f; ++i) CHECK(z2.at(i) == z2.at(f + i));
}

TEST_CASE("l2-normalized embeddings land on the unit sphere") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId x = g.input("x");
  ad::NodeId z = bundle.projector(g, bundle.narrow_backbone(g, x), "narrow");
  g.mark_output("zn", g.l2_normalize(z));
  auto out = g.evaluate({{"x", random_input({3, 4, 6, 6, 3}, 3, Precision::f64)}});
  const Tensor& zn = out.outputs.at("zn");
  for (int64_t r = 0; r < zn.dim(0); ++r) {
    double norm = 0;
    for (int64_t c = 0; c < zn.dim(1); ++c) norm += zn.at(r * zn.dim(1) + c) * zn.at(r * zn.dim(1) + c);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("adapter appears exactly when broad and narrow feature widths differ") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  CHECK(bundle.adapter_present(views::Modality::kAudio));   // 6 vs 8
  CHECK(!bundle.adapter_present(views::Modality::kRgb));    // same backbone config

  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId x = g.input("x");
  g.mark_output("f", bundle.broad_backbone(g, x, views::Modality::kRgb));
  g.evaluate({{"x", random_input({2, 4, 4, 4, 3}, 4, Precision::f64)}});
  CHECK(!bundle.store()->contains("adapter.rgb.weight"));

  ad::Graph ga(Precision::f64, bundle.store());
  ad::NodeId xa = ga.input("x");
  ga.mark_output("f", bundle.broad_backbone(ga, xa, views::Modality::kAudio));
  CHECK(bundle.store()->contains("adapter.audio.weight"));
  CHECK(bundle.store()->get("adapter.audio.weight").shape() == Shape{6, 8});
}

TEST_CASE("shared projector serves narrow and broad paths") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId xn = g.input("xn");
  ad::NodeId xb = g.input("xb");
  g.mark_output("zn", bundle.projector(g, bundle.narrow_backbone(g, xn), "narrow"));
  g.mark_output("zb", bundle.projector(g, bundle.broad_backbone(g, xb, views::Modality::kRgb),
                                       "broad_rgb"));
  std::map<std::string, Tensor> in = {
      {"xn", random_input({2, 4, 6, 6, 3}, 5, Precision::f64)},
      {"xb", random_input({2, 4, 4, 4, 3}, 6, Precision::f64)},
  };
  auto before = g.evaluate(in);
  // one projector instance: perturbing it moves both embeddings
  Tensor& w = bundle.store()->mutable_value("projector.fc1.weight");
  for (int64_t i = 0; i < w.size(); ++i) w.set(i, w.at(i) + 0.5);
  auto after = g.evaluate(in);
  CHECK(!before.outputs.at("zn").bitwise_equal(after.outputs.at("zn")));
  CHECK(!before.outputs.at("zb").bitwise_equal(after.outputs.at("zb")));
}

TEST_CASE("parameters partition into disjoint stages with no narrow/broad sharing") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId xn = g.input("xn");
  ad::NodeId xb = g.input("xb");
  ad::NodeId xa = g.input("xa");
  ad::NodeId zn = bundle.projector(g, bundle.narrow_backbone(g, xn), "narrow");
  ad::NodeId zb = bundle.projector(g, bundle.broad_backbone(g, xb, views::Modality::kRgb), "broad_rgb");
  ad::NodeId za = bundle.projector(g, bundle.broad_backbone(g, xa, views::Modality::kAudio), "broad_audio");
  g.mark_output("p", bundle.predictor(g, zn, "narrow"));
  (void)zb;
  (void)za;

  const std::vector<std::string> prefixes = {"narrow_backbone.", "broad_backbone.", "adapter.",
                                             "projector.", "predictor."};
  for (const std::string& name : bundle.store()->trainable_names()) {
    int hits = 0;
    for (const std::string& p : prefixes) {
      if (name.rfind(p, 0) == 0) ++hits;
    }
    INFO("parameter ", name);
    CHECK(hits == 1);
  }
}

TEST_CASE("sharing flags swap separate instances in and out") {
  ModelConfig cfg = micro_model_config();
  cfg.sharing.share_projector = false;
  cfg.sharing.share_predictor = false;
  ModelBundle bundle(cfg, Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId xn = g.input("xn");
  ad::NodeId xb = g.input("xb");
  ad::NodeId zn = bundle.projector(g, bundle.narrow_backbone(g, xn), "narrow");
  ad::NodeId zb = bundle.projector(g, bundle.broad_backbone(g, xb, views::Modality::kRgb), "broad_rgb");
  g.mark_output("hn", bundle.predictor(g, zn, "narrow"));
  g.mark_output("hb", bundle.predictor(g, zb, "broad_rgb"));
  CHECK(bundle.store()->contains("projector.narrow.fc1.weight"));
  CHECK(bundle.store()->contains("projector.broad_rgb.fc1.weight"));
  CHECK(bundle.store()->contains("predictor.narrow.fc2.bias"));
  CHECK(bundle.store()->contains("predictor.broad_rgb.fc2.bias"));
  CHECK(!bundle.store()->contains("projector.fc1.weight"));

  // shared visual backbone: one parameter set for both paths
  ModelConfig scfg = micro_model_config();
  scfg.sharing.share_backbone = true;
  ModelBundle shared(scfg, Precision::f64);
  ad::Graph gs(Precision::f64, shared.store());
  ad::NodeId yn = gs.input("xn");
  ad::NodeId yb = gs.input("xb");
  gs.mark_output("fn", shared.narrow_backbone(gs, yn));
  gs.mark_output("fb", shared.broad_backbone(gs, yb, views::Modality::kRgb));
  CHECK(shared.store()->contains("backbone.block0.conv.weight"));
  CHECK(!shared.store()->contains("narrow_backbone.block0.conv.weight"));
}

TEST_CASE("predictor output keeps the embedding width but is not the identity") {
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId z = g.input("z");
  g.mark_output("h", bundle.predictor(g, z, "narrow"));
  Tensor in = random_input({3, 8}, 7, Precision::f64, -1.0, 1.0);
  auto h = g.evaluate({{"z", in}}).outputs.at("h");
  CHECK(h.shape() == in.shape());
  double diff = 0;
  for (int64_t i = 0; i < h.size(); ++i) diff += std::fabs(h.at(i) - in.at(i));
  CHECK(diff > 1e-3);
}

TEST_CASE("parameter counts match the analytic formula on two configs") {
  // formula: sum over stages of k1*k2*k3*cin*cout + 2*cout
  const BackboneConfig v = micro_model_config().visual_backbone;
  CHECK(backbone_parameter_count(v, 3) ==
        (2 * 3 * 3 * 3 * 4 + 2 * 4) + (2 * 3 * 3 * 4 * 8 + 2 * 8));

  const BackboneConfig desk = BackboneConfig::desk_visual();
  CHECK(backbone_parameter_count(desk, 3) ==
        (3 * 3 * 3 * 3 * 16 + 32) + (3 * 3 * 3 * 16 * 32 + 64) + (3 * 3 * 3 * 32 * 64 + 128) +
            (3 * 3 * 3 * 64 * 64 + 128));

  // bundle total after materializing narrow path + shared heads
  ModelBundle bundle(micro_model_config(), Precision::f64);
  ad::Graph g(Precision::f64, bundle.store());
  ad::NodeId x = g.input("x");
  ad::NodeId z = bundle.projector(g, bundle.narrow_backbone(g, x), "narrow");
  g.mark_output("h", bundle.predictor(g, z, "narrow"));
  const int64_t heads =
      (8 * 8 + 2 * 8 + 8 * 8 + 2 * 8) +      // projector: fc1+bn1+fc2+bn2
      (8 * 8 + 2 * 8 + 8 * 8 + 8);           // predictor: fc1+bn1+fc2+bias
  CHECK(bundle.parameter_count() == backbone_parameter_count(bundle.config().visual_backbone, 3) + heads);
}
