#include "dart/atm.hpp"

#include <cmath>

#include "dart/error.hpp"

namespace dart {

void AtmConfig::validate(Index d) const {
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("atm: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(d));
  }
  if (layers < 0) {
    throw ConfigError("atm: negative layer count");
  }
}

Tensor gatv2_scores(const Tensor& h, const GatHead& head, const GraphEdges& edges, double slope) {
  if (h.rows() != edges.num_nodes) {
    throw DimensionError("gatv2_scores: " + std::to_string(h.rows()) + " node rows for a " +
                         std::to_string(edges.num_nodes) + "-node graph");
  }
  const Tensor left = gather_rows(matmul_nt(h, head.w_left), edges.target);
  const Tensor right = gather_rows(matmul_nt(h, head.w_right), edges.source);
  return matmul(leaky_relu(add(left, right), slope), head.a);
}

Tensor attention_normalize(const Tensor& scores, const GraphEdges& edges) {
  return segment_softmax(scores, edges.target, edges.num_nodes);
}

Tensor head_aggregate(const Tensor& h, const Tensor& alpha, const GatHead& head,
                      const GraphEdges& edges, double slope) {
  const Tensor messages = gather_rows(matmul_nt(h, head.w_agg), edges.source);
  const Tensor summed = segment_sum_rows(scale_rows(messages, alpha), edges.target, edges.num_nodes);
  return leaky_relu(summed, slope);
}

Tensor gat_layer(const Tensor& h, const GatLayer& layer, const GraphEdges& edges, double slope,
                 AttentionTrace* trace, const std::string& stage, Index layer_index) {
  if (layer.heads.empty()) {
    throw ConfigError("gat_layer: no heads");
  }
  Index width = 0;
  for (const auto& hd : layer.heads) width += hd.w_agg.rows();
  if (width != h.cols()) {
    throw ConfigError("gat_layer: heads concatenate to width " + std::to_string(width) +
                      ", features have " + std::to_string(h.cols()));
  }
  Tensor concat;
  for (std::size_t m = 0; m < layer.heads.size(); ++m) {
    const auto& hd = layer.heads[m];
    const Tensor alpha = attention_normalize(gatv2_scores(h, hd, edges, slope), edges);
    if (trace != nullptr) {
      trace->push_back({stage, layer_index, static_cast<Index>(m), alpha.value()});
    }
    const Tensor out = head_aggregate(h, alpha, hd, edges, slope);
    concat = m == 0 ? out : concat_cols(concat, out);
  }
  return add(concat, h);
}

Tensor gat_stack(const Tensor& h0, const std::vector<GatLayer>& layers, const GraphEdges& edges,
                 double slope, AttentionTrace* trace, const std::string& stage) {
  Tensor h = h0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = gat_layer(h, layers[l], edges, slope, trace, stage, static_cast<Index>(l));
  }
  return h;
}

Tensor text_atm(const Tensor& text, const GraphEdges& edges, const std::vector<GatLayer>& layers,
                double slope, AttentionTrace* trace) {
  return gat_stack(text, layers, edges, slope, trace, "text");
}

Tensor fuse(const Tensor& x_vis, const Tensor& h_txt, const FusionNet& net, double slope) {
  if (x_vis.cols() != h_txt.cols() || x_vis.rows() != h_txt.rows()) {
    throw DimensionError("fuse: visual " + std::to_string(x_vis.rows()) + "x" +
                         std::to_string(x_vis.cols()) + " vs text " +
                         std::to_string(h_txt.rows()) + "x" + std::to_string(h_txt.cols()));
  }
  const Tensor joint = concat_cols(x_vis, h_txt);
  return matmul_nt(leaky_relu(matmul_nt(joint, net.w1), slope), net.w2);
}

Tensor mm_atm(const Tensor& x_mm, const GraphEdges& edges, const std::vector<GatLayer>& layers,
              double slope, AttentionTrace* trace) {
  return gat_stack(x_mm, layers, edges, slope, trace, "mm");
}

Atm::Atm(const AtmConfig& cfg, Index d, ParameterSet& params, Rng& rng) : cfg_(cfg) {
  cfg_.validate(d);
  const Index dh = d / cfg_.heads;
  auto glorot = [&](Index out, Index in) {
    const double std = cfg_.init_gain * std::sqrt(2.0 / static_cast<double>(out + in));
    return randn(out, in, rng, std);
  };
  auto make_stack = [&](const std::string& stage) {
    std::vector<GatLayer> stack;
    for (Index l = 0; l < cfg_.layers; ++l) {
      GatLayer layer;
      for (Index m = 0; m < cfg_.heads; ++m) {
        const std::string p =
            "atm/" + stage + "/layer" + std::to_string(l) + "/head" + std::to_string(m) + "/";
        GatHead hd;
        hd.w_left = params.add(p + "w_left", glorot(dh, d));
        hd.w_right = params.add(p + "w_right", glorot(dh, d));
        hd.a = params.add(p + "a", glorot(dh, 1));
        hd.w_agg = params.add(p + "w_agg", glorot(dh, d));
        layer.heads.push_back(std::move(hd));
      }
      stack.push_back(std::move(layer));
    }
    return stack;
  };
  text_layers_ = make_stack("text");
  mm_layers_ = make_stack("mm");
  fusion_.w1 = params.add("atm/fuse/w1", glorot(d, 2 * d));
  fusion_.w2 = params.add("atm/fuse/w2", glorot(d, d));
}

}  // namespace dart
