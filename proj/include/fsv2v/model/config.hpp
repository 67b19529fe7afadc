#pragma once

#include <string>
#include <vector>

namespace fsv2v::model {

enum class Variant { full, encoder, concatstyle, adain };

std::string to_string(Variant v);
// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::full;
  int height = 64;
  int width = 64;
  int semantic_channels = 4;  // S
  int layers = 4;             // L; base resolution is height / 2^L
  std::vector<int> main_channels{128, 64, 32, 16};     // C_H^l, one per layer
  int spade_channels = 32;                             // C_S
  int const_channels = 64;                             // learned constant input
  std::vector<int> feature_channels{32, 64, 64, 64};  // E_F, one per level
  int hidden = 256;           // E_P hidden width
  int pool = 2;               // AdaPool output side
  int attention_res = 16;     // key resolution (N = res^2)
  int attention_channels = 32;
  int generated_kernel = 3;   // 3, or 1 for the AdaIN-subsumption mode
  // Small init for the last E_P layer; the bias carries a static SPADE init.
  double generated_init_std = 0.01;
  bool example_semantics = true;  // E_F sees [e, s_e] rather than e alone
  int tau = 1;
  int k_max = 4;
  bool warp_example = true;
  int flow_channels = 32;
  double max_displacement = 16.0;
  int style_dim = 64;
  int disc_channels = 32;

  int base_height() const { return height >> layers; }
  int base_width() const { return width >> layers; }
  int layer_height(int l) const { return base_height() << l; }  // l = 0..L-1
  int layer_width(int l) const { return base_width() << l; }
  // Input channels of θ_S^l: s_t for the first layer, [p_S^{l-1}, s_t] after.
  int spade_in_channels(int l) const { return l == 0 ? semantic_channels : spade_channels + semantic_channels; }
  int example_in_channels() const { return 3 + (example_semantics ? semantic_channels : 0); }
  int history_channels() const { return 3 * tau + semantic_channels * (tau + 1); }

  // Throws ConfigError describing the first inconsistency.
  void validate() const;
};

}  // namespace fsv2v::model
